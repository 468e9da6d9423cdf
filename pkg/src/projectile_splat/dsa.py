"""Displacement-adaptive learning-rate schedule (dynamic simulated annealing).

Each frame starts at a learning rate proportional to the displacement
learned for the previous frame, decays exponentially inside the frame, and
gets an iteration budget that grows with displacement up to a cap.
"""
from dataclasses import dataclass

from .errors import InvalidInputError


@dataclass(frozen=True)
class DSAConfig:
    lr_base: float = 1.0e-3
    iter_base: int = 1000
    decay_floor_ratio: float = 0.01
    iter_cap_multiplier: float = 4.0

    def __post_init__(self):
        if not self.lr_base > 0:
            raise InvalidInputError("lr_base must be > 0")
        if int(self.iter_base) != self.iter_base or self.iter_base < 1:
            raise InvalidInputError("iter_base must be a positive integer")
        if not 0 < self.decay_floor_ratio < 1:
            raise InvalidInputError("decay_floor_ratio must lie in (0, 1)")
        if not self.iter_cap_multiplier >= 1:
            raise InvalidInputError("iter_cap_multiplier must be >= 1")


def lr_init_for_frame(prev_displacement, min_displacement, cfg):
    if prev_displacement < 0:
        raise InvalidInputError("displacement must be nonnegative")
    if not min_displacement > 0:
        raise InvalidInputError("reference displacement must be > 0")
    if prev_displacement == 0:
        return cfg.lr_base
    return cfg.lr_base * (prev_displacement / min_displacement)


def lr_at_iteration(lr_init, i, total, cfg):
    if total < 1 or not 0 <= i < total:
        raise InvalidInputError(f"iteration {i} outside [0, {total})")
    if total == 1:
        return lr_init
    return lr_init * cfg.decay_floor_ratio ** (i / (total - 1))


def iterations_for_frame(displacement, min_displacement, cfg):
    if displacement < 0:
        raise InvalidInputError("displacement must be nonnegative")
    if not min_displacement > 0:
        raise InvalidInputError("reference displacement must be > 0")
    ratio = min(displacement / min_displacement, cfg.iter_cap_multiplier)
    return max(cfg.iter_base, int(round(cfg.iter_base * ratio)))


class DisplacementReference:
    """Running minimum of learned per-frame displacements.

    The first observed displacement seeds the reference; later frames lower
    it whenever they move less.
    """

    def __init__(self):
        self.value = None

    def update(self, displacement):
        if displacement < 0:
            raise InvalidInputError("displacement must be nonnegative")
        if displacement == 0:
            return
        if self.value is None or displacement < self.value:
            self.value = float(displacement)

    def schedule(self, prev_displacement, cfg):
        """(lr_init, iterations) for the next frame."""
        if self.value is None or prev_displacement == 0:
            return cfg.lr_base, cfg.iter_base
        return (lr_init_for_frame(prev_displacement, self.value, cfg),
                iterations_for_frame(prev_displacement, self.value, cfg))
