"""Rigid projectile trajectory recovery with a surrogate Gaussian splat renderer."""
__version__ = "0.1.0"
