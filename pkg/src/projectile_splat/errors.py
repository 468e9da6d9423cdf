"""Exception types raised across the package."""


class ProjectileSplatError(Exception):
    pass


class InvalidInputError(ProjectileSplatError, ValueError):
    pass


class InsufficientPointsError(InvalidInputError):
    pass


class AllPrunedError(ProjectileSplatError):
    pass


class InvalidPoseError(InvalidInputError):
    pass


class InvalidTransformError(InvalidInputError):
    pass


class BehindCameraError(InvalidInputError):
    pass


class NumericalFailureError(ProjectileSplatError, ArithmeticError):
    pass


class SingularMatrixError(NumericalFailureError):
    pass


class OptimizationFailureError(NumericalFailureError):
    def __init__(self, message, iteration=None, frame=None):
        super().__init__(message)
        self.iteration = iteration
        self.frame = frame


class OutOfViewError(ProjectileSplatError):
    def __init__(self, message, frame=None):
        super().__init__(message)
        self.frame = frame


class EmptySilhouetteError(InvalidInputError):
    pass
