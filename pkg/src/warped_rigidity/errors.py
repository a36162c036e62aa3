"""Exception hierarchy."""


class WarpedRigidityError(Exception):
    """Base class for library errors."""


class GeometryError(WarpedRigidityError, ValueError):
    """Invalid warped geometry or evaluation outside its domain."""


class FiberError(WarpedRigidityError, ValueError):
    pass


class SolverError(WarpedRigidityError, RuntimeError):
    """Numerical failure in the radial solver."""


class StepSizeUnderflow(SolverError):
    def __init__(self, location: float, step: float, reason: str = "step size underflow"):
        self.location = location
        self.step = step
        super().__init__(f"{reason} at r={location:.17g} (h={step:.3g})")


class IncompleteSpectrumError(SolverError):
    """The eigenvalue search could not certify a gap-free sequence."""


class ConstraintError(WarpedRigidityError, ValueError):
    """The constraint constants (a, b) cannot be determined."""


class ConfigError(WarpedRigidityError, ValueError):
    pass
