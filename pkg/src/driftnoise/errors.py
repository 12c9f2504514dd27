"""Exception hierarchy. Numerical failures map to CLI exit code 3."""


class DriftNoiseError(Exception):
    """Base class for all library errors."""


class NumericalFailure(DriftNoiseError):
    """A Monte Carlo or quadrature routine could not deliver a result."""


class AcceptanceStarvation(NumericalFailure):
    def __init__(self, rate, proposals, context=""):
        self.rate = float(rate)
        self.proposals = int(proposals)
        msg = f"acceptance rate {self.rate:.3g} over {self.proposals} proposals"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


class QuadratureError(NumericalFailure):
    def __init__(self, achieved, target, context=""):
        self.achieved = float(achieved)
        self.target = float(target)
        msg = f"quadrature error estimate {self.achieved:.3g} exceeds tolerance {self.target:.3g}"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


class NormalizationError(NumericalFailure):
    def __init__(self, value, tol):
        self.value = float(value)
        self.tol = float(tol)
        super().__init__(f"density integrates to {self.value!r}, |1 - I| > {self.tol:g}")


class NonFiniteFunctional(NumericalFailure):
    def __init__(self, replica, value):
        self.replica = int(replica)
        self.value = value
        super().__init__(f"functional returned non-finite value {value!r} at replica {replica}")


class GridAlignmentError(DriftNoiseError, ValueError):
    """A time that must be a grid point is not one."""


class SeamCollisionError(DriftNoiseError, ValueError):
    """A tracked minimum sits on the seam of a composition."""


class DriftDestroyedMinima(DriftNoiseError):
    def __init__(self, times):
        self.times = [float(t) for t in times]
        super().__init__("drift destroys strict minima at times " + ", ".join(f"{t:.12g}" for t in self.times))


class RuleMismatch(DriftNoiseError, ValueError):
    """A noise element is interpreted under a different sign rule."""


class ConfigError(DriftNoiseError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
