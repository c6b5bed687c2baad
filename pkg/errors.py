"""
Exception hierarchy for the Kerr lattice simulator
Every error raised on purpose by the library derives from KerrLatticeError
"""

from typing import List, Optional


class KerrLatticeError(Exception):
    """Base class for all simulator errors"""


class ConfigError(KerrLatticeError, ValueError):
    """Malformed or incomplete model configuration"""

    def __init__(self, message: str, key: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        location = ""
        if line is not None:
            location = f" (line {line}, column {column})"
        super().__init__(f"{message}{location}")
        self.key = key
        self.line = line
        self.column = column


class ParameterError(KerrLatticeError, ValueError):
    """Invalid argument to an operation"""


class SpecError(KerrLatticeError):
    """LatticeSpec rejected because it violates its invariants"""

    def __init__(self, violations: List[str]):
        super().__init__("Invalid lattice spec: " + "; ".join(violations))
        self.violations = list(violations)


class IntegrationError(KerrLatticeError):
    """Adaptive integrator gave up (step-size underflow)"""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time


class SteadyStateError(KerrLatticeError):
    """A converged steady state was required"""


class UnstableSystemError(KerrLatticeError):
    """Drift matrix has an eigenvalue on or right of the stability margin"""

    def __init__(self, max_re_eigenvalue: float):
        super().__init__(
            f"Noise system is not stable: max Re eig(A) = {max_re_eigenvalue:.3e}"
        )
        self.max_re_eigenvalue = max_re_eigenvalue


class DiffusionError(KerrLatticeError):
    """Diffusion matrix is not positive semi-definite"""


class WindingError(KerrLatticeError):
    """Winding number is undefined or under-resolved"""


class ExceptionalPointError(KerrLatticeError):
    """Band separation closes: the braid degree is at a transition"""

    def __init__(self, min_gap: float, k: Optional[float] = None):
        where = "" if k is None else f" near k={k:.4f}"
        super().__init__(f"Exceptional point on the k grid{where}: min gap {min_gap:.3e}")
        self.min_gap = min_gap
        self.k = k


class QuadratureError(KerrLatticeError):
    """Frequency quadrature did not reach its tolerance"""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error {achieved:.3e})")
        self.achieved = achieved


class ArtifactError(KerrLatticeError):
    """Output artifact could not be written"""
