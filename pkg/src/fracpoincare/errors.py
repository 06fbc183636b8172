"""Exception hierarchy shared by every module of the toolkit."""


class FracPoincareError(Exception):
    """Base class for all toolkit errors."""


class InvalidWeightError(FracPoincareError, ValueError):
    """A weight evaluator returned NaN or an otherwise unusable value."""


class DomainError(FracPoincareError, ValueError):
    """Geometric precondition violated (sampling box, supports, regions)."""


class TruncationError(FracPoincareError):
    """The truncated domain carries too much boundary mass.

    ``suggested_box`` holds a half-width that satisfies the requirement.
    """

    def __init__(self, msg, suggested_box=None):
        super().__init__(msg)
        self.suggested_box = suggested_box


class SolverError(FracPoincareError, ArithmeticError):
    """A linear or eigen solver failed; ``residual`` holds the last residual."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class UnsupportedModeError(FracPoincareError):
    """Operation needs a full eigendecomposition but got a partial one."""


class PremiseError(FracPoincareError):
    """The premise of an implication did not hold on the trial set."""

    def __init__(self, msg, worst_margin=None):
        super().__init__(msg)
        self.worst_margin = worst_margin


class InsufficientSignalError(FracPoincareError):
    """All measured ratios sit at the floating-point floor."""


class DegenerateError(FracPoincareError):
    """A constant that must be positive and finite came out degenerate."""


class InfeasibleError(FracPoincareError):
    """Absorption in the constant chain is impossible with the given A."""


class ConfigError(FracPoincareError, ValueError):
    """Configuration validation failure; ``errors`` lists every violation."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)
