"""Error types raised by the numerical and analytic routines."""


class LindbladRampError(Exception):
    """Base class for all package-specific failures."""


class DegenerateMode(LindbladRampError):
    """Mode parameters degenerate enough that a closed form is undefined
    (e.g. p = delta = 0, or a 1/p factor at p = 0)."""


class EPDegenerate(LindbladRampError):
    """Eigensystem requested at (or numerically on top of) an exceptional
    point, where the eigenbasis ceases to exist."""


class StepSizeUnderflow(LindbladRampError):
    """Adaptive step control drove the step below the representable floor
    without meeting the local error target."""


class NonFiniteState(LindbladRampError):
    """A NaN or infinity appeared in the propagated state."""


class OrderOverflow(LindbladRampError):
    """Exact series coefficients exceeded the configured big-integer budget."""


class RadiusExceeded(LindbladRampError):
    """Series evaluation requested below the estimated convergence radius
    in 1/(scale*tau), where truncation is meaningless."""


class SingularPoint(LindbladRampError):
    """Right-hand side evaluated inside the guard band of the square-root
    singularity at x = sqrt(1 + y^2)."""


class GridTooCoarse(LindbladRampError):
    """Spectral grid cannot resolve the requested coefficient order to the
    requested accuracy."""


class QuadratureNonConvergent(LindbladRampError):
    """Momentum quadrature error estimate stayed above tolerance after the
    node budget was exhausted."""


class SignChange(LindbladRampError):
    """Power-law fit requested across a sign change of the fitted quantity."""
