"""Exception types shared across the package."""


class SmmLinkError(Exception):
    """Base class for all package errors."""


class NonConvergence(RuntimeWarning):
    """Quadrature refinement budget exhausted.

    Issued as a warning; the caller still receives the best estimate.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class DegenerateAperture(SmmLinkError):
    """The incident beam delivers (almost) no power into the aperture."""


class SingularChannel(SmmLinkError):
    """The estimated channel matrix cannot be inverted for zero forcing."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class NegativeBudgetDenominator(SmmLinkError):
    """The ZFBF power-normalization denominator is not positive."""


class FractionSingular(SmmLinkError):
    """Too many realizations of an ensemble were rejected as singular."""

    def __init__(self, message, n_singular, n_total):
        super().__init__(message)
        self.n_singular = n_singular
        self.n_total = n_total


class ConfigError(SmmLinkError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key


class ValidationError(ConfigError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
