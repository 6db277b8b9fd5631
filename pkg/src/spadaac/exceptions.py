"""Exception hierarchy for spadaac."""


class SpadAacError(Exception):
    """Base class for all package errors."""


class ConfigError(SpadAacError, ValueError):
    """Invalid parameter or experiment configuration."""


class DomainError(SpadAacError, ValueError):
    """Argument outside the admissible domain (e.g. attenuation not in (0, 1])."""


class InvalidOrderError(ConfigError):
    """Modulation order below 2."""


class DegenerateConstellationError(SpadAacError, ValueError):
    """Constellation levels (or trigger probabilities) are not strictly increasing."""


class SaturatedSymbolError(SpadAacError, ValueError):
    """A symbol triggers every gate with probability one, so no ML threshold exists."""


class DegenerateChannelError(SpadAacError, ValueError):
    """Signal plus background rate is zero; there is nothing to attenuate."""


class InfeasibleAmplificationError(SpadAacError, ValueError):
    """Requested target rates exceed the incident rates; an attenuator cannot amplify."""


class NormalizationError(SpadAacError, ArithmeticError):
    """A count PMF failed its normalization check."""
