"""Exception types raised across the package."""


class LatentBOError(Exception):
    pass


class ConfigError(LatentBOError, ValueError):
    """Unknown names or invalid settings in a configuration."""


class InputError(LatentBOError, ValueError):
    """Arguments with the wrong shape, size or range."""


class NumericalError(LatentBOError, ArithmeticError):
    """Factorisation failures and non-finite losses."""
