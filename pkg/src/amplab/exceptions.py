"""Exception types shared across the package."""


class AmplabError(Exception):
    pass


class DimensionError(AmplabError, ValueError):
    """Shapes or sizes of inputs are inconsistent."""


class ParameterError(AmplabError, ValueError):
    """A scalar parameter is outside its allowed range."""


class SpecError(AmplabError, ValueError):
    """A declarative spec (ensemble, signal, config) is invalid."""


class ScheduleError(AmplabError, KeyError):
    """An Onsager coefficient required by the recursion is missing."""


class BudgetError(AmplabError, RuntimeError):
    """A brute-force evaluation would exceed the configured budget."""


class NumericError(AmplabError, RuntimeError):
    """A numerical routine failed (singular matrix, lost positive definiteness)."""


class ConfigError(AmplabError, ValueError):
    """Experiment configuration failed validation.

    ``field`` carries the dotted path of the offending entry.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
