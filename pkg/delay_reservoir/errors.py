class ReservoirError(Exception):
    """Base class for failures raised by delay_reservoir."""


class IntegrationBlowupError(ReservoirError, ArithmeticError):
    """A state variable became non-finite during time integration."""

    def __init__(self, message, time=None, step=None, layer=None):
        super().__init__(message)
        self.time = time
        self.step = step
        self.layer = layer


class DegenerateInputError(ReservoirError, ValueError):
    """A series or target has zero variance where a spread is required."""


class TrainingError(ReservoirError):
    """No point of the ridge grid produced a usable readout."""


class FormatError(ReservoirError, ValueError):
    """A serialized file is malformed or carries the wrong magic header."""


class ConfigError(ReservoirError, ValueError):
    """An experiment configuration failed validation.

    Carries every issue found, not only the first, as (key_path, message)
    pairs so a user can fix a config file in one pass.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        lines = [f"{path}: {message}" for path, message in self.issues]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))
