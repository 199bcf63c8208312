"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Arguments have the wrong shape, range or structure."""


class StateError(RuntimeError):
    """An operation was called before the state it depends on exists."""


class NumericalBlowupError(FloatingPointError):
    """A trajectory became non-finite during time integration."""

    def __init__(self, message, sample=None, step=None):
        super().__init__(message)
        self.sample = sample
        self.step = step


class TrainingBlowupError(NumericalBlowupError):
    """Training diverged; carries the last parameters that evaluated cleanly."""

    def __init__(self, message, last_good=None, trace=None, epoch=None, sample=None, step=None):
        super().__init__(message, sample=sample, step=step)
        self.last_good = last_good
        self.trace = trace
        self.epoch = epoch


class CheckpointError(ValueError):
    """A checkpoint file could not be parsed or failed validation."""


class CSVParseError(ValueError):
    """A CSV file is ragged or contains non-numeric cells."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column
