"""Exception types shared across the package."""


class DimensionError(ValueError):
    """A tensor or parameter vector has an incompatible shape.

    Messages name the offending axis so callers can diagnose wiring bugs.
    """


class InputError(ValueError):
    """User-supplied data (image, config value, argument) is invalid."""


class MissingWeightError(KeyError):
    """A forward pass asked the weight store for a layer it does not hold."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing weight tensor {self.name!r}"


class WeightFormatError(ValueError):
    """The binary weight file is corrupt; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
