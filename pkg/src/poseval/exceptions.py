"""Exception hierarchy. Every error subclasses ``PosevalError``, itself a ``ValueError``."""


class PosevalError(ValueError):
    """Base class for all errors raised by poseval."""


class DegenerateConfiguration(PosevalError):
    pass


class NonConvergence(PosevalError):
    pass


class BehindCamera(PosevalError):
    pass


class InvalidIncrement(PosevalError):
    pass


class NonFiniteCost(PosevalError):
    pass


class TooLarge(PosevalError):
    pass


class MissingModel(PosevalError, KeyError):
    """No sampled model is registered for an object id."""

    def __init__(self, object_id):
        self.object_id = object_id
        super().__init__(f"no model for object id {object_id}")

    def __str__(self):
        return f"no model for object id {self.object_id}"


class EmptyInput(PosevalError):
    pass


class NonPositiveDepth(PosevalError):
    pass


class NoValidPixels(PosevalError):
    pass


class TooFewObjects(PosevalError):
    pass


class DegenerateSamples(PosevalError):
    pass


class MalformedInput(PosevalError):
    """An input file could not be parsed; ``where`` names the file and record."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)
