"""
Error types raised across the entaug package.
"""


class EntAugError(Exception):
    """Base class for every error entaug raises on purpose."""


class InvalidInputError(EntAugError, ValueError):
    pass


class ConfigurationError(EntAugError):
    pass


class IngestionError(EntAugError):
    def __init__(self, path: str, offset: int, reason: str):
        self.path = path
        self.offset = offset
        super().__init__(f"{path} @ byte {offset}: {reason}")


class UndefinedValueError(EntAugError, ArithmeticError):
    pass


class CheckpointError(EntAugError):
    pass
