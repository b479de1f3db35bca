"""Exception hierarchy for the engine.

Every error carries a ``kind`` from ``utils.constants`` so the CLI can print
``KIND : message`` lines and pick an exit code without string matching.
"""
from ..utils.constants import (
    SHAPE_MISMATCH, INVALID_PARAMETER, MISSING_TENSOR,
    BAD_FORMAT, CORRUPT_FILE, DOMAIN_ERROR,
)


class HLSegError(Exception):
    kind = DOMAIN_ERROR

    def __str__(self) -> str:
        return f"{self.kind} : {super().__str__()}"


class ShapeError(HLSegError, ValueError):
    kind = SHAPE_MISMATCH


class ParameterError(HLSegError, ValueError):
    kind = INVALID_PARAMETER


class LoadError(HLSegError):
    """A model file cannot be read, or a tensor the model needs is absent from it."""
    kind = MISSING_TENSOR


class ModelFormatError(HLSegError):
    kind = BAD_FORMAT


class CorruptionError(HLSegError):
    """File is shorter than, or inconsistent with, its declared sizes."""
    kind = CORRUPT_FILE


class DomainError(HLSegError):
    kind = DOMAIN_ERROR


def expect_shape(name: str, expected: tuple, actual: tuple) -> None:
    if tuple(expected) != tuple(actual):
        raise ShapeError(f"{name} expected {tuple(expected)}, got {tuple(actual)}")
