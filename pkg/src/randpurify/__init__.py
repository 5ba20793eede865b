"""Simulation of iterative random purification of multi-mode mixtures."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .core import (
    BinaryEvent,
    BinaryRecord,
    EventCounts,
    EventRecord,
    ImpossibleOutcomeError,
    MixtureState,
)

__all__ = [
    "BinaryEvent",
    "BinaryRecord",
    "EventCounts",
    "EventRecord",
    "ImpossibleOutcomeError",
    "MixtureState",
    "__version__",
]
