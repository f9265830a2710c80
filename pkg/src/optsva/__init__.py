"""Pessimistic transactional memory with early release (OptSVA), an SVA
baseline, trace checkers and a benchmark harness."""

from .sva_baseline import SvaEngine
from .tm_core import (
    AccessSetViolation,
    BoundViolation,
    ConfigurationError,
    OptSvaEngine,
    TxnAborted,
    TxnDescriptor,
    TxnHandle,
    TxnStatus,
    TxnStateError,
    TxnUsageError,
)
from .trace_model import Event, History, Kind, Trace, TraceRecorder

__all__ = [
    "AccessSetViolation",
    "BoundViolation",
    "ConfigurationError",
    "Event",
    "History",
    "Kind",
    "OptSvaEngine",
    "SvaEngine",
    "Trace",
    "TraceRecorder",
    "TxnAborted",
    "TxnDescriptor",
    "TxnHandle",
    "TxnStatus",
    "TxnStateError",
    "TxnUsageError",
]
