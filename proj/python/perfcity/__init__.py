"""Live software-city profiler: elevation engine, layout, workloads and server."""

from ._perfcity import (
    ConflictingRegistration,
    EmptyRegistry,
    Engine,
    InvalidArgument,
    IoError,
    MalformedMessage,
    Server,
    analyze,
    frames,
    normalize_line,
    plots,
    round_elevation,
    simulate,
    structure,
)

ENTER = 0
EXIT = 1

__all__ = [
    "ConflictingRegistration",
    "EmptyRegistry",
    "Engine",
    "InvalidArgument",
    "IoError",
    "MalformedMessage",
    "Server",
    "analyze",
    "frames",
    "normalize_line",
    "plots",
    "round_elevation",
    "simulate",
    "structure",
    "ENTER",
    "EXIT",
]
