"""Offline trace capture for the tokenbridge replay backend.

Sweeps a model pair over a benchmark manifest and appends one JSON-lines
record per (query, role, density) in the tb-trace-v1 schema. A stub model
pair makes the tool fully testable without GPUs.
"""

from .capture import (
    CaptureError,
    ModelPair,
    StubModelPair,
    capture,
    load_manifest,
    load_model_pair,
)

__version__ = "0.1.0"
