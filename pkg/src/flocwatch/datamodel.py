"""Core domain types shared across the pipeline.

Every type exposes ``first_violation()`` which returns a short description of
the first broken invariant, or ``None`` when the value is valid, and
``validate()`` which raises :class:`InvariantViolation` instead.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np

FEATURES = ("temp", "ph", "tds", "floc")
DEFAULT_BIN_EDGES = (3.0, 5.0, 7.0)
FORMAT_VERSION = "1.0.0"

DEVICE_ID_RE = re.compile(r"[A-Za-z0-9_-]{1,32}")
U64_MAX = 2**64 - 1


class FlocError(Exception):
    """Base class for every error raised by this package."""


class InvariantViolation(FlocError, ValueError):
    pass


class DoClass(IntEnum):
    """Dissolved-oxygen level. Lower values are the more severe condition."""

    SHALLOW = 0
    LOW = 1
    AVERAGE = 2
    HIGH = 3

    @property
    def label(self) -> str:
        return self.name.lower()


class Severity(IntEnum):
    INFO = 0
    WARNING = 1
    CRITICAL = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Severity":
        try:
            return cls[text.upper()]
        except KeyError:
            raise ValueError(f"unknown severity {text!r}") from None


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


class _Validated:
    def first_violation(self) -> Optional[str]:
        raise NotImplementedError

    def validate(self):
        problem = self.first_violation()
        if problem is not None:
            raise InvariantViolation(f"{type(self).__name__}: {problem}")
        return self


@dataclass(frozen=True)
class WaterSample(_Validated):
    temp: float
    ph: float
    tds: float
    floc: float
    do_mg_l: Optional[float] = None

    def first_violation(self) -> Optional[str]:
        for name in FEATURES:
            if not _finite(getattr(self, name)):
                return f"{name} is not finite"
        if not 0 <= self.temp < 60:
            return "temp outside [0, 60)"
        if not 0 <= self.ph <= 14:
            return "ph outside [0, 14]"
        if self.tds < 0:
            return "tds negative"
        if self.floc < 0:
            return "floc negative"
        if self.do_mg_l is not None and not (_finite(self.do_mg_l) and self.do_mg_l >= 0):
            return "do_mg_l negative or not finite"
        return None

    def features(self) -> np.ndarray:
        return np.array([self.temp, self.ph, self.tds, self.floc], dtype=np.float64)


@dataclass(frozen=True)
class SensorFrame(_Validated):
    device_id: str
    seq: int
    timestamp: int
    sample: WaterSample

    def first_violation(self) -> Optional[str]:
        if not isinstance(self.device_id, str) or not DEVICE_ID_RE.fullmatch(self.device_id):
            return "device_id must be 1-32 chars of [A-Za-z0-9_-]"
        for name in ("seq", "timestamp"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v <= U64_MAX:
                return f"{name} is not an unsigned 64-bit integer"
        if self.sample.do_mg_l is not None:
            return "live frames carry no do_mg_l"
        return self.sample.first_violation()


@dataclass(frozen=True, eq=False)
class ModelParams(_Validated):
    """Network weights plus everything needed to score raw readings.

    ``weights[i]`` has shape ``(layer_dims[i], layer_dims[i + 1])`` so a layer
    computes ``a @ W + b``.
    """

    layer_dims: tuple
    weights: tuple
    biases: tuple
    norm_mean: np.ndarray
    norm_std: np.ndarray
    bin_edges: tuple = DEFAULT_BIN_EDGES
    seed: int = 0
    format_version: str = FORMAT_VERSION
    metadata: dict = field(default_factory=dict)

    def first_violation(self) -> Optional[str]:
        dims = list(self.layer_dims)
        if len(dims) < 2 or dims[0] != len(FEATURES) or dims[-1] != len(DoClass):
            return "layer_dims must start with 4 features and end with 4 classes"
        if any(d < 1 for d in dims):
            return "layer widths must be >= 1"
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            return "need one weight matrix and bias vector per layer transition"
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if np.shape(w) != (dims[i], dims[i + 1]):
                return f"weights[{i}] shape {np.shape(w)} != {(dims[i], dims[i + 1])}"
            if np.shape(b) != (dims[i + 1],):
                return f"biases[{i}] shape {np.shape(b)} != {(dims[i + 1],)}"
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                return f"layer {i} has non-finite entries"
        if np.shape(self.norm_mean) != (4,) or np.shape(self.norm_std) != (4,):
            return "norm_stats must have 4 entries"
        if not np.all(np.isfinite(self.norm_mean)) or not np.all(np.isfinite(self.norm_std)):
            return "norm_stats not finite"
        if not np.all(self.norm_std > 0):
            return "norm_stats std must be > 0"
        edges = list(self.bin_edges)
        if len(edges) != 3 or any(not _finite(e) for e in edges) or not edges[0] < edges[1] < edges[2]:
            return "bin_edges must be 3 strictly ascending finite values"
        if not isinstance(self.seed, int) or self.seed < 0:
            return "seed must be a non-negative integer"
        return None

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass(frozen=True)
class Advisory(_Validated):
    device_id: str
    timestamp: int
    predicted_class: DoClass
    probabilities: tuple
    severity: Severity
    actions: tuple
    triggered_rules: tuple

    def first_violation(self) -> Optional[str]:
        p = self.probabilities
        if len(p) != 4:
            return "need 4 probabilities"
        if any(not (_finite(x) and 0 <= x <= 1) for x in p):
            return "probabilities must lie in [0, 1]"
        if abs(sum(p) - 1) > 1e-9:
            return "probabilities must sum to 1"
        if self.severity != Severity.INFO and not self.actions:
            return "non-info advisory needs actions"
        return None
