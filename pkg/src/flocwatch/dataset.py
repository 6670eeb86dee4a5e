"""Training data: CSV loading, DO binning, z-score normalization, splitting."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datamodel import DEFAULT_BIN_EDGES, FEATURES, DoClass, FlocError, InvariantViolation, WaterSample

CSV_COLUMNS = ("temp", "do", "ph", "tds", "floc")


class DatasetError(FlocError, ValueError):
    pass


class MissingColumn(DatasetError):
    pass


class RowParse(DatasetError):
    def __init__(self, lineno: int, field: str, message: str):
        super().__init__(f"line {lineno}, field {field!r}: {message}")
        self.lineno = lineno
        self.field = field


class EmptyFile(DatasetError):
    pass


class NonFinite(DatasetError):
    pass


class ConstantFeature(DatasetError):
    def __init__(self, feature: str):
        super().__init__(f"feature {feature!r} is constant; cannot standardize")
        self.feature = feature


class DegenerateSplit(DatasetError):
    pass


def bin_do(do_mg_l: float, edges: Sequence[float] = DEFAULT_BIN_EDGES) -> DoClass:
    """Map a DO reading (mg/L) to its class using half-open bins ``[e_i, e_i+1)``."""
    if not math.isfinite(do_mg_l):
        raise NonFinite(f"DO value {do_mg_l!r} is not finite")
    if do_mg_l < 0:
        raise InvariantViolation(f"DO value {do_mg_l!r} is negative")
    e0, e1, e2 = edges
    if do_mg_l < e0:
        return DoClass.SHALLOW
    if do_mg_l < e1:
        return DoClass.LOW
    if do_mg_l < e2:
        return DoClass.AVERAGE
    return DoClass.HIGH


@dataclass(frozen=True)
class LabeledDataset:
    samples: tuple
    labels: tuple
    bin_edges: tuple = DEFAULT_BIN_EDGES

    def __post_init__(self):
        if len(self.samples) != len(self.labels) or not self.samples:
            raise InvariantViolation("samples and labels must be nonempty and aligned")

    def __len__(self) -> int:
        return len(self.samples)

    @classmethod
    def from_samples(cls, samples, edges=DEFAULT_BIN_EDGES) -> "LabeledDataset":
        samples = tuple(samples)
        for s in samples:
            if s.do_mg_l is None:
                raise InvariantViolation("training samples need do_mg_l")
            s.validate()
        return cls(samples, tuple(bin_do(s.do_mg_l, edges) for s in samples), tuple(edges))

    @property
    def features(self) -> np.ndarray:
        """N x 4 matrix in (temp, ph, tds, floc) order."""
        return np.array([[s.temp, s.ph, s.tds, s.floc] for s in self.samples], dtype=np.float64)

    @property
    def y(self) -> np.ndarray:
        return np.array(self.labels, dtype=np.int64)

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(
            tuple(self.samples[i] for i in indices),
            tuple(self.labels[i] for i in indices),
            self.bin_edges,
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for s in self.samples:
            h.update(repr((s.temp, s.do_mg_l, s.ph, s.tds, s.floc)).encode())
        return h.hexdigest()


def load_csv(path, header: bool = True, edges: Sequence[float] = DEFAULT_BIN_EDGES) -> LabeledDataset:
    """Load rows of ``temp,do,ph,tds,floc``.

    With ``header=True`` the first row must name exactly those columns (any
    order); otherwise columns are taken positionally.
    """
    path = Path(path)
    with path.open(newline="", encoding="ascii") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in r)]
    if not rows:
        raise EmptyFile(f"{path}: no rows")

    order = list(CSV_COLUMNS)
    if header:
        _, names = rows.pop(0)
        names = [n.strip().lower() for n in names]
        for col in CSV_COLUMNS:
            if col not in names:
                raise MissingColumn(f"{path}: header lacks column {col!r}")
        order = names
        if not rows:
            raise EmptyFile(f"{path}: header only")

    samples = []
    for lineno, row in rows:
        if len(row) != len(order):
            raise RowParse(lineno, "*", f"expected {len(order)} fields, got {len(row)}")
        values = {}
        for name, cell in zip(order, row):
            try:
                values[name] = float(cell)
            except ValueError:
                raise RowParse(lineno, name, f"not a number: {cell!r}") from None
        sample = WaterSample(values["temp"], values["ph"], values["tds"], values["floc"], values["do"])
        problem = sample.first_violation()
        if problem is not None:
            raise InvariantViolation(f"{path} line {lineno}: {problem}")
        samples.append(sample)
    return LabeledDataset.from_samples(samples, edges)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray


def fit_norm(dataset: LabeledDataset) -> NormStats:
    X = dataset.features
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population std
    for name, s in zip(FEATURES, std):
        if not s > 0:
            raise ConstantFeature(name)
    return NormStats(mean, std)


def apply_norm(stats: NormStats, x) -> np.ndarray:
    """Standardize a sample, a 4-vector or an N x 4 matrix."""
    if isinstance(x, WaterSample):
        x = x.features()
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def fisher_yates(n: int, seed: int) -> list:
    """Seeded Fisher-Yates permutation of ``range(n)`` driven by numpy's PCG64."""
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def split(dataset: LabeledDataset, train_fraction: float = 0.8, seed: int = 7):
    if not 0 < train_fraction < 1:
        raise DegenerateSplit(f"train_fraction {train_fraction} not in (0, 1)")
    n = len(dataset)
    n_train = math.floor(n * train_fraction + 1e-9)
    if n_train < 1 or n_train >= n:
        raise DegenerateSplit(f"{n} rows at fraction {train_fraction} leaves an empty side")
    order = fisher_yates(n, seed)
    return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])
