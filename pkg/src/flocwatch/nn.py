"""Feedforward DO classifier written directly against numpy.

4 standardized inputs -> ReLU hidden layers -> 4-way softmax, trained with
mean cross-entropy and mini-batch SGD with momentum.

Random streams (all numpy PCG64) are derived from the single training seed:
``PCG64(seed)`` for the train/test split, ``PCG64([seed, 1])`` for weight
init and ``PCG64([seed, 2])`` for per-epoch batch shuffling.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .datamodel import (
    DEFAULT_BIN_EDGES,
    FEATURES,
    FORMAT_VERSION,
    DoClass,
    FlocError,
    ModelParams,
    WaterSample,
)
from .dataset import LabeledDataset, NormStats, apply_norm, fit_norm, split

DEFAULT_HIDDEN = (16, 16, 16, 16, 16)
N_CLASSES = len(DoClass)


class ModelError(FlocError, ValueError):
    pass


class ZeroDim(ModelError):
    pass


class ShapeMismatch(ModelError):
    pass


class NonFiniteActivation(ModelError):
    pass


class NonFiniteInput(ModelError):
    pass


class DivergedLoss(ModelError):
    pass


class SchemaViolation(ModelError):
    pass


class VersionMismatch(ModelError):
    pass


@dataclass
class Grads:
    weights: list
    biases: list


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 7
    hidden_dims: tuple = DEFAULT_HIDDEN
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class TrainReport:
    initial_train_loss: float
    train_loss: list  # one entry per epoch, full train set after the epoch
    test_loss: float
    test_accuracy: float
    confusion: list  # rows = true class, columns = predicted class
    n_train: int
    n_test: int
    wall_time: float = 0.0

    @property
    def final_train_loss(self) -> float:
        return self.train_loss[-1]

    def summary(self) -> dict:
        return {
            "initial_train_loss": self.initial_train_loss,
            "final_train_loss": self.final_train_loss,
            "test_loss": self.test_loss,
            "test_accuracy": self.test_accuracy,
            "confusion": self.confusion,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "epochs": len(self.train_loss),
            "wall_time": round(self.wall_time, 4),
        }


def _check_dims(dims):
    for d in dims:
        if int(d) < 1:
            raise ZeroDim(f"layer width {d} < 1 in {list(dims)}")


def init_params(
    input_dim: int = 4,
    hidden_dims: Sequence[int] = DEFAULT_HIDDEN,
    output_dim: int = 4,
    seed: int = 0,
    norm: Optional[NormStats] = None,
    bin_edges=DEFAULT_BIN_EDGES,
) -> ModelParams:
    """He-scaled normal weights, zero biases."""
    dims = (input_dim, *hidden_dims, output_dim)
    _check_dims(dims)
    dims = tuple(int(d) for d in dims)
    rng = np.random.Generator(np.random.PCG64([seed, 1]))
    weights = tuple(rng.normal(0.0, math.sqrt(2.0 / a), size=(a, b)) for a, b in zip(dims, dims[1:]))
    biases = tuple(np.zeros(b) for b in dims[1:])
    return _assemble(dims, weights, biases, norm, bin_edges, seed)


def zero_params(hidden_dims: Sequence[int] = DEFAULT_HIDDEN, norm: Optional[NormStats] = None) -> ModelParams:
    dims = (4, *hidden_dims, 4)
    _check_dims(dims)
    weights = tuple(np.zeros((a, b)) for a, b in zip(dims, dims[1:]))
    biases = tuple(np.zeros(b) for b in dims[1:])
    return _assemble(dims, weights, biases, norm, DEFAULT_BIN_EDGES, 0)


def _assemble(dims, weights, biases, norm, bin_edges, seed, metadata=None) -> ModelParams:
    if norm is None:
        norm = NormStats(np.zeros(4), np.ones(4))
    return ModelParams(
        layer_dims=tuple(dims),
        weights=tuple(weights),
        biases=tuple(biases),
        norm_mean=np.asarray(norm.mean, dtype=np.float64),
        norm_std=np.asarray(norm.std, dtype=np.float64),
        bin_edges=tuple(float(e) for e in bin_edges),
        seed=int(seed),
        metadata=dict(metadata or {}),
    )


def with_weights(params: ModelParams, weights, biases) -> ModelParams:
    return _assemble(
        params.layer_dims, weights, biases,
        NormStats(params.norm_mean, params.norm_std),
        params.bin_edges, params.seed, params.metadata,
    )


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(params: ModelParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.layer_dims[0]:
        raise ShapeMismatch(f"expected (n, {params.layer_dims[0]}) features, got {X.shape}")
    return X


def _run(weights, biases, X):
    """Return pre-activations and activations of every layer."""
    zs, acts = [], [X]
    a = X
    last = len(weights) - 1
    with np.errstate(over="ignore", invalid="ignore"):
        for i, (W, b) in enumerate(zip(weights, biases)):
            z = a @ W + b
            zs.append(z)
            a = z if i == last else np.maximum(z, 0.0)
            acts.append(a)
    return zs, acts


def logits(params: ModelParams, X) -> np.ndarray:
    X = _as_batch(params, X)
    zs, _ = _run(params.weights, params.biases, X)
    return zs[-1]


def forward(params: ModelParams, X) -> np.ndarray:
    """Class probabilities for standardized features (a 4-vector or N x 4)."""
    single = np.ndim(X) == 1
    z = logits(params, X)
    if not np.all(np.isfinite(z)):
        raise NonFiniteActivation("output logits are not finite")
    p = softmax(z)
    return p[0] if single else p


def _labels(y, n) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.shape[0] != n:
        raise ShapeMismatch(f"{n} feature rows but {y.shape[0]} labels")
    return y


def loss(params: ModelParams, X, y) -> float:
    return _loss(params.weights, params.biases, _as_batch(params, X), y)


def _log_softmax(z):
    with np.errstate(over="ignore", invalid="ignore"):
        z = z - z.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _loss(weights, biases, X, y) -> float:
    y = _labels(y, X.shape[0])
    zs, _ = _run(weights, biases, X)
    logp = _log_softmax(zs[-1])
    return float(-logp[np.arange(len(y)), y].mean())


def _loss_and_grads(weights, biases, X, y):
    y = _labels(y, X.shape[0])
    n = X.shape[0]
    zs, acts = _run(weights, biases, X)
    logp = _log_softmax(zs[-1])
    value = float(-logp[np.arange(n), y].mean())

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gW[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            # ReLU subgradient is 0 at z == 0
            delta = (delta @ weights[i].T) * (zs[i - 1] > 0)
    return value, Grads(gW, gb)


def loss_and_grads(params: ModelParams, X, y):
    """Mean cross-entropy over the batch and its gradient w.r.t. every parameter."""
    X = _as_batch(params, X)
    if X.shape[0] == 0:
        raise ShapeMismatch("empty batch")
    return _loss_and_grads(params.weights, params.biases, X, y)


@dataclass(frozen=True)
class GradCheck:
    worst: float  # largest relative error over the resolvable partials
    checked: int
    kinked: int  # skipped: the +-eps probe moves a hidden pre-activation across zero
    unresolved: int  # too small for a relative comparison at this eps
    worst_noise_ratio: float  # largest |analytic - numeric| / noise over the unresolved ones


def grad_check_detail(
    params: ModelParams,
    X,
    y,
    eps: float = 1e-5,
    grad_fn: Optional[Callable] = None,
    rtol: float = 1e-4,
) -> GradCheck:
    """Compare analytic partials with central differences, one parameter at a time.

    A central difference only approximates the derivative when the loss is
    smooth on [theta - eps, theta + eps]; partials whose probe crosses a ReLU
    kink are counted in ``kinked`` and not compared.

    In double precision the difference carries rounding noise of about
    ``noise = 4 * machine_eps * max(1, |loss|) / eps``. Partials with
    ``|a| + |n| < noise / rtol`` cannot be compared to ``rtol`` relative
    precision, so they are compared against ``noise`` in absolute terms instead.
    """
    X = _as_batch(params, X)
    y = _labels(y, X.shape[0])
    grad_fn = grad_fn or loss_and_grads
    _, analytic = grad_fn(params, X, y)
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    rows = np.arange(len(y))

    def probe():
        zs, _ = _run(weights, biases, X)
        value = float(-_log_softmax(zs[-1])[rows, y].mean())
        return value, [z > 0 for z in zs[:-1]]

    value, base = probe()
    noise = 4 * np.finfo(np.float64).eps * max(1.0, abs(value)) / eps
    floor = noise / rtol
    worst = worst_noise = 0.0
    checked = kinked = unresolved = 0
    for arrays, grads in ((weights, analytic.weights), (biases, analytic.biases)):
        for arr, g in zip(arrays, grads):
            flat, gflat = arr.reshape(-1), np.asarray(g).reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + eps
                up, pat_up = probe()
                flat[k] = orig - eps
                down, pat_down = probe()
                flat[k] = orig
                if any((u != b).any() or (d != b).any() for u, d, b in zip(pat_up, pat_down, base)):
                    kinked += 1
                    continue
                numeric = (up - down) / (2 * eps)
                a = gflat[k]
                gap = abs(a - numeric)
                if gap == 0.0:  # includes partials through inactive units
                    checked += 1
                elif abs(a) + abs(numeric) < floor:
                    unresolved += 1
                    worst_noise = max(worst_noise, gap / noise)
                else:
                    checked += 1
                    worst = max(worst, gap / (abs(a) + abs(numeric)))
    return GradCheck(worst, checked, kinked, unresolved, worst_noise)


def grad_check(params: ModelParams, X, y, eps: float = 1e-5, grad_fn: Optional[Callable] = None) -> float:
    """Largest relative gap between analytic and central-difference partials.

    Shorthand for ``grad_check_detail(...).worst``; see there for which
    partials are compared. ``grad_fn(params, X, y) -> (loss, Grads)`` defaults to
    :func:`loss_and_grads`; pass a different one to test the checker itself.
    """
    return grad_check_detail(params, X, y, eps, grad_fn).worst


def _confusion(y_true, y_pred) -> list:
    m = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(m, (y_true, y_pred), 1)
    return m.tolist()


def train(dataset: LabeledDataset, config: TrainConfig = TrainConfig()):
    """Split, standardize on the train part, then run SGD with momentum.

    Returns ``(params, report)``. Identical inputs give bit-identical params.
    """
    t0 = time.perf_counter()
    train_ds, test_ds = split(dataset, config.train_fraction, config.seed)
    stats = fit_norm(train_ds)
    Xtr, ytr = apply_norm(stats, train_ds.features), train_ds.y
    Xte, yte = apply_norm(stats, test_ds.features), test_ds.y

    init = init_params(4, config.hidden_dims, 4, config.seed, stats, dataset.bin_edges)
    weights = [w.copy() for w in init.weights]
    biases = [b.copy() for b in init.biases]
    vW = [np.zeros_like(w) for w in weights]
    vb = [np.zeros_like(b) for b in biases]

    n = len(train_ds)
    batch = min(config.batch_size, n)
    rng = np.random.Generator(np.random.PCG64([config.seed, 2]))
    initial = _loss(weights, biases, Xtr, ytr)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            _, g = _loss_and_grads(weights, biases, Xtr[idx], ytr[idx])
            for i in range(len(weights)):
                vW[i] = config.momentum * vW[i] - config.learning_rate * g.weights[i]
                vb[i] = config.momentum * vb[i] - config.learning_rate * g.biases[i]
                weights[i] += vW[i]
                biases[i] += vb[i]
        epoch_loss = _loss(weights, biases, Xtr, ytr)
        if not math.isfinite(epoch_loss):
            raise DivergedLoss(f"train loss became {epoch_loss} at epoch {epoch + 1}")
        history.append(epoch_loss)

    for arr in (*weights, *biases):
        arr.flags.writeable = False
    metadata = {
        "epochs": config.epochs,
        "batch_size": batch,
        "learning_rate": config.learning_rate,
        "momentum": config.momentum,
        "train_fraction": config.train_fraction,
        "n_train": n,
        "n_test": len(test_ds),
        "dataset_fingerprint": dataset.fingerprint(),
    }
    params = _assemble(init.layer_dims, weights, biases, stats, dataset.bin_edges, config.seed, metadata)

    probs = softmax(_run(weights, biases, Xte)[0][-1])
    pred = probs.argmax(axis=1)
    report = TrainReport(
        initial_train_loss=initial,
        train_loss=history,
        test_loss=_loss(weights, biases, Xte, yte),
        test_accuracy=float((pred == yte).mean()),
        confusion=_confusion(yte, pred),
        n_train=n,
        n_test=len(test_ds),
        wall_time=time.perf_counter() - t0,
    )
    return params, report


def normalize(params: ModelParams, x) -> np.ndarray:
    return apply_norm(NormStats(params.norm_mean, params.norm_std), x)


def predict(params: ModelParams, sample: WaterSample):
    """Classify one raw reading. Ties go to the lower (more severe) class."""
    x = sample.features() if isinstance(sample, WaterSample) else np.asarray(sample, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput(f"non-finite reading {x.tolist()}")
    probs = forward(params, normalize(params, x))
    return DoClass(int(np.argmax(probs))), probs


def evaluate(params: ModelParams, dataset: LabeledDataset) -> dict:
    X = normalize(params, dataset.features)
    y = dataset.y
    probs = forward(params, X)
    pred = probs.argmax(axis=1)
    return {
        "accuracy": float((pred == y).mean()),
        "loss": loss(params, X, y),
        "confusion": _confusion(y, pred),
        "n": len(dataset),
    }


# -- model files ------------------------------------------------------------

def model_to_dict(params: ModelParams) -> dict:
    return {
        "format_version": params.format_version,
        "layer_dims": list(params.layer_dims),
        "layers": [
            {"weights": np.asarray(w).tolist(), "biases": np.asarray(b).tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
        "norm_stats": {
            "features": list(FEATURES),
            "mean": np.asarray(params.norm_mean).tolist(),
            "std": np.asarray(params.norm_std).tolist(),
        },
        "bin_edges": list(params.bin_edges),
        "seed": params.seed,
        "training": params.metadata,
    }


def dumps_model(params: ModelParams) -> str:
    params.validate()
    return json.dumps(model_to_dict(params), indent=1, allow_nan=False) + "\n"


def save_model(params: ModelParams, path) -> None:
    Path(path).write_text(dumps_model(params), encoding="ascii")


def _major(version) -> int:
    try:
        return int(str(version).split(".")[0])
    except ValueError:
        raise SchemaViolation(f"unparseable format_version {version!r}") from None


def model_from_dict(doc) -> ModelParams:
    if not isinstance(doc, dict):
        raise SchemaViolation("model file must hold a JSON object")
    missing = [k for k in ("format_version", "layer_dims", "layers", "norm_stats", "bin_edges", "seed") if k not in doc]
    if missing:
        raise SchemaViolation(f"model file lacks {missing}")
    if _major(doc["format_version"]) != _major(FORMAT_VERSION):
        raise VersionMismatch(f"model format {doc['format_version']} is not readable by {FORMAT_VERSION}")
    try:
        dims = tuple(int(d) for d in doc["layer_dims"])
        layers = doc["layers"]
        ns = doc["norm_stats"]
        mean = np.array(ns["mean"], dtype=np.float64)
        std = np.array(ns["std"], dtype=np.float64)
        edges = tuple(float(e) for e in doc["bin_edges"])
    except (TypeError, KeyError, ValueError) as exc:
        raise SchemaViolation(f"malformed model file: {exc}") from None
    if len(layers) != len(dims) - 1:
        raise ShapeMismatch(f"{len(layers)} layers for layer_dims {list(dims)}")
    weights, biases = [], []
    for i, layer in enumerate(layers):
        try:
            w = np.array(layer["weights"], dtype=np.float64)
            b = np.array(layer["biases"], dtype=np.float64)
        except (TypeError, KeyError, ValueError) as exc:
            raise ShapeMismatch(f"layer {i}: {exc}") from None
        if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
            raise ShapeMismatch(f"layer {i}: weights {w.shape}, biases {b.shape} vs dims {dims[i]}->{dims[i + 1]}")
        weights.append(w)
        biases.append(b)
    params = ModelParams(
        layer_dims=dims,
        weights=tuple(weights),
        biases=tuple(biases),
        norm_mean=mean,
        norm_std=std,
        bin_edges=edges,
        seed=doc["seed"],
        format_version=str(doc["format_version"]),
        metadata=dict(doc.get("training") or {}),
    )
    problem = params.first_violation()
    if problem is not None:
        raise SchemaViolation(problem)
    return params


def load_model(path) -> ModelParams:
    text = Path(path).read_text(encoding="ascii")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{path}: not JSON ({exc})") from None
    return model_from_dict(doc)
