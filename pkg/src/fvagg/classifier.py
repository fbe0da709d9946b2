"""One-vs-rest linear SVM on Fisher vectors, and balanced accuracy.

Each class gets a binary L2-regularized hinge classifier trained by
seeded stochastic subgradient descent with step size 1/(lambda*(t+t0))
and iterate averaging over the last epochs. Samples are weighted by
n_total/(C*n_class) so every class contributes equal total loss, which is
what the balanced-accuracy metric rewards.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DataIOError,
    DegenerateLabelsError,
    InvalidInputError,
    LabelError,
    ShapeError,
)
from .fisher import FisherVector
from .seeding import derive_rng

_SVM_MAGIC = b"LSV1"


@dataclass
class SvmConfig:
    reg_lambda: float = 1e-4
    epochs: int = 30
    averaging_epochs: int = 10
    seed: int = 0
    learning_rate_offset: float | None = None  # t0; default 1/reg_lambda

    def __post_init__(self) -> None:
        if not self.reg_lambda > 0:
            raise InvalidInputError("reg_lambda must be > 0")
        if self.epochs < 1 or self.averaging_epochs < 1:
            raise InvalidInputError("epochs and averaging_epochs must be >= 1")

    @property
    def t0(self) -> float:
        if self.learning_rate_offset is not None:
            return self.learning_rate_offset
        return 1.0 / self.reg_lambda


@dataclass
class LinearModel:
    """One-vs-rest linear classifier: score_c(x) = w_c . x + b_c."""

    classes: tuple[str, ...]
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self) -> None:
        self.classes = tuple(str(c) for c in self.classes)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        c = len(self.classes)
        if c < 2:
            raise InvalidInputError("a linear model needs at least 2 classes")
        if len(set(self.classes)) != c:
            raise InvalidInputError("class names must be unique")
        if self.weights.ndim != 2 or self.weights.shape[0] != c:
            raise ShapeError(
                f"weights must be ({c}, dim), got shape {self.weights.shape}"
            )
        if self.biases.shape != (c,):
            raise ShapeError(f"biases must be ({c},), got shape {self.biases.shape}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise InvalidInputError("model parameters must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def _check_features(features: Sequence[FisherVector]) -> np.ndarray:
    if not features:
        raise InvalidInputError("no training features")
    dim = features[0].dim
    for fv in features:
        if fv.dim != dim:
            raise ShapeError(f"feature dims disagree: {fv.dim} != {dim}")
        if not fv.normalized:
            raise InvalidInputError("train_svm expects normalized Fisher vectors")
    return np.stack([fv.values for fv in features])


def _sgd_binary(
    x: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray,
    cfg: SvmConfig,
    seed_key: int,
) -> tuple[np.ndarray, float, list[tuple[np.ndarray, float]]]:
    """Pegasos-style SGD; returns the averaged iterate and all end-of-epoch
    snapshots (for convergence diagnostics)."""
    n, dim = x.shape
    rng = derive_rng(cfg.seed, seed_key)
    lam = cfg.reg_lambda
    t0 = cfg.t0
    v = np.zeros(dim)
    scale = 1.0
    b = 0.0
    t = 0
    snapshots: list[tuple[np.ndarray, float]] = []
    for _ in range(cfg.epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * (t + t0))
            margin = y[i] * (scale * float(v @ x[i]) + b)
            scale *= 1.0 - eta * lam
            if margin < 1.0:
                step = eta * sample_weight[i] * y[i]
                v += (step / scale) * x[i]
                b += step
        v *= scale  # fold the decay in once per epoch to keep 1/scale bounded
        scale = 1.0
        snapshots.append((v.copy(), b))
    window = snapshots[-min(cfg.averaging_epochs, len(snapshots)) :]
    w_avg = np.mean([s[0] for s in window], axis=0)
    b_avg = float(np.mean([s[1] for s in window]))
    return w_avg, b_avg, snapshots


def _objective(
    x: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray,
    w: np.ndarray,
    b: float,
    lam: float,
) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (x @ w + b))
    return 0.5 * lam * float(w @ w) + float(np.average(hinge, weights=sample_weight))


def _prepare_training(
    features: Sequence[FisherVector],
    labels: Sequence[str],
    classes: Sequence[str] | None,
):
    x = _check_features(features)
    labels = [str(l) for l in labels]
    if len(labels) != x.shape[0]:
        raise InvalidInputError(
            f"{x.shape[0]} features but {len(labels)} labels"
        )
    if classes is None:
        classes = sorted(set(labels))
    classes = tuple(str(c) for c in classes)
    index = {c: i for i, c in enumerate(classes)}
    if len(index) != len(classes):
        raise InvalidInputError("class names must be unique")
    unknown = sorted(set(labels) - set(classes))
    if unknown:
        raise LabelError(f"labels not in the class list: {unknown}")
    if len(classes) < 2 or len(set(labels)) < 2:
        raise DegenerateLabelsError(
            "training needs at least 2 distinct classes with examples"
        )
    y_idx = np.array([index[l] for l in labels])
    counts = np.bincount(y_idx, minlength=len(classes))
    missing = [classes[i] for i in np.flatnonzero(counts == 0)]
    if missing:
        raise DegenerateLabelsError(f"classes with no training examples: {missing}")
    n = x.shape[0]
    sample_weight = n / (len(classes) * counts[y_idx].astype(np.float64))
    return x, y_idx, classes, sample_weight


def train_svm(
    features: Sequence[FisherVector],
    labels: Sequence[str],
    config: SvmConfig | None = None,
    classes: Sequence[str] | None = None,
) -> LinearModel:
    """Train one binary hinge classifier per class (one-vs-rest).

    Deterministic for a given config seed; each binary problem derives its
    own stream, so the per-class trainings are order-independent.
    """
    model, _ = _train(features, labels, config, classes, with_history=False)
    return model


def train_svm_with_history(
    features: Sequence[FisherVector],
    labels: Sequence[str],
    config: SvmConfig | None = None,
    classes: Sequence[str] | None = None,
) -> tuple[LinearModel, np.ndarray]:
    """Also return the per-epoch full-set objective (mean over classes),
    evaluated at each epoch's trailing-window averaged iterate."""
    return _train(features, labels, config, classes, with_history=True)


def _train(features, labels, config, classes, with_history: bool):
    cfg = config if config is not None else SvmConfig()
    x, y_idx, classes, sample_weight = _prepare_training(features, labels, classes)
    c = len(classes)
    weights = np.empty((c, x.shape[1]))
    biases = np.empty(c)
    history = np.zeros(cfg.epochs) if with_history else None
    for ci in range(c):
        y = np.where(y_idx == ci, 1.0, -1.0)
        w_avg, b_avg, snapshots = _sgd_binary(x, y, sample_weight, cfg, ci)
        weights[ci] = w_avg
        biases[ci] = b_avg
        if with_history:
            for e in range(cfg.epochs):
                window = snapshots[max(0, e + 1 - cfg.averaging_epochs) : e + 1]
                w_e = np.mean([s[0] for s in window], axis=0)
                b_e = float(np.mean([s[1] for s in window]))
                history[e] += (
                    _objective(x, y, sample_weight, w_e, b_e, cfg.reg_lambda) / c
                )
    model = LinearModel(classes, weights, biases)
    return model, history


def predict(model: LinearModel, fv: FisherVector) -> tuple[str, np.ndarray]:
    """Argmax of the per-class scores; ties break to the lowest class index."""
    if fv.dim != model.dim:
        raise ShapeError(f"feature dim {fv.dim} != model dim {model.dim}")
    scores = model.weights @ fv.values + model.biases
    return model.classes[int(np.argmax(scores))], scores


@dataclass
class EvalReport:
    """Confusion matrix (rows = true class), per-class recalls, and their
    mean (balanced accuracy). Zero-support recalls are NaN and excluded."""

    classes: tuple[str, ...]
    confusion: np.ndarray
    per_class_recall: np.ndarray
    bac: float

    def to_dict(self) -> dict:
        recalls = [
            None if not np.isfinite(r) else float(r) for r in self.per_class_recall
        ]
        return {
            "classes": list(self.classes),
            "confusion": self.confusion.astype(int).tolist(),
            "per_class_recall": recalls,
            "bac": float(self.bac),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        recalls = np.array(
            [np.nan if r is None else float(r) for r in d["per_class_recall"]]
        )
        return cls(
            classes=tuple(d["classes"]),
            confusion=np.asarray(d["confusion"], dtype=np.int64),
            per_class_recall=recalls,
            bac=float(d["bac"]),
        )


def balanced_accuracy(
    predictions: Sequence[str], truth: Sequence[str], classes: Sequence[str]
) -> EvalReport:
    """Mean per-class recall; invariant to class support sizes."""
    if len(predictions) != len(truth) or len(truth) == 0:
        raise InvalidInputError(
            f"need equal non-empty prediction/truth lists, got "
            f"{len(predictions)} and {len(truth)}"
        )
    classes = tuple(str(c) for c in classes)
    index = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for pred, true in zip(predictions, truth):
        if true not in index:
            raise LabelError(f"unknown true label {true!r}")
        if pred not in index:
            raise LabelError(f"unknown predicted label {pred!r}")
        confusion[index[true], index[pred]] += 1
    support = confusion.sum(axis=1)
    recalls = np.full(len(classes), np.nan)
    supported = support > 0
    recalls[supported] = confusion.diagonal()[supported] / support[supported]
    if not supported.all():
        empty = [classes[i] for i in np.flatnonzero(~supported)]
        warnings.warn(
            f"classes with zero support excluded from balanced accuracy: {empty}",
            stacklevel=2,
        )
    bac = float(np.mean(recalls[supported]))
    return EvalReport(classes, confusion, recalls, bac)


def save_model(model: LinearModel, path) -> None:
    """Write the LSV1 binary format (little-endian, f32 parameters)."""
    with open(path, "wb") as fh:
        fh.write(_SVM_MAGIC)
        fh.write(struct.pack("<II", len(model.classes), model.dim))
        for name in model.classes:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(model.weights).astype("<f4").tobytes())
        fh.write(model.biases.astype("<f4").tobytes())


def load_model(path) -> LinearModel:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataIOError(f"cannot read model file {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != _SVM_MAGIC:
        raise DataIOError(f"{path} is not an LSV1 file")
    c, dim = struct.unpack_from("<II", blob, 4)
    offset = 12
    names = []
    try:
        for _ in range(c):
            (length,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            names.append(blob[offset : offset + length].decode("utf-8"))
            offset += length
    except (struct.error, UnicodeDecodeError) as exc:
        raise DataIOError(f"{path} has a corrupt class-name table: {exc}") from exc
    expected = offset + 4 * (c * dim + c)
    if len(blob) != expected:
        raise DataIOError(
            f"{path} is truncated or corrupt ({len(blob)} bytes, expected {expected})"
        )
    body = np.frombuffer(blob, dtype="<f4", offset=offset)
    weights = body[: c * dim].reshape(c, dim).astype(np.float64)
    biases = body[c * dim :].astype(np.float64)
    return LinearModel(tuple(names), weights, biases)
