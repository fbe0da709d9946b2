"""Diagonal-covariance Gaussian mixture codebooks.

Model: p(x) = sum_k w_k N(x | mu_k, diag(var_k)).

Fitting is maximum-likelihood EM,

    E-step: gamma_tk = w_k N(x_t | mu_k, var_k) / sum_j w_j N(x_t | mu_j, var_j)
    M-step: w_k = N_k / T,  mu_k = sum_t gamma_tk x_t / N_k,
            var_k = sum_t gamma_tk (x_t - mu_k)^2 / N_k,  N_k = sum_t gamma_tk

seeded with k-means++ plus a few Lloyd iterations so runs are reproducible
for a given seed. A per-dimension variance floor and a mixing-weight floor
keep every fitted component usable downstream (Fisher encoding divides by
sigma_k and sqrt(w_k)). All density work happens in log space.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataIOError,
    DegenerateDataError,
    InsufficientDataError,
    InvalidDescriptorError,
    InvalidInputError,
    ShapeError,
)
from .seeding import derive_rng

LOG_2PI = math.log(2.0 * math.pi)

WEIGHT_FLOOR = 1e-6
STARVATION_THRESHOLD = 1e-10
KMEANS_ITERS = 10
INIT_SUBSAMPLE_FACTOR = 10  # subsample size = min(T, factor * K * D)

_CHUNK = 8192
_GMM_MAGIC = b"GMM1"


@dataclass
class DescriptorSet:
    """A bag of D-dimensional local descriptors for one image.

    ``data`` is a (T, D) float64 matrix; T may be 0 for intermediate sets
    (scale pooling skips them) but encoding and fitting require T >= 1.
    """

    data: np.ndarray
    image_id: str = ""

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if self.data.ndim != 2:
            raise ShapeError(
                f"descriptor data must be 2-d (T, D), got shape {self.data.shape}"
            )
        if self.data.size and not np.isfinite(self.data).all():
            raise InvalidDescriptorError(
                f"non-finite descriptor values in set {self.image_id!r}"
            )

    @property
    def count(self) -> int:
        """T, the number of descriptors."""
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        """D, the descriptor dimension."""
        return self.data.shape[1]


@dataclass
class GaussianMixture:
    """An immutable K-component diagonal-covariance mixture.

    Invariants (checked on construction): weights on the simplex with every
    entry positive, variances strictly positive, matching shapes.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.array(self.weights, dtype=np.float64)
        self.means = np.array(self.means, dtype=np.float64)
        self.variances = np.array(self.variances, dtype=np.float64)
        if self.weights.ndim != 1 or self.means.ndim != 2 or self.variances.ndim != 2:
            raise ShapeError("weights must be (K,), means and variances (K, D)")
        k = self.weights.shape[0]
        if k < 1 or self.means.shape[0] != k or self.variances.shape != self.means.shape:
            raise ShapeError(
                f"inconsistent mixture shapes: weights {self.weights.shape}, "
                f"means {self.means.shape}, variances {self.variances.shape}"
            )
        if self.means.shape[1] < 1:
            raise ShapeError("descriptor dimension must be >= 1")
        if not (
            np.isfinite(self.weights).all()
            and np.isfinite(self.means).all()
            and np.isfinite(self.variances).all()
        ):
            raise InvalidInputError("mixture parameters must be finite")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise InvalidInputError(
                f"weights must sum to 1 within 1e-9, got {self.weights.sum()!r}"
            )
        if np.any(self.weights <= 0):
            raise InvalidInputError("every mixing weight must be > 0")
        if np.any(self.variances <= 0):
            raise InvalidInputError("every variance entry must be > 0")
        for a in (self.weights, self.means, self.variances):
            a.setflags(write=False)

    @property
    def n_components(self) -> int:
        """K."""
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        """D."""
        return self.means.shape[1]


@dataclass
class EmConfig:
    max_iters: int = 100
    tol: float = 1e-5
    seed: int = 0
    variance_floor_fraction: float = 1e-4

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if not self.tol > 0:
            raise InvalidInputError("tol must be > 0")
        if not self.variance_floor_fraction > 0:
            raise InvalidInputError("variance_floor_fraction must be > 0")


def _log_joint(
    log_weights: np.ndarray,
    means: np.ndarray,
    inv_var: np.ndarray,
    log_norm: np.ndarray,
    x: np.ndarray,
) -> np.ndarray:
    """log(w_k) + log N(x_t | mu_k, var_k) for a chunk of rows, shape (t, K)."""
    # (x - mu)^2 / var expanded so no (t, K, D) intermediate is formed.
    quad = (
        (x * x) @ inv_var.T
        - 2.0 * (x @ (means * inv_var).T)
        + np.sum(means * means * inv_var, axis=1)
    )
    return log_weights + log_norm - 0.5 * quad


def _density_terms(gmm: GaussianMixture):
    log_weights = np.log(gmm.weights)
    inv_var = 1.0 / gmm.variances
    log_norm = -0.5 * (gmm.dim * LOG_2PI + np.sum(np.log(gmm.variances), axis=1))
    return log_weights, inv_var, log_norm


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = np.max(a, axis=1, keepdims=True)
    return m + np.log(np.sum(np.exp(a - m), axis=1, keepdims=True))


def posteriors_matrix(gmm: GaussianMixture, data: np.ndarray) -> np.ndarray:
    """Responsibilities gamma_tk for each row of ``data``, shape (T, K).

    Computed in log space (log-sum-exp), so extreme log-densities do not
    overflow. Rows sum to 1.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != gmm.dim:
        raise ShapeError(
            f"expected (T, {gmm.dim}) descriptors, got shape {data.shape}"
        )
    log_weights, inv_var, log_norm = _density_terms(gmm)
    out = np.empty((data.shape[0], gmm.n_components))
    for start in range(0, data.shape[0], _CHUNK):
        chunk = data[start : start + _CHUNK]
        lj = _log_joint(log_weights, gmm.means, inv_var, log_norm, chunk)
        out[start : start + chunk.shape[0]] = np.exp(lj - _logsumexp_rows(lj))
    return out


def posteriors(gmm: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """Responsibilities of a single descriptor, a length-K vector summing to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (gmm.dim,):
        raise ShapeError(f"expected a length-{gmm.dim} descriptor, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise InvalidDescriptorError("descriptor contains NaN/Inf")
    return posteriors_matrix(gmm, x[None, :])[0]


def log_likelihood(gmm: GaussianMixture, descriptors: DescriptorSet) -> float:
    """Mean log-likelihood (1/T) sum_t log p(x_t)."""
    if descriptors.dim != gmm.dim:
        raise ShapeError(
            f"descriptor dim {descriptors.dim} != mixture dim {gmm.dim}"
        )
    if descriptors.count == 0:
        raise ShapeError("log_likelihood needs at least one descriptor")
    log_weights, inv_var, log_norm = _density_terms(gmm)
    total = 0.0
    for start in range(0, descriptors.count, _CHUNK):
        chunk = descriptors.data[start : start + _CHUNK]
        lj = _log_joint(log_weights, gmm.means, inv_var, log_norm, chunk)
        total += float(np.sum(_logsumexp_rows(lj)))
    return total / descriptors.count


def _kmeans_pp_centers(
    sample: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    n = sample.shape[0]
    centers = np.empty((k, sample.shape[1]))
    centers[0] = sample[int(rng.integers(n))]
    d2 = np.sum((sample - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[i] = sample[idx]
        d2 = np.minimum(d2, np.sum((sample - centers[i]) ** 2, axis=1))
    return centers


def _lloyd(
    sample: np.ndarray, centers: np.ndarray, iters: int
) -> tuple[np.ndarray, np.ndarray]:
    sq = np.sum(sample * sample, axis=1, keepdims=True)
    labels = np.zeros(sample.shape[0], dtype=np.intp)
    for _ in range(iters):
        d2 = sq - 2.0 * (sample @ centers.T) + np.sum(centers * centers, axis=1)
        labels = np.argmin(d2, axis=1)
        for k in range(centers.shape[0]):
            members = sample[labels == k]
            if members.shape[0] > 0:
                centers[k] = members.mean(axis=0)
    return centers, labels


def _initialize(
    data: np.ndarray,
    k: int,
    rng: np.random.Generator,
    global_var: np.ndarray,
    floor: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t, d = data.shape
    m = min(t, INIT_SUBSAMPLE_FACTOR * k * d)
    if m < t:
        sample = data[np.sort(rng.choice(t, size=m, replace=False))]
    else:
        sample = data
    centers = _kmeans_pp_centers(sample, k, rng)
    centers, labels = _lloyd(sample, centers, KMEANS_ITERS)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    weights = np.maximum(counts / m, WEIGHT_FLOOR)
    weights /= weights.sum()
    variances = np.empty((k, d))
    for i in range(k):
        members = sample[labels == i]
        variances[i] = members.var(axis=0) if members.shape[0] >= 2 else global_var
    variances = np.maximum(variances, floor)
    return weights, centers, variances


def _em_pass(
    weights: np.ndarray, means: np.ndarray, variances: np.ndarray, data: np.ndarray
):
    """One E-step over the full data with deterministic chunked reduction."""
    t, d = data.shape
    k = weights.shape[0]
    log_weights = np.log(weights)
    inv_var = 1.0 / variances
    log_norm = -0.5 * (d * LOG_2PI + np.sum(np.log(variances), axis=1))
    nk = np.zeros(k)
    sum_x = np.zeros((k, d))
    sum_x2 = np.zeros((k, d))
    ll_total = 0.0
    max_resp = np.empty(t)
    for start in range(0, t, _CHUNK):
        chunk = data[start : start + _CHUNK]
        lj = _log_joint(log_weights, means, inv_var, log_norm, chunk)
        lse = _logsumexp_rows(lj)
        ll_total += float(np.sum(lse))
        resp = np.exp(lj - lse)
        max_resp[start : start + chunk.shape[0]] = resp.max(axis=1)
        nk += resp.sum(axis=0)
        sum_x += resp.T @ chunk
        sum_x2 += resp.T @ (chunk * chunk)
    return nk, sum_x, sum_x2, ll_total / t, max_resp


def _m_step(
    nk: np.ndarray,
    sum_x: np.ndarray,
    sum_x2: np.ndarray,
    max_resp: np.ndarray,
    data: np.ndarray,
    floor: np.ndarray,
    global_var: np.ndarray,
):
    t = data.shape[0]
    k = nk.shape[0]
    safe_nk = np.maximum(nk, 1e-300)
    means = sum_x / safe_nk[:, None]
    variances = np.maximum(sum_x2 / safe_nk[:, None] - means * means, floor)
    weights = nk / t
    starved = np.flatnonzero(nk < STARVATION_THRESHOLD)
    if starved.size:
        # Revive each starved component at a distinct worst-explained descriptor.
        worst = np.argsort(max_resp, kind="stable")[: starved.size]
        for j, comp in enumerate(starved):
            means[comp] = data[worst[j]]
            variances[comp] = np.maximum(global_var, floor)
            weights[comp] = 1.0 / k
    weights = np.maximum(weights, WEIGHT_FLOOR)
    weights /= weights.sum()
    return weights, means, variances


def fit_gmm_with_history(
    descriptors: DescriptorSet, n_components: int, config: EmConfig | None = None
) -> tuple[GaussianMixture, np.ndarray]:
    """Like :func:`fit_gmm` but also returns per-iteration mean log-likelihood."""
    cfg = config if config is not None else EmConfig()
    k = int(n_components)
    if k < 1:
        raise InvalidInputError(f"n_components must be >= 1, got {k}")
    data = descriptors.data
    t = descriptors.count
    if t < k:
        raise InsufficientDataError(
            f"{t} descriptors cannot support {k} components (need T >= K)"
        )
    if not np.isfinite(data).all():
        raise InvalidDescriptorError(
            f"non-finite descriptor values in set {descriptors.image_id!r}"
        )
    global_var = data.var(axis=0)
    if not np.any(global_var > 0):
        raise DegenerateDataError(
            "all descriptors are identical; no usable components exist"
        )
    if np.any(global_var == 0):
        dims = np.flatnonzero(global_var == 0)
        raise DegenerateDataError(
            f"descriptor dimensions {dims.tolist()} are constant; "
            "the variance floor would be zero there"
        )
    floor = cfg.variance_floor_fraction * global_var

    rng = derive_rng(cfg.seed)
    weights, means, variances = _initialize(data, k, rng, global_var, floor)

    history: list[float] = []
    prev_ll: float | None = None
    for _ in range(cfg.max_iters):
        nk, sum_x, sum_x2, mean_ll, max_resp = _em_pass(weights, means, variances, data)
        history.append(mean_ll)
        if prev_ll is not None and (mean_ll - prev_ll) < cfg.tol * abs(prev_ll):
            break
        prev_ll = mean_ll
        weights, means, variances = _m_step(
            nk, sum_x, sum_x2, max_resp, data, floor, global_var
        )
    return GaussianMixture(weights, means, variances), np.asarray(history)


def fit_gmm(
    descriptors: DescriptorSet, n_components: int, config: EmConfig | None = None
) -> GaussianMixture:
    """Fit a K-component diagonal GMM; deterministic for a given config seed."""
    model, _ = fit_gmm_with_history(descriptors, n_components, config)
    return model


def sample_gmm(gmm: GaussianMixture, n: int, seed: int) -> DescriptorSet:
    """Draw n descriptors: pick a component by weight, then a diagonal Gaussian."""
    if n < 1:
        raise InvalidInputError(f"sample size must be >= 1, got {n}")
    rng = derive_rng(seed)
    comps = rng.choice(gmm.n_components, size=n, p=gmm.weights)
    noise = rng.standard_normal((n, gmm.dim))
    data = gmm.means[comps] + np.sqrt(gmm.variances[comps]) * noise
    return DescriptorSet(data, image_id=f"gmm-sample-{seed}")


def save_gmm(gmm: GaussianMixture, path) -> None:
    """Write the GMM1 binary format (little-endian f64 parameters)."""
    with open(path, "wb") as fh:
        fh.write(_GMM_MAGIC)
        fh.write(struct.pack("<II", gmm.n_components, gmm.dim))
        fh.write(gmm.weights.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(gmm.means).astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(gmm.variances).astype("<f8").tobytes())


def load_gmm(path) -> GaussianMixture:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataIOError(f"cannot read GMM file {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != _GMM_MAGIC:
        raise DataIOError(f"{path} is not a GMM1 file")
    k, d = struct.unpack_from("<II", blob, 4)
    expected = 12 + 8 * (k + 2 * k * d)
    if k < 1 or d < 1 or len(blob) != expected:
        raise DataIOError(
            f"{path} is truncated or corrupt (K={k}, D={d}, {len(blob)} bytes, "
            f"expected {expected})"
        )
    body = np.frombuffer(blob, dtype="<f8", offset=12)
    weights = body[:k]
    means = body[k : k + k * d].reshape(k, d)
    variances = body[k + k * d :].reshape(k, d)
    return GaussianMixture(weights, means, variances)
