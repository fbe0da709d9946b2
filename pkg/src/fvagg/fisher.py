"""Fisher vector encoding and the foreground/background linearity experiment.

A descriptor set X = {x_1..x_T} is encoded against a diagonal-GMM codebook
as the gradient of its mean log-likelihood, whitened by the diagonal
Fisher-information approximation (Sanchez et al., "Image Classification
with the Fisher Vector: Theory and Practice"):

    G_mu_k    = 1/(T sqrt(w_k))   * sum_t gamma_t(k) (x_t - mu_k) / sigma_k
    G_sigma_k = 1/(T sqrt(2 w_k)) * sum_t gamma_t(k) [((x_t - mu_k)/sigma_k)^2 - 1]

laid out as [G_mu_1 .. G_mu_K, G_sigma_1 .. G_sigma_K], length 2*K*D. There
is no mixing-weight block. The improved-FV normalization is signed square
root followed by L2.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataIOError,
    DegenerateSplitError,
    DoubleNormalizationError,
    EmptyInputError,
    InvalidInputError,
    ShapeError,
)
from .gmm import DescriptorSet, GaussianMixture, posteriors_matrix, sample_gmm
from .seeding import derive_seeds

RESPONSIBILITY_TRUNCATION = 1e-6

_CHUNK = 8192
_FV_MAGIC = b"FVV1"


@dataclass
class FisherVector:
    """A 2*K*D gradient representation of one image's descriptor set."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ShapeError(f"FV values must be 1-d, got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise InvalidInputError("FV values must be finite")
        if self.normalized:
            norm = float(np.linalg.norm(self.values))
            if norm != 0.0 and abs(norm - 1.0) > 1e-6:
                raise InvalidInputError(
                    f"normalized FV must have unit L2 norm (or be zero), got {norm!r}"
                )

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass
class MixtureSpec:
    """A two-source descriptor population: foreground q, background r,
    mixed in proportion w (the foreground share)."""

    foreground: GaussianMixture
    background: GaussianMixture
    foreground_weight: float

    def __post_init__(self) -> None:
        if self.foreground.dim != self.background.dim:
            raise ShapeError(
                f"foreground dim {self.foreground.dim} != "
                f"background dim {self.background.dim}"
            )
        if not 0.0 <= self.foreground_weight <= 1.0:
            raise InvalidInputError(
                f"foreground weight must be in [0, 1], got {self.foreground_weight}"
            )

    @property
    def dim(self) -> int:
        return self.foreground.dim


def encode_fv(gmm: GaussianMixture, descriptors: DescriptorSet) -> FisherVector:
    """Raw (unnormalized) Fisher vector of one descriptor set.

    Invariant to descriptor order and to duplicating the whole set; the 1/T
    averaging absorbs the set size. Responsibilities below
    RESPONSIBILITY_TRUNCATION are dropped after exact normalization.
    """
    if descriptors.count == 0:
        raise EmptyInputError(
            f"cannot encode an empty descriptor set ({descriptors.image_id!r})"
        )
    if descriptors.dim != gmm.dim:
        raise ShapeError(
            f"descriptor dim {descriptors.dim} != codebook dim {gmm.dim}"
        )
    t = descriptors.count
    k, d = gmm.n_components, gmm.dim
    sigma = np.sqrt(gmm.variances)
    g_mu = np.zeros((k, d))
    g_sigma = np.zeros((k, d))
    for start in range(0, t, _CHUNK):
        chunk = descriptors.data[start : start + _CHUNK]
        resp = posteriors_matrix(gmm, chunk)
        resp[resp < RESPONSIBILITY_TRUNCATION] = 0.0
        for i in range(k):
            z = (chunk - gmm.means[i]) / sigma[i]
            g_mu[i] += resp[:, i] @ z
            g_sigma[i] += resp[:, i] @ (z * z - 1.0)
    g_mu /= t * np.sqrt(gmm.weights)[:, None]
    g_sigma /= t * np.sqrt(2.0 * gmm.weights)[:, None]
    return FisherVector(np.concatenate([g_mu.ravel(), g_sigma.ravel()]))


def normalize_fv(fv: FisherVector) -> FisherVector:
    """Improved-FV normalization: signed square root, then L2.

    Power normalization is not idempotent, so a second application is an
    error rather than a silent no-op.
    """
    if fv.normalized:
        raise DoubleNormalizationError("FV is already normalized")
    powered = np.sign(fv.values) * np.sqrt(np.abs(fv.values))
    norm = float(np.linalg.norm(powered))
    if norm == 0.0:
        return FisherVector(np.zeros_like(fv.values), normalized=True)
    return FisherVector(powered / norm, normalized=True)


@dataclass
class DecompositionReport:
    """Raw FVs of a mixed sample and of its two sources, plus how far the
    mixed FV is from the weight-convex combination of the source FVs."""

    fv_mixture: FisherVector
    fv_foreground: FisherVector
    fv_background: FisherVector
    n_foreground: int
    n_background: int
    foreground_weight: float
    effective_weight: float
    residual_norm: float
    background_term_norm: float

    def summary(self) -> dict:
        return {
            "n_foreground": self.n_foreground,
            "n_background": self.n_background,
            "foreground_weight": self.foreground_weight,
            "effective_weight": self.effective_weight,
            "residual_norm": self.residual_norm,
            "background_term_norm": self.background_term_norm,
            "mixture_fv_norm": float(np.linalg.norm(self.fv_mixture.values)),
        }


def decomposition_experiment(
    spec: MixtureSpec, codebook: GaussianMixture, n: int, seed: int
) -> DecompositionReport:
    """Sample w*n foreground + (1-w)*n background descriptors, encode the
    pooled sample and each source against the shared codebook, and report

        residual = ||fv_mix - w_eff fv_fg - (1 - w_eff) fv_bg|| / ||fv_mix||

    with w_eff = n_fg/n. Because the FV is a 1/T-weighted sum, the residual
    is zero up to rounding; the background-term magnitude ||(1-w) fv_bg||
    measures how far the background gradient actually is from vanishing.
    """
    if n < 1000:
        raise InvalidInputError(f"decomposition experiment needs n >= 1000, got {n}")
    if spec.dim != codebook.dim:
        raise ShapeError(f"mixture dim {spec.dim} != codebook dim {codebook.dim}")
    w = spec.foreground_weight
    n_fg = int(round(w * n))
    n_bg = n - n_fg
    if w not in (0.0, 1.0) and (n_fg == 0 or n_bg == 0):
        raise DegenerateSplitError(
            f"w={w} with n={n} rounds one side of the split to zero samples"
        )
    fg_seed, bg_seed = derive_seeds(seed, 2)
    zero = FisherVector(np.zeros(2 * codebook.n_components * codebook.dim))
    if n_fg > 0:
        fg = sample_gmm(spec.foreground, n_fg, fg_seed)
        fv_fg = encode_fv(codebook, fg)
    else:
        fg, fv_fg = None, zero
    if n_bg > 0:
        bg = sample_gmm(spec.background, n_bg, bg_seed)
        fv_bg = encode_fv(codebook, bg)
    else:
        bg, fv_bg = None, zero
    parts = [s.data for s in (fg, bg) if s is not None]
    mixed = DescriptorSet(np.vstack(parts), image_id="mixture-sample")
    fv_mix = encode_fv(codebook, mixed)

    w_eff = n_fg / n
    combo = w_eff * fv_fg.values + (1.0 - w_eff) * fv_bg.values
    mix_norm = float(np.linalg.norm(fv_mix.values))
    gap = float(np.linalg.norm(fv_mix.values - combo))
    residual = gap / mix_norm if mix_norm > 0 else 0.0
    return DecompositionReport(
        fv_mixture=fv_mix,
        fv_foreground=fv_fg,
        fv_background=fv_bg,
        n_foreground=n_fg,
        n_background=n_bg,
        foreground_weight=w,
        effective_weight=w_eff,
        residual_norm=residual,
        background_term_norm=float((1.0 - w) * np.linalg.norm(fv_bg.values)),
    )


def save_fv(fv: FisherVector, path) -> None:
    """Write the FVV1 binary format (little-endian f32 values)."""
    with open(path, "wb") as fh:
        fh.write(_FV_MAGIC)
        fh.write(struct.pack("<IB", fv.dim, 1 if fv.normalized else 0))
        fh.write(fv.values.astype("<f4").tobytes())


def load_fv(path) -> FisherVector:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataIOError(f"cannot read FV file {path}: {exc}") from exc
    if len(blob) < 9 or blob[:4] != _FV_MAGIC:
        raise DataIOError(f"{path} is not an FVV1 file")
    dim, flag = struct.unpack_from("<IB", blob, 4)
    expected = 9 + 4 * dim
    if len(blob) != expected:
        raise DataIOError(
            f"{path} is truncated or corrupt ({len(blob)} bytes, expected {expected})"
        )
    values = np.frombuffer(blob, dtype="<f4", offset=9).astype(np.float64)
    return FisherVector(values, normalized=bool(flag))
