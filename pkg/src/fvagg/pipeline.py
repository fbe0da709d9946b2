"""Dataset manifests, descriptor-file I/O, and end-to-end orchestration.

A dataset is a JSON-Lines manifest, one record per image:

    {"image_id": "...", "label": "...", "descriptors": {"<exponent>": "<path>"}}

where each descriptor path is an FVD1 binary file (magic "FVD1", u32 D,
u32 T, then T*D little-endian f32, row-major). Relative paths resolve
against the manifest's directory. The orchestration here is: sample a
codebook training set, fit the GMM, encode every image's pooled
descriptors to a normalized Fisher vector, train/apply the one-vs-rest
SVM, report balanced accuracy.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifier import (
    EvalReport,
    LinearModel,
    SvmConfig,
    balanced_accuracy,
    load_model,
    predict,
    save_model,
    train_svm,
)
from .errors import (
    DataIOError,
    EmptyInputError,
    FvaggError,
    InvalidInputError,
    LabelError,
    ShapeError,
)
from .fisher import (
    DecompositionReport,
    FisherVector,
    MixtureSpec,
    decomposition_experiment,
    encode_fv,
    normalize_fv,
    save_fv,
)
from .gmm import (
    DescriptorSet,
    EmConfig,
    GaussianMixture,
    fit_gmm,
    load_gmm,
    sample_gmm,
    save_gmm,
)
from .pyramid import DEFAULT_EXPONENTS, pool_scales
from .seeding import derive_rng, derive_seeds

_FVD_MAGIC = b"FVD1"

DEFAULT_CLASSES = ("MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC")

DESCRIPTOR_ROW_CAP = 1_000_000


def format_exponent(s: float) -> str:
    """Manifest key for a scale exponent: '-3', '-2.5', '0.5', ..."""
    return f"{float(s):g}"


# ---------------------------------------------------------------------------
# descriptor files


def save_descriptors(descriptors: DescriptorSet, path) -> None:
    """Write the FVD1 binary format (little-endian f32 rows)."""
    with open(path, "wb") as fh:
        fh.write(_FVD_MAGIC)
        fh.write(struct.pack("<II", descriptors.dim, descriptors.count))
        fh.write(np.ascontiguousarray(descriptors.data).astype("<f4").tobytes())


def load_descriptors(path, image_id: str = "") -> DescriptorSet:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataIOError(f"cannot read descriptor file {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != _FVD_MAGIC:
        raise DataIOError(f"{path} is not an FVD1 file")
    d, t = struct.unpack_from("<II", blob, 4)
    expected = 12 + 4 * d * t
    if d < 1 or len(blob) != expected:
        raise DataIOError(
            f"{path} is truncated or corrupt (D={d}, T={t}, {len(blob)} bytes, "
            f"expected {expected})"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=12).astype(np.float64)
    return DescriptorSet(data.reshape(t, d), image_id=image_id)


# ---------------------------------------------------------------------------
# manifests


@dataclass
class ManifestRecord:
    image_id: str
    label: str | None
    descriptor_paths: dict[float, Path]  # scale exponent -> FVD file


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]

    def __post_init__(self) -> None:
        seen = set()
        for rec in self.records:
            if rec.image_id in seen:
                raise InvalidInputError(f"duplicate image_id {rec.image_id!r}")
            seen.add(rec.image_id)

    def __len__(self) -> int:
        return len(self.records)

    def labels(self) -> list[str | None]:
        return [rec.label for rec in self.records]

    def require_labels(self) -> list[str]:
        missing = [rec.image_id for rec in self.records if rec.label is None]
        if missing:
            raise InvalidInputError(f"records without labels: {missing}")
        return [rec.label for rec in self.records]  # type: ignore[misc]


def load_manifest(path, classes: Sequence[str] | None = None) -> DatasetManifest:
    """Parse a JSON-Lines manifest; relative descriptor paths resolve
    against the manifest's directory. With ``classes``, labels are checked
    against the list."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot read manifest {path}: {exc}") from exc
    base = path.parent
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}:{lineno}: bad JSON: {exc}") from exc
        if not isinstance(obj, dict) or "image_id" not in obj:
            raise InvalidInputError(f"{path}:{lineno}: record needs an image_id")
        image_id = str(obj["image_id"])
        label = obj.get("label")
        if label is not None:
            label = str(label)
            if classes is not None and label not in classes:
                raise LabelError(
                    f"{path}:{lineno}: label {label!r} of {image_id!r} not in "
                    f"the configured class list"
                )
        paths = {}
        for key, rel in (obj.get("descriptors") or {}).items():
            try:
                exponent = float(key)
            except ValueError as exc:
                raise InvalidInputError(
                    f"{path}:{lineno}: bad scale exponent {key!r}"
                ) from exc
            p = Path(rel)
            paths[exponent] = p if p.is_absolute() else base / p
        records.append(ManifestRecord(image_id, label, paths))
    return DatasetManifest(records)


def save_manifest(manifest: DatasetManifest, path, relative_to=None) -> None:
    path = Path(path)
    base = Path(relative_to) if relative_to is not None else None
    lines = []
    for rec in manifest.records:
        obj: dict = {"image_id": rec.image_id}
        if rec.label is not None:
            obj["label"] = rec.label
        descs = {}
        for exponent in sorted(rec.descriptor_paths):
            p = rec.descriptor_paths[exponent]
            if base is not None:
                try:
                    p = p.relative_to(base)
                except ValueError:
                    pass  # outside the base: keep it absolute
            descs[format_exponent(exponent)] = str(p)
        obj["descriptors"] = descs
        lines.append(json.dumps(obj, sort_keys=False))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    components: int = 64
    codebook_image_cap: int = 1000
    codebook_descriptor_cap: int = DESCRIPTOR_ROW_CAP
    scale_exponents: tuple[float, ...] = DEFAULT_EXPONENTS
    classes: tuple[str, ...] = DEFAULT_CLASSES
    seed: int = 0
    threads: int = 1
    em: EmConfig | None = None
    svm: SvmConfig | None = None

    def __post_init__(self) -> None:
        if self.components < 1:
            raise InvalidInputError("components must be >= 1")
        if self.codebook_image_cap < 1 or self.codebook_descriptor_cap < 1:
            raise InvalidInputError("codebook caps must be >= 1")
        if self.threads < 1:
            raise InvalidInputError("threads must be >= 1")
        self.scale_exponents = tuple(float(s) for s in self.scale_exponents)
        self.classes = tuple(str(c) for c in self.classes)
        em_seed, svm_seed = derive_seeds(self.seed, 2)
        if self.em is None:
            self.em = EmConfig(seed=em_seed)
        if self.svm is None:
            self.svm = SvmConfig(seed=svm_seed)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        known = {
            "components",
            "codebook_image_cap",
            "codebook_descriptor_cap",
            "scale_exponents",
            "classes",
            "seed",
            "threads",
            "em",
            "svm",
        }
        unknown = set(raw) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "em" in kwargs and kwargs["em"] is not None:
            kwargs["em"] = EmConfig(**kwargs["em"])
        if "svm" in kwargs and kwargs["svm"] is not None:
            kwargs["svm"] = SvmConfig(**kwargs["svm"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise InvalidInputError(f"bad config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            blob = path.read_bytes()
        except OSError as exc:
            raise DataIOError(f"cannot read config {path}: {exc}") from exc
        if path.suffix.lower() == ".json":
            try:
                raw = json.loads(blob.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise InvalidInputError(f"bad JSON config {path}: {exc}") from exc
        else:
            try:
                import tomllib  # type: ignore[import-not-found]
            except ImportError:
                import tomli as tomllib  # type: ignore[no-redef]
            try:
                raw = tomllib.loads(blob.decode("utf-8"))
            except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
                raise InvalidInputError(f"bad TOML config {path}: {exc}") from exc
        return cls.from_dict(raw)


# ---------------------------------------------------------------------------
# orchestration


def load_image_descriptors(
    record: ManifestRecord, scale_filter: Sequence[float] | None = None
) -> DescriptorSet:
    """Load and pool one image's descriptor files in schedule order.

    ``scale_filter`` restricts pooling to the configured exponents; scales
    absent from the record are simply skipped.
    """
    exponents = sorted(record.descriptor_paths)
    if scale_filter is not None:
        allowed = set(float(s) for s in scale_filter)
        exponents = [s for s in exponents if s in allowed]
    sets = [
        load_descriptors(record.descriptor_paths[s], image_id=record.image_id)
        for s in exponents
    ]
    if not sets:
        raise EmptyInputError(
            f"image {record.image_id!r} has no descriptor files after scale filtering"
        )
    return pool_scales(sets, record.image_id)


def sample_codebook_descriptors(
    manifest: DatasetManifest, config: PipelineConfig
) -> DescriptorSet:
    """Pool descriptors from up to ``codebook_image_cap`` manifest images,
    sampled uniformly without replacement (seeded), then cap the row count."""
    if not manifest.records:
        raise InvalidInputError("empty manifest")
    rng = derive_rng(config.seed, 0xC0DE)
    n = len(manifest.records)
    take = min(config.codebook_image_cap, n)
    chosen = np.sort(rng.choice(n, size=take, replace=False))
    pooled = [
        load_image_descriptors(manifest.records[i], config.scale_exponents).data
        for i in chosen
    ]
    data = np.vstack(pooled)
    if data.shape[0] > config.codebook_descriptor_cap:
        keep = np.sort(
            rng.choice(data.shape[0], size=config.codebook_descriptor_cap, replace=False)
        )
        data = data[keep]
    return DescriptorSet(data, image_id="codebook-sample")


def _encode_images(
    manifest: DatasetManifest, gmm: GaussianMixture, config: PipelineConfig
) -> list[FisherVector]:
    def one(record: ManifestRecord) -> FisherVector:
        try:
            pooled = load_image_descriptors(record, config.scale_exponents)
            return normalize_fv(encode_fv(gmm, pooled))
        except FvaggError as exc:
            raise type(exc)(f"image {record.image_id!r}: {exc}") from exc

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(one, manifest.records))
    return [one(rec) for rec in manifest.records]


def run_train(
    manifest: DatasetManifest,
    config: PipelineConfig,
    gmm_path,
    model_path,
) -> tuple[GaussianMixture, LinearModel]:
    """Fit the codebook, encode every image, train the SVM, persist both.

    Re-running with the same inputs and seeds writes byte-identical files.
    """
    labels = manifest.require_labels()
    unknown = sorted(set(labels) - set(config.classes))
    if unknown:
        raise LabelError(f"labels not in the configured class list: {unknown}")
    codebook_data = sample_codebook_descriptors(manifest, config)
    gmm = fit_gmm(codebook_data, config.components, config.em)
    save_gmm(gmm, gmm_path)
    features = _encode_images(manifest, gmm, config)
    present = [c for c in config.classes if c in set(labels)]
    model = train_svm(features, labels, config.svm, classes=present)
    save_model(model, model_path)
    return gmm, model


def run_encode(
    manifest: DatasetManifest,
    gmm_path,
    out_dir,
    config: PipelineConfig,
    raw: bool = False,
) -> list[Path]:
    """Encode every manifest image and write one <image_id>.fvv per image."""
    gmm = load_gmm(gmm_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    fvs = (
        _encode_images(manifest, gmm, config)
        if not raw
        else [
            encode_fv(gmm, load_image_descriptors(rec, config.scale_exponents))
            for rec in manifest.records
        ]
    )
    for rec, fv in zip(manifest.records, fvs):
        path = out_dir / f"{rec.image_id}.fvv"
        save_fv(fv, path)
        written.append(path)
    return written


def run_evaluate(
    manifest: DatasetManifest,
    gmm_path,
    model_path,
    config: PipelineConfig,
) -> EvalReport:
    """Encode, predict, and score balanced accuracy against manifest labels."""
    truth = manifest.require_labels()
    gmm = load_gmm(gmm_path)
    model = load_model(model_path)
    if 2 * gmm.n_components * gmm.dim != model.dim:
        raise ShapeError(
            f"codebook encodes {2 * gmm.n_components * gmm.dim}-dim FVs but the "
            f"model expects {model.dim}"
        )
    features = _encode_images(manifest, gmm, config)
    preds = [predict(model, fv)[0] for fv in features]
    return balanced_accuracy(preds, truth, model.classes)


def run_predict(
    manifest: DatasetManifest,
    gmm_path,
    model_path,
    config: PipelineConfig,
) -> list[dict]:
    """Per-image predictions: [{image_id, prediction, scores}, ...]."""
    gmm = load_gmm(gmm_path)
    model = load_model(model_path)
    features = _encode_images(manifest, gmm, config)
    out = []
    for rec, fv in zip(manifest.records, features):
        name, scores = predict(model, fv)
        out.append(
            {
                "image_id": rec.image_id,
                "prediction": name,
                "scores": {c: float(s) for c, s in zip(model.classes, scores)},
            }
        )
    return out


# ---------------------------------------------------------------------------
# synthetic decomposition driver


@dataclass
class SynthDecompositionConfig:
    dim: int = 8
    source_components: int = 2
    codebook_components: int = 8
    foreground_weight: float = 0.7
    n: int = 10000
    separation: float = 4.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1 or self.source_components < 1 or self.codebook_components < 1:
            raise InvalidInputError("dimensions and component counts must be >= 1")
        if self.separation < 0:
            raise InvalidInputError("separation must be >= 0")


def _random_mixture(
    dim: int, components: int, rng: np.random.Generator, spread: float
) -> GaussianMixture:
    weights = rng.dirichlet(np.full(components, 5.0))
    weights = np.maximum(weights, 1e-3)
    weights /= weights.sum()
    means = rng.normal(scale=spread, size=(components, dim))
    variances = rng.uniform(0.5, 1.5, size=(components, dim))
    return GaussianMixture(weights, means, variances)


def run_synth_decomposition(config: SynthDecompositionConfig) -> DecompositionReport:
    """Build a seeded foreground/background pair, fit a codebook on a draw
    from the mixture, and run the decomposition experiment against it."""
    rng = derive_rng(config.seed, 0xDEC0)
    offset = rng.normal(scale=config.separation, size=config.dim)
    fg = _random_mixture(config.dim, config.source_components, rng, spread=1.0)
    bg_raw = _random_mixture(config.dim, config.source_components, rng, spread=1.0)
    bg = GaussianMixture(bg_raw.weights, bg_raw.means + offset, bg_raw.variances)
    spec = MixtureSpec(fg, bg, config.foreground_weight)

    fit_seed, run_seed = derive_seeds(config.seed, 2)
    w = config.foreground_weight
    n_fit = max(config.n, 1000)
    n_fg = int(round(w * n_fit))
    parts = []
    if n_fg > 0:
        parts.append(sample_gmm(fg, n_fg, fit_seed).data)
    if n_fit - n_fg > 0:
        parts.append(sample_gmm(bg, n_fit - n_fg, fit_seed + 1).data)
    fit_data = DescriptorSet(np.vstack(parts), image_id="codebook-fit")
    codebook = fit_gmm(
        fit_data, config.codebook_components, EmConfig(seed=fit_seed)
    )
    return decomposition_experiment(spec, codebook, config.n, run_seed)
