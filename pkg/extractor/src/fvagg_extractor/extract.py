"""Export multi-scale CNN activations as FVD descriptor files.

Each input image is rescaled by factors 2^s, pushed through a ResNet
backbone, and the spatial cells of a chosen intermediate layer (default:
the first 1x1 conv of the last bottleneck, a 512-channel activation) are
written as one FVD file per feasible scale, plus a JSON-Lines manifest in
the aggregation pipeline's format. Scales whose rescaled short side is
below the backbone stride (not even one full cell) are skipped.

Fine-tuning is out of scope here: pass --checkpoint to use fine-tuned (or
ImageNet) weights; without one, the backbone is randomly initialized from
the config seed, which keeps runs reproducible but is only useful for
format/round-trip testing.
"""

from __future__ import annotations

import csv
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

DEFAULT_SCALES = (-3.0, -2.5, -2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0)
DEFAULT_LAYER = "layer4.2.conv1"  # 512-channel conv output, stride 32

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}

_FVD_MAGIC = b"FVD1"


class ExtractorError(Exception):
    pass


class ConfigError(ExtractorError):
    """Fatal configuration problem (unknown backbone/layer, bad checkpoint)."""


@dataclass
class ExtractorConfig:
    image_root: Path
    out_root: Path
    backbone: str = "resnet50"
    layer: str = DEFAULT_LAYER
    scale_exponents: tuple[float, ...] = DEFAULT_SCALES
    labels_csv: Path | None = None
    checkpoint: Path | None = None
    min_input_side: int = 32  # backbone stride: below this not one cell exists
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self) -> None:
        self.image_root = Path(self.image_root)
        self.out_root = Path(self.out_root)
        self.scale_exponents = tuple(float(s) for s in self.scale_exponents)
        if self.labels_csv is not None:
            self.labels_csv = Path(self.labels_csv)
        if self.checkpoint is not None:
            self.checkpoint = Path(self.checkpoint)
        if not self.scale_exponents:
            raise ConfigError("need at least one scale exponent")
        if self.min_input_side < 1:
            raise ConfigError("min_input_side must be >= 1")


def format_exponent(s: float) -> str:
    return f"{float(s):g}"


def write_fvd(path: Path, rows: np.ndarray) -> None:
    rows = np.ascontiguousarray(rows, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_FVD_MAGIC)
        fh.write(struct.pack("<II", rows.shape[1], rows.shape[0]))
        fh.write(rows.tobytes())


def build_model(config: ExtractorConfig) -> tuple[torch.nn.Module, torch.nn.Module]:
    """Backbone in eval mode plus the module to hook; layer lookup failures
    are fatal."""
    import torchvision.models

    factory = getattr(torchvision.models, config.backbone, None)
    if factory is None:
        raise ConfigError(f"unknown backbone {config.backbone!r}")
    torch.manual_seed(config.seed)
    model = factory(weights=None)
    if config.checkpoint is not None:
        try:
            state = torch.load(config.checkpoint, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise ConfigError(f"cannot load checkpoint {config.checkpoint}: {exc}") from exc
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        model.load_state_dict(state)
    modules = dict(model.named_modules())
    if config.layer not in modules:
        raise ConfigError(
            f"layer {config.layer!r} not found in {config.backbone}; "
            f"try one of: {', '.join(n for n in modules if n.endswith('conv1'))}"
        )
    model.eval()
    model.to(config.device)
    return model, modules[config.layer]


def _to_tensor(image: Image.Image) -> torch.Tensor:
    arr = np.asarray(image, dtype=np.float32) / 255.0
    arr = (arr - IMAGENET_MEAN) / IMAGENET_STD
    return torch.from_numpy(arr.transpose(2, 0, 1))[None]


def list_images(root: Path) -> list[Path]:
    if not root.is_dir():
        raise ExtractorError(f"image root {root} is not a directory")
    return sorted(
        p for p in root.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
    )


def read_labels(path: Path) -> dict[str, str]:
    """Two-column CSV with header image_id,label."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) < {"image_id", "label"}:
            raise ExtractorError(
                f"{path} must be a CSV with header columns image_id,label"
            )
        return {row["image_id"]: row["label"] for row in reader}


@dataclass
class ExtractionResult:
    manifest_path: Path
    report_path: Path
    n_images: int
    n_files: int
    dim: int | None
    skipped: list[dict] = field(default_factory=list)


def extract(config: ExtractorConfig) -> ExtractionResult:
    """Run the exporter; returns paths of the manifest and sidecar report."""
    torch.use_deterministic_algorithms(True)
    model, layer = build_model(config)

    captured: dict[str, torch.Tensor] = {}

    def hook(_module, _inputs, output):
        captured["out"] = output.detach()

    handle = layer.register_forward_hook(hook)

    out_root = config.out_root
    desc_dir = out_root / "descriptors"
    desc_dir.mkdir(parents=True, exist_ok=True)
    labels = read_labels(config.labels_csv) if config.labels_csv else {}

    records: list[dict] = []
    skipped: list[dict] = []
    dim: int | None = None
    n_files = 0

    try:
        for path in list_images(config.image_root):
            image_id = path.stem
            try:
                with Image.open(path) as img:
                    image = img.convert("RGB")
            except Exception as exc:
                warnings.warn(f"skipping undecodable image {path}: {exc}", stacklevel=2)
                skipped.append({"image": str(path), "reason": f"undecodable: {exc}"})
                continue

            width, height = image.size
            descriptors: dict[str, str] = {}
            for s in sorted(config.scale_exponents):
                factor = 2.0**s
                new_w = max(1, round(width * factor))
                new_h = max(1, round(height * factor))
                if min(new_w, new_h) < config.min_input_side:
                    continue  # not even one full stride cell at this scale
                resized = image.resize((new_w, new_h), Image.BILINEAR)
                with torch.no_grad():
                    model(_to_tensor(resized).to(config.device))
                fmap = captured.pop("out")[0]  # (C, H', W')
                c, fh, fw = fmap.shape
                if fh < 1 or fw < 1:
                    continue
                if dim is None:
                    dim = int(c)
                elif dim != int(c):
                    raise ExtractorError(
                        f"layer channel count changed: {dim} -> {int(c)}"
                    )
                rows = fmap.permute(1, 2, 0).reshape(-1, c).cpu().numpy()
                exp_str = format_exponent(s)
                fvd_path = desc_dir / f"{image_id}.s{exp_str}.fvd"
                write_fvd(fvd_path, rows)
                descriptors[exp_str] = str(fvd_path.relative_to(out_root))
                n_files += 1

            if not descriptors:
                skipped.append(
                    {"image": str(path), "reason": "no feasible scales"}
                )
                continue
            record: dict = {"image_id": image_id}
            if image_id in labels:
                record["label"] = labels[image_id]
            record["descriptors"] = descriptors
            records.append(record)
    finally:
        handle.remove()

    ids = [r["image_id"] for r in records]
    if len(set(ids)) != len(ids):
        raise ExtractorError("duplicate image ids (stems must be unique)")

    manifest_path = out_root / "manifest.jsonl"
    manifest_path.write_text(
        "".join(json.dumps(r) + "\n" for r in records), encoding="utf-8"
    )
    report_path = out_root / "skipped.json"
    report_path.write_text(json.dumps(skipped, indent=2), encoding="utf-8")
    return ExtractionResult(
        manifest_path=manifest_path,
        report_path=report_path,
        n_images=len(records),
        n_files=n_files,
        dim=dim,
        skipped=skipped,
    )
