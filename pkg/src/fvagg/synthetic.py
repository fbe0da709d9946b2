"""Synthetic multi-class descriptor datasets for end-to-end runs.

Each class gets its own small generator mixture; each image is a seeded
draw from its class generator, split across two pseudo-scales and written
as FVD files plus a JSON-Lines manifest, so the full pipeline can run
without any real images.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .gmm import DescriptorSet, GaussianMixture
from .pipeline import DatasetManifest, ManifestRecord, save_descriptors, save_manifest
from .seeding import derive_rng

SYNTH_SCALES = (0.0, 1.0)


def make_class_generators(
    classes: tuple[str, ...] | list[str],
    dim: int,
    components: int = 3,
    seed: int = 0,
    base_separation: float = 4.0,
    class_offset: float = 0.8,
) -> dict[str, GaussianMixture]:
    """One generator mixture per class: shared base clusters plus
    class-specific mean offsets.

    The shared structure matters: a codebook fit on the pooled data then
    sits between the class variants, so every class has a consistent
    nonzero expected gradient (if each class had private, well-separated
    clusters, the codebook would match them exactly and the encoded
    vectors would be pure sampling noise).
    """
    rng = derive_rng(seed, 0x5E7)
    base_means = rng.normal(scale=base_separation, size=(components, dim))
    base_vars = rng.uniform(0.6, 1.4, size=(components, dim))
    generators = {}
    for name in classes:
        weights = rng.dirichlet(np.full(components, 10.0))
        weights = np.maximum(weights, 1e-3)
        weights /= weights.sum()
        offsets = rng.normal(scale=class_offset, size=(components, dim))
        generators[name] = GaussianMixture(weights, base_means + offsets, base_vars)
    return generators


def write_synthetic_dataset(
    out_dir,
    generators: dict[str, GaussianMixture],
    images_per_class: int,
    descriptors_per_image: int = 200,
    seed: int = 0,
    prefix: str = "img",
) -> Path:
    """Write FVD files and a manifest under ``out_dir``; returns the
    manifest path. Deterministic for a given seed."""
    out_dir = Path(out_dir)
    desc_dir = out_dir / "descriptors"
    desc_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for ci, (label, gen) in enumerate(generators.items()):
        for ii in range(images_per_class):
            rng = derive_rng(seed, ci, ii)
            t = int(rng.integers(descriptors_per_image - 20, descriptors_per_image + 21))
            comps = rng.choice(gen.n_components, size=t, p=gen.weights)
            noise = rng.standard_normal((t, gen.dim))
            data = gen.means[comps] + np.sqrt(gen.variances[comps]) * noise
            image_id = f"{prefix}-{label}-{ii:04d}"
            split = t // 2
            paths = {}
            for si, scale in enumerate(SYNTH_SCALES):
                rows = data[:split] if si == 0 else data[split:]
                path = desc_dir / f"{image_id}.s{si}.fvd"
                save_descriptors(DescriptorSet(rows, image_id=image_id), path)
                paths[scale] = path
            records.append(ManifestRecord(image_id, label, paths))
    manifest = DatasetManifest(records)
    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(manifest, manifest_path, relative_to=out_dir)
    return manifest_path
