"""Multi-scale schedule and per-image descriptor pooling.

Images are rescaled by factors 2^s over a geometric schedule and the
resulting per-scale descriptor sets are pooled (row-concatenated) into one
set per image before encoding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, InvalidInputError, ShapeError
from .gmm import DescriptorSet

DEFAULT_EXPONENTS = (-3.0, -2.5, -2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0)


def _pow2(s: float) -> float:
    # exact for integer s; one sqrt rounding for half-integer s
    if s == int(s):
        return math.ldexp(1.0, int(s))
    if 2 * s == int(2 * s):
        return math.ldexp(math.sqrt(2.0), int(math.floor(s)))
    return 2.0**s


@dataclass
class ScaleSchedule:
    exponents: tuple[float, ...]

    def __post_init__(self) -> None:
        self.exponents = tuple(float(s) for s in self.exponents)
        if not self.exponents:
            raise InvalidInputError("schedule must contain at least one exponent")
        if any(b <= a for a, b in zip(self.exponents, self.exponents[1:])):
            raise InvalidInputError(
                f"exponents must be strictly increasing, got {self.exponents}"
            )

    @property
    def factors(self) -> tuple[float, ...]:
        return tuple(_pow2(s) for s in self.exponents)

    def __len__(self) -> int:
        return len(self.exponents)


def default_schedule() -> ScaleSchedule:
    """The nine-scale schedule 2^s for s = -3, -2.5, ..., 1."""
    return ScaleSchedule(DEFAULT_EXPONENTS)


def parse_exponents(text: str) -> tuple[float, ...]:
    """Parse a comma-separated exponent list (CLI/config override)."""
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise InvalidInputError(f"bad scale exponent list {text!r}: {exc}") from exc
    if not values:
        raise InvalidInputError(f"scale exponent list {text!r} is empty")
    return values


def pool_scales(per_scale: Sequence[DescriptorSet], image_id: str) -> DescriptorSet:
    """Concatenate per-scale descriptor sets, in the given (schedule) order.

    Empty sets are skipped (a scale below the extractor's receptive field
    yields no cells); every input row appears exactly once in the output.
    """
    if not per_scale:
        raise EmptyInputError(f"no descriptor sets to pool for {image_id!r}")
    dims = {s.dim for s in per_scale}
    if len(dims) > 1:
        raise ShapeError(
            f"mixed descriptor dimensions {sorted(dims)} for {image_id!r}"
        )
    for s in per_scale:
        if s.image_id and s.image_id != image_id:
            raise InvalidInputError(
                f"descriptor set {s.image_id!r} pooled under {image_id!r}"
            )
    non_empty = [s.data for s in per_scale if s.count > 0]
    if not non_empty:
        raise EmptyInputError(f"image {image_id!r} has zero descriptors at all scales")
    return DescriptorSet(np.vstack(non_empty), image_id=image_id)
