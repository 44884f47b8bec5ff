"""Preprocessing geometry: longest side to 1024, pad bottom-right to square.

Must agree exactly with the consumer pipeline's geometry reconstruction, so
the same rounding rule (half-up) is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

PADDED_SIZE = 1024


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ExportGeometry:
    original_height: int
    original_width: int
    scale: float
    resized_height: int
    resized_width: int

    @classmethod
    def from_original(cls, height: int, width: int) -> "ExportGeometry":
        scale = PADDED_SIZE / max(height, width)
        return cls(
            original_height=height,
            original_width=width,
            scale=scale,
            resized_height=round_half_up(height * scale),
            resized_width=round_half_up(width * scale),
        )
