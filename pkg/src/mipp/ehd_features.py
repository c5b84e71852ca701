"""Edge-histogram texture features for grayscale images.

The image is split into a 4x4 grid of sub-images.  Inside each sub-image,
every aligned 2x2 macro-block is pushed through five directional filters
(vertical, horizontal, 45 degree, 135 degree, non-directional); the largest
response wins if it clears the edge threshold.  Each sub-image yields five
bins counting its edge types, quantized to 0..255, giving an 80-dimensional
integer vector.  Integer bins keep the vectors valid secure-sum plaintexts.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EHD_HEADER = "MIPP-EHD-1"

EDGE_TYPES = ("vertical", "horizontal", "diag45", "diag135", "nondirectional")

# Filter coefficients applied to the 2x2 block [[a00, a01], [a10, a11]],
# in EDGE_TYPES order.  Ties go to the earlier filter.
_SQRT2 = float(np.sqrt(2.0))
_FILTERS = np.array(
    [
        [1.0, -1.0, 1.0, -1.0],
        [1.0, 1.0, -1.0, -1.0],
        [_SQRT2, 0.0, 0.0, -_SQRT2],
        [0.0, _SQRT2, -_SQRT2, 0.0],
        [2.0, -2.0, -2.0, 2.0],
    ]
)


class ImageTooSmallError(ValueError):
    """Image cannot host at least one macro-block per sub-image."""


@dataclass(frozen=True)
class EhdConfig:
    grid_rows: int = 4
    grid_cols: int = 4
    block_size: int = 2
    edge_threshold: float = 11.0

    @property
    def dims(self) -> int:
        return self.grid_rows * self.grid_cols * len(EDGE_TYPES)


DEFAULT_CONFIG = EhdConfig()
FEATURE_DIMS = DEFAULT_CONFIG.dims


def extract_ehd(img: np.ndarray, cfg: EhdConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Extract the edge histogram of ``img`` as int64 bins in [0, 255].

    Sub-image boundaries come from integer division; the trailing remainder
    rows/columns belong to the last sub-image.  Blocks tile from each
    sub-image's top-left corner; leftover strips too thin for a full block
    are ignored.
    """
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError("image must be a 2-D array")
    m, n = arr.shape
    min_side_rows = cfg.grid_rows * cfg.block_size
    min_side_cols = cfg.grid_cols * cfg.block_size
    if m < min_side_rows or n < min_side_cols:
        raise ImageTooSmallError(
            f"{m}x{n} image too small for a {cfg.grid_rows}x{cfg.grid_cols} "
            f"grid of {cfg.block_size}x{cfg.block_size} blocks"
        )

    sub_h, sub_w = m // cfg.grid_rows, n // cfg.grid_cols
    bins = np.zeros(cfg.dims, dtype=np.int64)
    for gr in range(cfg.grid_rows):
        top = gr * sub_h
        bottom = (gr + 1) * sub_h if gr < cfg.grid_rows - 1 else m
        for gc in range(cfg.grid_cols):
            left = gc * sub_w
            right = (gc + 1) * sub_w if gc < cfg.grid_cols - 1 else n
            sub = arr[top:bottom, left:right]
            counts, total = _edge_counts(sub, cfg)
            base = (gr * cfg.grid_cols + gc) * len(EDGE_TYPES)
            bins[base : base + len(EDGE_TYPES)] = 255 * counts // total
    return bins


def _edge_counts(sub: np.ndarray, cfg: EhdConfig) -> tuple[np.ndarray, int]:
    b = cfg.block_size
    rows = sub.shape[0] // b
    cols = sub.shape[1] // b
    block = sub[: rows * b, : cols * b].astype(np.float64)
    # mean intensity of each block quadrant; for 2x2 blocks these are the
    # four pixels themselves
    half = b // 2 if b > 1 else 1
    quads = np.empty((rows, cols, 4))
    view = block.reshape(rows, b, cols, b)
    quads[..., 0] = view[:, :half, :, :half].mean(axis=(1, 3))
    quads[..., 1] = view[:, :half, :, half:].mean(axis=(1, 3))
    quads[..., 2] = view[:, half:, :, :half].mean(axis=(1, 3))
    quads[..., 3] = view[:, half:, :, half:].mean(axis=(1, 3))

    responses = np.abs(quads @ _FILTERS.T)  # (rows, cols, 5)
    winner = responses.argmax(axis=2)
    is_edge = responses.max(axis=2) > cfg.edge_threshold
    counts = np.bincount(winner[is_edge], minlength=len(EDGE_TYPES))
    return counts.astype(np.int64), rows * cols


def square_feature(f: Sequence[int] | np.ndarray) -> np.ndarray:
    """Elementwise square with exact integer arithmetic."""
    arr = np.asarray(f, dtype=np.int64)
    return arr * arr


def write_ehd(path: str | Path, features: Iterable[Sequence[int]], dims: int = FEATURE_DIMS) -> None:
    """Write features one per line, comma-separated decimal integers."""
    lines = [f"{EHD_HEADER} l={dims}"]
    for f in features:
        values = [int(v) for v in f]
        if len(values) != dims:
            raise ValueError(f"feature of length {len(values)} != l={dims}")
        lines.append(",".join(str(v) for v in values))
    Path(path).write_text("\n".join(lines) + "\n")


def read_ehd(path: str | Path) -> list[np.ndarray]:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or not lines[0].startswith(EHD_HEADER):
        raise ValueError(f"missing {EHD_HEADER} header")
    try:
        dims = int(lines[0].split("l=", 1)[1])
    except (IndexError, ValueError) as exc:
        raise ValueError("malformed dimension field in header") from exc
    features = []
    for ln in lines[1:]:
        values = np.array([int(v) for v in ln.split(",")], dtype=np.int64)
        if values.size != dims:
            raise ValueError(f"feature of length {values.size} != l={dims}")
        features.append(values)
    return features
