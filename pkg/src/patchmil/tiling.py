"""Deterministic image standardization and overlapping-patch tiling.

Images are standardized to a square float grid in [0, 1] and divided into
overlapping fixed-size square patches on a regular stride lattice. At the
default geometry used for radiographs (extent 1024, patch 224, stride 112) the
lattice has 8 offsets per axis, i.e. 64 patches, and leaves a 16 px band
at the right/bottom edge uncovered; pass ``edge_snap=True`` to append a
final offset flush with the far edge when full coverage matters.

All functions here are pure: identical inputs yield bit-identical outputs,
and patches are copies, never views, so callers may mutate them freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image


class TilingError(ValueError):
    """Raised for degenerate images or inconsistent grid geometry."""


def grid_positions(extent: int, patch_size: int, stride: int, edge_snap: bool = False) -> list[int]:
    """Ordered patch offsets along one axis.

    Offsets are 0, stride, 2*stride, ... while ``offset + patch_size``
    stays within ``extent``. With ``edge_snap``, the flush offset
    ``extent - patch_size`` is appended when the lattice does not already
    end there.
    """
    if patch_size <= 0:
        raise TilingError(f"patch_size must be positive, got {patch_size}")
    if stride <= 0:
        raise TilingError(f"stride must be positive, got {stride}")
    if patch_size > extent:
        raise TilingError(f"patch_size {patch_size} exceeds image extent {extent}")
    offsets = list(range(0, extent - patch_size + 1, stride))
    if edge_snap and offsets[-1] != extent - patch_size:
        offsets.append(extent - patch_size)
    return offsets


@dataclass(frozen=True)
class PatchGrid:
    """Tiling geometry: a lattice of fixed-size square patch offsets.

    ``offsets_y``/``offsets_x`` are strictly increasing; consecutive
    non-snapped offsets differ by exactly ``stride``. Patch indices are
    row-major by (offset_y, offset_x) throughout the package.
    """

    image_extent: tuple[int, int]
    patch_size: int
    stride: int
    offsets_y: tuple[int, ...]
    offsets_x: tuple[int, ...]
    edge_snap: bool = False

    @classmethod
    def build(cls, image_extent: tuple[int, int], patch_size: int, stride: int,
              edge_snap: bool = False) -> "PatchGrid":
        height, width = int(image_extent[0]), int(image_extent[1])
        return cls(
            image_extent=(height, width),
            patch_size=int(patch_size),
            stride=int(stride),
            offsets_y=tuple(grid_positions(height, patch_size, stride, edge_snap)),
            offsets_x=tuple(grid_positions(width, patch_size, stride, edge_snap)),
            edge_snap=bool(edge_snap),
        )

    @property
    def n_rows(self) -> int:
        return len(self.offsets_y)

    @property
    def n_cols(self) -> int:
        return len(self.offsets_x)

    @property
    def patch_count(self) -> int:
        return self.n_rows * self.n_cols

    def index_to_coords(self, index: int) -> tuple[int, int]:
        """Flat row-major index -> (row, col)."""
        if not 0 <= index < self.patch_count:
            raise TilingError(f"patch index {index} out of range [0, {self.patch_count})")
        return divmod(index, self.n_cols)

    def coords_to_index(self, row: int, col: int) -> int:
        """(row, col) -> flat row-major index."""
        if not (0 <= row < self.n_rows and 0 <= col < self.n_cols):
            raise TilingError(f"patch coords ({row}, {col}) outside grid {self.n_rows}x{self.n_cols}")
        return row * self.n_cols + col

    def patch_rect(self, index: int) -> tuple[int, int, int, int]:
        """Pixel rectangle (y0, x0, y1, x1), half-open, covered by patch ``index``."""
        row, col = self.index_to_coords(index)
        y0 = self.offsets_y[row]
        x0 = self.offsets_x[col]
        return y0, x0, y0 + self.patch_size, x0 + self.patch_size


def standardize_image(raw_image, target: int) -> np.ndarray:
    """Standardize to a ``target x target`` float32 image in [0, 1].

    Multi-channel input is reduced to one channel by averaging.
    Intensities are min-max normalized per image (a constant image maps to
    zeros). Non-square inputs are resized preserving aspect ratio and then
    zero-padded (letterboxed) centrally to the square target, avoiding
    anatomical distortion.
    """
    if target <= 0:
        raise TilingError(f"target extent must be positive, got {target}")
    arr = np.asarray(raw_image, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    if arr.ndim != 2:
        raise TilingError(f"expected a 2D or 3D intensity array, got ndim={arr.ndim}")
    height, width = arr.shape
    if height == 0 or width == 0:
        raise TilingError(f"degenerate image extent {arr.shape}")

    lo, hi = float(arr.min()), float(arr.max())
    arr = (arr - lo) / (hi - lo) if hi > lo else np.zeros_like(arr)

    scale = target / max(height, width)
    new_h = int(round(height * scale))
    new_w = int(round(width * scale))
    if (new_h, new_w) != (height, width):
        resized = Image.fromarray(arr.astype(np.float32), mode="F").resize(
            (new_w, new_h), Image.Resampling.BILINEAR)
        arr = np.clip(np.asarray(resized, dtype=np.float64), 0.0, 1.0)

    out = np.zeros((target, target), dtype=np.float32)
    top = (target - new_h) // 2
    left = (target - new_w) // 2
    out[top:top + new_h, left:left + new_w] = arr
    return out


def tile_image(image, grid: PatchGrid) -> list[np.ndarray]:
    """Cut the image into patches, ordered row-major by (offset_y, offset_x).

    Patch k covers rows [offsets_y[k // n_cols], +patch_size) and columns
    [offsets_x[k % n_cols], +patch_size). Patches are copies.
    """
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.shape != grid.image_extent:
        raise TilingError(
            f"image extent {arr.shape} does not match grid extent {grid.image_extent}")
    size = grid.patch_size
    return [arr[y:y + size, x:x + size].copy()
            for y in grid.offsets_y for x in grid.offsets_x]
