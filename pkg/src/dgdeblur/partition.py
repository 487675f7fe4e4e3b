"""Square-element partitions of pixel grids.

A field of extent H x W is tiled into non-overlapping p x p elements.
Elements are indexed row-major over the element grid, and the pixels
inside an element are indexed row-major as well, so element 0 holds the
top-left p x p block and local index 0 is that block's top-left pixel.

Faces are one-pixel strips: the face of an element toward a side is the
row or column of pixels inside the element adjacent to that side, with
n_f = p samples each.  Sides are named north (toward row 0), south,
west (toward column 0), and east.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ContractError

SIDES = ("north", "south", "east", "west")
OPPOSITE = {"north": "south", "south": "north", "east": "west", "west": "east"}
BOUNDARY_KINDS = ("dirichlet", "neumann", "periodic")


@dataclass(frozen=True)
class FaceSpec:
    """One face of one element: the owning element, the side, and the
    local pixel indices (into the element's p*p row-major ordering) of
    the one-pixel sample strip."""

    element: int
    side: str
    samples: np.ndarray


@dataclass(frozen=True)
class ElementPartition:
    """Topology of a p x p element tiling of an H x W grid."""

    height: int
    width: int
    p: int
    rows: int
    cols: int

    @classmethod
    def build(cls, height: int, width: int, p: int) -> "ElementPartition":
        if p < 1:
            raise ContractError(f"partition: element size must be >= 1, got {p}")
        if height % p or width % p:
            raise ContractError(
                f"partition: {height}x{width} grid not divisible into {p}x{p} elements")
        return cls(height, width, p, height // p, width // p)

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols

    @property
    def n_pixels(self) -> int:
        return self.p * self.p

    def face_local_indices(self, side: str) -> np.ndarray:
        """Local pixel indices of the strip adjacent to a side."""
        p = self.p
        if side == "north":
            idx = np.arange(p)
        elif side == "south":
            idx = np.arange(p * (p - 1), p * p)
        elif side == "west":
            idx = np.arange(0, p * p, p)
        elif side == "east":
            idx = np.arange(p - 1, p * p, p)
        else:
            raise ContractError(f"unknown side {side!r}, expected one of {SIDES}")
        return idx

    def face(self, element: int, side: str) -> FaceSpec:
        if not 0 <= element < self.n_elements:
            raise ContractError(f"element {element} out of range [0, {self.n_elements})")
        return FaceSpec(element, side, self.face_local_indices(side))

    def neighbor(self, element: int, side: str, bc: str) -> int | None:
        """Element across a side, or None at a non-periodic boundary."""
        if bc not in BOUNDARY_KINDS:
            raise ContractError(f"unknown boundary kind {bc!r}")
        if not 0 <= element < self.n_elements:
            raise ContractError(f"element {element} out of range [0, {self.n_elements})")
        i, j = divmod(element, self.cols)
        if side == "north":
            i -= 1
        elif side == "south":
            i += 1
        elif side == "west":
            j -= 1
        elif side == "east":
            j += 1
        else:
            raise ContractError(f"unknown side {side!r}, expected one of {SIDES}")
        inside = 0 <= i < self.rows and 0 <= j < self.cols
        if not inside and bc != "periodic":
            return None
        return (i % self.rows) * self.cols + (j % self.cols)

    def neighbor_table(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized neighbor lookup with periodic wrap.

        Returns (idx, interior): idx[e] is the wrapped neighbor of e
        across the side, interior[e] is False where the true neighbor
        lies outside the domain.
        """
        e = np.arange(self.n_elements)
        i, j = np.divmod(e, self.cols)
        if side == "north":
            interior = i > 0
            i = i - 1
        elif side == "south":
            interior = i < self.rows - 1
            i = i + 1
        elif side == "west":
            interior = j > 0
            j = j - 1
        elif side == "east":
            interior = j < self.cols - 1
            j = j + 1
        else:
            raise ContractError(f"unknown side {side!r}, expected one of {SIDES}")
        idx = (i % self.rows) * self.cols + (j % self.cols)
        return idx, interior

    def pixel_coords(self, element: int) -> tuple[np.ndarray, np.ndarray]:
        """Global (row, col) arrays for the element's pixels in local order."""
        i, j = divmod(element, self.cols)
        local = np.arange(self.n_pixels)
        return i * self.p + local // self.p, j * self.p + local % self.p


def partition_field(x: np.ndarray, p: int) -> np.ndarray:
    """H x W x C -> E x p^2 x C, row-major elements and pixels."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ContractError(f"partition_field: expected H x W x C, got shape {x.shape}")
    h, w, c = x.shape
    if h % p or w % p:
        raise ContractError(f"partition_field: {h}x{w} not divisible by p={p}")
    eh, ew = h // p, w // p
    tiles = x.reshape(eh, p, ew, p, c).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(tiles.reshape(eh * ew, p * p, c))


def unpartition_field(elements: np.ndarray, part: ElementPartition) -> np.ndarray:
    """Inverse of :func:`partition_field` for the given topology."""
    e, n, c = elements.shape
    if e != part.n_elements or n != part.n_pixels:
        raise ContractError(
            f"unpartition_field: got {elements.shape}, expected "
            f"({part.n_elements}, {part.n_pixels}, C)")
    p = part.p
    tiles = elements.reshape(part.rows, part.cols, p, p, c).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(tiles.reshape(part.height, part.width, c))


def face_samples(elements: np.ndarray, face: FaceSpec) -> np.ndarray:
    """Gather the n_f x C sample strip of one face from partitioned data."""
    return np.ascontiguousarray(elements[face.element, face.samples])
