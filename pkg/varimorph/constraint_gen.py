"""constraint_gen

Boundary/normal constraint pairs for implicit shapes.

- Gray-scale images: every east/south pixel pair straddling the threshold m
  yields a boundary constraint (value 0) at the linearly interpolated crossing and
  a normal constraint (value h+, default 1) one pixel width towards the brighter
  side along the image gradient.
- Points with normals: boundary constraint at p, normal constraint at p - k*n.
- The signed distance field of an image, the classic (non-smooth) baseline.

Functions:
- image_to_constraints(img, m=127.5, normal_offset=1.0, stride=1) -> ConstraintSet
- image_gradient(img, pos) -> (gx, gy)
- points_normals_to_constraints(cloud, k=0.01) -> ConstraintSet
- signed_distance_field(img, m=127.5) -> SdfGrid
- medial_ridges(sdf) -> bool mask
- thin_constraints(cset, max_pairs) -> ConstraintSet
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, List, Optional, Sequence

import numpy as np

from .errors import (
    BorderError,
    DimensionMismatchError,
    EmptyShapeError,
    InvalidNormalError,
    InvalidParameterError,
)
from .kernel_core import Constraint, gather

logger = logging.getLogger(__name__)

MID_GRAY = 127.5
MIN_GRADIENT = 1e-9
NORMAL_TOLERANCE = 1e-3


def _rows(arr: Any, dim: Optional[int]) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.size == 0:
        if dim is None:
            raise DimensionMismatchError("cannot infer the dimension of an empty constraint list")
        return np.zeros((0, dim))
    out = np.atleast_2d(out)
    if out.ndim != 2 or (dim is not None and out.shape[1] != dim):
        raise DimensionMismatchError(f"expected rows of dimension {dim}, got shape {out.shape}")
    return out


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Boundary constraints (value 0) and normal constraints (value normal_value).

    pairing[i] is the index of the normal constraint paired with boundary i, or -1.
    """

    boundary: np.ndarray
    normal: np.ndarray
    pairing: Optional[np.ndarray] = None
    normal_value: float = 1.0
    dim_hint: Optional[int] = None

    def __post_init__(self):
        b_in = np.asarray(self.boundary, dtype=float)
        n_in = np.asarray(self.normal, dtype=float)
        dim = self.dim_hint
        for arr in (b_in, n_in):
            if arr.size:
                dim = np.atleast_2d(arr).shape[1]
                break
            if arr.ndim == 2:
                dim = arr.shape[1]
        boundary = _rows(b_in, dim)
        normal = _rows(n_in, boundary.shape[1])
        if self.pairing is None:
            pairing = np.arange(len(boundary)) if len(boundary) == len(normal) else np.full(len(boundary), -1)
        else:
            pairing = np.asarray(self.pairing, dtype=int).ravel()
        if len(pairing) != len(boundary) or np.any(pairing < -1) or np.any(pairing >= len(normal)):
            raise DimensionMismatchError("pairing must hold one normal index (or -1) per boundary constraint")
        if not self.normal_value > 0:
            raise InvalidParameterError(f"normal constraint value must be positive, got {self.normal_value}")
        for arr in (boundary, normal, pairing):
            arr.setflags(write=False)
        object.__setattr__(self, "boundary", boundary)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "pairing", pairing)
        object.__setattr__(self, "normal_value", float(self.normal_value))
        object.__setattr__(self, "dim_hint", boundary.shape[1])

    @property
    def dim(self) -> int:
        return self.boundary.shape[1]

    def __len__(self) -> int:
        return len(self.boundary) + len(self.normal)

    @property
    def positions(self) -> np.ndarray:
        return np.vstack([self.boundary, self.normal])

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([np.zeros(len(self.boundary)), np.full(len(self.normal), self.normal_value)])

    def pairs(self) -> tuple:
        """(boundary rows, normal rows) of the paired constraints."""
        idx = np.flatnonzero(self.pairing >= 0)
        return self.boundary[idx], self.normal[self.pairing[idx]]

    def to_constraints(self) -> List[Constraint]:
        return [Constraint(tuple(p), v) for p, v in zip(self.positions, self.values)]

    @classmethod
    def empty(cls, dim: int, normal_value: float = 1.0) -> "ConstraintSet":
        return cls(np.zeros((0, dim)), np.zeros((0, dim)), normal_value=normal_value)

    @classmethod
    def from_constraints(cls, constraints: Any) -> "ConstraintSet":
        """Split generic constraints: value 0 -> boundary, positive values -> normal.

        All normal values must agree; boundary i pairs with normal i when counts match.
        """
        positions, values = gather(constraints)
        zero = values == 0.0
        normal_vals = np.unique(values[~zero])
        if len(normal_vals) > 1 or np.any(normal_vals <= 0):
            raise InvalidParameterError(f"normal constraints need one common positive value, got {normal_vals[:5]}")
        h = float(normal_vals[0]) if len(normal_vals) else 1.0
        return cls(positions[zero], positions[~zero], normal_value=h, dim_hint=positions.shape[1])

    def mapped(self, fn: Callable[[np.ndarray], np.ndarray], dim: Optional[int] = None) -> "ConstraintSet":
        dim = self.dim if dim is None else dim
        boundary = fn(self.boundary) if len(self.boundary) else np.zeros((0, dim))
        normal = fn(self.normal) if len(self.normal) else np.zeros((0, dim))
        return ConstraintSet(boundary, normal, self.pairing.copy(), self.normal_value, dim_hint=dim)

    def lifted(self, coords: Sequence[float]) -> "ConstraintSet":
        """Append constant coordinates to every constraint; values are unchanged."""
        coords = np.asarray(coords, dtype=float).ravel()
        return self.mapped(lambda p: np.hstack([p, np.tile(coords, (len(p), 1))]), self.dim + len(coords))

    def scaled(self, factor: float, offset: Optional[Sequence[float]] = None) -> "ConstraintSet":
        off = np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=float)
        return self.mapped(lambda p: (p - off) * factor)

    def select(self, boundary_idx: Sequence[int], normal_idx: Sequence[int]) -> "ConstraintSet":
        boundary_idx = np.asarray(boundary_idx, dtype=int)
        normal_idx = np.asarray(normal_idx, dtype=int)
        remap = np.full(len(self.normal) + 1, -1)
        remap[normal_idx] = np.arange(len(normal_idx))
        pairing = remap[self.pairing[boundary_idx]]  # -1 indexes the trailing -1
        return ConstraintSet(self.boundary[boundary_idx], self.normal[normal_idx], pairing, self.normal_value,
                             dim_hint=self.dim)

    @classmethod
    def concat(cls, sets: Iterable["ConstraintSet"]) -> "ConstraintSet":
        sets = list(sets)
        if not sets:
            raise InvalidParameterError("nothing to concatenate")
        dims = {s.dim for s in sets}
        if len(dims) > 1:
            raise DimensionMismatchError(f"constraint sets of mixed dimensions {sorted(dims)}")
        values = {s.normal_value for s in sets if len(s.normal)}
        if len(values) > 1:
            raise InvalidParameterError(f"constraint sets use different normal values {sorted(values)}")
        offset = 0
        pairing = []
        for s in sets:
            pairing.append(np.where(s.pairing >= 0, s.pairing + offset, -1))
            offset += len(s.normal)
        dim = dims.pop()
        return cls(np.vstack([s.boundary for s in sets]).reshape(-1, dim),
                   np.vstack([s.normal for s in sets]).reshape(-1, dim),
                   np.concatenate(pairing), values.pop() if values else sets[0].normal_value, dim_hint=dim)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Gray-scale image, pixels[y, x] in [0, 255]; pixel centers sit at integer (x, y)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=float)
        if px.ndim != 2 or px.shape[0] < 2 or px.shape[1] < 2:
            raise InvalidParameterError(f"image must be 2D and at least 2x2, got shape {px.shape}")
        if not np.all(np.isfinite(px)) or px.min() < 0 or px.max() > 255:
            raise InvalidParameterError("pixel values must lie in [0, 255]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def sample(self, xs: Any, ys: Any) -> np.ndarray:
        """Bilinear interpolation; coordinates are clamped to the pixel-center hull."""
        xs = np.clip(np.asarray(xs, dtype=float), 0.0, self.width - 1.0)
        ys = np.clip(np.asarray(ys, dtype=float), 0.0, self.height - 1.0)
        x0 = np.minimum(np.floor(xs).astype(int), self.width - 2)
        y0 = np.minimum(np.floor(ys).astype(int), self.height - 2)
        fx, fy = xs - x0, ys - y0
        p = self.pixels
        return ((1 - fx) * (1 - fy) * p[y0, x0] + fx * (1 - fy) * p[y0, x0 + 1]
                + (1 - fx) * fy * p[y0 + 1, x0] + fx * fy * p[y0 + 1, x0 + 1])


@dataclass(frozen=True, eq=False)
class PointNormalCloud:
    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        pts = _rows(self.points, 3)
        nrm = _rows(self.normals, 3)
        if pts.shape != nrm.shape:
            raise DimensionMismatchError(f"{len(pts)} points but {len(nrm)} normals")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class SdfGrid:
    """Signed distance per pixel, values[y, x]; positive inside, negative outside."""

    values: np.ndarray

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def _gradients(img: GrayImage, pts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    gx = (img.sample(x + 1.0, y) - img.sample(x - 1.0, y)) / 2.0
    gy = (img.sample(x, y + 1.0) - img.sample(x, y - 1.0)) / 2.0
    return np.column_stack([gx, gy])


def image_gradient(img: GrayImage, pos: Sequence[float]) -> np.ndarray:
    """Central-difference gradient of the bilinearly interpolated image at pos = (x, y)."""
    x, y = float(pos[0]), float(pos[1])
    if not (1.0 <= x <= img.width - 2.0 and 1.0 <= y <= img.height - 2.0):
        raise BorderError(f"position ({x}, {y}) is closer than one pixel to the image border")
    return _gradients(img, np.array([[x, y]]))[0]


def find_crossings(img: GrayImage, m: float) -> np.ndarray:
    """Sub-pixel threshold crossings between east/south neighbors, in pixel scan order."""
    p = img.pixels
    h, w = p.shape
    found = []
    # east: (x, y) -> (x + 1, y); south: (x, y) -> (x, y + 1)
    for a, b, axis in ((p[:, :-1], p[:, 1:], 0), (p[:-1, :], p[1:, :], 1)):
        mask = ((a < m) & (b > m)) | ((a > m) & (b < m))
        ys, xs = np.nonzero(mask)
        t = (m - a[ys, xs]) / (b[ys, xs] - a[ys, xs])
        pos = np.column_stack([xs + (t if axis == 0 else 0.0), ys + (t if axis == 1 else 0.0)])
        order = np.column_stack([ys, xs, np.full(len(xs), axis)])
        found.append((order, pos))
    order = np.vstack([o for o, _ in found])
    pos = np.vstack([q for _, q in found])
    idx = np.lexsort((order[:, 2], order[:, 1], order[:, 0]))
    return pos[idx]


def image_to_constraints(img: GrayImage, m: float = MID_GRAY, normal_offset: float = 1.0, stride: int = 1,
                         normal_value: float = 1.0) -> ConstraintSet:
    if not normal_offset > 0:
        raise InvalidParameterError(f"normal_offset must be positive, got {normal_offset}")
    if stride < 1:
        raise InvalidParameterError(f"stride must be >= 1, got {stride}")
    crossings = find_crossings(img, m)
    if len(crossings) == 0:
        raise EmptyShapeError(f"no pixel pair straddles threshold {m}")
    grad = _gradients(img, crossings)
    norm = np.linalg.norm(grad, axis=1)
    keep = norm >= MIN_GRADIENT
    if not np.all(keep):
        logger.warning("skipped %d crossings with vanishing image gradient", int((~keep).sum()))
    crossings, grad, norm = crossings[keep][::stride], grad[keep][::stride], norm[keep][::stride]
    if len(crossings) == 0:
        raise EmptyShapeError("every crossing had a vanishing gradient")
    normals = crossings + normal_offset * grad / norm[:, None]
    logger.info("image %dx%d threshold %.2f: %d constraint pairs", img.width, img.height, m, len(crossings))
    return ConstraintSet(crossings, normals, normal_value=normal_value)


def points_normals_to_constraints(cloud: PointNormalCloud, k: float = 0.01, normal_value: float = 1.0) -> ConstraintSet:
    if not k > 0:
        raise InvalidParameterError(f"normal offset k must be positive, got {k}")
    if len(cloud) == 0:
        raise EmptyShapeError("point cloud is empty")
    lengths = np.linalg.norm(cloud.normals, axis=1)
    bad = np.flatnonzero(np.abs(lengths - 1.0) > NORMAL_TOLERANCE)
    if len(bad):
        raise InvalidNormalError(f"{len(bad)} normals are not unit length (first: index {bad[0]}, length {lengths[bad[0]]:.6f})")
    return ConstraintSet(cloud.points, cloud.points - k * cloud.normals, normal_value=normal_value)


def thin_constraints(cset: ConstraintSet, max_pairs: int) -> ConstraintSet:
    """Keep every n-th boundary constraint (and its normal) so at most max_pairs remain."""
    if max_pairs < 1:
        raise InvalidParameterError(f"max_pairs must be >= 1, got {max_pairs}")
    n = len(cset.boundary)
    if n <= max_pairs:
        return cset
    stride = math.ceil(n / max_pairs)
    b_idx = np.arange(n)[::stride]
    n_idx = cset.pairing[b_idx]
    n_idx = n_idx[n_idx >= 0]
    logger.info("thinned %d boundary constraints to %d (stride %d)", n, len(b_idx), stride)
    return cset.select(b_idx, n_idx)


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    len2 = np.einsum("ij,ij->i", ab, ab)
    len2[len2 == 0] = 1.0
    out = np.empty(len(points))
    chunk = max(1, 2_000_000 // max(1, len(a)))
    for start in range(0, len(points), chunk):
        p = points[start:start + chunk]
        ap = p[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("nsk,sk->ns", ap, ab) / len2, 0.0, 1.0)
        d = ap - t[:, :, None] * ab[None, :, :]
        out[start:start + chunk] = np.sqrt(np.einsum("nsk,nsk->ns", d, d).min(axis=1))
    return out


def signed_distance_field(img: GrayImage, m: float = MID_GRAY) -> SdfGrid:
    """Brute-force signed Euclidean distance from each pixel center to the sub-pixel boundary."""
    from . import extract

    grid = extract.SampledGrid(bounds=((0.0, 0.0), (img.width - 1.0, img.height - 1.0)),
                               values=img.pixels.T)
    lines = extract.marching_squares(grid, m)
    a, b = lines.segments()
    if len(a) == 0:
        raise EmptyShapeError(f"no boundary at threshold {m}")
    ys, xs = np.mgrid[0:img.height, 0:img.width]
    centers = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    dist = _segment_distances(centers, a, b).reshape(img.height, img.width)
    sign = np.where(img.pixels >= m, 1.0, -1.0)
    logger.info("signed distance field over %d boundary segments", len(a))
    return SdfGrid(values=sign * dist)


def medial_ridges(sdf: SdfGrid) -> np.ndarray:
    """Inside pixels where the SDF turns from rising to falling along x or y."""
    v = sdf.values
    ridge = np.zeros(v.shape, dtype=bool)
    dx = np.diff(v, axis=1)
    dy = np.diff(v, axis=0)
    ridge[:, 1:-1] |= (dx[:, :-1] > 0) & (dx[:, 1:] <= 0)
    ridge[1:-1, :] |= (dy[:-1, :] > 0) & (dy[1:, :] <= 0)
    return ridge & (v > 0)
