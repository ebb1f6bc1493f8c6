"""extract

Iso-contours (2D) and isosurfaces (3D) of implicit functions.

An implicit function here is any callable mapping an (n, d) array of points to
an (n,) array of values (RbfModel, slices of morph models, analytic test shapes).

Functions:
- sample_grid(f, bounds, res, workers=1) -> SampledGrid
- marching_squares(grid, iso=0.0) -> Polyline2D
- marching_cubes(grid, iso=0.0) -> TriMesh (skimage's Lewiner tables)
- extract_zero_set(f, GridSpec) -> Polyline2D or TriMesh
- rasterize(f, bounds, res) -> bool mask
- euler_characteristic_2d(mask) -> int
- hausdorff(a, b), polyline_area(loop), max_curvature(lines, step)
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import directed_hausdorff
from skimage import measure

from .errors import DimensionMismatchError, EvaluationError, InvalidParameterError

logger = logging.getLogger(__name__)

ImplicitFunction = Callable[[np.ndarray], np.ndarray]
Bounds = Tuple[Sequence[float], Sequence[float]]

SAMPLE_CHUNK = 8192
MIN_TRIANGLE_AREA = 1e-12


@dataclass(frozen=True, eq=False)
class SampledGrid:
    """Samples on a regular lattice; values[i, j, ...] sits at lo + (i, j, ...) * spacing."""

    bounds: Bounds
    values: np.ndarray
    func: Optional[ImplicitFunction] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        lo = np.asarray(self.bounds[0], dtype=float).ravel()
        hi = np.asarray(self.bounds[1], dtype=float).ravel()
        if len(lo) != values.ndim or len(hi) != values.ndim:
            raise DimensionMismatchError(f"bounds of dimension {len(lo)} for a {values.ndim}D grid")
        if any(n < 2 for n in values.shape):
            raise InvalidParameterError(f"grid resolution must be >= 2 per axis, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise EvaluationError("grid values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bounds", (lo, hi))

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def res(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        lo, hi = self.bounds
        return (hi - lo) / (np.array(self.res) - 1)

    def to_world(self, index: np.ndarray) -> np.ndarray:
        return self.bounds[0] + np.asarray(index, dtype=float) * self.spacing


@dataclass(frozen=True, eq=False)
class Polyline2D:
    loops: List[np.ndarray] = field(default_factory=list)
    closed: List[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.loops)

    def points(self, max_step: Optional[float] = None) -> np.ndarray:
        """All vertices; with max_step, segments are subdivided until no piece is longer."""
        if not self.loops:
            return np.zeros((0, 2))
        if max_step is None:
            return np.vstack(self.loops)
        a, b = self.segments()
        n = np.maximum(1, np.ceil(np.linalg.norm(b - a, axis=1) / max_step).astype(int))
        pieces = [a[i] + np.outer(np.arange(n[i]) / n[i], b[i] - a[i]) for i in range(len(a))]
        ends = [loop[-1:] for loop, closed in zip(self.loops, self.closed) if not closed]
        return np.vstack(pieces + ends)

    def segments(self) -> Tuple[np.ndarray, np.ndarray]:
        a, b = [], []
        for loop, closed in zip(self.loops, self.closed):
            end = loop if closed else loop[:-1]
            a.append(end)
            b.append(np.roll(loop, -1, axis=0) if closed else loop[1:])
        if not a:
            return np.zeros((0, 2)), np.zeros((0, 2))
        return np.vstack(a), np.vstack(b)

    def mapped(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Polyline2D":
        return Polyline2D([fn(loop) for loop in self.loops], list(self.closed))


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        tris = np.asarray(self.triangles, dtype=int).reshape(-1, 3)
        if len(tris) and (tris.min() < 0 or tris.max() >= len(verts)):
            raise InvalidParameterError("triangle index out of range")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=int))

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and how many triangles use each."""
        t = self.triangles
        e = np.sort(np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def euler_characteristic(self) -> int:
        edges, _ = self.edges()
        return len(self.vertices) - len(edges) + len(self.triangles)

    def is_closed(self) -> bool:
        _, counts = self.edges()
        return len(counts) > 0 and bool(np.all(counts == 2))

    def mapped(self, fn: Callable[[np.ndarray], np.ndarray]) -> "TriMesh":
        return TriMesh(fn(self.vertices) if len(self.vertices) else self.vertices, self.triangles.copy())


def _lattice(bounds: Bounds, res: Union[int, Sequence[int]]) -> Tuple[np.ndarray, np.ndarray, Tuple[int, ...]]:
    lo = np.asarray(bounds[0], dtype=float).ravel()
    hi = np.asarray(bounds[1], dtype=float).ravel()
    if len(lo) != len(hi):
        raise DimensionMismatchError("lower and upper bounds differ in dimension")
    shape = tuple([int(res)] * len(lo)) if np.isscalar(res) else tuple(int(r) for r in res)
    if len(shape) != len(lo) or any(n < 2 for n in shape):
        raise InvalidParameterError(f"resolution must be >= 2 for each of the {len(lo)} axes, got {res}")
    return lo, hi, shape


def sample_grid(f: ImplicitFunction, bounds: Bounds, res: Union[int, Sequence[int]], workers: int = 1) -> SampledGrid:
    """Evaluate f on a lattice. Chunks may run on a thread pool; results land by index."""
    lo, hi, shape = _lattice(bounds, res)
    axes = [np.linspace(lo[a], hi[a], shape[a]) for a in range(len(lo))]
    pts = np.column_stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")])
    out = np.empty(len(pts))
    starts = range(0, len(pts), SAMPLE_CHUNK)

    def run(start: int) -> None:
        out[start:start + SAMPLE_CHUNK] = np.asarray(f(pts[start:start + SAMPLE_CHUNK]), dtype=float).ravel()

    if workers > 1 and len(pts) > SAMPLE_CHUNK:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    else:
        for start in starts:
            run(start)

    bad = np.flatnonzero(~np.isfinite(out))
    if len(bad):
        index = np.unravel_index(bad[0], shape)
        raise EvaluationError(f"non-finite value at lattice index {tuple(int(i) for i in index)}")
    return SampledGrid(bounds=(lo, hi), values=out.reshape(shape), func=f)


# corners c0=(i,j) c1=(i+1,j) c2=(i+1,j+1) c3=(i,j+1); edges E0=c0c1 E1=c1c2 E2=c3c2 E3=c0c3
_CORNER_EDGES = ((3, 0), (0, 1), (1, 2), (2, 3))


def marching_squares(grid: SampledGrid, iso: float = 0.0) -> Polyline2D:
    """Contour a 2D grid at iso; segments are chained into loops (open where they hit the border).

    Saddle cells are split by the value at the cell center: grid.func when the grid
    carries one, otherwise the mean of the four corners.
    """
    if grid.dim != 2:
        raise DimensionMismatchError(f"marching squares needs a 2D grid, got {grid.dim}D")
    v = grid.values
    if not v.min() < v.max() or not v.min() <= iso <= v.max():
        return Polyline2D()
    nx, ny = v.shape
    above = v > iso
    case = (above[:-1, :-1] * 1) | (above[1:, :-1] * 2) | (above[1:, 1:] * 4) | (above[:-1, 1:] * 8)
    cells = np.argwhere((case != 0) & (case != 15))

    def edge_id(i: int, j: int, e: int) -> int:
        # x-edges (i,j)-(i+1,j) are even ids, y-edges (i,j)-(i,j+1) odd
        if e == 0:
            return 2 * (i * ny + j)
        if e == 1:
            return 2 * ((i + 1) * ny + j) + 1
        if e == 2:
            return 2 * (i * ny + j + 1)
        return 2 * (i * ny + j) + 1

    saddles = [(i, j) for i, j in cells if case[i, j] in (5, 10)]
    centers: Dict[Tuple[int, int], bool] = {}
    if saddles:
        idx = np.array(saddles)
        if grid.func is not None:
            cval = np.asarray(grid.func(grid.to_world(idx + 0.5)), dtype=float).ravel()
        else:
            cval = (v[idx[:, 0], idx[:, 1]] + v[idx[:, 0] + 1, idx[:, 1]]
                    + v[idx[:, 0] + 1, idx[:, 1] + 1] + v[idx[:, 0], idx[:, 1] + 1]) / 4.0
        centers = {(int(i), int(j)): bool(c > iso) for (i, j), c in zip(saddles, cval)}

    adjacency: Dict[int, List[int]] = {}

    def link(a: int, b: int) -> None:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)

    for i, j in cells:
        i, j = int(i), int(j)
        c = case[i, j]
        bits = [(c >> k) & 1 for k in range(4)]
        if (i, j) in centers:
            for corner in range(4):
                if bits[corner] != centers[(i, j)]:
                    e1, e2 = _CORNER_EDGES[corner]
                    link(edge_id(i, j, e1), edge_id(i, j, e2))
        else:
            crossed = [e for e, (p, q) in enumerate(((0, 1), (1, 2), (3, 2), (0, 3))) if bits[p] != bits[q]]
            link(edge_id(i, j, crossed[0]), edge_id(i, j, crossed[1]))

    def position(eid: int) -> np.ndarray:
        node, is_y = divmod(eid, 2)
        i, j = divmod(node, ny)
        v0 = v[i, j]
        v1 = v[i, j + 1] if is_y else v[i + 1, j]
        t = (iso - v0) / (v1 - v0)
        return grid.to_world((i, j + t) if is_y else (i + t, j))

    loops: List[np.ndarray] = []
    closed: List[bool] = []
    visited = set()
    ends = sorted(n for n, nb in adjacency.items() if len(nb) == 1)
    for start in ends + sorted(adjacency):
        if start in visited:
            continue
        is_open = len(adjacency[start]) == 1
        path = [start]
        visited.add(start)
        cur = start
        while True:
            nxt = [n for n in adjacency[cur] if n not in visited]
            if not nxt:
                break
            cur = nxt[0]
            visited.add(cur)
            path.append(cur)
        pts = np.array([position(e) for e in path])
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
        pts = pts[keep]
        if not is_open and len(pts) > 1 and np.all(pts[0] == pts[-1]):
            pts = pts[:-1]
        if (not is_open and len(pts) >= 3) or (is_open and len(pts) >= 2):
            loops.append(pts)
            closed.append(not is_open)
    logger.debug("marching squares: %d cells, %d loops", len(cells), len(loops))
    return Polyline2D(loops, closed)


def marching_cubes(grid: SampledGrid, iso: float = 0.0) -> TriMesh:
    """Triangulate the iso-surface of a 3D grid (Lewiner case tables from scikit-image)."""
    if grid.dim != 3:
        raise DimensionMismatchError(f"marching cubes needs a 3D grid, got {grid.dim}D")
    v = grid.values
    if not v.min() < iso < v.max():
        return TriMesh.empty()
    verts, faces, _, _ = measure.marching_cubes(v, level=iso, spacing=tuple(float(s) for s in grid.spacing),
                                                method="lewiner", allow_degenerate=False)
    verts = verts.astype(float) + grid.bounds[0]
    faces = faces.astype(int)
    if len(faces):
        a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
        area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
        faces = faces[area > MIN_TRIANGLE_AREA]
    used = np.unique(faces)
    remap = np.full(len(verts), -1)
    remap[used] = np.arange(len(used))
    logger.debug("marching cubes: %d vertices, %d triangles", len(used), len(faces))
    return TriMesh(verts[used], remap[faces])


@dataclass(frozen=True)
class GridSpec:
    """Where and how finely to sample an implicit function for extraction."""

    bounds: Bounds
    res: int = 128

    def __post_init__(self):
        if self.res < 2:
            raise InvalidParameterError(f"grid resolution must be >= 2, got {self.res}")
        lo = tuple(float(v) for v in self.bounds[0])
        hi = tuple(float(v) for v in self.bounds[1])
        if len(lo) != len(hi) or any(h <= l for l, h in zip(lo, hi)):
            raise InvalidParameterError(f"invalid sampling box {lo} .. {hi}")
        object.__setattr__(self, "bounds", (lo, hi))

    @property
    def dim(self) -> int:
        return len(self.bounds[0])


def extract_zero_set(f: ImplicitFunction, spec: GridSpec, iso: float = 0.0,
                     workers: int = 1) -> Union[Polyline2D, TriMesh]:
    """Contour (2D) or isosurface (3D) of f over the sampling box."""
    grid = sample_grid(f, spec.bounds, spec.res, workers)
    if spec.dim == 2:
        return marching_squares(grid, iso)
    return marching_cubes(grid, iso)


def rasterize(f: ImplicitFunction, bounds: Bounds, res: Union[int, Sequence[int]], workers: int = 1) -> np.ndarray:
    """Inside mask (f > 0) on the lattice."""
    return sample_grid(f, bounds, res, workers).values > 0


def euler_characteristic_2d(mask: np.ndarray) -> int:
    """Components (4-connected foreground) minus holes (8-connected background not touching the border)."""
    mask = np.asarray(mask, dtype=bool)
    _, n_fg = ndimage.label(mask)
    padded = np.pad(~mask, 1, constant_values=True)
    _, n_bg = ndimage.label(padded, structure=np.ones((3, 3), dtype=int))
    return int(n_fg - (n_bg - 1))


def _as_points(a: Any, step: Optional[float] = None) -> np.ndarray:
    if isinstance(a, Polyline2D):
        return a.points(step)
    if isinstance(a, TriMesh):
        return a.vertices
    return np.atleast_2d(np.asarray(a, dtype=float))


def hausdorff(a: Any, b: Any, step: Optional[float] = None) -> float:
    """Symmetric Hausdorff distance between two geometries (polylines densified to `step` when given)."""
    pa, pb = _as_points(a, step), _as_points(b, step)
    if len(pa) == 0 or len(pb) == 0:
        return float("inf")
    return float(max(directed_hausdorff(pa, pb)[0], directed_hausdorff(pb, pa)[0]))


def polyline_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0)


def resample_loop(loop: np.ndarray, step: float) -> np.ndarray:
    """Points spaced `step` apart by arc length along a closed loop."""
    ring = np.vstack([loop, loop[:1]])
    seg = np.linalg.norm(np.diff(ring, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(3, int(np.floor(s[-1] / step)))
    targets = np.linspace(0.0, s[-1], n, endpoint=False)
    return np.column_stack([np.interp(targets, s, ring[:, 0]), np.interp(targets, s, ring[:, 1])])


def max_curvature(lines: Polyline2D, step: float) -> float:
    """Largest turning angle per unit arc length over the closed loops, after resampling at `step`."""
    best = 0.0
    for loop, closed in zip(lines.loops, lines.closed):
        if not closed:
            continue
        pts = resample_loop(loop, step)
        d_in = pts - np.roll(pts, 1, axis=0)
        d_out = np.roll(pts, -1, axis=0) - pts
        cross = d_in[:, 0] * d_out[:, 1] - d_in[:, 1] * d_out[:, 0]
        dot = np.einsum("ij,ij->i", d_in, d_out)
        length = (np.linalg.norm(d_in, axis=1) + np.linalg.norm(d_out, axis=1)) / 2.0
        best = max(best, float(np.max(np.abs(np.arctan2(cross, dot)) / length)))
    return best
