"""slice_recon

Surface reconstruction from planar contour slices with one 3D solve.

Parallel slices are stacked at their (possibly nonuniform) z positions;
arbitrarily oriented slices are mapped through a rigid frame. Either way all
constraints go into a single variational solve, so branching and caps need no
special handling.

Functions:
- stack_parallel(slices, spacings) -> ConstraintSet
- place_oriented(slices) -> ConstraintSet
- reconstruct(constraints, kernel=None, res=48) -> ReconstructionResult
- pairwise_reconstruction(slices, spacings) -> StackedMorphs (for comparison)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from . import extract
from .constraint_gen import ConstraintSet
from .errors import (
    DimensionMismatchError,
    DuplicateCenterError,
    EmptyShapeError,
    InvalidFrameError,
    InvalidParameterError,
)
from .kernel_core import KernelKind, RbfModel, as_points, default_kernel, evaluate, solve_model_flat
from .morph import MorphModel, build_morph

logger = logging.getLogger(__name__)

FRAME_TOLERANCE = 1e-9
MERGE_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class OrientedSlice:
    """2D constraints plus a rigid frame: (u, v) -> origin + u * u_axis + v * v_axis."""

    constraints: ConstraintSet
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    u_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    v_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        if self.constraints.dim != 2:
            raise DimensionMismatchError(f"slice constraints must be 2D, got {self.constraints.dim}D")
        origin, u, v = (np.asarray(a, dtype=float).ravel() for a in (self.origin, self.u_axis, self.v_axis))
        if origin.shape != (3,) or u.shape != (3,) or v.shape != (3,):
            raise InvalidFrameError("slice frame needs a 3D origin and two 3D axes")
        gram = np.array([[u @ u, u @ v], [v @ u, v @ v]])
        if not np.all(np.abs(gram - np.eye(2)) <= FRAME_TOLERANCE):
            raise InvalidFrameError(f"slice axes are not orthonormal (gram matrix {gram.tolist()})")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "u_axis", u)
        object.__setattr__(self, "v_axis", v)

    @classmethod
    def parallel(cls, constraints: ConstraintSet, z: float) -> "OrientedSlice":
        return cls(constraints, origin=np.array([0.0, 0.0, float(z)]))

    @classmethod
    def from_matrix(cls, constraints: ConstraintSet, matrix: Any) -> "OrientedSlice":
        """From a 3x4 rigid transform [R | t]; the rotation block must be orthonormal."""
        m = np.asarray(matrix, dtype=float).reshape(3, 4)
        rot = m[:, :3]
        if not np.all(np.abs(rot.T @ rot - np.eye(3)) <= FRAME_TOLERANCE):
            raise InvalidFrameError("rotation block of the slice transform is not orthonormal")
        return cls(constraints, origin=m[:, 3], u_axis=rot[:, 0], v_axis=rot[:, 1])

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.u_axis, self.v_axis)

    def to_world(self, pts: np.ndarray) -> np.ndarray:
        return self.origin + pts[:, :1] * self.u_axis + pts[:, 1:2] * self.v_axis

    def placed(self) -> ConstraintSet:
        return self.constraints.mapped(self.to_world, dim=3)


@dataclass(frozen=True, eq=False)
class SliceStack:
    """Slices in placement order; spacings are set for a parallel stack."""

    slices: Tuple[OrientedSlice, ...]
    spacings: Optional[Tuple[float, ...]] = None
    z0: float = 0.0

    @classmethod
    def parallel(cls, sets: Sequence[ConstraintSet], spacings: Sequence[float], z0: float = 0.0) -> "SliceStack":
        z = slice_positions(len(sets), spacings) + z0
        return cls(tuple(OrientedSlice.parallel(s, zi) for s, zi in zip(sets, z)),
                   tuple(float(s) for s in spacings), float(z0))

    def constraints(self) -> ConstraintSet:
        if self.spacings is None:
            return place_oriented(self.slices)
        stacked = stack_parallel([s.constraints for s in self.slices], self.spacings)
        if self.z0 == 0.0:
            return stacked
        return stacked.mapped(lambda p: p + np.array([0.0, 0.0, self.z0]))

    @property
    def max_spacing(self) -> Optional[float]:
        if self.spacings:
            return max(self.spacings)
        return None


def slice_positions(n_slices: int, spacings: Sequence[float]) -> np.ndarray:
    spacings = np.asarray(spacings, dtype=float).ravel()
    if n_slices < 1:
        raise EmptyShapeError("no slices given")
    if len(spacings) != n_slices - 1:
        raise InvalidParameterError(f"{n_slices} slices need {n_slices - 1} spacings, got {len(spacings)}")
    if np.any(~(spacings > 0)):
        raise InvalidParameterError(f"slice spacings must be positive, got {spacings.tolist()}")
    return np.concatenate([[0.0], np.cumsum(spacings)])


def stack_parallel(slices: Sequence[ConstraintSet], spacings: Sequence[float]) -> ConstraintSet:
    """Slice i goes to z = spacings[0] + ... + spacings[i - 1]."""
    z = slice_positions(len(slices), spacings)
    for s in slices:
        if s.dim != 2:
            raise DimensionMismatchError(f"slice constraints must be 2D, got {s.dim}D")
    return ConstraintSet.concat([s.lifted([zi]) for s, zi in zip(slices, z)])


def place_oriented(slices: Sequence[OrientedSlice]) -> ConstraintSet:
    """Map every slice into 3D. Exact collisions are errors, near ones (< 1e-6) keep the first point."""
    if not slices:
        raise EmptyShapeError("no slices given")
    placed = [s.placed() for s in slices]
    combined = ConstraintSet.concat(placed)
    owner = np.concatenate([np.full(len(p.boundary), i) for i, p in enumerate(placed)]
                           + [np.full(len(p.normal), i) for i, p in enumerate(placed)]).astype(int)
    positions = combined.positions

    seen = {}
    for row, key in enumerate(map(tuple, positions)):
        if key in seen:
            first = seen[key]
            raise DuplicateCenterError(
                f"slices {owner[first]} and {owner[row]} both place a constraint at {key}")
        seen[key] = row

    drop = set()
    for i, j in sorted(cKDTree(positions).query_pairs(MERGE_TOLERANCE)):
        if i not in drop and j not in drop:
            drop.add(j)
    if not drop:
        return combined
    nb = len(combined.boundary)
    b_keep = [i for i in range(nb) if i not in drop]
    n_keep = [j for j in range(len(combined.normal)) if nb + j not in drop]
    logger.warning("merged %d near-coincident constraints from intersecting slices", len(drop))
    return combined.select(b_keep, n_keep)


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    model: RbfModel
    mesh: extract.TriMesh
    bounds: Tuple[Tuple[float, ...], Tuple[float, ...]]


def extraction_bounds(constraints: ConstraintSet, max_spacing: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Bounding box padded by max(2 * max spacing, 20% of the diagonal).

    Without a spacing the gaps between distinct boundary z values are used; a
    single flat contour uses half its largest extent, so its caps fit.
    """
    pts = constraints.positions
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    if max_spacing is None:
        zs = np.unique(constraints.boundary[:, 2])
        max_spacing = float(np.diff(zs).max()) if len(zs) > 1 else float((hi - lo).max()) / 2.0
    pad = max(2.0 * max_spacing, 0.2 * float(np.linalg.norm(hi - lo)))
    return lo - pad, hi + pad


def reconstruct(constraints: ConstraintSet, kernel: Optional[Union[KernelKind, str]] = None, res: int = 48,
                max_spacing: Optional[float] = None, workers: int = 1) -> ReconstructionResult:
    if constraints.dim != 3:
        raise DimensionMismatchError(f"reconstruction needs 3D constraints, got {constraints.dim}D")
    if len(constraints.boundary) == 0:
        raise EmptyShapeError("no boundary constraints to reconstruct")
    kind = KernelKind.parse(kernel) if kernel is not None else default_kernel(3)
    model = solve_model_flat(constraints, kind)
    lo, hi = extraction_bounds(constraints, max_spacing)
    mesh = extract.marching_cubes(extract.sample_grid(model, (lo, hi), res, workers), 0.0)
    logger.info("reconstructed surface: %d vertices, %d triangles", len(mesh.vertices), len(mesh.triangles))
    return ReconstructionResult(model=model, mesh=mesh, bounds=(tuple(lo), tuple(hi)))


@dataclass(frozen=True, eq=False)
class StackedMorphs:
    """One morph per adjacent slice pair; z picks the pair."""

    morphs: Tuple[MorphModel, ...]
    z: np.ndarray

    def __call__(self, x: Any) -> Union[float, np.ndarray]:
        pts, single = as_points(x, 3)
        seg = np.clip(np.searchsorted(self.z, pts[:, 2], side="right") - 1, 0, len(self.morphs) - 1)
        out = np.empty(len(pts))
        for i, morph in enumerate(self.morphs):
            sel = seg == i
            if np.any(sel):
                local = pts[sel].copy()
                local[:, 2] -= self.z[i]
                out[sel] = evaluate(morph.model, local)
        return float(out[0]) if single else out


def pairwise_reconstruction(slices: Sequence[ConstraintSet], spacings: Sequence[float],
                            kernel: Optional[Union[KernelKind, str]] = None) -> StackedMorphs:
    """Glue independent two-slice morphs at the slice planes."""
    z = slice_positions(len(slices), spacings)
    if len(slices) < 2:
        raise InvalidParameterError("pairwise reconstruction needs at least two slices")
    morphs = tuple(build_morph(slices[i], slices[i + 1], float(z[i + 1] - z[i]), kernel)
                   for i in range(len(slices) - 1))
    return StackedMorphs(morphs, z)
