"""warp

Half-way displacement warps for morphs between shapes that need alignment.

Given corresponding points a_i on A and b_i on B, w_A interpolates
(b_i - a_i) / 2 at a_i and w_B interpolates (a_i - b_i) / 2 at b_i, one scalar
variational solve per coordinate. Both shapes are warped half-way, morphed,
and every extracted frame is moved back with the unwarp function

    tau <= 1:  x + (1 - tau) * w_A(x)
    tau >  1:  x + (tau - 1) * w_B(x)        with tau = 2 t / t_max

unwarp() implements exactly this form for whatever pair of fields it is
given. The fields that carry the half-way shapes back to A and B are the
reverse warps r_A, r_B built on the midpoints m_i = (a_i + b_i) / 2
(r_A(m_i) = (a_i - b_i) / 2, r_B(m_i) = (b_i - a_i) / 2); warped_morph
passes those.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, List, Optional, Tuple, Union

import numpy as np

from . import extract
from .constraint_gen import ConstraintSet
from .errors import DegenerateConstraintsError, DimensionMismatchError, InvalidParameterError
from .kernel_core import MAX_DIM, MIN_DIM, KernelKind, RbfModel, as_points, solve_model
from .morph import Frame, MorphModel, build_morph, frame_times, morph_sequence

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    a_points: np.ndarray
    b_points: np.ndarray

    def __post_init__(self):
        a = np.array(self.a_points, dtype=float, ndmin=2)
        b = np.array(self.b_points, dtype=float, ndmin=2)
        if a.shape != b.shape:
            raise DimensionMismatchError(f"{a.shape} points on A but {b.shape} on B")
        k, d = a.shape
        if not MIN_DIM <= d <= MAX_DIM:
            raise DimensionMismatchError(f"correspondences must be 2D to {MAX_DIM}D, got {d}D")
        if k < d + 1:
            raise DegenerateConstraintsError(f"{k} correspondences in {d}D, need at least {d + 1}")
        for name, pts in (("A", a), ("B", b)):
            if np.linalg.matrix_rank(np.hstack([np.ones((k, 1)), pts])) < d + 1:
                raise DegenerateConstraintsError(f"correspondence points on {name} are not affinely independent")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_points", a)
        object.__setattr__(self, "b_points", b)

    @property
    def dim(self) -> int:
        return self.a_points.shape[1]

    def __len__(self) -> int:
        return len(self.a_points)


@dataclass(frozen=True, eq=False)
class DisplacementWarp:
    """Vector field with one scalar model per coordinate."""

    components: Tuple[RbfModel, ...]
    dim: int

    def __post_init__(self):
        if len(self.components) != self.dim or any(m.dim != self.dim for m in self.components):
            raise DimensionMismatchError(f"a {self.dim}D warp needs {self.dim} component models of dimension {self.dim}")

    def __call__(self, x: Any) -> np.ndarray:
        pts, single = as_points(x, self.dim)
        out = np.column_stack([np.atleast_1d(m(pts)) for m in self.components])
        return out[0] if single else out


def _displacement(at: np.ndarray, delta: np.ndarray, kernel: Optional[Union[KernelKind, str]]) -> DisplacementWarp:
    comps = tuple(solve_model((at, delta[:, axis]), kernel) for axis in range(at.shape[1]))
    return DisplacementWarp(comps, at.shape[1])


def build_halfway_warps(corr: CorrespondenceSet,
                        kernel: Optional[Union[KernelKind, str]] = None) -> Tuple[DisplacementWarp, DisplacementWarp]:
    a, b = corr.a_points, corr.b_points
    logger.info("half-way warps from %d correspondences in %dD", len(corr), corr.dim)
    return _displacement(a, (b - a) / 2.0, kernel), _displacement(b, (a - b) / 2.0, kernel)


def build_reverse_warps(corr: CorrespondenceSet,
                        kernel: Optional[Union[KernelKind, str]] = None) -> Tuple[DisplacementWarp, DisplacementWarp]:
    """Fields on the midpoints that carry the half-way shapes back to A and to B."""
    a, b = corr.a_points, corr.b_points
    mid = (a + b) / 2.0
    return _displacement(mid, (a - b) / 2.0, kernel), _displacement(mid, (b - a) / 2.0, kernel)


def apply_warp(w: DisplacementWarp, pts: Any) -> np.ndarray:
    arr, single = as_points(pts, w.dim)
    out = arr + np.atleast_2d(w(arr))
    return out[0] if single else out


def unwarp(p: Any, w_a: DisplacementWarp, w_b: DisplacementWarp, t_max: float) -> np.ndarray:
    """Map points (x..., t) by the piecewise unwarp; t is kept."""
    if not t_max > 0:
        raise InvalidParameterError(f"t_max must be positive, got {t_max}")
    pts, single = as_points(p, w_a.dim + 1)
    x, t = pts[:, :-1], pts[:, -1]
    tau = 2.0 * t / t_max
    out = pts.copy()
    first = tau <= 1.0
    if np.any(first):
        out[first, :-1] = x[first] + (1.0 - tau[first])[:, None] * np.atleast_2d(w_a(x[first]))
    if np.any(~first):
        out[~first, :-1] = x[~first] + (tau[~first] - 1.0)[:, None] * np.atleast_2d(w_b(x[~first]))
    return out[0] if single else out


def warp_constraints(cset: ConstraintSet, w: DisplacementWarp) -> ConstraintSet:
    """Warp boundary and normal constraints; paired normals keep their distance from the warped boundary point."""
    if cset.dim != w.dim:
        raise DimensionMismatchError(f"{cset.dim}D constraints under a {w.dim}D warp")
    boundary = apply_warp(w, cset.boundary) if len(cset.boundary) else cset.boundary
    normal = apply_warp(w, cset.normal) if len(cset.normal) else cset.normal.copy()
    paired = np.flatnonzero(cset.pairing >= 0)
    if len(paired):
        n_idx = cset.pairing[paired]
        dist = np.linalg.norm(cset.normal[n_idx] - cset.boundary[paired], axis=1)
        direction = normal[n_idx] - boundary[paired]
        length = np.linalg.norm(direction, axis=1)
        # collapsed pairs keep their original offset direction
        fallback = cset.normal[n_idx] - cset.boundary[paired]
        direction = np.where((length > 0)[:, None], direction, fallback)
        length = np.where(length > 0, length, dist)
        normal = normal.copy()
        normal[n_idx] = boundary[paired] + direction * (dist / length)[:, None]
    return ConstraintSet(boundary, normal, cset.pairing.copy(), cset.normal_value, dim_hint=cset.dim)


def _unwarp_frame(frame: Frame, t: float, r_a: DisplacementWarp, r_b: DisplacementWarp, t_max: float) -> Frame:
    def move(pts: np.ndarray) -> np.ndarray:
        full = np.hstack([pts, np.full((len(pts), 1), t)])
        return unwarp(full, r_a, r_b, t_max)[:, :-1]

    return frame.mapped(move)


@dataclass(frozen=True, eq=False)
class WarpedMorph:
    """A morph between half-way warped shapes plus the reverse warps that undo it per frame."""

    morph: MorphModel
    r_a: DisplacementWarp
    r_b: DisplacementWarp

    @property
    def min_pivot(self) -> Optional[float]:
        return self.morph.model.min_pivot


def build_warped_morph(set_a: ConstraintSet, set_b: ConstraintSet, corr: CorrespondenceSet, t_max: float,
                       kernel: Optional[Union[KernelKind, str]] = None,
                       warp_kernel: Optional[Union[KernelKind, str]] = None) -> WarpedMorph:
    if corr.dim != set_a.dim:
        raise DimensionMismatchError(f"{corr.dim}D correspondences for {set_a.dim}D shapes")
    w_a, w_b = build_halfway_warps(corr, warp_kernel)
    r_a, r_b = build_reverse_warps(corr, warp_kernel)
    morph = build_morph(warp_constraints(set_a, w_a), warp_constraints(set_b, w_b), t_max, kernel)
    return WarpedMorph(morph, r_a, r_b)


def warped_sequence(wm: WarpedMorph, n_frames: int, grid: extract.GridSpec, workers: int = 1) -> List[Frame]:
    """Extract evenly spaced frames of the warped morph and unwarp each one."""
    t_max = wm.morph.t_max
    frames = morph_sequence(wm.morph, n_frames, grid, workers)
    return [_unwarp_frame(f, t, wm.r_a, wm.r_b, t_max) for f, t in zip(frames, frame_times(t_max, n_frames))]


def warped_morph(set_a: ConstraintSet, set_b: ConstraintSet, corr: CorrespondenceSet, t_max: float,
                 kernel: Optional[Union[KernelKind, str]], n_frames: int, grid: extract.GridSpec,
                 workers: int = 1, warp_kernel: Optional[Union[KernelKind, str]] = None) -> List[Frame]:
    """Warp both shapes half-way, morph, extract, and unwarp every frame."""
    return warped_sequence(build_warped_morph(set_a, set_b, corr, t_max, kernel, warp_kernel), n_frames, grid, workers)
