"""morph

Shape transformation by dimension lifting: the constraints of shape A are
placed at t = 0, those of shape B at t = t_max, and one variational solve in
d + 1 dimensions describes the whole sequence. Slices at 0 < t < t_max are the
intermediate shapes.

With a third (influence) shape the constraints gain two coordinates (s, t);
A, B and C sit at the corners of a triangle in that plane and a path through
the plane selects how much of C shows up in the intermediate shapes.

Functions:
- embed_pair / build_morph / slice_at / morph_sequence
- embed_influence / build_influence / influence_slice / sample_path / influence_sequence
- sdf_morph_baseline / sdf_contour / blend_baseline (the non-variational comparisons)
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import extract
from .constraint_gen import ConstraintSet, SdfGrid
from .errors import (
    DegeneratePlacementError,
    DimensionMismatchError,
    EmptyShapeError,
    InvalidParameterError,
)
from .kernel_core import (
    KernelKind,
    RbfModel,
    as_points,
    default_kernel,
    evaluate,
    evaluate_gradient,
    solve_model,
    solve_model_flat,
)

logger = logging.getLogger(__name__)

Frame = Union[extract.Polyline2D, extract.TriMesh]
DEFAULT_PLACEMENT = ((0.0, 0.0), (1.0, 0.0), (0.5, 0.5))
PLACEMENT_MIN_AREA = 1e-12


@dataclass(frozen=True)
class InfluencePlacement:
    """(s, t) coordinates of shapes A, B and C in the two added dimensions."""

    coords: Tuple[Tuple[float, float], ...] = DEFAULT_PLACEMENT

    def __post_init__(self):
        coords = tuple((float(s), float(t)) for s, t in self.coords)
        if len(coords) != 3:
            raise DegeneratePlacementError(f"need exactly three placements, got {len(coords)}")
        (s0, t0), (s1, t1), (s2, t2) = coords
        area = 0.5 * abs((s1 - s0) * (t2 - t0) - (s2 - s0) * (t1 - t0))
        if not np.isfinite(area) or area < PLACEMENT_MIN_AREA:
            raise DegeneratePlacementError(f"placements {coords} do not span a triangle")
        object.__setattr__(self, "coords", coords)


@dataclass(frozen=True, eq=False)
class MorphModel:
    model: RbfModel
    t_max: float
    source_dims: int
    placement: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        if self.model.dim - self.source_dims not in (1, 2):
            raise DimensionMismatchError(
                f"a morph of {self.source_dims}D shapes needs a model of dimension "
                f"{self.source_dims + 1} or {self.source_dims + 2}, got {self.model.dim}")
        if not self.t_max > 0:
            raise InvalidParameterError(f"t_max must be positive, got {self.t_max}")

    @property
    def is_influence(self) -> bool:
        return self.model.dim == self.source_dims + 2


@dataclass(frozen=True, eq=False)
class ImplicitSlice:
    """g(x) = f(x, tail): the restriction of a model to fixed trailing coordinates."""

    model: RbfModel
    tail: Tuple[float, ...]

    @property
    def dim(self) -> int:
        return self.model.dim - len(self.tail)

    def _full(self, x: Any) -> Tuple[np.ndarray, bool]:
        pts, single = as_points(x, self.dim)
        return np.hstack([pts, np.tile(np.asarray(self.tail, dtype=float), (len(pts), 1))]), single

    def __call__(self, x: Any) -> Union[float, np.ndarray]:
        full, single = self._full(x)
        out = evaluate(self.model, full)
        return float(out[0]) if single else out

    def gradient(self, x: Any) -> np.ndarray:
        full, single = self._full(x)
        g = evaluate_gradient(self.model, full)[:, :self.dim]
        return g[0] if single else g


@dataclass(frozen=True, eq=False)
class LinearBlend:
    """(1 - alpha) * first + alpha * second."""

    first: Any
    second: Any
    alpha: float

    def __call__(self, x: Any) -> Union[float, np.ndarray]:
        return (1.0 - self.alpha) * self.first(x) + self.alpha * self.second(x)


def _check_pair(set_a: ConstraintSet, set_b: ConstraintSet) -> None:
    if set_a.dim != set_b.dim:
        raise DimensionMismatchError(f"shape A is {set_a.dim}D but shape B is {set_b.dim}D")


def embed_pair(set_a: ConstraintSet, set_b: ConstraintSet, t_max: float = 1.0) -> ConstraintSet:
    _check_pair(set_a, set_b)
    if not t_max > 0:
        raise InvalidParameterError(f"t_max must be positive, got {t_max}")
    return ConstraintSet.concat([set_a.lifted([0.0]), set_b.lifted([t_max])])


def build_morph(set_a: ConstraintSet, set_b: ConstraintSet, t_max: float = 1.0,
                kernel: Optional[Union[KernelKind, str]] = None) -> MorphModel:
    for name, s in (("A", set_a), ("B", set_b)):
        if len(s.boundary) == 0:
            raise EmptyShapeError(f"shape {name} has no boundary constraints")
    lifted = embed_pair(set_a, set_b, t_max)
    kind = KernelKind.parse(kernel) if kernel is not None else default_kernel(lifted.dim)
    logger.info("morph: %d + %d constraints, t_max=%g", len(set_a), len(set_b), t_max)
    model = solve_model(lifted, kind)
    return MorphModel(model=model, t_max=float(t_max), source_dims=set_a.dim, placement=((0.0,), (float(t_max),)))


def slice_at(morph: MorphModel, t: float) -> ImplicitSlice:
    if morph.is_influence:
        raise DimensionMismatchError("influence morphs are sliced with influence_slice(s, t)")
    return ImplicitSlice(morph.model, (float(t),))


def frame_times(t_max: float, n_frames: int) -> List[float]:
    if n_frames < 2:
        raise InvalidParameterError(f"need at least 2 frames, got {n_frames}")
    return [i * t_max / (n_frames - 1) for i in range(n_frames)]


def _extract_all(slices: Sequence[ImplicitSlice], grid: extract.GridSpec, workers: int) -> List[Frame]:
    for g in slices:
        if g.dim != grid.dim:
            raise DimensionMismatchError(f"{g.dim}D slices cannot be sampled on a {grid.dim}D grid")
    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda g: extract.extract_zero_set(g, grid), slices))
    return [extract.extract_zero_set(g, grid) for g in slices]


def morph_sequence(morph: MorphModel, n_frames: int, grid: extract.GridSpec, workers: int = 1) -> List[Frame]:
    """Zero sets of evenly spaced slices t = i * t_max / (n_frames - 1), in frame order."""
    times = frame_times(morph.t_max, n_frames)
    frames = _extract_all([slice_at(morph, t) for t in times], grid, workers)
    logger.info("extracted %d frames", len(frames))
    return frames


def sdf_morph_baseline(sdf_a: SdfGrid, sdf_b: SdfGrid, alpha: float) -> SdfGrid:
    """Per-pixel linear interpolation of two signed distance fields."""
    if sdf_a.values.shape != sdf_b.values.shape:
        raise DimensionMismatchError(f"SDF grids differ in size: {sdf_a.values.shape} vs {sdf_b.values.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return SdfGrid(values=sdf_a.values.copy())
    if alpha == 1.0:
        return SdfGrid(values=sdf_b.values.copy())
    return SdfGrid(values=(1.0 - alpha) * sdf_a.values + alpha * sdf_b.values)


def sdf_contour(sdf: SdfGrid, scale: float = 1.0) -> extract.Polyline2D:
    """Zero contour of an SDF image in pixel coordinates times `scale`."""
    grid = extract.SampledGrid(bounds=((0.0, 0.0), ((sdf.width - 1.0) * scale, (sdf.height - 1.0) * scale)),
                               values=sdf.values.T)
    return extract.marching_squares(grid, 0.0)


def blend_baseline(set_a: ConstraintSet, set_b: ConstraintSet, alpha: float,
                   kernel: Optional[Union[KernelKind, str]] = None) -> LinearBlend:
    """One implicit function per shape, blended linearly (no lifting)."""
    _check_pair(set_a, set_b)
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"alpha must lie in [0, 1], got {alpha}")
    return LinearBlend(solve_model(set_a, kernel), solve_model(set_b, kernel), float(alpha))


def embed_influence(set_a: ConstraintSet, set_b: ConstraintSet, set_c: Optional[ConstraintSet],
                    placement: Optional[InfluencePlacement] = None) -> ConstraintSet:
    placement = placement or InfluencePlacement()
    set_c = set_c if set_c is not None else ConstraintSet.empty(set_a.dim, set_a.normal_value)
    _check_pair(set_a, set_b)
    _check_pair(set_a, set_c)
    parts = [s.lifted(st) for s, st in zip((set_a, set_b, set_c), placement.coords)]
    return ConstraintSet.concat(parts)


def build_influence(set_a: ConstraintSet, set_b: ConstraintSet, set_c: Optional[ConstraintSet],
                    placement: Optional[InfluencePlacement] = None,
                    kernel: Optional[Union[KernelKind, str]] = None) -> MorphModel:
    """Solve the two-extra-dimension problem. Without C the t-slope is not determined; it is set to 0."""
    placement = placement or InfluencePlacement()
    for name, s in (("A", set_a), ("B", set_b)):
        if len(s.boundary) == 0:
            raise EmptyShapeError(f"shape {name} has no boundary constraints")
    lifted = embed_influence(set_a, set_b, set_c, placement)
    kind = KernelKind.parse(kernel) if kernel is not None else default_kernel(lifted.dim)
    n_c = 0 if set_c is None else len(set_c)
    logger.info("influence morph: %d + %d + %d constraints in %dD", len(set_a), len(set_b), n_c, lifted.dim)
    model = solve_model_flat(lifted, kind)
    return MorphModel(model=model, t_max=1.0, source_dims=set_a.dim, placement=placement.coords)


def influence_slice(model: Union[RbfModel, MorphModel], s: float, t: float) -> ImplicitSlice:
    base = model.model if isinstance(model, MorphModel) else model
    if base.dim < 4:
        raise DimensionMismatchError(f"influence slices need a model of dimension >= 4, got {base.dim}")
    return ImplicitSlice(base, (float(s), float(t)))


def sample_path(waypoints: Sequence[Sequence[float]], n_frames: int) -> List[Tuple[float, float]]:
    """n_frames (s, t) points evenly spaced by arc length along the polygonal path."""
    pts = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise InvalidParameterError("path needs at least one waypoint")
    if n_frames < 2:
        raise InvalidParameterError(f"need at least 2 frames, got {n_frames}")
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    if arc[-1] == 0.0:
        return [(float(pts[0, 0]), float(pts[0, 1]))] * n_frames
    targets = np.linspace(0.0, arc[-1], n_frames)
    s = np.interp(targets, arc, pts[:, 0])
    t = np.interp(targets, arc, pts[:, 1])
    return [(float(a), float(b)) for a, b in zip(s, t)]


def influence_sequence(morph: MorphModel, waypoints: Sequence[Sequence[float]], n_frames: int,
                       grid: extract.GridSpec, workers: int = 1) -> List[Frame]:
    path = sample_path(waypoints, n_frames)
    return _extract_all([influence_slice(morph, s, t) for s, t in path], grid, workers)
