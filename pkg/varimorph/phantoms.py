"""Synthetic shapes with known geometry.

Images are anti-aliased: a pixel's gray value is 255 * clip(s + 0.5, 0, 1)
for the signed distance s (positive inside) of its center, so the 127.5
threshold crossing sits on the analytic boundary up to interpolation error.
"""
from __future__ import annotations

from typing import Callable, List, Optional, Sequence

import numpy as np

from .constraint_gen import ConstraintSet, GrayImage, PointNormalCloud
from .kernel_core import Constraint


def _grid(size: int):
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    return xs, ys


def image_from_distance(signed: np.ndarray) -> GrayImage:
    return GrayImage(255.0 * np.clip(signed + 0.5, 0.0, 1.0))


def disk_image(size: int = 64, radius: float = 20.0, center: Optional[Sequence[float]] = None) -> GrayImage:
    cx, cy = center if center is not None else ((size - 1) / 2.0, (size - 1) / 2.0)
    xs, ys = _grid(size)
    return image_from_distance(radius - np.hypot(xs - cx, ys - cy))


def ring_image(size: int = 64, outer: float = 24.0, inner: float = 12.0) -> GrayImage:
    """The 'O': one component with one hole."""
    c = (size - 1) / 2.0
    xs, ys = _grid(size)
    d = np.hypot(xs - c, ys - c)
    return image_from_distance(np.minimum(outer - d, d - inner))


def cross_image(size: int = 64, half_width: float = 5.0, reach: float = 22.0) -> GrayImage:
    """The 'X': two diagonal bars clipped to a square."""
    c = (size - 1) / 2.0
    xs, ys = _grid(size)
    dx, dy = xs - c, ys - c
    box = reach - np.maximum(np.abs(dx), np.abs(dy))
    bar1 = np.minimum(half_width - np.abs(dx - dy) / np.sqrt(2.0), box)
    bar2 = np.minimum(half_width - np.abs(dx + dy) / np.sqrt(2.0), box)
    return image_from_distance(np.maximum(bar1, bar2))


def square_image(size: int = 64, half: float = 16.0) -> GrayImage:
    c = (size - 1) / 2.0
    xs, ys = _grid(size)
    return image_from_distance(half - np.maximum(np.abs(xs - c), np.abs(ys - c)))


def ellipse_constraints(ax: float, ay: float, n: int = 24, offset: float = 0.1, center=(0.0, 0.0),
                        phase: float = 0.0) -> ConstraintSet:
    """Boundary points on an ellipse and normal constraints `offset` inside along the inward normal."""
    theta = phase + 2.0 * np.pi * np.arange(n) / n
    boundary = np.column_stack([center[0] + ax * np.cos(theta), center[1] + ay * np.sin(theta)])
    normal = np.column_stack([np.cos(theta) / ax, np.sin(theta) / ay])
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    return ConstraintSet(boundary, boundary - offset * normal)


def circle_constraints(radius: float, n: int = 24, offset: float = 0.1, center=(0.0, 0.0),
                       phase: float = 0.0) -> ConstraintSet:
    return ellipse_constraints(radius, radius, n, offset, center, phase)


def ellipse_stack(n_slices: int = 5, n_points: int = 20) -> List[ConstraintSet]:
    """Slices of a rounded, joint-like body: ellipses that swell towards the middle."""
    sets = []
    for i in range(n_slices):
        u = i / max(1, n_slices - 1)
        bulge = 1.0 - 0.6 * (2.0 * u - 1.0) ** 2
        sets.append(ellipse_constraints(1.2 * bulge, 0.8 * bulge, n_points, offset=0.1,
                                        center=(0.1 * i, 0.0), phase=0.05 * i))
    return sets


def sphere_cloud(n: int = 200, radius: float = 1.0) -> PointNormalCloud:
    """Fibonacci-lattice points on a sphere with outward unit normals."""
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + 5 ** 0.5) * i
    normals = np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    return PointNormalCloud(radius * normals, normals)


CUBE_OBJ = """\
# unit cube, quad faces, no normals
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
"""


def sphere_field(radius: float = 1.0, center: Optional[Sequence[float]] = None) -> Callable[[np.ndarray], np.ndarray]:
    """Signed distance to a sphere (or circle), positive inside."""
    def f(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        c = np.zeros(x.shape[1]) if center is None else np.asarray(center, dtype=float)
        return radius - np.linalg.norm(x - c, axis=1)
    return f


def torus_field(major: float = 1.0, minor: float = 0.4) -> Callable[[np.ndarray], np.ndarray]:
    def f(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        q = np.hypot(x[:, 0], x[:, 1]) - major
        return minor - np.hypot(q, x[:, 2])
    return f


def random_constraints(n: int, dim: int, seed: int = 0) -> List[Constraint]:
    """n constraints at uniform positions in the unit box with values in [0, 1]."""
    rng = np.random.default_rng(seed)
    pos = rng.random((n, dim))
    vals = rng.random(n)
    return [Constraint(tuple(p), v) for p, v in zip(pos, vals)]
