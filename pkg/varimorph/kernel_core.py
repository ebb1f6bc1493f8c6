"""kernel_core

Variational (generalized thin-plate) scattered-data interpolation in 2 to 5
dimensions.

An interpolant has the form

    f(x) = sum_j d_j * phi(|x - c_j|) + p_0 + sum_a p_a * x_a

and is found by solving the symmetric saddle-point system

    [ Phi  P ] [d]   [h]
    [ P^T  0 ] [p] = [0]

with Phi_ij = phi(|c_i - c_j|) and P = [1, c_i]. The lower-right block is
zero, so the matrix is symmetric indefinite; it is factored with scipy's
Bunch-Kaufman LDL^T, pivot blocks are checked against a relative threshold and
one step of iterative refinement is applied.

Functions:
- kernel_eval(r, kind) / kernel_values(r, kind)
- assemble_system(constraints, kind=None) -> LinearSystem
- solve_model(constraints, kind=None, normalize=True) -> RbfModel
- solve_model_flat(constraints, kind=None) -> RbfModel (constraints in a hyperplane)
- evaluate(model, x) / evaluate_gradient(model, x)
- thin_plate_energy(model, bounds, grid_res=64)
- lift_model(model, values)
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import (
    DegenerateConstraintsError,
    DimensionMismatchError,
    DomainError,
    DuplicateCenterError,
    InsufficientConstraintsError,
    InvalidParameterError,
    SingularSystemError,
    TooManyConstraintsError,
    UnsupportedDimensionError,
)

logger = logging.getLogger(__name__)

MIN_DIM = 2
MAX_DIM = 5
MAX_CONSTRAINTS = 3000
PIVOT_RTOL = 1e-12
DUPLICATE_TOL = 1e-12
EVAL_CHUNK = 4096


class KernelKind(str, enum.Enum):
    THIN_PLATE = "r2logr"
    LINEAR = "r"
    CUBIC = "r3"

    @classmethod
    def parse(cls, name: Union[str, "KernelKind"]) -> "KernelKind":
        if isinstance(name, KernelKind):
            return name
        key = str(name).strip().lower().replace("^", "").replace("*", "").replace(" ", "")
        aliases = {
            "r2logr": cls.THIN_PLATE, "r2log(r)": cls.THIN_PLATE, "tps": cls.THIN_PLATE, "thin-plate": cls.THIN_PLATE,
            "r": cls.LINEAR, "linear": cls.LINEAR, "r1": cls.LINEAR,
            "r3": cls.CUBIC, "cubic": cls.CUBIC,
        }
        if key not in aliases:
            raise InvalidParameterError(f"unknown kernel {name!r} (expected one of r2logr, r, r3)")
        return aliases[key]


# phi(s*r) = s**p * phi(r) (+ s**2 log(s) r**2 for the thin-plate kernel)
_SCALE_POWER = {KernelKind.THIN_PLATE: 2, KernelKind.LINEAR: 1, KernelKind.CUBIC: 3}


def default_kernel(dim: int) -> KernelKind:
    """r^2 log r in even dimensions (2, 4), r^3 in odd dimensions (3, 5)."""
    _check_dim(dim)
    return KernelKind.THIN_PLATE if dim % 2 == 0 else KernelKind.CUBIC


@dataclass(frozen=True)
class Constraint:
    position: Tuple[float, ...]
    value: float

    def __post_init__(self):
        pos = tuple(float(c) for c in self.position)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "value", float(self.value))
        _check_dim(len(pos))
        if not all(np.isfinite(pos)) or not np.isfinite(self.value):
            raise DomainError(f"constraint must be finite: {pos} -> {self.value}")

    @property
    def dim(self) -> int:
        return len(self.position)


@dataclass(frozen=True)
class LinearSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    dim: int

    @property
    def k(self) -> int:
        return self.matrix.shape[0] - self.dim - 1


@dataclass(frozen=True, eq=False)
class RbfModel:
    """A solved interpolant. Arrays are read-only; safe to share across threads."""

    centers: np.ndarray
    weights: np.ndarray
    poly: np.ndarray
    kernel: KernelKind
    dim: int
    min_pivot: Optional[float] = None

    def __post_init__(self):
        centers = np.array(self.centers, dtype=float, ndmin=2)
        weights = np.array(self.weights, dtype=float).ravel()
        poly = np.array(self.poly, dtype=float).ravel()
        if centers.shape[1] != self.dim or len(poly) != self.dim + 1:
            raise DimensionMismatchError(f"model of dim {self.dim} got centers {centers.shape} and {len(poly)} poly coefficients")
        if len(weights) != len(centers):
            raise DimensionMismatchError(f"{len(weights)} weights for {len(centers)} centers")
        for arr in (centers, weights, poly):
            arr.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "poly", poly)
        object.__setattr__(self, "kernel", KernelKind.parse(self.kernel))

    @property
    def k(self) -> int:
        return len(self.weights)

    def side_conditions(self) -> Tuple[float, np.ndarray]:
        """(sum d_j, sum d_j c_j) - both vanish for a solved model."""
        return float(self.weights.sum()), self.weights @ self.centers

    def __call__(self, x: Any) -> Union[float, np.ndarray]:
        return evaluate(self, x)


def _check_dim(dim: int) -> None:
    if not MIN_DIM <= dim <= MAX_DIM:
        raise UnsupportedDimensionError(f"dimension {dim} outside supported range {MIN_DIM}..{MAX_DIM}")


def kernel_values(r: np.ndarray, kind: KernelKind) -> np.ndarray:
    """Vectorized phi(r) for r >= 0. r^2 log r takes its limit 0 at r = 0."""
    r = np.asarray(r, dtype=float)
    if kind is KernelKind.THIN_PLATE:
        out = np.zeros_like(r)
        nz = r > 0
        rn = r[nz]
        out[nz] = rn * rn * np.log(rn)
        return out
    if kind is KernelKind.LINEAR:
        return r.copy()
    return r * r * r


def kernel_eval(r: float, kind: Union[KernelKind, str]) -> float:
    kind = KernelKind.parse(kind)
    r = float(r)
    if not r >= 0.0:
        raise DomainError(f"kernel radius must be nonnegative, got {r}")
    return float(kernel_values(np.array([r]), kind)[0])


def _gradient_factor(r: np.ndarray, kind: KernelKind) -> np.ndarray:
    # phi'(r) / r; the r = 0 entries multiply a zero offset and are set to 0
    out = np.zeros_like(r)
    nz = r > 0
    rn = r[nz]
    if kind is KernelKind.THIN_PLATE:
        out[nz] = 2.0 * np.log(rn) + 1.0
    elif kind is KernelKind.LINEAR:
        out[nz] = 1.0 / rn
    else:
        out[nz] = 3.0 * rn
    return out


def gather(constraints: Any) -> Tuple[np.ndarray, np.ndarray]:
    """Normalize the accepted constraint containers to (positions (k, d), values (k,)).

    Accepts a sequence of Constraint, a (positions, values) pair or any object with
    `positions` and `values` attributes (ConstraintSet).
    """
    if hasattr(constraints, "positions") and hasattr(constraints, "values"):
        pos, vals = constraints.positions, constraints.values
    elif isinstance(constraints, tuple) and len(constraints) == 2 and not isinstance(constraints[0], Constraint):
        pos, vals = constraints
    else:
        items = list(constraints)
        if not items:
            raise InsufficientConstraintsError("no constraints given")
        dims = {c.dim for c in items}
        if len(dims) > 1:
            raise DimensionMismatchError(f"constraints of mixed dimensions {sorted(dims)}")
        pos = [c.position for c in items]
        vals = [c.value for c in items]
    pos = np.array(pos, dtype=float, ndmin=2)
    vals = np.array(vals, dtype=float).ravel()
    if pos.size == 0:
        raise InsufficientConstraintsError("no constraints given")
    if len(pos) != len(vals):
        raise DimensionMismatchError(f"{len(pos)} positions but {len(vals)} values")
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vals))):
        raise DomainError("constraints must be finite")
    return pos, vals


def check_duplicates(positions: np.ndarray) -> None:
    """Reject coincident centers: exact coordinate hash, then a KD-tree distance check."""
    seen = {}
    for i, row in enumerate(map(tuple, positions)):
        if row in seen:
            raise DuplicateCenterError(f"constraints {seen[row]} and {i} share position {row}")
        seen[row] = i
    pairs = cKDTree(positions).query_pairs(DUPLICATE_TOL)
    if pairs:
        i, j = min(pairs)
        raise DuplicateCenterError(f"constraints {i} and {j} are closer than {DUPLICATE_TOL}")


def _validate(positions: np.ndarray) -> None:
    k, d = positions.shape
    _check_dim(d)
    check_duplicates(positions)
    if k < d + 1:
        raise InsufficientConstraintsError(f"{k} constraints in {d}D, need at least {d + 1}")
    if k > MAX_CONSTRAINTS:
        raise TooManyConstraintsError(f"{k} constraints exceed the dense solver cap of {MAX_CONSTRAINTS}")


def _assemble(positions: np.ndarray, values: np.ndarray, kind: KernelKind) -> LinearSystem:
    k, d = positions.shape
    n = k + d + 1
    phi = kernel_values(cdist(positions, positions), kind)
    phi = np.triu(phi) + np.triu(phi, 1).T
    matrix = np.zeros((n, n))
    matrix[:k, :k] = phi
    matrix[:k, k] = 1.0
    matrix[:k, k + 1:] = positions
    matrix[k:, :k] = matrix[:k, k:].T
    rhs = np.zeros(n)
    rhs[:k] = values
    return LinearSystem(matrix=matrix, rhs=rhs, dim=d)


def assemble_system(constraints: Any, kind: Optional[Union[KernelKind, str]] = None) -> LinearSystem:
    positions, values = gather(constraints)
    _validate(positions)
    kind = KernelKind.parse(kind) if kind is not None else default_kernel(positions.shape[1])
    return _assemble(positions, values, kind)


def _banded(d: np.ndarray) -> np.ndarray:
    n = d.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = np.diagonal(d, 1)
    ab[1] = np.diagonal(d)
    ab[2, :-1] = np.diagonal(d, -1)
    return ab


def factor_solve(matrix: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, float]:
    """Solve a symmetric (possibly indefinite) system via LDL^T.

    Returns (solution, smallest pivot-block magnitude relative to max |A_ij|).
    Raises SingularSystemError when a pivot block falls below PIVOT_RTOL * max |A_ij|.
    """
    n = matrix.shape[0]
    lu, d, perm = linalg.ldl(matrix, lower=True)
    amax = float(np.abs(matrix).max())
    threshold = PIVOT_RTOL * amax
    min_mag = np.inf
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            mag = float(np.abs(np.linalg.eigvalsh(d[i:i + 2, i:i + 2])).min())
            step = 2
        else:
            mag = float(abs(d[i, i]))
            step = 1
        if mag < threshold:
            raise SingularSystemError(
                f"pivot {i} (matrix row {perm[i]}) has magnitude {mag:.3e} below threshold {threshold:.3e}", i)
        min_mag = min(min_mag, mag)
        i += step

    tri = lu[perm]
    ab = _banded(d)

    def solve(b: np.ndarray) -> np.ndarray:
        y = linalg.solve_triangular(tri, b[perm], lower=True, unit_diagonal=True)
        z = linalg.solve_banded((1, 1), ab, y)
        w = linalg.solve_triangular(tri.T, z, lower=False, unit_diagonal=True)
        x = np.empty_like(w)
        x[perm] = w
        return x

    x = solve(rhs)
    x += solve(rhs - matrix @ x)
    return x, min_mag / amax


def _unit_box(positions: np.ndarray) -> Tuple[np.ndarray, float]:
    lo, hi = positions.min(axis=0), positions.max(axis=0)
    extent = float((hi - lo).max())
    return (lo + hi) / 2.0, (1.0 / extent if extent > 0 else 1.0)


def solve_model(constraints: Any, kind: Optional[Union[KernelKind, str]] = None, normalize: bool = True) -> RbfModel:
    """Solve the interpolation system and return the model in the caller's coordinates.

    With normalize=True the positions are mapped to a unit box around the origin
    before assembly; weights and polynomial are transformed back exactly.
    """
    positions, values = gather(constraints)
    _validate(positions)
    k, d = positions.shape
    kind = KernelKind.parse(kind) if kind is not None else default_kernel(d)

    shift, scale = _unit_box(positions) if normalize else (np.zeros(d), 1.0)
    local = (positions - shift) * scale
    basis = np.hstack([np.ones((k, 1)), local])
    if np.linalg.matrix_rank(basis) < d + 1:
        raise DegenerateConstraintsError(f"the {k} constraint positions lie in an affine subspace of dimension < {d}")

    system = _assemble(local, values, kind)
    x, min_pivot = factor_solve(system.matrix, system.rhs)
    w_local, p_local = x[:k], x[k:]

    weights = w_local * scale ** _SCALE_POWER[kind]
    poly = np.empty(d + 1)
    poly[1:] = p_local[1:] * scale
    poly[0] = p_local[0] - scale * float(p_local[1:] @ shift)
    if kind is KernelKind.THIN_PLATE and scale != 1.0:
        # s^2 log(s) sum_j w_j |x - c_j|^2 collapses to a constant under the side conditions
        centered = positions - shift
        poly[0] += scale * scale * np.log(scale) * float(w_local @ np.einsum("ij,ij->i", centered, centered))

    model = RbfModel(centers=positions, weights=weights, poly=poly, kernel=kind, dim=d, min_pivot=min_pivot)
    if logger.isEnabledFor(logging.DEBUG):
        resid = np.abs(evaluate(model, positions) - values).max()
        logger.debug("solved %d constraints in %dD kernel=%s residual=%.3e min_pivot=%.3e",
                     k, d, kind.value, resid, min_pivot)
    else:
        logger.info("solved %d constraints in %dD kernel=%s min_pivot=%.3e", k, d, kind.value, min_pivot)
    return model


def lift_model(model: RbfModel, values: Sequence[float]) -> RbfModel:
    """Embed a model in dim + len(values) dimensions.

    The centers get the constant trailing coordinates `values`; the new polynomial
    slopes are zero, so the lifted field is symmetric about that hyperplane.
    """
    values = np.asarray(values, dtype=float).ravel()
    dim = model.dim + len(values)
    _check_dim(dim)
    centers = np.hstack([model.centers, np.tile(values, (model.k, 1))])
    poly = np.concatenate([model.poly, np.zeros(len(values))])
    return RbfModel(centers=centers, weights=model.weights, poly=poly, kernel=model.kernel, dim=dim,
                    min_pivot=model.min_pivot)


def solve_model_flat(constraints: Any, kind: Optional[Union[KernelKind, str]] = None, normalize: bool = True) -> RbfModel:
    """solve_model for constraints whose trailing coordinates may all be equal.

    Such problems (one planar contour in 3D, an influence problem without a third
    shape) leave the matching polynomial slopes undetermined. The problem is
    solved on the leading axes with the kernel of the full dimension and lifted.
    """
    positions, values = gather(constraints)
    d = positions.shape[1]
    kind = KernelKind.parse(kind) if kind is not None else default_kernel(d)
    n_flat = 0
    while n_flat < d - MIN_DIM and np.all(positions[:, d - 1 - n_flat] == positions[0, d - 1 - n_flat]):
        n_flat += 1
    if n_flat == 0:
        return solve_model((positions, values), kind, normalize)
    logger.info("constraints share their last %d coordinate(s); solving in %dD and lifting", n_flat, d - n_flat)
    base = solve_model((positions[:, :d - n_flat], values), kind, normalize)
    return lift_model(base, positions[0, d - n_flat:])


def as_points(x: Any, dim: int) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionMismatchError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return arr, single


def evaluate(model: RbfModel, x: Any) -> Union[float, np.ndarray]:
    """f(x) for one point (returns float) or an (n, dim) array (returns (n,) array)."""
    pts, single = as_points(x, model.dim)
    out = np.empty(len(pts))
    for start in range(0, len(pts), EVAL_CHUNK):
        chunk = pts[start:start + EVAL_CHUNK]
        phi = kernel_values(cdist(chunk, model.centers), model.kernel)
        out[start:start + EVAL_CHUNK] = phi @ model.weights + model.poly[0] + chunk @ model.poly[1:]
    return float(out[0]) if single else out


def evaluate_gradient(model: RbfModel, x: Any) -> np.ndarray:
    """Analytic gradient; (dim,) for one point, (n, dim) for an array."""
    pts, single = as_points(x, model.dim)
    out = np.empty_like(pts)
    for start in range(0, len(pts), EVAL_CHUNK):
        chunk = pts[start:start + EVAL_CHUNK]
        pw = _gradient_factor(cdist(chunk, model.centers), model.kernel) * model.weights
        out[start:start + EVAL_CHUNK] = chunk * pw.sum(axis=1)[:, None] - pw @ model.centers + model.poly[1:]
    return out[0] if single else out


def thin_plate_energy(model: RbfModel, bounds: Tuple[Sequence[float], Sequence[float]], grid_res: int = 64,
                      step: Optional[float] = None) -> float:
    """Midpoint-rule quadrature of f_xx^2 + 2 f_xy^2 + f_yy^2 over an axis-aligned box (2D only).

    Second derivatives are central finite differences of `evaluate` with spacing
    `step` (default 1e-3 of the larger box side).
    """
    if model.dim != 2:
        raise UnsupportedDimensionError(f"energy quadrature is defined for 2D models, got {model.dim}D")
    if grid_res < 8:
        raise InvalidParameterError(f"grid_res must be >= 8, got {grid_res}")
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    cell = (hi - lo) / grid_res
    xs = lo[0] + (np.arange(grid_res) + 0.5) * cell[0]
    ys = lo[1] + (np.arange(grid_res) + 0.5) * cell[1]
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    h = step if step is not None else 1e-3 * float((hi - lo).max())

    def f(dx: float, dy: float) -> np.ndarray:
        return evaluate(model, pts + np.array([dx, dy]))

    f0 = f(0.0, 0.0)
    fxx = (f(h, 0.0) - 2.0 * f0 + f(-h, 0.0)) / (h * h)
    fyy = (f(0.0, h) - 2.0 * f0 + f(0.0, -h)) / (h * h)
    fxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h)
    return float(np.sum(fxx ** 2 + 2.0 * fxy ** 2 + fyy ** 2) * cell[0] * cell[1])
