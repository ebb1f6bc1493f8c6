"""pipeline

run_pipeline(config) wires constraint generation, the morph / reconstruction /
warp solvers, extraction and the writers together, and writes manifest.json
next to the outputs.

Every stage runs inside `stage(name)`: it is timed, and any failure is
re-raised as StageError("<name>: <cause>") carrying the cause's exit code.
Geometry files depend only on inputs and config; wall-clock values appear in
the manifest only.
"""
from __future__ import annotations

import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import constraint_gen as cg
from . import extract, formats, morph, slice_recon, warp
from .config import RunConfig
from .errors import DimensionMismatchError, StageError, UsageError
from .kernel_core import solve_model

logger = logging.getLogger(__name__)


def tool_version() -> str:
    try:
        return metadata.version("varimorph")
    except metadata.PackageNotFoundError:
        return "0.1.0"


@dataclass
class RunManifest:
    config: Dict[str, Any]
    counts: Dict[str, int] = field(default_factory=dict)
    min_pivot: Optional[float] = None
    timings: Dict[str, float] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    version: str = field(default_factory=tool_version)
    generated_at: str = field(default_factory=lambda: os.getenv("CURRENT_DATETIME")
                              or datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"))

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, indent=2, sort_keys=True)

    def write(self, path: str) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json() + "\n")


@contextmanager
def stage(name: str, manifest: RunManifest) -> Iterator[None]:
    start = time.perf_counter()
    logger.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e
    finally:
        manifest.timings[name] = round(time.perf_counter() - start, 6)


# --- shape loading ---

@dataclass(frozen=True)
class Normalization:
    """Working coordinates = (world - shift) * scale."""

    shift: Tuple[float, ...]
    scale: float

    def forward(self, pts: np.ndarray) -> np.ndarray:
        return (pts - np.asarray(self.shift)) * self.scale

    def back(self, pts: np.ndarray) -> np.ndarray:
        return pts / self.scale + np.asarray(self.shift)


def _image_shape(path: str, cfg: RunConfig) -> Tuple[cg.ConstraintSet, cg.GrayImage]:
    img = formats.load_pgm(path)
    cset = cg.image_to_constraints(img, cfg.threshold, cfg.normal_offset)
    return cg.thin_constraints(cset, cfg.max_pairs), img


def _cloud_shape(path: str, cfg: RunConfig) -> cg.ConstraintSet:
    cloud = formats.load_obj(path)
    return cg.thin_constraints(cg.points_normals_to_constraints(cloud, cfg.normal_k), cfg.max_pairs)


def _is_image(path: str) -> bool:
    return path.lower().endswith(".pgm")


def _load_shapes(paths: Sequence[str], cfg: RunConfig, manifest: RunManifest):
    """Constraint sets in working coordinates, the normalization, and the 2D/3D sampling box."""
    kinds = {_is_image(p) for p in paths}
    if len(kinds) > 1:
        raise DimensionMismatchError("cannot mix images and meshes in one run")
    if kinds.pop():
        loaded = [_image_shape(p, cfg) for p in paths]
        sets = [s for s, _ in loaded]
        width = max(img.width for _, img in loaded)
        height = max(img.height for _, img in loaded)
        scale = 1.0 / max(width - 1, height - 1) if cfg.normalize else 1.0
        norm = Normalization((0.0, 0.0), scale)
        box = ((0.0, 0.0), ((width - 1) * scale, (height - 1) * scale))
    else:
        sets = [_cloud_shape(p, cfg) for p in paths]
        pts = np.vstack([s.positions for s in sets])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        extent = float((hi - lo).max()) or 1.0
        norm = Normalization(tuple((lo + hi) / 2.0), 1.0 / extent) if cfg.normalize \
            else Normalization((0.0, 0.0, 0.0), 1.0)
        wlo, whi = norm.forward(lo), norm.forward(hi)
        pad = 0.15 * float((whi - wlo).max())
        box = (tuple(wlo - pad), tuple(whi + pad))
    for name, s in zip("abc", sets):
        manifest.counts[f"{name}_constraints"] = len(s)
    working = [s.mapped(norm.forward) for s in sets]
    return working, norm, extract.GridSpec(box, cfg.grid_res)


# --- writers ---

def _write_frames(frames: Sequence[morph.Frame], norm: Normalization, out: str, manifest: RunManifest,
                  cfg: RunConfig) -> None:
    for i, frame in enumerate(frames):
        world = frame.mapped(norm.back)
        if isinstance(world, extract.Polyline2D):
            name = f"frame_{i:03d}.txt"
            formats.write_polylines(world, os.path.join(out, name), cfg.precision)
        else:
            name = f"frame_{i:03d}.obj"
            formats.write_obj(world, os.path.join(out, name), cfg.precision)
        manifest.outputs.append(name)


# --- commands ---

def _run_build(cfg: RunConfig, manifest: RunManifest) -> None:
    with stage("load", manifest):
        positions, values = formats.load_constraints(cfg.constraints)
        if cfg.dim_hint is not None and positions.shape[1] != cfg.dim_hint:
            raise DimensionMismatchError(f"constraints are {positions.shape[1]}D, --dim-hint says {cfg.dim_hint}D")
        manifest.counts["constraints"] = len(values)
    with stage("solve", manifest):
        model = solve_model((positions, values), cfg.kernel, cfg.normalize)
        manifest.min_pivot = model.min_pivot
    with stage("write", manifest):
        formats.write_model(model, os.path.join(cfg.out, "model.txt"))
        manifest.outputs.append("model.txt")


def _run_morph(cfg: RunConfig, manifest: RunManifest) -> None:
    with stage("constraints", manifest):
        (set_a, set_b), norm, grid = _load_shapes([cfg.a, cfg.b], cfg, manifest)
    with stage("solve", manifest):
        m = morph.build_morph(set_a, set_b, cfg.t_max, cfg.kernel)
        manifest.min_pivot = m.model.min_pivot
    with stage("extract", manifest):
        frames = morph.morph_sequence(m, cfg.frames, grid, cfg.workers)
    with stage("write", manifest):
        _write_frames(frames, norm, cfg.out, manifest, cfg)
        if cfg.raster and grid.dim == 2:
            slices = [morph.slice_at(m, t) for t in morph.frame_times(m.t_max, cfg.frames)]
            _write_masks(slices, grid, norm, cfg, manifest)


def _run_influence(cfg: RunConfig, manifest: RunManifest) -> None:
    with stage("constraints", manifest):
        (set_a, set_b, set_c), norm, grid = _load_shapes([cfg.a, cfg.b, cfg.c], cfg, manifest)
    with stage("solve", manifest):
        m = morph.build_influence(set_a, set_b, set_c, kernel=cfg.kernel)
        manifest.min_pivot = m.model.min_pivot
    with stage("extract", manifest):
        frames = morph.influence_sequence(m, cfg.path, cfg.frames, grid, cfg.workers)
    with stage("write", manifest):
        _write_frames(frames, norm, cfg.out, manifest, cfg)
        if cfg.raster and grid.dim == 2:
            path = morph.sample_path(cfg.path, cfg.frames)
            _write_masks([morph.influence_slice(m, s, t) for s, t in path], grid, norm, cfg, manifest)


def _run_warp(cfg: RunConfig, manifest: RunManifest) -> None:
    with stage("constraints", manifest):
        (set_a, set_b), norm, grid = _load_shapes([cfg.a, cfg.b], cfg, manifest)
        corr = formats.load_correspondences(cfg.corr)
        corr = warp.CorrespondenceSet(norm.forward(corr.a_points), norm.forward(corr.b_points))
        manifest.counts["correspondences"] = len(corr)
    with stage("solve", manifest):
        wm = warp.build_warped_morph(set_a, set_b, corr, cfg.t_max, cfg.kernel)
        manifest.min_pivot = wm.min_pivot
    with stage("extract", manifest):
        frames = warp.warped_sequence(wm, cfg.frames, grid, cfg.workers)
    with stage("write", manifest):
        _write_frames(frames, norm, cfg.out, manifest, cfg)


def _run_baseline(cfg: RunConfig, manifest: RunManifest) -> None:
    with stage("constraints", manifest):
        img_a, img_b = formats.load_pgm(cfg.a), formats.load_pgm(cfg.b)
        sdf_a = cg.signed_distance_field(img_a, cfg.threshold)
        sdf_b = cg.signed_distance_field(img_b, cfg.threshold)
    with stage("extract", manifest):
        alphas = [i / (cfg.frames - 1) for i in range(cfg.frames)]
        blends = [morph.sdf_morph_baseline(sdf_a, sdf_b, a) for a in alphas]
        frames = [morph.sdf_contour(s) for s in blends]
    with stage("write", manifest):
        _write_frames(frames, Normalization((0.0, 0.0), 1.0), cfg.out, manifest, cfg)
        if cfg.raster:
            for i, s in enumerate(blends):
                name = f"frame_{i:03d}.pgm"
                formats.write_mask_pgm(s.values.T > 0, os.path.join(cfg.out, name))
                sdf_name = f"sdf_{i:03d}.pgm"
                formats.write_sdf_pgm(s, os.path.join(cfg.out, sdf_name))
                manifest.outputs += [name, sdf_name, sdf_name + ".scale"]


def _reconstruct_paths(out: str) -> Tuple[str, str]:
    if out.lower().endswith(".obj"):
        return out, os.path.join(os.path.dirname(os.path.abspath(out)), "manifest.json")
    return os.path.join(out, "mesh.obj"), os.path.join(out, "manifest.json")


def _run_reconstruct(cfg: RunConfig, manifest: RunManifest) -> None:
    with stage("constraints", manifest):
        stack = formats.load_slice_manifest(cfg.stack)
        constraints = stack.constraints()
        manifest.counts["slices"] = len(stack.slices)
        manifest.counts["constraints"] = len(constraints)
    with stage("solve", manifest):
        result = slice_recon.reconstruct(constraints, cfg.kernel, cfg.grid_res, stack.max_spacing, cfg.workers)
        manifest.min_pivot = result.model.min_pivot
        manifest.counts["vertices"] = len(result.mesh.vertices)
        manifest.counts["triangles"] = len(result.mesh.triangles)
    with stage("write", manifest):
        mesh_path, _ = _reconstruct_paths(cfg.out)
        formats.write_obj(result.mesh, mesh_path, cfg.precision)
        manifest.outputs.append(os.path.basename(mesh_path))


def _write_masks(functions: Sequence[Any], grid: extract.GridSpec, norm: Normalization, cfg: RunConfig,
                 manifest: RunManifest) -> None:
    """Inside masks with one sample per input pixel."""
    hi = np.asarray(grid.bounds[1]) / norm.scale
    res = tuple(int(round(v)) + 1 for v in hi)
    for i, f in enumerate(functions):
        mask = extract.rasterize(f, grid.bounds, res, cfg.workers)
        name = f"frame_{i:03d}.pgm"
        formats.write_mask_pgm(mask, os.path.join(cfg.out, name))
        manifest.outputs.append(name)


COMMANDS = {
    "build": _run_build,
    "morph2d": _run_morph,
    "morph3d": _run_morph,
    "influence": _run_influence,
    "warp": _run_warp,
    "baseline-sdf": _run_baseline,
    "reconstruct": _run_reconstruct,
}


def run_pipeline(cfg: RunConfig) -> RunManifest:
    if cfg.command not in COMMANDS:
        raise UsageError(f"unknown command {cfg.command!r}")
    if cfg.command in ("morph2d", "warp") and not (_is_image(cfg.a) and _is_image(cfg.b)):
        raise UsageError(f"{cfg.command} expects PGM images")
    if cfg.command == "morph3d" and (_is_image(cfg.a) or _is_image(cfg.b)):
        raise UsageError("morph3d expects OBJ meshes")
    manifest = RunManifest(config=cfg.to_dict())
    COMMANDS[cfg.command](cfg, manifest)
    if cfg.command == "reconstruct":
        _, manifest_path = _reconstruct_paths(cfg.out)
    else:
        manifest_path = os.path.join(cfg.out, "manifest.json")
    manifest.write(manifest_path)
    logger.info("wrote %d outputs and %s", len(manifest.outputs), manifest_path)
    return manifest
