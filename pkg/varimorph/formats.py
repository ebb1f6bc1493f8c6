"""formats

Readers and writers for every file the CLI touches.

- PGM (binary P5, maxval 255 only; SDF images with a ".scale" sidecar)
- OBJ (v / vn / f; polygon faces; per-vertex normals derived when vn is missing)
- constraint text:      "dim <d>" then one "x1 .. xd value" per line
- model text:           "dim <d> kernel <k> centers <n>", n rows "c1 .. cd weight", one "poly p0 .. pd" row
- polyline text:        "# closed" / "# open" before each loop, "x y" per line, blank line between loops
- correspondence text:  "dim <d> count <k>", then k rows "a1 .. ad b1 .. bd"
- slice manifest:       per line "<constraint file> z <pos>" or "<constraint file> <12 reals>" (3x4 [R|t])

Geometry is written with `precision` significant digits (VARIMORPH_PRECISION,
default 9). Relative paths in a slice manifest resolve against the manifest's
directory.
"""
from __future__ import annotations

import logging
import os
import re
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import output_precision
from .constraint_gen import ConstraintSet, GrayImage, PointNormalCloud, SdfGrid
from .errors import EmptyCloudError, InputError, ObjParseError, UnsupportedFormatError
from .extract import Polyline2D, TriMesh
from .kernel_core import RbfModel
from .slice_recon import OrientedSlice, SliceStack
from .warp import CorrespondenceSet

logger = logging.getLogger(__name__)


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e


def _read_lines(path: str) -> List[str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}") from e


def _write_text(path: str, text: str) -> None:
    try:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise InputError(f"cannot write {path}: {e.strerror or e}") from e


def _fmt(values, precision: int) -> str:
    return " ".join(f"{float(v):.{precision}g}" for v in values)


def _floats(tokens: Sequence[str], path: str, lineno: int) -> List[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError as e:
        raise InputError(f"{path}:{lineno}: expected numbers, got {' '.join(tokens)!r}") from e


# --- PGM ---

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def load_pgm(path: str) -> GrayImage:
    data = _read_bytes(path)
    pos = 0
    header = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise InputError(f"{path}: truncated PGM header")
        header.append(m.group(1))
        pos = m.end()
        if header[0] != b"P5":
            raise UnsupportedFormatError(f"{path}: only binary PGM (P5) is supported, found {header[0][:8]!r}")
    try:
        width, height, maxval = (int(v) for v in header[1:])
    except ValueError as e:
        raise InputError(f"{path}: malformed PGM header {b' '.join(header)!r}") from e
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: only maxval 255 is supported, found P5 {width} {height} {maxval}")
    pos += 1  # single whitespace before the raster
    raster = data[pos:pos + width * height]
    if len(raster) < width * height:
        raise InputError(f"{path}: truncated PGM raster ({len(raster)} of {width * height} bytes)")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(pixels.astype(float))


def write_pgm(img: GrayImage, path: str) -> None:
    px = np.clip(np.rint(img.pixels), 0, 255).astype(np.uint8)
    try:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "wb") as f:
            f.write(f"P5\n{img.width} {img.height}\n255\n".encode("ascii"))
            f.write(px.tobytes())
    except OSError as e:
        raise InputError(f"cannot write {path}: {e.strerror or e}") from e


def write_mask_pgm(mask: np.ndarray, path: str) -> None:
    """Inside mask indexed [x, y] as a 0/255 image (row = y)."""
    write_pgm(GrayImage(np.where(np.asarray(mask).T, 255.0, 0.0)), path)


def write_sdf_pgm(sdf: SdfGrid, path: str) -> float:
    """Signed distances rescaled to 0..255 around 127.5; `<path>.scale` records distance = (pixel - 127.5) * scale."""
    vmax = float(np.abs(sdf.values).max()) or 1.0
    scale = vmax / 127.5
    write_pgm(GrayImage(np.clip(127.5 + sdf.values / scale, 0.0, 255.0)), path)
    _write_text(path + ".scale", f"scale {scale:.17g} offset 127.5\n")
    return scale


# --- OBJ ---

def _obj_index(token: str, count: int, path: str, lineno: int) -> int:
    try:
        i = int(token)
    except ValueError as e:
        raise ObjParseError(f"{path}: bad index {token!r}", lineno) from e
    idx = i - 1 if i > 0 else count + i
    if i == 0 or not 0 <= idx < count:
        raise ObjParseError(f"{path}: index {i} out of range (have {count})", lineno)
    return idx


def _parse_obj(path: str) -> Tuple[np.ndarray, List[List[int]], np.ndarray, dict]:
    verts, normals, faces, face_normals = [], [], [], {}
    for lineno, raw in enumerate(_read_lines(path), start=1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        tag, rest = parts[0], parts[1:]
        if tag == "v":
            if len(rest) < 3:
                raise ObjParseError(f"{path}: vertex needs 3 coordinates", lineno)
            verts.append(_floats(rest[:3], path, lineno))
        elif tag == "vn":
            if len(rest) < 3:
                raise ObjParseError(f"{path}: normal needs 3 components", lineno)
            normals.append(_floats(rest[:3], path, lineno))
        elif tag == "f":
            if len(rest) < 3:
                raise ObjParseError(f"{path}: face needs at least 3 vertices", lineno)
            face = []
            for token in rest:
                fields = token.split("/")
                vi = _obj_index(fields[0], len(verts), path, lineno)
                face.append(vi)
                if len(fields) == 3 and fields[2]:
                    face_normals[vi] = _obj_index(fields[2], len(normals), path, lineno)
            faces.append(face)
    return np.array(verts, dtype=float).reshape(-1, 3), faces, np.array(normals, dtype=float).reshape(-1, 3), face_normals


def vertex_normals(verts: np.ndarray, faces: Sequence[Sequence[int]]) -> np.ndarray:
    """Area-weighted vertex normals (Newell face normals summed per vertex, then normalized)."""
    acc = np.zeros_like(verts)
    for face in faces:
        poly = verts[list(face)]
        nxt = np.roll(poly, -1, axis=0)
        n = 0.5 * np.array([
            np.sum((poly[:, 1] - nxt[:, 1]) * (poly[:, 2] + nxt[:, 2])),
            np.sum((poly[:, 2] - nxt[:, 2]) * (poly[:, 0] + nxt[:, 0])),
            np.sum((poly[:, 0] - nxt[:, 0]) * (poly[:, 1] + nxt[:, 1])),
        ])
        acc[list(face)] += n
    length = np.linalg.norm(acc, axis=1)
    bad = np.flatnonzero(length == 0)
    if len(bad):
        raise ObjParseError(f"vertex {bad[0] + 1} has no face to derive a normal from")
    return acc / length[:, None]


def load_obj(path: str) -> PointNormalCloud:
    verts, faces, normals, face_normals = _parse_obj(path)
    if len(verts) == 0:
        raise EmptyCloudError(f"{path}: no vertices")
    if len(normals) == len(verts) and not face_normals:
        out = normals
    elif face_normals:
        missing = sorted(set(range(len(verts))) - set(face_normals))
        if missing:
            raise ObjParseError(f"{path}: vertex {missing[0] + 1} has no vn reference")
        out = normals[[face_normals[i] for i in range(len(verts))]]
    elif len(normals):
        raise ObjParseError(f"{path}: {len(normals)} vn records cannot be paired with {len(verts)} vertices")
    else:
        out = vertex_normals(verts, faces)
    logger.info("loaded %d points from %s", len(verts), path)
    return PointNormalCloud(verts, out)


def load_obj_mesh(path: str) -> TriMesh:
    """Triangle mesh (polygons fanned) from an OBJ file."""
    verts, faces, _, _ = _parse_obj(path)
    tris = [(f[0], f[i], f[i + 1]) for f in faces for i in range(1, len(f) - 1)]
    return TriMesh(verts, np.array(tris, dtype=int).reshape(-1, 3))


def write_obj(mesh: TriMesh, path: str, precision: Optional[int] = None) -> None:
    p = precision or output_precision()
    lines = [f"v {_fmt(v, p)}" for v in mesh.vertices]
    if mesh.normals is not None:
        lines += [f"vn {_fmt(n, p)}" for n in mesh.normals]
        lines += [f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}" for a, b, c in mesh.triangles]
    else:
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    _write_text(path, "\n".join(lines) + "\n")


def write_cloud_obj(cloud: PointNormalCloud, path: str, precision: Optional[int] = None) -> None:
    p = precision or output_precision()
    lines = [f"v {_fmt(v, p)}" for v in cloud.points] + [f"vn {_fmt(n, p)}" for n in cloud.normals]
    _write_text(path, "\n".join(lines) + "\n")


# --- polylines ---

def write_polylines(lines: Polyline2D, path: str, precision: Optional[int] = None) -> None:
    p = precision or output_precision()
    blocks = []
    for loop, closed in zip(lines.loops, lines.closed):
        rows = [f"# {'closed' if closed else 'open'}"] + [_fmt(pt, p) for pt in loop]
        blocks.append("\n".join(rows))
    _write_text(path, "\n\n".join(blocks) + ("\n" if blocks else ""))


def load_polylines(path: str) -> Polyline2D:
    loops, closed = [], []
    current: List[List[float]] = []
    flag = True

    def flush():
        if current:
            loops.append(np.array(current))
            closed.append(flag)
            current.clear()

    for lineno, raw in enumerate(_read_lines(path), start=1):
        line = raw.strip()
        if not line:
            flush()
        elif line.startswith("#"):
            flush()
            flag = line[1:].strip() != "open"
        else:
            xy = _floats(line.split(), path, lineno)
            if len(xy) != 2:
                raise InputError(f"{path}:{lineno}: polyline points need 2 coordinates")
            current.append(xy)
    flush()
    return Polyline2D(loops, closed)


# --- constraints and models ---

def _header(line: str, keys: Sequence[str], path: str) -> dict:
    tokens = line.split()
    if len(tokens) != 2 * len(keys) or tokens[0::2] != list(keys):
        raise InputError(f"{path}: expected header '{' '.join(k + ' <n>' for k in keys)}', got {line!r}")
    return dict(zip(keys, tokens[1::2]))


def _data_lines(path: str) -> List[Tuple[int, str]]:
    return [(i, l.strip()) for i, l in enumerate(_read_lines(path), start=1)
            if l.strip() and not l.strip().startswith("#")]


def load_constraints(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """(positions, values) from a constraint text file."""
    rows = _data_lines(path)
    if not rows:
        raise InputError(f"{path}: empty constraint file")
    try:
        dim = int(_header(rows[0][1], ["dim"], path)["dim"])
    except ValueError as e:
        raise InputError(f"{path}: bad dimension in {rows[0][1]!r}") from e
    data = []
    for lineno, line in rows[1:]:
        vals = _floats(line.split(), path, lineno)
        if len(vals) != dim + 1:
            raise InputError(f"{path}:{lineno}: expected {dim + 1} numbers, got {len(vals)}")
        data.append(vals)
    arr = np.array(data, dtype=float).reshape(-1, dim + 1)
    return arr[:, :dim], arr[:, dim]


def write_constraints(cset: ConstraintSet, path: str) -> None:
    rows = [f"dim {cset.dim}"] + [_fmt(list(p) + [v], 17) for p, v in zip(cset.positions, cset.values)]
    _write_text(path, "\n".join(rows) + "\n")


def write_model(model: RbfModel, path: str) -> None:
    rows = [f"dim {model.dim} kernel {model.kernel.value} centers {model.k}"]
    rows += [_fmt(list(c) + [w], 17) for c, w in zip(model.centers, model.weights)]
    rows.append("poly " + _fmt(model.poly, 17))
    _write_text(path, "\n".join(rows) + "\n")


def load_model(path: str) -> RbfModel:
    rows = _data_lines(path)
    if not rows:
        raise InputError(f"{path}: empty model file")
    head = _header(rows[0][1], ["dim", "kernel", "centers"], path)
    try:
        dim, n = int(head["dim"]), int(head["centers"])
    except ValueError as e:
        raise InputError(f"{path}: bad model header {rows[0][1]!r}") from e
    if len(rows) != n + 2 or not rows[-1][1].startswith("poly "):
        raise InputError(f"{path}: expected {n} center rows and a poly row")
    body = np.array([_floats(l.split(), path, i) for i, l in rows[1:-1]], dtype=float).reshape(-1, dim + 1)
    poly = _floats(rows[-1][1].split()[1:], path, rows[-1][0])
    return RbfModel(centers=body[:, :dim], weights=body[:, dim], poly=poly, kernel=head["kernel"], dim=dim)


# --- correspondences ---

def load_correspondences(path: str) -> CorrespondenceSet:
    rows = _data_lines(path)
    if not rows:
        raise InputError(f"{path}: empty correspondence file")
    head = _header(rows[0][1], ["dim", "count"], path)
    try:
        dim, count = int(head["dim"]), int(head["count"])
    except ValueError as e:
        raise InputError(f"{path}: bad correspondence header {rows[0][1]!r}") from e
    if len(rows) - 1 != count:
        raise InputError(f"{path}: header announces {count} correspondences, found {len(rows) - 1}")
    data = []
    for lineno, line in rows[1:]:
        vals = _floats(line.split(), path, lineno)
        if len(vals) != 2 * dim:
            raise InputError(f"{path}:{lineno}: expected {2 * dim} numbers, got {len(vals)}")
        data.append(vals)
    arr = np.array(data, dtype=float).reshape(-1, 2 * dim)
    return CorrespondenceSet(arr[:, :dim], arr[:, dim:])


def write_correspondences(corr: CorrespondenceSet, path: str) -> None:
    rows = [f"dim {corr.dim} count {len(corr)}"]
    rows += [_fmt(list(a) + list(b), 17) for a, b in zip(corr.a_points, corr.b_points)]
    _write_text(path, "\n".join(rows) + "\n")


# --- slice manifests ---

def load_slice_set(path: str) -> ConstraintSet:
    positions, values = load_constraints(path)
    if positions.shape[1] != 2:
        raise InputError(f"{path}: slice constraints must be 2D, got {positions.shape[1]}D")
    return ConstraintSet.from_constraints((positions, values))


def load_slice_manifest(path: str) -> SliceStack:
    """Parallel stack when every line uses 'z <pos>' (sorted by z), oriented slices otherwise."""
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for lineno, line in _data_lines(path):
        tokens = line.split()
        fname = tokens[0] if os.path.isabs(tokens[0]) else os.path.join(base, tokens[0])
        if len(tokens) == 3 and tokens[1] == "z":
            entries.append((fname, _floats(tokens[2:], path, lineno)[0], None))
        elif len(tokens) == 13:
            entries.append((fname, None, _floats(tokens[1:], path, lineno)))
        else:
            raise InputError(f"{path}:{lineno}: expected '<file> z <pos>' or '<file>' plus 12 transform entries")
    if not entries:
        raise InputError(f"{path}: no slices listed")
    sets = [load_slice_set(fname) for fname, _, _ in entries]
    if all(z is not None for _, z, _ in entries):
        order = sorted(range(len(entries)), key=lambda i: entries[i][1])
        z = np.array([entries[i][1] for i in order])
        return SliceStack.parallel([sets[i] for i in order], np.diff(z), z0=float(z[0]))
    slices = []
    for s, (_, z, m) in zip(sets, entries):
        slices.append(OrientedSlice.parallel(s, z) if m is None else OrientedSlice.from_matrix(s, m))
    return SliceStack(tuple(slices))
