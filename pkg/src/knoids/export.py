"""Mesh, curve and report files.

Floats are written with repr(), so reading a file back reproduces the
vertex table bit for bit.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .hyperbolic import to_disk

MESH_FORMATS = ("obj", "ply")


def _f(x: float) -> str:
    return repr(float(x))


def write_obj(path, vertices: np.ndarray, faces: np.ndarray, comment: str | None = None) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        for x, y, t in vertices:
            fh.write(f"v {_f(x)} {_f(y)} {_f(t)}\n")
        for a, b, c in np.asarray(faces) + 1:
            fh.write(f"f {a} {b} {c}\n")
    return path


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    with Path(path).open() as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(s) for s in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(s.split("/")[0]) - 1 for s in parts[1:4]])
    return np.array(verts, float).reshape(-1, 3), np.array(faces, int).reshape(-1, 3)


def write_ply(path, vertices: np.ndarray, faces: np.ndarray, disk: bool = True,
              vertex_copy: np.ndarray | None = None, comment: str | None = None) -> Path:
    """ASCII PLY; optional Poincare-disk coordinates (dx, dy) and copy index per vertex."""
    path = Path(path)
    props = ["x", "y", "t"]
    cols = [vertices[:, 0], vertices[:, 1], vertices[:, 2]]
    if disk:
        d = to_disk(vertices[:, :2])
        props += ["dx", "dy"]
        cols += [d[:, 0], d[:, 1]]
    with path.open("w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"comment {line}\n")
        fh.write(f"element vertex {len(vertices)}\n")
        for p in props:
            fh.write(f"property double {p}\n")
        if vertex_copy is not None:
            fh.write("property int copy\n")
        fh.write(f"element face {len(faces)}\nproperty list uchar int vertex_indices\nend_header\n")
        for i in range(len(vertices)):
            row = " ".join(_f(c[i]) for c in cols)
            if vertex_copy is not None:
                row += f" {int(vertex_copy[i])}"
            fh.write(row + "\n")
        for a, b, c in faces:
            fh.write(f"3 {a} {b} {c}\n")
    return path


def read_ply(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Vertices (x, y, t), faces and any extra vertex properties by name."""
    with Path(path).open() as fh:
        if fh.readline().strip() != "ply":
            raise ValueError("not a PLY file")
        props, nv, nf = [], 0, 0
        element = None
        for line in fh:
            parts = line.split()
            if parts[0] == "element":
                element = parts[1]
                if element == "vertex":
                    nv = int(parts[2])
                else:
                    nf = int(parts[2])
            elif parts[0] == "property" and element == "vertex":
                props.append(parts[-1])
            elif parts[0] == "end_header":
                break
        rows = [fh.readline().split() for _ in range(nv)]
        faces = [[int(s) for s in fh.readline().split()[1:4]] for _ in range(nf)]
    data = {p: np.array([float(r[i]) for r in rows]) for i, p in enumerate(props)}
    verts = np.column_stack([data.pop("x"), data.pop("y"), data.pop("t")]) if nv else np.zeros((0, 3))
    return verts, np.array(faces, int).reshape(-1, 3), data


def write_curves_csv(path, boundary) -> Path:
    """Conjugate boundary curves as rows (curve, index, x, y, z, theta)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve", "index", "x", "y", "z", "theta"])
        for name in ("v2", "v3", "v1"):
            c = getattr(boundary, name)
            if c is None:
                continue
            for i in range(len(c.x)):
                w.writerow([name, i, _f(c.x[i]), _f(c.y[i]), _f(c.z), _f(c.theta[i])])
        for name in ("h1", "h2", "h3"):
            c = getattr(boundary, name)
            if c is None:
                continue
            for i, (p, z) in enumerate(zip(c.points, c.z)):
                w.writerow([name, i, _f(p[0]), _f(p[1]), _f(z), ""])
    return path


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return obj


def write_json(path, data: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")
    return path


def to_json(data: dict) -> str:
    return json.dumps(_clean(data), indent=2, sort_keys=True)
