"""Readers and writers for BOP-style files.

Files carry millimeters; everything returned by this module is in meters.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import GroundTruthInstance, Prediction
from .exceptions import MalformedInput
from .geometry import PinholeCamera, Pose, nearest_rotation, transform_points
from .models import DEFAULT_N_POINTS, SampledModel

MM = 1e-3

# -- poses ---------------------------------------------------------------------------


def pose_from_bop(R, t, where=None):
    """Pose from a row-major 9-vector rotation and a translation in millimeters."""
    try:
        R = np.asarray(R, dtype=float).reshape(3, 3)
        t = np.asarray(t, dtype=float).reshape(3) * MM
    except (ValueError, TypeError) as e:
        raise MalformedInput(f"bad rotation/translation: {e}", where) from None
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
        raise MalformedInput("non-finite pose entries", where)
    if np.abs(R @ R.T - np.eye(3)).max() > 1e-3 or np.linalg.det(R) <= 0:
        raise MalformedInput("rotation is not a proper orthonormal matrix", where)
    return Pose(nearest_rotation(R), t)


def pose_to_bop(pose):
    return {"cam_R_m2c": pose.R.ravel().tolist(), "cam_t_m2c": (pose.t / MM).tolist()}


# -- ground truth ----------------------------------------------------------------------


def _load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise MalformedInput(f"invalid JSON ({e.msg})", f"{path}:{e.lineno}") from None


def load_scene_gt(path, scene_id=None):
    """Read one ``scene_gt.json`` (image id -> list of records).

    Visibility comes from a record's ``visib_fract`` or, failing that, from a
    sibling ``scene_gt_info.json``. An optional per-record ``tag`` (e.g. a lighting
    condition) is kept.
    """
    path = Path(path)
    if scene_id is None:
        scene_id = int(path.parent.name) if path.parent.name.isdigit() else 0
    data = _load_json(path)
    if not isinstance(data, dict):
        raise MalformedInput("expected an object mapping image ids to records", str(path))
    info_path = path.with_name("scene_gt_info.json")
    info = _load_json(info_path) if info_path.exists() else {}
    out = []
    for im_key in sorted(data, key=lambda k: int(k)):
        records = data[im_key]
        for k, rec in enumerate(records):
            where = f"{path}: image {im_key}, record {k}"
            try:
                obj = int(rec["obj_id"])
                pose = pose_from_bop(rec["cam_R_m2c"], rec["cam_t_m2c"], where)
            except KeyError as e:
                raise MalformedInput(f"missing field {e}", where) from None
            vis = rec.get("visib_fract")
            if vis is None:
                try:
                    vis = info[im_key][k].get("visib_fract")
                except (KeyError, IndexError, AttributeError):
                    vis = None
            out.append(GroundTruthInstance(int(scene_id), int(im_key), obj, pose,
                                           None if vis is None else float(vis), rec.get("tag")))
    return out


def load_ground_truth(path):
    """Ground truth from a ``scene_gt.json`` file or a directory of BOP scene folders."""
    path = Path(path)
    if path.is_file():
        return load_scene_gt(path)
    if not path.is_dir():
        raise MalformedInput("no such file or directory", str(path))
    files = sorted(path.glob("*/scene_gt.json"))
    if (path / "scene_gt.json").exists():
        files.insert(0, path / "scene_gt.json")
    if not files:
        raise MalformedInput("no scene_gt.json found", str(path))
    out = []
    for f in files:
        out.extend(load_scene_gt(f))
    return out


def save_scene_gt(path, gts):
    data = {}
    for g in gts:
        rec = {"obj_id": g.object_id, **pose_to_bop(g.pose)}
        if g.visibility is not None:
            rec["visib_fract"] = g.visibility
        if g.tag is not None:
            rec["tag"] = g.tag
        data.setdefault(str(g.image_id), []).append(rec)
    atomic_write_text(path, json.dumps(data, indent=1))


# -- predictions -------------------------------------------------------------------------

PREDICTION_HEADER = ["scene_id", "im_id", "obj_id", "score", "R", "t", "time"]


def load_predictions(path):
    """BOP result CSV: ``scene_id,im_id,obj_id,score,R,t,time`` with R, t space-separated."""
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = None
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = [h.strip() for h in row]
                missing = [h for h in PREDICTION_HEADER[:6] if h not in header]
                if missing:
                    raise MalformedInput(f"header lacks columns {missing}", f"{path}:{lineno}")
                continue
            where = f"{path}:{lineno}"
            rec = dict(zip(header, row))
            try:
                R = [float(x) for x in rec["R"].split()]
                t = [float(x) for x in rec["t"].split()]
                if len(R) != 9 or len(t) != 3:
                    raise ValueError("R needs 9 and t needs 3 values")
                tm = rec.get("time", "").strip()
                out.append(Prediction(
                    scene_id=int(rec["scene_id"]),
                    image_id=int(rec["im_id"]),
                    object_id=int(rec["obj_id"]),
                    pose=pose_from_bop(R, t, where),
                    score=float(rec["score"]),
                    time=float(tm) if tm else None,
                ))
            except (ValueError, KeyError, TypeError) as e:
                raise MalformedInput(str(e), where) from None
    return out


def format_predictions(preds):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PREDICTION_HEADER)
    for p in preds:
        bop = pose_to_bop(p.pose)
        w.writerow([p.scene_id, p.image_id, p.object_id, repr(float(p.score)),
                    " ".join(repr(x) for x in bop["cam_R_m2c"]),
                    " ".join(repr(x) for x in bop["cam_t_m2c"]),
                    -1 if p.time is None else p.time])
    return buf.getvalue()


def save_predictions(path, preds):
    atomic_write_text(path, format_predictions(preds))


# -- meshes and models ---------------------------------------------------------------------

_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _read_obj(path):
    verts = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if line.startswith("v "):
                parts = line.split()
                try:
                    verts.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise MalformedInput("bad vertex line", f"{path}:{lineno}") from None
    return np.array(verts, dtype=float).reshape(-1, 3)


def _read_ply(path):
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise MalformedInput("not a PLY file", str(path))
        fmt = None
        elements = []  # (name, count, [(prop, type) or ("list", count_t, item_t, name)])
        while True:
            line = f.readline()
            if not line:
                raise MalformedInput("unterminated header", str(path))
            tok = line.decode("ascii", "replace").split()
            if not tok or tok[0] in ("comment", "obj_info"):
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                elements.append((tok[1], int(tok[2]), []))
            elif tok[0] == "property":
                if tok[1] == "list":
                    elements[-1][2].append(("list", tok[2], tok[3], tok[4]))
                else:
                    elements[-1][2].append((tok[2], tok[1]))
            elif tok[0] == "end_header":
                break
        if not elements or elements[0][0] != "vertex":
            raise MalformedInput("first element must be 'vertex'", str(path))
        _, count, props = elements[0]
        names = [p[0] for p in props]
        if not all(a in names for a in "xyz"):
            raise MalformedInput("vertex element lacks x/y/z", str(path))
        if any(p[0] == "list" for p in props):
            raise MalformedInput("list properties on vertices are not supported", str(path))
        if fmt == "ascii":
            rows = []
            for _ in range(count):
                vals = f.readline().split()
                rows.append([float(vals[names.index(a)]) for a in "xyz"])
            return np.array(rows, dtype=float).reshape(-1, 3)
        if fmt != "binary_little_endian":
            raise MalformedInput(f"unsupported PLY format {fmt!r}", str(path))
        try:
            st = struct.Struct("<" + "".join(_PLY_TYPES[p[1]] for p in props))
        except KeyError as e:
            raise MalformedInput(f"unknown PLY type {e}", str(path)) from None
        raw = f.read(st.size * count)
        if len(raw) < st.size * count:
            raise MalformedInput("truncated vertex data", str(path))
        ix = [names.index(a) for a in "xyz"]
        return np.array([[rec[i] for i in ix] for rec in st.iter_unpack(raw)], dtype=float).reshape(-1, 3)


def load_mesh_vertices(path):
    """Vertex positions in meters from an ASCII OBJ or an ASCII/binary-LE PLY file in mm."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        verts = _read_obj(path)
    elif suffix == ".ply":
        verts = _read_ply(path)
    else:
        raise MalformedInput("mesh must be .obj or .ply", str(path))
    if len(verts) == 0:
        raise MalformedInput("mesh has no vertices", str(path))
    return verts * MM


def write_ply(path, vertices_m, binary=True):
    v = np.asarray(vertices_m, dtype=float) / MM
    header = (f"ply\nformat {'binary_little_endian' if binary else 'ascii'} 1.0\n"
              f"element vertex {len(v)}\nproperty double x\nproperty double y\nproperty double z\nend_header\n")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(v.astype("<f8").tobytes())
        else:
            f.write("".join(f"{a!r} {b!r} {c!r}\n" for a, b, c in v.tolist()).encode("ascii"))


def load_models_config(path, k=DEFAULT_N_POINTS, increment_deg=1.0):
    """Models config JSON: ``{"<obj_id>": {"mesh": path, "symmetry": class, "reorient": [9 reals]}}``.

    Mesh paths are relative to the config file. ``reorient`` (row-major rotation)
    maps mesh coordinates into the canonical frame (z up, x front).
    """
    path = Path(path)
    data = _load_json(path)
    if not isinstance(data, dict):
        raise MalformedInput("expected an object keyed by object id", str(path))
    models = {}
    for key in sorted(data, key=lambda s: int(s)):
        entry = data[key]
        where = f"{path}: object {key}"
        try:
            mesh = path.parent / entry["mesh"]
        except (KeyError, TypeError):
            raise MalformedInput("entry needs a 'mesh' path", where) from None
        if not mesh.exists():
            raise MalformedInput(f"mesh file {mesh} not found", where)
        verts = load_mesh_vertices(mesh)
        if entry.get("reorient") is not None:
            R = np.asarray(entry["reorient"], dtype=float).reshape(3, 3)
            verts = transform_points(Pose(nearest_rotation(R), np.zeros(3)), verts)
        try:
            models[int(key)] = SampledModel.from_vertices(
                verts, entry.get("symmetry", "none"), object_id=int(key), k=k, increment_deg=increment_deg)
        except ValueError as e:
            raise MalformedInput(str(e), where) from None
    return models


# -- cameras, depth, views -----------------------------------------------------------------


def load_camera(path):
    """Intrinsics JSON with ``fx, fy, cx, cy, width, height`` or BOP-style ``cam_K`` + size."""
    data = _load_json(path)
    try:
        if "cam_K" in data:
            return PinholeCamera.from_K(data["cam_K"], data["width"], data["height"])
        return PinholeCamera(float(data["fx"]), float(data["fy"]), float(data["cx"]), float(data["cy"]),
                             int(data["width"]), int(data["height"]))
    except (KeyError, ValueError) as e:
        raise MalformedInput(f"bad camera description: {e}", str(path)) from None


def load_depth_raw(path, width, height, depth_scale_mm=1.0):
    """Row-major little-endian uint16 grid in millimeters (0 = invalid), returned in meters."""
    raw = Path(path).read_bytes()
    if len(raw) != 2 * width * height:
        raise MalformedInput(f"expected {2 * width * height} bytes, got {len(raw)}", str(path))
    return np.frombuffer(raw, dtype="<u2").reshape(height, width).astype(float) * depth_scale_mm * MM


def save_depth_raw(path, depth_m):
    mm = np.rint(np.asarray(depth_m, dtype=float) / MM)
    Path(path).write_bytes(np.clip(mm, 0, 65535).astype("<u2").tobytes())


def load_view(path):
    """One view's annotations: a JSON list of ``{obj_id, cam_R_m2c, cam_t_m2c}`` records."""
    data = _load_json(path)
    if isinstance(data, dict) and len(data) == 1:
        data = next(iter(data.values()))
    if not isinstance(data, list):
        raise MalformedInput("expected a list of pose records", str(path))
    out = []
    for k, rec in enumerate(data):
        where = f"{path}: record {k}"
        try:
            out.append((int(rec["obj_id"]), pose_from_bop(rec["cam_R_m2c"], rec["cam_t_m2c"], where)))
        except KeyError as e:
            raise MalformedInput(f"missing field {e}", where) from None
    return out


def save_view(path, view):
    atomic_write_text(path, json.dumps([{"obj_id": o, **pose_to_bop(p)} for o, p in view], indent=1))


def load_depth_pairs(path):
    """CSV with columns ``reference_m, measured_m``."""
    ref, meas = [], []
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    if not rows:
        return np.empty(0), np.empty(0)
    header = [h.strip() for h in rows[0]]
    try:
        ir, im = header.index("reference_m"), header.index("measured_m")
    except ValueError:
        raise MalformedInput("header needs reference_m and measured_m", f"{path}:1") from None
    for lineno, r in enumerate(rows[1:], start=2):
        try:
            ref.append(float(r[ir]))
            meas.append(float(r[im]))
        except (ValueError, IndexError):
            raise MalformedInput("bad depth pair", f"{path}:{lineno}") from None
    return np.array(ref), np.array(meas)


def load_matrix_csv(path):
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    try:
        return np.array([[float(x) for x in r] for r in rows], dtype=float)
    except ValueError as e:
        raise MalformedInput(f"bad matrix entry: {e}", str(path)) from None


# -- output --------------------------------------------------------------------------------


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def metadata(config, seed=None):
    return {"tool": "poseval", "version": __version__, "seed": seed, "config_hash": config_hash(config)}


def csv_header_line(meta):
    return "# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n"


def format_csv(meta, header, rows):
    buf = _io.StringIO()
    buf.write(csv_header_line(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (f"{v:.6f}" if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def format_json(meta, payload):
    return json.dumps({"meta": meta, **payload}, indent=2, sort_keys=False) + "\n"


def atomic_write_text(path, text):
    """Write ``text`` to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

