"""File formats: PLY clouds, TUM trajectories, camera/transform files,
PNG images and masks, organized-scan archives, and the INI-style scene,
rig, and waypoint descriptions.

All text writers use 9-significant-digit floats so that write/read/write
is byte-stable and goldens diff cleanly.
"""

from __future__ import annotations

import io
import struct
import warnings
from pathlib import Path

import numpy as np
from PIL import Image

from .calibration import TargetSpec, ViewCorrespondences
from .geometry import CameraModel, OrganizedScan, PointCloud, RigidTransform
from .simulator import LidarSpec, Rectangle, Scene, SensorRig, SurfacePatch
from .trajectory import NonMonotoneTimestamps, Trajectory

FLOAT_FMT = "%.9g"


class ParseError(ValueError):
    """Malformed input file; carries path and (1-based) line when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc += f"line {line}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class UnsupportedProperty(UserWarning):
    """A PLY property we do not model; the file still loads."""


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def _fmt_row(values) -> str:
    return " ".join(_fmt(v) for v in values)


# ---------------------------------------------------------------------------
# PLY point clouds

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def write_ply(path, cloud: PointCloud, binary: bool = False) -> None:
    """Write points with any attached color/label/weight columns.

    Layout: float x y z, uchar red green blue, int label, int weight,
    in that order, with absent attributes omitted.
    """
    path = Path(path)
    n = len(cloud)
    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {n}",
              "property float x", "property float y", "property float z"]
    cols: list[tuple[np.ndarray, str]] = [
        (cloud.points[:, 0].astype("<f4"), "f"),
        (cloud.points[:, 1].astype("<f4"), "f"),
        (cloud.points[:, 2].astype("<f4"), "f")]
    if cloud.colors is not None:
        rgb = np.clip(np.rint(cloud.colors), 0, 255).astype("u1")
        header += ["property uchar red", "property uchar green",
                   "property uchar blue"]
        cols += [(rgb[:, 0], "d"), (rgb[:, 1], "d"), (rgb[:, 2], "d")]
    if cloud.labels is not None:
        header.append("property int label")
        cols.append((cloud.labels.astype("<i4"), "d"))
    if cloud.weights is not None:
        header.append("property int weight")
        cols.append((cloud.weights.astype("<i4"), "d"))
    header.append("end_header")

    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            rec = np.empty(n, dtype=[(f"c{i}", c.dtype) for i, (c, _) in
                                     enumerate(cols)])
            for i, (c, _) in enumerate(cols):
                rec[f"c{i}"] = c
            f.write(rec.tobytes())
        else:
            out = io.StringIO()
            for row in range(n):
                parts = [_fmt(c[row]) if k == "f" else str(int(c[row]))
                         for c, k in cols]
                out.write(" ".join(parts))
                out.write("\n")
            f.write(out.getvalue().encode("ascii"))


def read_ply(path) -> PointCloud:
    """Read a vertex-only PLY (ASCII or binary little-endian).

    Unknown scalar properties are skipped with an UnsupportedProperty
    warning naming them.

    Raises:
        ParseError: malformed header, unsupported element or list
            property, non-vertex elements, or truncated data.
    """
    path = Path(path)
    raw = path.read_bytes()
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise ParseError("not a ply file", path, 1)
    body_start = raw.index(b"\n", end) + 1
    header_lines = raw[:end].decode("ascii", "replace").splitlines()

    fmt = None
    n_vertex = None
    props: list[tuple[str, str]] = []      # (name, numpy dtype code)
    in_vertex = False
    for lineno, line in enumerate(header_lines[1:], start=2):
        tok = line.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"unsupported format {line!r}", path, lineno)
            fmt = tok[1]
        elif tok[0] == "element":
            if tok[1] != "vertex":
                raise ParseError(f"unsupported element {tok[1]!r}", path, lineno)
            if n_vertex is not None:
                raise ParseError("duplicate vertex element", path, lineno)
            n_vertex = int(tok[2])
            in_vertex = True
        elif tok[0] == "property":
            if not in_vertex:
                raise ParseError("property outside an element", path, lineno)
            if tok[1] == "list":
                raise ParseError("list properties unsupported", path, lineno)
            if tok[1] not in _PLY_TYPES:
                raise ParseError(f"unknown property type {tok[1]!r}", path, lineno)
            props.append((tok[2], _PLY_TYPES[tok[1]]))
    if fmt is None or n_vertex is None:
        raise ParseError("header missing format or vertex element", path)

    names = [p[0] for p in props]
    known = {"x", "y", "z", "red", "green", "blue", "label", "weight"}
    extra = [nm for nm in names if nm not in known]
    if extra:
        warnings.warn(f"ignoring properties: {', '.join(extra)}",
                      UnsupportedProperty, stacklevel=2)
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise ParseError(f"missing coordinate property {axis!r}", path)
    has_rgb = all(c in names for c in ("red", "green", "blue"))
    if any(c in names for c in ("red", "green", "blue")) and not has_rgb:
        raise ParseError("partial color properties", path)

    if fmt == "binary_little_endian":
        dtype = np.dtype([(nm, "<" + code) for nm, code in props])
        body = raw[body_start:body_start + dtype.itemsize * n_vertex]
        if len(body) < dtype.itemsize * n_vertex:
            raise ParseError(
                f"truncated data: {len(body)} bytes for {n_vertex} vertices",
                path)
        rec = np.frombuffer(body, dtype=dtype)
    else:
        text = raw[body_start:].decode("ascii", "replace")
        rows = [ln for ln in text.splitlines() if ln.strip()]
        if len(rows) < n_vertex:
            raise ParseError(
                f"truncated data: {len(rows)} rows for {n_vertex} vertices",
                path)
        first_body = len(header_lines) + 1
        rec = np.empty(n_vertex, dtype=[(nm, "<f8") for nm, _ in props])
        for i in range(n_vertex):
            parts = rows[i].split()
            if len(parts) != len(props):
                raise ParseError(
                    f"expected {len(props)} values, got {len(parts)}",
                    path, first_body + i)
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise ParseError(str(exc), path, first_body + i) from None
            rec[i] = tuple(vals)

    pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    colors = (np.stack([rec["red"], rec["green"], rec["blue"]], axis=1)
              .astype(np.float64) if has_rgb else None)
    labels = rec["label"].astype(np.int32) if "label" in names else None
    weights = rec["weight"].astype(np.int64) if "weight" in names else None
    return PointCloud(pts, colors, labels, weights)


# ---------------------------------------------------------------------------
# TUM trajectories


def write_tum(path, traj: Trajectory) -> None:
    with open(path, "w") as f:
        f.write("# timestamp tx ty tz qx qy qz qw\n")
        for ts, pose in zip(traj.timestamps, traj.poses):
            f.write(_fmt_row([ts, *pose.t, *pose.q]) + "\n")


def read_tum(path) -> Trajectory:
    """Parse `timestamp tx ty tz qx qy qz qw` rows.

    Quaternions are renormalized; deviation above 1e-6 draws a warning.

    Raises:
        ParseError: wrong field count or non-numeric field.
        NonMonotoneTimestamps: timestamps not strictly increasing.
    """
    path = Path(path)
    times = []
    poses = []
    worst = 0.0
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 8:
                raise ParseError(f"expected 8 fields, got {len(parts)}",
                                 path, lineno)
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
            q = np.array(vals[4:8])
            worst = max(worst, abs(np.linalg.norm(q) - 1.0))
            times.append(vals[0])
            poses.append(RigidTransform(q, np.array(vals[1:4])))
    if worst > 1e-6:
        warnings.warn(f"quaternion norm off by {worst:.2e}; renormalized",
                      stacklevel=2)
    if not times:
        raise ParseError("no poses", path)
    return Trajectory(np.array(times), poses)


# ---------------------------------------------------------------------------
# key-value camera and transform files

_CAMERA_FLOAT_KEYS = ("alpha_x", "alpha_y", "gamma", "u0", "v0",
                      "k1", "k2", "k3", "p1", "p2")
_CAMERA_INT_KEYS = ("width", "height")


def write_camera(path, camera: CameraModel) -> None:
    with open(path, "w") as f:
        f.write("# pinhole intrinsics and distortion\n")
        for key in _CAMERA_FLOAT_KEYS:
            f.write(f"{key} = {_fmt(getattr(camera, key))}\n")
        for key in _CAMERA_INT_KEYS:
            f.write(f"{key} = {getattr(camera, key)}\n")


def read_camera(path) -> CameraModel:
    """Parse `key = value` lines; unknown keys are rejected.

    Raises:
        ParseError: unknown key, bad syntax, or missing alpha_x/alpha_y/u0/v0.
    """
    path = Path(path)
    values: dict[str, float] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            if "=" not in s:
                raise ParseError(f"expected `key = value`, got {s!r}",
                                 path, lineno)
            key, _, val = s.partition("=")
            key = key.strip()
            if key not in _CAMERA_FLOAT_KEYS + _CAMERA_INT_KEYS:
                raise ParseError(f"unknown camera key {key!r}", path, lineno)
            try:
                values[key] = float(val.strip())
            except ValueError:
                raise ParseError(f"bad number for {key}: {val.strip()!r}",
                                 path, lineno) from None
    missing = [k for k in ("alpha_x", "alpha_y", "u0", "v0") if k not in values]
    if missing:
        raise ParseError(f"missing required keys: {', '.join(missing)}", path)
    kwargs = {k: values[k] for k in _CAMERA_FLOAT_KEYS if k in values}
    kwargs.setdefault("gamma", 0.0)
    for k in _CAMERA_INT_KEYS:
        if k in values:
            kwargs[k] = int(values[k])
    return CameraModel(**kwargs)


def write_transform(path, T: RigidTransform) -> None:
    with open(path, "w") as f:
        f.write("# tx ty tz qx qy qz qw\n")
        f.write(_fmt_row([*T.t, *T.q]) + "\n")


def read_transform(path) -> RigidTransform:
    """Parse seven numbers (tx ty tz qx qy qz qw), whitespace-separated."""
    path = Path(path)
    tokens: list[float] = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            try:
                tokens.extend(float(p) for p in s.split())
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
    if len(tokens) != 7:
        raise ParseError(f"expected 7 numbers, got {len(tokens)}", path)
    return RigidTransform(np.array(tokens[3:7]), np.array(tokens[0:3]))


# ---------------------------------------------------------------------------
# images and masks


def write_image(path, rgb: np.ndarray) -> None:
    arr = np.asarray(rgb)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def write_mask(path, mask: np.ndarray) -> None:
    arr = np.where(np.asarray(mask).astype(bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def read_mask(path) -> np.ndarray:
    """Grayscale threshold at 128: pixel >= 128 counts as set."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) >= 128


# ---------------------------------------------------------------------------
# organized scans


def write_scan(path, scan: OrganizedScan) -> None:
    np.savez_compressed(path, ranges=scan.ranges,
                        elevations=scan.beam_elevations,
                        azimuths=scan.azimuths,
                        timestamp=np.float64(scan.timestamp))


def read_scan(path) -> OrganizedScan:
    path = Path(path)
    try:
        with np.load(path) as z:
            return OrganizedScan(float(z["timestamp"]), z["ranges"],
                                 z["elevations"], z["azimuths"])
    except (KeyError, ValueError, OSError) as exc:
        raise ParseError(f"bad scan archive: {exc}", path) from exc


def read_scan_dir(path) -> list[OrganizedScan]:
    """All .npz scans under a directory, ordered by timestamp."""
    scans = [read_scan(p) for p in sorted(Path(path).glob("*.npz"))]
    scans.sort(key=lambda s: s.timestamp)
    return scans


# ---------------------------------------------------------------------------
# scan sequences (PLY per scan plus an index file)


def write_scan_sequence(directory, scans: list[tuple[float, PointCloud]],
                        binary: bool = True) -> None:
    """One PLY per scan named by timestamp, plus index.txt rows."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "index.txt", "w") as idx:
        for ts, cloud in scans:
            name = f"{_fmt(ts)}.ply"
            write_ply(directory / name, cloud, binary=binary)
            idx.write(f"{_fmt(ts)} {name}\n")


def read_scan_sequence(directory) -> list[tuple[float, PointCloud]]:
    """Load a scan directory: index.txt rows, or *.ply named by timestamp."""
    directory = Path(directory)
    index = directory / "index.txt"
    entries: list[tuple[float, Path]] = []
    if index.exists():
        with open(index) as f:
            for lineno, line in enumerate(f, start=1):
                s = line.strip()
                if not s or s.startswith("#"):
                    continue
                parts = s.split()
                if len(parts) != 2:
                    raise ParseError("expected `timestamp filename`",
                                     index, lineno)
                try:
                    ts = float(parts[0])
                except ValueError:
                    raise ParseError(f"bad timestamp {parts[0]!r}",
                                     index, lineno) from None
                entries.append((ts, directory / parts[1]))
    else:
        for p in directory.glob("*.ply"):
            try:
                entries.append((float(p.stem), p))
            except ValueError:
                raise ParseError(f"non-numeric scan filename {p.name!r}",
                                 directory) from None
    if not entries:
        raise ParseError("no scans found", directory)
    entries.sort(key=lambda e: e[0])
    return [(ts, read_ply(p)) for ts, p in entries]


# ---------------------------------------------------------------------------
# intrinsic-calibration correspondences


def read_correspondences(path) -> list[ViewCorrespondences]:
    """Rows of `view_id board_x board_y board_z u v`, grouped by view.

    The target is planar, so board_z must be zero.
    """
    path = Path(path)
    views: dict[int, list[list[float]]] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            parts = s.split()
            if len(parts) != 6:
                raise ParseError(f"expected 6 fields, got {len(parts)}",
                                 path, lineno)
            try:
                vid = int(parts[0])
                vals = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
            if abs(vals[2]) > 1e-9:
                raise ParseError(f"non-planar board point z={vals[2]}",
                                 path, lineno)
            views.setdefault(vid, []).append(vals)
    if not views:
        raise ParseError("no correspondences", path)
    out = []
    for vid in sorted(views):
        rows = np.array(views[vid])
        out.append(ViewCorrespondences(rows[:, 0:2], rows[:, 3:5]))
    return out


def write_correspondences(path, views: list[ViewCorrespondences]) -> None:
    with open(path, "w") as f:
        f.write("# view_id board_x board_y board_z u v\n")
        for vid, view in enumerate(views):
            for (bx, by), (u, v) in zip(view.board, view.image):
                f.write(f"{vid} {_fmt_row([bx, by, 0.0, u, v])}\n")


# ---------------------------------------------------------------------------
# calibration-target description


def write_target_spec(path, spec: TargetSpec) -> None:
    with open(path, "w") as f:
        f.write("# four-hole plate: hole-centre spacings and hole radius\n")
        for key in ("hole_radius", "width", "height"):
            f.write(f"{key} = {_fmt(getattr(spec, key))}\n")


def read_target_spec(path) -> TargetSpec:
    path = Path(path)
    allowed = ("hole_radius", "width", "height")
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            if "=" not in s:
                raise ParseError(f"expected `key = value`, got {s!r}",
                                 path, lineno)
            key, _, val = s.partition("=")
            key = key.strip()
            if key not in allowed:
                raise ParseError(f"unknown target key {key!r}", path, lineno)
            try:
                values[key] = float(val.strip())
            except ValueError:
                raise ParseError(f"bad number {val.strip()!r}",
                                 path, lineno) from None
    return TargetSpec(**values)


# ---------------------------------------------------------------------------
# scene / rig / waypoint descriptions (INI-style sections)


def _make_parser():
    import configparser
    p = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                  comment_prefixes=("#",),
                                  inline_comment_prefixes=("#",))
    p.optionxform = str
    return p


def _read_ini(path):
    import configparser
    p = _make_parser()
    try:
        with open(path) as f:
            p.read_file(f, source=str(path))
    except configparser.Error as exc:
        raise ParseError(str(exc), path) from exc
    return p


def _floats(text: str, n: int | None, what: str, path) -> np.ndarray:
    try:
        vals = np.array([float(t) for t in text.split()])
    except ValueError:
        raise ParseError(f"bad numbers in {what}: {text!r}", path) from None
    if n is not None and vals.size != n:
        raise ParseError(f"{what} needs {n} numbers, got {vals.size}", path)
    return vals


def _check_keys(section: str, keys, allowed, required, path) -> None:
    unknown = [k for k in keys if k not in allowed]
    if unknown:
        raise ParseError(f"[{section}] unknown keys: {', '.join(unknown)}", path)
    missing = [k for k in required if k not in keys]
    if missing:
        raise ParseError(f"[{section}] missing keys: {', '.join(missing)}", path)


def read_scene(path) -> Scene:
    """Sections `[plane N]`, `[box N]`, `[hole N]`, `[patch N]`.

    Holes and patches attach to a plane by its section name; boxes expand
    to their six faces.
    """
    path = Path(path)
    p = _read_ini(path)
    scene = Scene()
    by_name: dict[str, Rectangle] = {}
    attachments = []
    for section in p.sections():
        kind, _, name = section.partition(" ")
        name = name.strip()
        items = dict(p.items(section))
        if kind == "plane":
            _check_keys(section, items, ("center", "axis_u", "axis_v",
                                         "half_u", "half_v", "color", "label"),
                        ("center", "axis_u", "axis_v", "half_u", "half_v"),
                        path)
            rect = Rectangle(
                _floats(items["center"], 3, "center", path),
                _floats(items["axis_u"], 3, "axis_u", path),
                _floats(items["axis_v"], 3, "axis_v", path),
                float(items["half_u"]), float(items["half_v"]),
                color=tuple(int(v) for v in
                            _floats(items.get("color", "180 180 180"),
                                    3, "color", path)),
                label=int(items.get("label", 0)),
                name=name)
            scene.add_rectangle(rect)
            if name:
                by_name[name] = rect
        elif kind == "box":
            _check_keys(section, items,
                        ("center", "half_extents", "yaw", "color"),
                        ("center", "half_extents"), path)
            scene.add_box(
                _floats(items["center"], 3, "center", path),
                _floats(items["half_extents"], 3, "half_extents", path),
                yaw=float(items.get("yaw", 0.0)),
                color=tuple(int(v) for v in
                            _floats(items.get("color", "120 130 140"),
                                    3, "color", path)),
                name=name or "box")
        elif kind in ("hole", "patch"):
            attachments.append((kind, section, items))
        else:
            raise ParseError(f"unknown section kind {kind!r}", path)

    for kind, section, items in attachments:
        host = items.get("plane", "")
        if host not in by_name:
            raise ParseError(f"[{section}] references unknown plane {host!r}",
                             path)
        rect = by_name[host]
        if kind == "hole":
            _check_keys(section, items, ("plane", "center", "radius"),
                        ("plane", "center", "radius"), path)
            a, b = _floats(items["center"], 2, "center", path)
            rect.holes.append((float(a), float(b), float(items["radius"])))
        else:
            _check_keys(section, items, ("plane", "vertices", "label", "color"),
                        ("plane", "vertices"), path)
            verts = _floats(items["vertices"], None, "vertices", path)
            if verts.size < 6 or verts.size % 2:
                raise ParseError(f"[{section}] vertices must be >= 3 xy pairs",
                                 path)
            rect.patches.append(SurfacePatch(
                verts.reshape(-1, 2),
                label=int(items.get("label", 1)),
                color=tuple(int(v) for v in
                            _floats(items.get("color", "150 80 40"),
                                    3, "color", path))))
    if not scene.rectangles:
        raise ParseError("scene has no primitives", path)
    return scene


def write_scene(path, scene: Scene) -> None:
    """Write every rectangle as a plane section (boxes stay expanded)."""
    lines = []
    seen: set[str] = set()
    for i, rect in enumerate(scene.rectangles):
        name = rect.name or f"plane_{i}"
        if name in seen:
            name = f"{name}_{i}"
        seen.add(name)
        lines.append(f"[plane {name}]")
        lines.append(f"center = {_fmt_row(rect.center)}")
        lines.append(f"axis_u = {_fmt_row(rect.axis_u)}")
        lines.append(f"axis_v = {_fmt_row(rect.axis_v)}")
        lines.append(f"half_u = {_fmt(rect.half_u)}")
        lines.append(f"half_v = {_fmt(rect.half_v)}")
        lines.append(f"color = {rect.color[0]} {rect.color[1]} {rect.color[2]}")
        if rect.label:
            lines.append(f"label = {rect.label}")
        lines.append("")
        for j, (a, b, r) in enumerate(rect.holes):
            lines.append(f"[hole {name}_h{j}]")
            lines.append(f"plane = {name}")
            lines.append(f"center = {_fmt(a)} {_fmt(b)}")
            lines.append(f"radius = {_fmt(r)}")
            lines.append("")
        for j, patch in enumerate(rect.patches):
            lines.append(f"[patch {name}_p{j}]")
            lines.append(f"plane = {name}")
            lines.append(f"label = {patch.label}")
            lines.append(f"color = {patch.color[0]} {patch.color[1]}"
                         f" {patch.color[2]}")
            lines.append("vertices = " + "  ".join(
                _fmt_row(v) for v in patch.polygon))
            lines.append("")
    Path(path).write_text("\n".join(lines))


_LIDAR_KEYS = ("beams", "azimuth_steps", "rate", "range_sigma", "max_range",
               "elevation_min", "elevation_max")


def read_rig(path) -> SensorRig:
    """Sections `[lidar]`, `[camera]`, `[extrinsic]` (pose = 7 numbers)."""
    path = Path(path)
    p = _read_ini(path)
    for sec in ("lidar", "camera", "extrinsic"):
        if not p.has_section(sec):
            raise ParseError(f"missing [{sec}] section", path)
    extra = [s for s in p.sections() if s not in ("lidar", "camera", "extrinsic")]
    if extra:
        raise ParseError(f"unknown sections: {', '.join(extra)}", path)

    lid = dict(p.items("lidar"))
    _check_keys("lidar", lid, _LIDAR_KEYS, (), path)
    kwargs = {}
    for k, v in lid.items():
        kwargs[k] = int(v) if k in ("beams", "azimuth_steps") else float(v)
    lidar = LidarSpec(**kwargs)

    cam_items = dict(p.items("camera"))
    _check_keys("camera", cam_items,
                _CAMERA_FLOAT_KEYS + _CAMERA_INT_KEYS,
                ("alpha_x", "alpha_y", "u0", "v0"), path)
    ckw = {k: float(v) for k, v in cam_items.items()
           if k in _CAMERA_FLOAT_KEYS}
    ckw.setdefault("gamma", 0.0)
    for k in _CAMERA_INT_KEYS:
        if k in cam_items:
            ckw[k] = int(cam_items[k])
    camera = CameraModel(**ckw)

    ext = dict(p.items("extrinsic"))
    _check_keys("extrinsic", ext, ("pose",), ("pose",), path)
    vals = _floats(ext["pose"], 7, "pose", path)
    extrinsic = RigidTransform(vals[3:7], vals[0:3])
    return SensorRig(lidar, camera, extrinsic)


def write_rig(path, rig: SensorRig) -> None:
    lines = ["[lidar]"]
    for k in _LIDAR_KEYS:
        v = getattr(rig.lidar, k)
        lines.append(f"{k} = {v if isinstance(v, int) else _fmt(v)}")
    lines.append("")
    lines.append("[camera]")
    for k in _CAMERA_FLOAT_KEYS:
        lines.append(f"{k} = {_fmt(getattr(rig.camera, k))}")
    for k in _CAMERA_INT_KEYS:
        lines.append(f"{k} = {getattr(rig.camera, k)}")
    lines.append("")
    lines.append("[extrinsic]")
    lines.append(f"pose = {_fmt_row([*rig.extrinsic.t, *rig.extrinsic.q])}")
    lines.append("")
    Path(path).write_text("\n".join(lines))


def read_waypoints(path) -> tuple[np.ndarray, float]:
    """`x y z` rows plus an optional `speed = <m/s>` line (default 1.0)."""
    path = Path(path)
    points = []
    speed = 1.0
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            if "=" in s:
                key, _, val = s.partition("=")
                if key.strip() != "speed":
                    raise ParseError(f"unknown key {key.strip()!r}",
                                     path, lineno)
                try:
                    speed = float(val.strip())
                except ValueError:
                    raise ParseError(f"bad speed {val.strip()!r}",
                                     path, lineno) from None
                continue
            parts = s.split()
            if len(parts) != 3:
                raise ParseError(f"expected `x y z`, got {s!r}", path, lineno)
            try:
                points.append([float(v) for v in parts])
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
    if len(points) < 2:
        raise ParseError("need at least 2 waypoints", path)
    if speed <= 0.0:
        raise ParseError("speed must be positive", path)
    return np.array(points), speed


def write_waypoints(path, waypoints: np.ndarray, speed: float = 1.0) -> None:
    with open(path, "w") as f:
        f.write(f"speed = {_fmt(speed)}\n")
        for w in np.asarray(waypoints, dtype=float).reshape(-1, 3):
            f.write(_fmt_row(w) + "\n")
