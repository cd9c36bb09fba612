"""File formats: NTV transient volumes, 16-bit PGM images, YAML scenes, JSON params.

All writers go through a temp file in the target directory followed by an
atomic rename.
"""
from __future__ import annotations

import csv
import io as _io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .apf import ApfParams
from .errors import BadMagic, IoError, SceneError, TruncatedFile, VersionUnsupported
from .forward import Scene, ScenePoint
from .geometry import KINDS, ApertureGrid, TransientVolume
from .lpc import LpcParams

NTV_MAGIC = b"NTV1"
NTV_VERSION = 1
NTV_HEADER = struct.Struct("<4sIIIIdd3dB3x")
PARAMS_FORMAT = "nlos-params"
PARAMS_VERSION = 1
PGM_MAXVAL = 65535

assert NTV_HEADER.size == 64


def atomic_write(path, payload: bytes):
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc


def format_versions() -> dict:
    return {"ntv": NTV_VERSION, "params": PARAMS_VERSION, "package": __version__}


# -- NTV --------------------------------------------------------------------


def ntv_bytes(tv: TransientVolume) -> bytes:
    g = tv.aperture
    kind = KINDS.index(tv.kind)
    header = NTV_HEADER.pack(NTV_MAGIC, NTV_VERSION, g.nx, g.ny, tv.nt, tv.bin_width_s, g.extent_m, *g.origin_m, kind)
    dtype = "<c8" if tv.kind == "complex_phasor" else "<f4"
    payload = np.ascontiguousarray(tv.data.transpose(1, 0, 2)).astype(dtype)
    return header + payload.tobytes()


def write_ntv(path, tv: TransientVolume):
    atomic_write(path, ntv_bytes(tv))


def parse_ntv(raw: bytes) -> TransientVolume:
    if len(raw) < NTV_HEADER.size:
        raise TruncatedFile(f"header needs {NTV_HEADER.size} bytes, file has {len(raw)}")
    magic, version, nx, ny, nt, dt, extent, ox, oy, oz, kind = NTV_HEADER.unpack_from(raw)
    if magic != NTV_MAGIC:
        raise BadMagic(f"expected magic {NTV_MAGIC!r}, found {magic!r}")
    if version != NTV_VERSION:
        raise VersionUnsupported(f"NTV version {version} is not supported (expected {NTV_VERSION})")
    if kind >= len(KINDS):
        raise BadMagic(f"unknown kind code {kind}")
    kind_name = KINDS[kind]
    itemsize = 8 if kind_name == "complex_phasor" else 4
    expected = NTV_HEADER.size + nx * ny * nt * itemsize
    if len(raw) != expected:
        raise TruncatedFile(f"expected {expected} bytes, found {len(raw)}")
    dtype = "<c8" if itemsize == 8 else "<f4"
    data = np.frombuffer(raw, dtype=dtype, offset=NTV_HEADER.size).reshape(ny, nx, nt).transpose(1, 0, 2)
    data = data.astype(np.complex64 if itemsize == 8 else np.float32)
    grid = ApertureGrid(nx, ny, extent, (ox, oy, oz))
    return TransientVolume(data, dt, grid, kind_name)


def read_ntv(path) -> TransientVolume:
    return parse_ntv(_read_bytes(path))


# -- PGM --------------------------------------------------------------------


def image_bytes(img, depth_range: tuple[float, float] | None = None) -> bytes:
    """16-bit binary PGM, linear in intensity or in depth over ``depth_range``.

    Depth maps store ``(d - lo) / (hi - lo)`` and record the range in a
    comment; pixel 0 reads back as the background depth 0.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if depth_range is not None:
        lo, hi = depth_range
        scaled = (img - lo) / (hi - lo)
        comment = f"# nlos-depth zmin={lo!r} zmax={hi!r}\n"
    else:
        scaled = img
        comment = "# nlos-intensity\n"
    pix = np.rint(np.clip(scaled, 0, 1) * PGM_MAXVAL).astype(">u2")
    # rows run along y, columns along x
    body = np.ascontiguousarray(pix.T).tobytes()
    header = f"P5\n{comment}{img.shape[0]} {img.shape[1]}\n{PGM_MAXVAL}\n".encode()
    return header + body


def write_image(path, img, depth_range: tuple[float, float] | None = None):
    atomic_write(path, image_bytes(img, depth_range))


def read_image(path) -> tuple[np.ndarray, tuple[float, float] | None]:
    raw = _read_bytes(path)
    stream = _io.BytesIO(raw)
    tokens: list[bytes] = []
    depth_range = None
    while len(tokens) < 4:
        line = stream.readline()
        if not line:
            raise TruncatedFile(f"{path}: incomplete PGM header")
        if line.startswith(b"#"):
            text = line.decode(errors="replace")
            if "nlos-depth" in text:
                fields = dict(kv.split("=") for kv in text.split()[2:])
                depth_range = (float(fields["zmin"]), float(fields["zmax"]))
            continue
        tokens.extend(line.split())
    if tokens[0] != b"P5":
        raise BadMagic(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:4])
    body = stream.read()
    if len(body) != w * h * 2:
        raise TruncatedFile(f"{path}: expected {w * h * 2} pixel bytes, found {len(body)}")
    pix = np.frombuffer(body, dtype=">u2").reshape(h, w).T.astype(float) / maxval
    if depth_range is None:
        return pix, None
    lo, hi = depth_range
    return np.where(pix > 0, lo + pix * (hi - lo), 0.0), depth_range


# -- scenes -----------------------------------------------------------------

_TOP_KEYS = {"name", "points", "generators"}
_POINT_KEYS = {"position", "albedo", "falloff_exponent"}
_LETTER_KEYS = {"text", "z", "albedo", "exponent", "pitch", "center"}


def _line(node) -> int:
    return node.start_mark.line + 1


def _mapping(node, allowed: set[str], where: str) -> dict:
    if not isinstance(node, yaml.MappingNode):
        raise SceneError(f"line {_line(node)}: {where} must be a mapping")
    out = {}
    for key, value in node.value:
        if key.value not in allowed:
            raise SceneError(f"line {_line(key)}: unknown key {key.value!r} in {where}")
        out[key.value] = value
    return out


def _value(node):
    return yaml.safe_load(yaml.serialize(node))


def _number(node, what: str) -> float:
    v = _value(node)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SceneError(f"line {_line(node)}: {what} must be a number")
    return float(v)


def _vector(node, n: int, what: str) -> tuple[float, ...]:
    v = _value(node)
    if not (isinstance(v, list) and len(v) == n and all(isinstance(c, (int, float)) for c in v)):
        raise SceneError(f"line {_line(node)}: {what} must be a list of {n} numbers")
    return tuple(float(c) for c in v)


def letter_points(
    text: str, z: float, albedo: float, exponent: float, pitch: float, center=(0.0, 0.0)
) -> list[ScenePoint]:
    """Sample a bitmap rendering of ``text`` on the plane at depth ``z``."""
    from PIL import Image, ImageDraw, ImageFont

    font = ImageFont.load_default_imagefont()
    left, top, right, bottom = font.getbbox(text)
    im = Image.new("L", (right + 2, bottom + 2))
    ImageDraw.Draw(im).text((0, 0), text, fill=255, font=font)
    lit = np.argwhere(np.asarray(im) > 0)
    if lit.size == 0:
        return []
    rows, cols = lit[:, 0], lit[:, 1]
    r0 = (rows.min() + rows.max()) / 2
    c0 = (cols.min() + cols.max()) / 2
    cx, cy = center
    return [
        ScenePoint((cx + (c - c0) * pitch, cy - (r - r0) * pitch, z), albedo, exponent)
        for r, c in zip(rows, cols)
    ]


def parse_scene(text: str, default_name: str = "scene") -> Scene:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise SceneError(f"invalid YAML: {exc}") from exc
    if root is None:
        raise SceneError("empty scene document")
    top = _mapping(root, _TOP_KEYS, "scene")
    name = str(_value(top["name"])) if "name" in top else default_name
    points: list[ScenePoint] = []
    if "points" in top:
        seq = top["points"]
        if not isinstance(seq, yaml.SequenceNode):
            raise SceneError(f"line {_line(seq)}: points must be a list")
        for item in seq.value:
            f = _mapping(item, _POINT_KEYS, "point")
            if "position" not in f:
                raise SceneError(f"line {_line(item)}: point needs a position")
            try:
                points.append(
                    ScenePoint(
                        _vector(f["position"], 3, "position"),
                        _number(f["albedo"], "albedo") if "albedo" in f else 1.0,
                        _number(f["falloff_exponent"], "falloff_exponent") if "falloff_exponent" in f else 2.0,
                    )
                )
            except ValueError as exc:
                if isinstance(exc, SceneError):
                    raise
                raise SceneError(f"line {_line(item)}: {exc}") from exc
    if "generators" in top:
        seq = top["generators"]
        if not isinstance(seq, yaml.SequenceNode):
            raise SceneError(f"line {_line(seq)}: generators must be a list")
        for item in seq.value:
            gen = _mapping(item, {"plane_letter"}, "generator")
            if "plane_letter" not in gen:
                raise SceneError(f"line {_line(item)}: empty generator")
            f = _mapping(gen["plane_letter"], _LETTER_KEYS, "plane_letter")
            missing = {"text", "z", "pitch"} - f.keys()
            if missing:
                raise SceneError(f"line {_line(item)}: plane_letter missing {sorted(missing)}")
            try:
                points.extend(
                    letter_points(
                        str(_value(f["text"])),
                        _number(f["z"], "z"),
                        _number(f["albedo"], "albedo") if "albedo" in f else 1.0,
                        _number(f["exponent"], "exponent") if "exponent" in f else 2.0,
                        _number(f["pitch"], "pitch"),
                        _vector(f["center"], 2, "center") if "center" in f else (0.0, 0.0),
                    )
                )
            except ValueError as exc:
                if isinstance(exc, SceneError):
                    raise
                raise SceneError(f"line {_line(item)}: {exc}") from exc
    if not points:
        raise SceneError("scene has no points")
    return Scene(tuple(points), name)


def read_scene(path) -> Scene:
    raw = _read_bytes(path)
    try:
        return parse_scene(raw.decode(), Path(path).stem)
    except SceneError as exc:
        raise SceneError(f"{path}: {exc}") from None


# -- params and reports -----------------------------------------------------


def params_bytes(lpc: LpcParams, apf: list[ApfParams], provenance: dict | None = None) -> bytes:
    doc = {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "lpc_logits": lpc.logits.tolist(),
        "apf": [{"s": a.s, "sigma_min": a.sigma_min, "unit": a.unit} for a in apf],
        "provenance": provenance or {},
    }
    return (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode()


def write_params(path, lpc: LpcParams, apf: list[ApfParams], provenance: dict | None = None):
    atomic_write(path, params_bytes(lpc, apf, provenance))


def read_params(path) -> tuple[LpcParams, list[ApfParams]]:
    try:
        doc = json.loads(_read_bytes(path))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BadMagic(f"{path}: not a params file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != PARAMS_FORMAT:
        raise BadMagic(f"{path}: missing format tag {PARAMS_FORMAT!r}")
    if doc.get("version") != PARAMS_VERSION:
        raise VersionUnsupported(f"{path}: params version {doc.get('version')} is not supported")
    lpc = LpcParams(np.asarray(doc["lpc_logits"], dtype=float))
    apf = [ApfParams(float(a["s"]), float(a["sigma_min"]), float(a["unit"])) for a in doc["apf"]]
    return lpc, apf


def csv_bytes(header: list[str], rows: list[list], provenance: dict) -> bytes:
    """CSV table followed by ``#``-prefixed provenance lines."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    for key in sorted(provenance):
        buf.write(f"# {key}: {json.dumps(provenance[key], sort_keys=True)}\n")
    return buf.getvalue().encode()


def write_json(path, doc: dict):
    atomic_write(path, (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode())
