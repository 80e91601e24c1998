"""Parameter-only model files: binary ``.pqp`` and JSON ``.pqp.json``.

Binary layout (little-endian)::

    header   "PQPF" | u16 version=1 | u16 flags | u32 count | u32 zero pad   (16 bytes)
    [flags bit 0] f64 center[3] | f64 scale                               (32 bytes)
    record   u8 z_class | u8 xy_class | 6 pad | f64 x 11                  (96 bytes each)

The 11 record floats are eps1, eps2, a, b, c, rx, ry, rz, tx, ty, tz.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

from .errors import BadMagic, FormatError, InvalidClassTag, InvalidModel, TruncatedFile, VersionUnsupported
from .geometry import SuperquadricParams
from .primitives import PrimitiveModel, PrimitiveRecord, ShapeClass, XYClass, ZClass, classify
from .tsdf import Normalization

MAGIC = b"PQPF"
VERSION = 1
FLAG_NORMALIZATION = 1
_HEADER = struct.Struct("<4sHHII")
_NORM = struct.Struct("<4d")
_RECORD = struct.Struct("<BB6x11d")
HEADER_BYTES = _HEADER.size
RECORD_BYTES = _RECORD.size

_Z_NAMES = {ZClass.CYLINDER: "cylinder", ZClass.CONE: "cone", ZClass.STAR: "star"}
_XY_NAMES = {XYClass.RECT: "rect", XYClass.ELLIPSE: "ellipse", XYClass.STAR: "star"}


def _check(model: PrimitiveModel):
    if not model.primitives:
        raise InvalidModel("InvalidModel: model has no primitives")
    if model.version != VERSION:
        raise VersionUnsupported(f"VersionUnsupported: model version {model.version}")


def encode_binary(model: PrimitiveModel) -> bytes:
    _check(model)
    flags = FLAG_NORMALIZATION if model.normalization is not None else 0
    out = [_HEADER.pack(MAGIC, VERSION, flags, len(model.primitives), 0)]
    if model.normalization is not None:
        out.append(_NORM.pack(*model.normalization.center, model.normalization.scale))
    for rec in model.primitives:
        out.append(_RECORD.pack(int(rec.shape_class.z_class), int(rec.shape_class.xy_class),
                                *rec.params.to_vector()))
    return b"".join(out)


def _make_record(z, xy, values) -> PrimitiveRecord:
    if not (0 <= z <= 2 and 0 <= xy <= 2):
        raise InvalidClassTag(f"InvalidClassTag: class tags ({z}, {xy}) out of range")
    try:
        params = SuperquadricParams.from_vector(values)
    except ValueError as exc:
        raise InvalidModel(f"InvalidModel: {exc}") from None
    shape_class = ShapeClass(ZClass(z), XYClass(xy))
    if classify(params.eps1, params.eps2) != shape_class:
        raise InvalidClassTag(f"InvalidClassTag: tags {shape_class} disagree with exponents "
                              f"({params.eps1}, {params.eps2})")
    return PrimitiveRecord(shape_class, params)


def decode_binary(data: bytes) -> PrimitiveModel:
    if len(data) < 4:
        raise TruncatedFile("TruncatedFile: missing header")
    if data[:4] != MAGIC:
        raise BadMagic(f"BadMagic: expected {MAGIC!r}, got {data[:4]!r}")
    if len(data) < HEADER_BYTES:
        raise TruncatedFile("TruncatedFile: missing header")
    _, version, flags, count, _ = _HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionUnsupported(f"VersionUnsupported: version {version}")
    pos = HEADER_BYTES
    norm = None
    if flags & FLAG_NORMALIZATION:
        if len(data) < pos + _NORM.size:
            raise TruncatedFile("TruncatedFile: missing normalization block")
        cx, cy, cz, scale = _NORM.unpack_from(data, pos)
        norm = Normalization((cx, cy, cz), scale)
        pos += _NORM.size
    if len(data) < pos + count * RECORD_BYTES:
        raise TruncatedFile(f"TruncatedFile: expected {count} records")
    if count == 0:
        raise InvalidModel("InvalidModel: model has no primitives")
    records = []
    for k in range(count):
        z, xy, *values = _RECORD.unpack_from(data, pos + k * RECORD_BYTES)
        records.append(_make_record(z, xy, values))
    return PrimitiveModel(records, norm, version)


def to_json_dict(model: PrimitiveModel) -> dict:
    _check(model)
    doc = {"format": "pqp", "version": model.version}
    if model.normalization is not None:
        doc["normalization"] = {"center": list(model.normalization.center),
                                "scale": model.normalization.scale}
    doc["primitives"] = [{
        "z_class": _Z_NAMES[rec.shape_class.z_class],
        "xy_class": _XY_NAMES[rec.shape_class.xy_class],
        "eps": [rec.params.eps1, rec.params.eps2],
        "size": list(rec.params.size),
        "rotation_euler_xyz": list(rec.params.rotation),
        "translation": list(rec.params.translation),
    } for rec in model.primitives]
    return doc


def encode_json(model: PrimitiveModel) -> bytes:
    return (json.dumps(to_json_dict(model), indent=1) + "\n").encode("utf-8")


def decode_json(data: bytes) -> PrimitiveModel:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"not a JSON model: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != "pqp":
        raise BadMagic("BadMagic: JSON document is not a pqp model")
    if doc.get("version") != VERSION:
        raise VersionUnsupported(f"VersionUnsupported: version {doc.get('version')}")
    z_lookup = {v: k for k, v in _Z_NAMES.items()}
    xy_lookup = {v: k for k, v in _XY_NAMES.items()}
    try:
        norm = None
        if doc.get("normalization") is not None:
            n = doc["normalization"]
            norm = Normalization(tuple(float(v) for v in n["center"]), float(n["scale"]))
        records = []
        for p in doc["primitives"]:
            if p["z_class"] not in z_lookup or p["xy_class"] not in xy_lookup:
                raise InvalidClassTag(f"InvalidClassTag: {p['z_class']!r}/{p['xy_class']!r}")
            values = [*p["eps"], *p["size"], *p["rotation_euler_xyz"], *p["translation"]]
            if len(values) != 11:
                raise FormatError("primitive needs 11 numbers")
            records.append(_make_record(int(z_lookup[p["z_class"]]), int(xy_lookup[p["xy_class"]]), values))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed JSON model: {exc}") from None
    if not records:
        raise InvalidModel("InvalidModel: model has no primitives")
    return PrimitiveModel(records, norm, VERSION)


def encode_model(model: PrimitiveModel, format: str = "binary") -> bytes:
    if format == "binary":
        return encode_binary(model)
    if format == "json":
        return encode_json(model)
    raise ValueError(f"unknown format {format!r}")


def decode_model(data: bytes) -> PrimitiveModel:
    """Decode either encoding, sniffing the binary magic first."""
    if data[:4] == MAGIC:
        return decode_binary(data)
    if data.lstrip()[:1] == b"{":
        return decode_json(data)
    return decode_binary(data)


def _format_for(path) -> str:
    return "json" if str(path).endswith(".json") else "binary"


def write_model(model: PrimitiveModel, path, format: str | None = None) -> int:
    data = encode_model(model, format or _format_for(path))
    Path(path).write_bytes(data)
    return len(data)


def read_model(path) -> PrimitiveModel:
    return decode_model(Path(path).read_bytes())


def model_size(count: int, normalization: bool = False) -> int:
    """Binary file size in bytes for ``count`` records."""
    return HEADER_BYTES + (_NORM.size if normalization else 0) + count * RECORD_BYTES
