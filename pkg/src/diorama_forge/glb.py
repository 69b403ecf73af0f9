"""Just enough binary glTF 2.0 to write simple meshes and read their bounds."""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DegenerateMesh

GLB_MAGIC = b"glTF"
_JSON_CHUNK = 0x4E4F534A
_BIN_CHUNK = 0x004E4942
_FLOAT = 5126
_UINT16 = 5123
_UINT32 = 5125


def _pad(data: bytes, fill: bytes) -> bytes:
    return data + fill * (-len(data) % 4)


def write_glb(vertices, faces, name: str = "mesh", extras: dict | None = None) -> bytes:
    """Pack one triangle mesh into a GLB blob (deterministic bytes)."""
    verts = np.ascontiguousarray(vertices, dtype="<f4").reshape(-1, 3)
    tris = np.ascontiguousarray(faces, dtype="<u4").reshape(-1)
    vbytes = verts.tobytes()
    ibytes = tris.tobytes()
    binary = _pad(vbytes, b"\x00") + _pad(ibytes, b"\x00")
    doc = {
        "asset": {"version": "2.0", "generator": "diorama-forge"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0, "name": name}],
        "meshes": [{"name": name, "primitives": [{"attributes": {"POSITION": 0}, "indices": 1}]}],
        "buffers": [{"byteLength": len(binary)}],
        "bufferViews": [
            {"buffer": 0, "byteOffset": 0, "byteLength": len(vbytes), "target": 34962},
            {"buffer": 0, "byteOffset": len(_pad(vbytes, b"\x00")), "byteLength": len(ibytes), "target": 34963},
        ],
        "accessors": [
            {
                "bufferView": 0, "componentType": _FLOAT, "count": len(verts), "type": "VEC3",
                "min": [float(x) for x in verts.min(axis=0)], "max": [float(x) for x in verts.max(axis=0)],
            },
            {"bufferView": 1, "componentType": _UINT32, "count": len(tris), "type": "SCALAR"},
        ],
    }
    if extras:
        doc["extras"] = extras
    jbytes = _pad(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8"), b" ")
    total = 12 + 8 + len(jbytes) + 8 + len(binary)
    return b"".join([
        struct.pack("<4sII", GLB_MAGIC, 2, total),
        struct.pack("<II", len(jbytes), _JSON_CHUNK), jbytes,
        struct.pack("<II", len(binary), _BIN_CHUNK), binary,
    ])


def box_glb(width: float, height: float, depth: float, name: str = "box", extras: dict | None = None) -> bytes:
    """Axis-aligned box resting on y = 0 (glTF is +Y up)."""
    hw, hd = width / 2, depth / 2
    verts = [
        (-hw, 0, -hd), (hw, 0, -hd), (hw, height, -hd), (-hw, height, -hd),
        (-hw, 0, hd), (hw, 0, hd), (hw, height, hd), (-hw, height, hd),
    ]
    faces = [
        (0, 2, 1), (0, 3, 2), (4, 5, 6), (4, 6, 7), (0, 1, 5), (0, 5, 4),
        (3, 6, 2), (3, 7, 6), (1, 2, 6), (1, 6, 5), (0, 4, 7), (0, 7, 3),
    ]
    return write_glb(verts, faces, name, extras)


def read_chunks(blob: bytes) -> tuple[dict, bytes]:
    if len(blob) < 20 or blob[:4] != GLB_MAGIC:
        raise DegenerateMesh("not a binary glTF blob")
    _, version, total = struct.unpack_from("<4sII", blob, 0)
    if version != 2:
        raise DegenerateMesh(f"unsupported glTF version {version}")
    offset = 12
    doc, binary = None, b""
    while offset + 8 <= min(total, len(blob)):
        length, ctype = struct.unpack_from("<II", blob, offset)
        chunk = blob[offset + 8: offset + 8 + length]
        if ctype == _JSON_CHUNK:
            doc = json.loads(chunk.decode("utf-8"))
        elif ctype == _BIN_CHUNK:
            binary = chunk
        offset += 8 + length
    if doc is None:
        raise DegenerateMesh("GLB has no JSON chunk")
    return doc, binary


def _accessor_positions(doc: dict, binary: bytes, index: int) -> np.ndarray:
    acc = doc["accessors"][index]
    if acc.get("componentType") != _FLOAT or acc.get("type") != "VEC3":
        raise DegenerateMesh("POSITION accessor is not float VEC3")
    view = doc["bufferViews"][acc["bufferView"]]
    start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    stride = view.get("byteStride", 12)
    count = acc["count"]
    out = np.empty((count, 3), dtype=np.float64)
    for i in range(count):
        out[i] = struct.unpack_from("<3f", binary, start + i * stride)
    return out


def mesh_bounds(blob: bytes) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    """Axis-aligned bounds over every POSITION accessor, in mesh units.

    Uses accessor min/max when present and decodes the vertex data otherwise.
    Node transforms are ignored.
    """
    doc, binary = read_chunks(blob)
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    found = False
    for mesh in doc.get("meshes", []):
        for prim in mesh.get("primitives", []):
            idx = prim.get("attributes", {}).get("POSITION")
            if idx is None:
                continue
            acc = doc["accessors"][idx]
            if "min" in acc and "max" in acc:
                a_lo, a_hi = np.asarray(acc["min"], float), np.asarray(acc["max"], float)
            else:
                pos = _accessor_positions(doc, binary, idx)
                if len(pos) == 0:
                    continue
                a_lo, a_hi = pos.min(axis=0), pos.max(axis=0)
            lo = np.minimum(lo, a_lo)
            hi = np.maximum(hi, a_hi)
            found = True
    if not found:
        raise DegenerateMesh("GLB contains no vertex positions")
    return tuple(float(x) for x in lo), tuple(float(x) for x in hi)
