"""Raw binary field blobs with a small text header.

A field is stored as two files: ``<stem>.bin`` holds the complex samples
as little-endian ``complex128`` in C order (node index ``(i, j, k)`` then
component), and ``<stem>.hdr`` holds one ``key = value`` line per entry:
``dims``, ``origin``, ``spacing``, ``wavenumber``, ``components``, ``dtype``.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .grid import GridSpec, ScalarGridField, VectorGridField

DTYPE = "<c16"


def write_field(stem, field, wavenumber):
    """Write ``field`` next to ``stem``; returns the two paths (blob, header)."""
    stem = Path(stem)
    blob, header = stem.with_suffix(".bin"), stem.with_suffix(".hdr")
    g = field.grid
    np.ascontiguousarray(field.values, dtype=DTYPE).tofile(blob)
    lines = [
        f"dims = {' '.join(str(n) for n in g.dims)}",
        f"origin = {' '.join(repr(float(v)) for v in g.origin)}",
        f"spacing = {g.h!r}",
        f"wavenumber = {float(wavenumber)!r}",
        f"components = {field.components}",
        f"dtype = {DTYPE}",
    ]
    header.write_text("\n".join(lines) + "\n")
    return blob, header


def read_header(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"malformed header line {line!r}")
        out[key.strip()] = value.strip()
    missing = {"dims", "origin", "spacing", "wavenumber", "components"} - set(out)
    if missing:
        raise ConfigurationError(f"header is missing {sorted(missing)}")
    return {
        "dims": tuple(int(v) for v in out["dims"].split()),
        "origin": tuple(float(v) for v in out["origin"].split()),
        "spacing": float(out["spacing"]),
        "wavenumber": float(out["wavenumber"]),
        "components": int(out["components"]),
    }


def read_field(stem):
    """Inverse of :func:`write_field`; returns ``(field, wavenumber)``."""
    stem = Path(stem)
    head = read_header(stem.with_suffix(".hdr"))
    grid = GridSpec(head["origin"], head["spacing"], head["dims"])
    shape = grid.dims + ((3,) if head["components"] == 3 else ())
    data = np.fromfile(stem.with_suffix(".bin"), dtype=DTYPE)
    if data.size != int(np.prod(shape)):
        raise ConfigurationError(f"blob holds {data.size} samples, header implies {int(np.prod(shape))}")
    cls = VectorGridField if head["components"] == 3 else ScalarGridField
    return cls(grid, data.reshape(shape)), head["wavenumber"]


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
