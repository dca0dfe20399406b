"""Deterministic artifact writers: legacy VTK structured points, raw mask
dumps, CSV tables and JSON documents.

All text output formats numbers with shortest round-trip precision so
identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

RAW_DTYPE_TAGS = {np.dtype(np.uint8): 1, np.dtype(np.float64): 2}


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_vtk_structured_points(path, fields: dict, spacing: float,
                                origin=(0.0, 0.0, 0.0), title="poroscale"):
    """Legacy ASCII VTK file of cell-centered scalar fields.

    Every array in ``fields`` must share one shape of dimension 2 or 3;
    2D data is written as a single-layer 3D grid.
    """
    if not fields:
        raise ValueError("no fields to write")
    arrays = {name: np.asarray(a, dtype=float) for name, a in fields.items()}
    shape = next(iter(arrays.values())).shape
    if any(a.shape != shape for a in arrays.values()):
        raise ValueError("field shapes differ")
    if len(shape) == 2:
        shape3 = (*shape, 1)
    elif len(shape) == 3:
        shape3 = shape
    else:
        raise ValueError(f"unsupported dimension {len(shape)}")
    # structured points dimensions count points; cell data needs dims+1
    dims = tuple(n + 1 for n in shape3)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET STRUCTURED_POINTS",
             "DIMENSIONS {} {} {}".format(*dims),
             "ORIGIN {} {} {}".format(*(_fmt(o) for o in origin)),
             "SPACING {} {} {}".format(*(_fmt(spacing) for _ in range(3))),
             f"CELL_DATA {int(np.prod(shape3))}"]
    for name in sorted(arrays):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        flat = arrays[name].reshape(shape3).flatten(order="F")
        lines.extend(_fmt(v) for v in flat)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_mask_raw(path, mask: np.ndarray):
    """Row-major binary dump with a 16-byte header: three uint32 dims
    (padded with 1) and a uint32 dtype tag."""
    arr = np.ascontiguousarray(mask)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    tag = RAW_DTYPE_TAGS.get(arr.dtype)
    if tag is None:
        raise ValueError(f"unsupported raw dtype {arr.dtype}")
    dims = list(arr.shape) + [1] * (3 - arr.ndim)
    if len(dims) != 3:
        raise ValueError(f"unsupported dimension {arr.ndim}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IIII", *dims, tag))
        fh.write(arr.tobytes(order="C"))


def read_mask_raw(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        d0, d1, d2, tag = struct.unpack("<IIII", header)
        dtype = {v: k for k, v in RAW_DTYPE_TAGS.items()}[tag]
        data = np.frombuffer(fh.read(), dtype=dtype)
    shape = tuple(n for n in (d0, d1, d2) if n != 1) or (1,)
    return data.reshape(shape)


def write_csv(path, rows: list, columns=None):
    """Comma-separated table with header row and '.' decimal marks."""
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) if row.get(c) is not None else ""
                              for c in columns))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
