"""Binary field persistence.

Layout: magic "FLD1", a 4-byte little-endian unsigned header length, a JSON
header, then the payload as little-endian 64-bit floats in row-major order,
complex values interleaved (re, im).  Floats in the header round-trip
exactly (json uses repr), so read(write(f)) is bit-identical.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .domain import DomainSpec, Grid
from .spectral import BoundaryCondition, Field

MAGIC = b"FLD1"


class FieldFileError(IOError):
    pass


def _domain_to_json(d: DomainSpec) -> dict:
    return {
        "kind": d.kind,
        "scale": d.scale,
        "lengths": list(d.lengths),
        "h1": list(d.h1),
        "h2": list(d.h2),
    }


def domain_from_json(obj: dict) -> DomainSpec:
    return DomainSpec(
        kind=obj["kind"],
        scale=float(obj["scale"]),
        lengths=tuple(obj.get("lengths", ())),
        h1=tuple(obj.get("h1", ())),
        h2=tuple(obj.get("h2", ())),
    )


def _bc_to_json(bc: BoundaryCondition) -> dict:
    return {"regime": bc.regime, "theta": list(bc.theta), "dirichlet_axis": bc.dirichlet_axis}


def bc_from_json(obj: dict) -> BoundaryCondition:
    return BoundaryCondition(
        regime=obj["regime"],
        theta=tuple(obj.get("theta", (0.0, 0.0))),
        dirichlet_axis=int(obj.get("dirichlet_axis", 0)),
    )


def write_field(path, field: Field, bc: BoundaryCondition, s: float, q: float,
                lam: float = float("nan"), residual: float = float("nan"),
                provenance: dict | None = None):
    grid = field.grid
    header = {
        "domain": _domain_to_json(grid.domain),
        "bc": _bc_to_json(bc),
        "dims": list(grid.dims),
        "cell": [list(grid.cell[:, 0]), list(grid.cell[:, 1])],
        "offset": grid.offset,
        "s": s,
        "q": q,
        "scalar_kind": field.scalar_kind,
        "lambda": lam,
        "residual": residual,
        "provenance": provenance or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    v = field.values
    if field.scalar_kind == "complex":
        payload = np.empty(v.size * 2)
        payload[0::2] = v.real.reshape(-1)
        payload[1::2] = v.imag.reshape(-1)
    else:
        payload = v.reshape(-1)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload.astype("<f8").tobytes())


def read_field(path) -> tuple:
    """Returns (header dict, values array shaped per the header dims)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FieldFileError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        raw = fh.read()
    dims = tuple(header["dims"])
    n = dims[0] * dims[1]
    complex_kind = header.get("scalar_kind") == "complex"
    expect = n * 8 * (2 if complex_kind else 1)
    if len(raw) != expect:
        raise FieldFileError(f"{path}: payload length {len(raw)} != expected {expect}")
    flat = np.frombuffer(raw, dtype="<f8")
    if complex_kind:
        values = (flat[0::2] + 1j * flat[1::2]).reshape(dims)
    else:
        values = flat.reshape(dims).copy()
    return header, values


def grid_from_header(header: dict) -> Grid:
    dom = domain_from_json(header["domain"])
    cell = np.column_stack([header["cell"][0], header["cell"][1]]).astype(float)
    return Grid(dom, tuple(header["dims"]), cell, float(header["offset"]))


def field_from_file(path) -> tuple:
    """Returns (Field, header)."""
    header, values = read_field(path)
    return Field(grid_from_header(header), values), header
