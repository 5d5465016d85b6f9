"""CSV and manifest formats for exported designs.

Numbers are written with Python's shortest round-trip ``repr`` of a 64-bit
float, so write -> read -> write is byte-identical. Every file is written to a
temporary sibling and renamed into place.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .spectral import ContractError, Grid1D

MANIFEST_VERSION = "1"
FILE_KINDS = ("grid", "field", "control", "potential-2d", "history")


class FormatError(ContractError):
    pass


def _fmt(x) -> str:
    return repr(float(x))


def _row(values) -> str:
    return ",".join(map(repr, np.asarray(values, dtype=float).tolist()))


def write_atomic(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_table(path, header: list[str], columns) -> Path:
    cols = [np.asarray(c, dtype=float) for c in columns]
    lines = [",".join(header)]
    lines.extend(_row(r) for r in np.column_stack(cols))
    return write_atomic(path, "\n".join(lines) + "\n")


def read_table(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot parse {path}: {exc}") from exc
    if data.shape[1] != len(header):
        raise FormatError(f"{path}: {data.shape[1]} columns but header names {len(header)}")
    return {name: data[:, i] for i, name in enumerate(header)}


def write_field(path, grid: Grid1D, field) -> Path:
    f = np.asarray(field, dtype=complex)
    return write_table(path, ["x", "re", "im", "intensity"], [grid.x, f.real, f.imag, np.abs(f) ** 2])


def _check_x(x, grid: Grid1D, path):
    if x.shape != (grid.n,) or np.max(np.abs(x - grid.x)) > 1e-9 * max(1.0, grid.length):
        raise FormatError(f"{path}: samples do not lie on the expected {grid.n}-point grid")


def read_field(path, grid: Grid1D) -> np.ndarray:
    t = read_table(path)
    _check_x(t["x"], grid, path)
    return t["re"] + 1j * t["im"]


def read_column(path, column: str, grid: Grid1D) -> np.ndarray:
    t = read_table(path)
    _check_x(t["x"], grid, path)
    if column not in t:
        raise FormatError(f"{path}: no column {column!r}")
    return t[column]


def write_potentials(path, grid: Grid1D, v_initial, v_terminal) -> Path:
    return write_table(path, ["x", "v_initial", "v_terminal"], [grid.x, v_initial, v_terminal])


def write_controls(path, z, u, v) -> Path:
    return write_table(path, ["z", "u", "v"], [z, u, v])


def write_history(path, objective, infidelity, tikhonov) -> Path:
    n = len(objective)
    return write_table(path, ["iter", "objective", "infidelity", "tikhonov"],
                       [np.arange(n), objective, infidelity, tikhonov])


def write_matrix(path, values, x0: float, dx: float, z0: float, dz: float) -> Path:
    """Row-major ``(nx, nz)`` matrix with a one-line geometry header."""
    values = np.asarray(values, dtype=float)
    nx, nz = values.shape
    header = f"# nx={nx} nz={nz} x0={_fmt(x0)} dx={_fmt(dx)} z0={_fmt(z0)} dz={_fmt(dz)}"
    body = "\n".join(_row(r) for r in values)
    return write_atomic(path, header + "\n" + body + "\n")


def read_matrix(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
            if not first.startswith("#"):
                raise FormatError(f"{path}: missing geometry header")
            meta = dict(item.split("=", 1) for item in first[1:].split())
            geom = {"nx": int(meta["nx"]), "nz": int(meta["nz"])}
            geom.update({k: float(meta[k]) for k in ("x0", "dx", "z0", "dz")})
            values = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError(f"cannot parse {path}: {exc}") from exc
    if values.shape != (geom["nx"], geom["nz"]):
        raise FormatError(f"{path}: header says {geom['nx']}x{geom['nz']}, found {values.shape}")
    return values, geom


def _jsonable(obj):
    # strict JSON: non-finite floats become null, numpy scalars become Python ones
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def dump_manifest(data: dict) -> str:
    return json.dumps(_jsonable(data), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def write_manifest(path, data: dict) -> Path:
    return write_atomic(path, dump_manifest(data))


def read_manifest(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
