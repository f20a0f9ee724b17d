"""On-disk formats: field dumps, trajectories and CSV tables.

A field dump is one JSON header line followed by little-endian float64 values,
interleaved ``(re, im)`` in row-major order.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .spectral import Field, Grid


def write_field(path, field: Field) -> None:
    header = json.dumps(field.grid.to_json(), sort_keys=True)
    data = np.empty(field.values.size * 2, dtype="<f8")
    flat = field.values.ravel(order="C")
    data[0::2] = flat.real
    data[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(data.tobytes())


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    grid = Grid(int(header["d"]), float(header["half_width"]), int(header["points_per_axis"]))
    if raw.size != 2 * int(np.prod(grid.shape)):
        raise ValueError(f"{path}: payload size {raw.size} does not match header {header}")
    values = (raw[0::2] + 1j * raw[1::2]).reshape(grid.shape)
    return Field(grid, values)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return v


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, doc: Mapping) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def content_hash(doc: Mapping) -> str:
    """Git-style blob sha1 of the canonical JSON encoding."""
    body = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=_json_default).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


SCALAR_COLUMNS = ("t", "mass", "linf", "boundary_fraction")


def write_scalars(path, scalars: Mapping) -> None:
    cols = [np.asarray(scalars[c]) for c in SCALAR_COLUMNS]
    write_csv(path, SCALAR_COLUMNS, zip(*cols))


def save_trajectory(directory, traj) -> list[str]:
    """Snapshot dumps ``snap_00000.field, ...`` plus ``index.json``; returns the file names."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(len(traj)):
        name = f"snap_{i:05d}.field"
        write_field(directory / name, traj.field(i))
        names.append(name)
    write_json(directory / "index.json", {
        "times": [float(t) for t in traj.times],
        "files": names,
        "d": traj.d,
        "termination": traj.termination,
        "metadata": traj.metadata,
    })
    return names + ["index.json"]


def load_trajectory(directory):
    from .evolution import Trajectory

    directory = Path(directory)
    index_path = directory / "index.json"
    if not index_path.exists():
        raise FileNotFoundError(f"no trajectory index at {index_path}")
    with open(index_path) as fh:
        index = json.load(fh)
    fields = [read_field(directory / name) for name in index["files"]]
    return Trajectory(index["times"], fields, {}, index.get("termination"), index.get("d"),
                      index.get("metadata"))
