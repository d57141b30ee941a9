"""CSV/JSON export and run directories with manifests.

Every file written through a :class:`RunDirectory` carries the run id: CSV
files on a leading ``# run_id=...`` comment line, JSON files as a top-level
``run_id`` key.  Floats go to CSV with 17 significant digits so that a
re-read reproduces them exactly.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import os
import platform
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__

RUNS_ENV = "VSSLAB_RUNS"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


def write_csv(path, columns: dict, run_id: str = "") -> Path:
    """Write equal-length columns with a header line and 17 significant digits."""
    path = Path(path)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    header = ",".join(names)
    if run_id:
        header = f"run_id={run_id}\n{header}"
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="# ")
    return path


def read_csv(path) -> tuple:
    """Return ``(columns, run_id)`` for a file written by :func:`write_csv`."""
    path = Path(path)
    run_id = ""
    names = None
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith("run_id="):
                run_id = body.split("=", 1)[1]
            else:
                names = body.split(",")
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if names is None:
        names = [f"c{i}" for i in range(data.shape[1])]
    return {n: data[:, i] for i, n in enumerate(names)}, run_id


def write_json(path, obj, run_id: str = "") -> Path:
    path = Path(path)
    payload = _jsonable(obj)
    if run_id and isinstance(payload, dict):
        payload = {"run_id": run_id, **payload}
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")
    return path


def profile_columns(profile) -> dict:
    cols = {"r": profile.r, "f": profile.f}
    fp = getattr(profile, "fprime", None)
    cols["fprime"] = fp if fp is not None else np.gradient(profile.f, profile.r)
    return cols


def field_columns(fld, times=None) -> dict:
    """Long-format ``t, r, u`` rows for the requested snapshots."""
    times = fld.times if times is None else times
    t_col, r_col, u_col = [], [], []
    for t in times:
        v = fld.at(t)
        t_col.append(np.full_like(v, t))
        r_col.append(fld.grid.r)
        u_col.append(v)
    return {"t": np.concatenate(t_col), "r": np.concatenate(r_col), "u": np.concatenate(u_col)}


def energy_columns(rec) -> dict:
    s, t = np.meshgrid(rec.s, rec.t, indexing="ij")
    return {"s": s.ravel(), "t": t.ravel(), "I": rec.I.ravel(), "J": rec.J.ravel(),
            "E": rec.E.ravel()}


@dataclass
class RunDirectory:
    """``<root>/<timestamp>-<command>/`` with a ``manifest.json`` listing every output."""

    command: str
    config: dict
    root: Optional[Path] = None
    path: Path = field(init=False)
    run_id: str = field(init=False)
    outputs: list = field(default_factory=list, init=False)
    summary: dict = field(default_factory=dict, init=False)
    _start: float = field(default=0.0, init=False)

    def __post_init__(self):
        root = Path(self.root or os.environ.get(RUNS_ENV, "runs"))
        stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
        self.run_id = f"{stamp}-{self.command}-{uuid.uuid4().hex[:8]}"
        self.path = root / f"{stamp}-{self.command}"
        if self.path.exists():
            self.path = root / self.run_id
        self.path.mkdir(parents=True, exist_ok=True)
        self._start = time.perf_counter()

    def csv(self, name: str, columns: dict) -> Path:
        p = write_csv(self.path / name, columns, self.run_id)
        self.outputs.append(name)
        return p

    def json(self, name: str, obj) -> Path:
        p = write_json(self.path / name, obj, self.run_id)
        self.outputs.append(name)
        return p

    def subdir(self, name: str) -> Path:
        p = self.path / name
        p.mkdir(exist_ok=True)
        return p

    def finish(self, summary: Optional[dict] = None) -> Path:
        if summary:
            self.summary.update(summary)
        manifest = {
            "command": self.command,
            "config": self.config,
            "version": __version__,
            "python": platform.python_version(),
            "wall_clock_s": time.perf_counter() - self._start,
            "outputs": list(self.outputs),
            "summary": self.summary,
        }
        return write_json(self.path / "manifest.json", manifest, self.run_id)
