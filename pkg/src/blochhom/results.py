"""Result tables, deterministic serialisation and the tensor cache.

Outputs are a CSV with one row per (theta, eps) cell in a fixed column order
and a JSON summary for machine assertions.  Every float is written with 17
significant digits so identical runs produce identical bytes; wall time is
deliberately kept out of both files for the same reason.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("eps", "err_opnorm", "bound", "verdict", "c", "M_norm", "C_R",
               "kappa", "n_trunc", "cond_max")


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


@dataclass
class SweepRow:
    theta: tuple
    eps: float
    err: float
    bound: float
    verdict: str  # pass | fail | flagged
    c: float
    m_norm: float
    c_r: float
    kappa: float
    n_trunc: int
    cond: float


@dataclass
class SweepOutcome:
    kind: str
    d: int
    rows: list
    slope: float = None
    slope_residual: float = None
    max_err_ratio: float = None
    all_pass: bool = True
    extras: dict = field(default_factory=dict)
    config_digest: str = ""
    wall_time: float = 0.0
    aux_tables: dict = field(default_factory=dict)  # name -> (header, rows)

    def sort(self):
        self.rows.sort(key=lambda r: (tuple(r.theta), -r.eps))
        return self


def rows_to_csv(outcome: SweepOutcome) -> str:
    header = [f"theta_{i + 1}" for i in range(outcome.d)] + list(CSV_COLUMNS)
    lines = [",".join(header)]
    for r in outcome.rows:
        cells = [fmt(t) for t in r.theta]
        cells += [fmt(r.eps), fmt(r.err), fmt(r.bound), r.verdict, fmt(r.c),
                  fmt(r.m_norm), fmt(r.c_r), fmt(r.kappa), fmt(r.n_trunc),
                  fmt(r.cond)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def summary_dict(outcome: SweepOutcome) -> dict:
    return {
        "kind": outcome.kind,
        "config_digest": outcome.config_digest,
        "slope": outcome.slope,
        "slope_residual": outcome.slope_residual,
        "max_err_ratio": outcome.max_err_ratio,
        "all_pass": bool(outcome.all_pass),
        "rows": len(outcome.rows),
        "extras": outcome.extras,
    }


def _atomic_write(path: str, data: str):
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def persist_outcome(outcome: SweepOutcome, out_dir: str) -> dict:
    """Write results.csv, summary.json and any auxiliary tables atomically."""
    outcome.sort()
    paths = {}
    csv_path = os.path.join(out_dir, "results.csv")
    _atomic_write(csv_path, rows_to_csv(outcome))
    paths["csv"] = csv_path
    summary_path = os.path.join(out_dir, "summary.json")
    _atomic_write(summary_path, json.dumps(
        summary_dict(outcome), sort_keys=True, indent=2) + "\n")
    paths["summary"] = summary_path
    for name, (header, rows) in sorted(outcome.aux_tables.items()):
        aux_path = os.path.join(out_dir, f"{name}.csv")
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(fmt(c) for c in row))
        _atomic_write(aux_path, "\n".join(lines) + "\n")
        paths[name] = aux_path
    return paths


def config_digest(payload: dict) -> str:
    """Stable digest of the semantic run payload (paths and timing excluded)."""
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def file_digest(path: str) -> str:
    with open(path, "rb") as handle:
        return hashlib.sha256(handle.read()).hexdigest()[:16]


class TensorCache:
    """Flat-file cache of homogenised tensors keyed by content digests.

    Stored as .npy files with full binary precision, so a cache hit reproduces
    the computed tensor bit for bit.
    """

    def __init__(self, directory: str):
        self.directory = directory

    @staticmethod
    def key(coef_digest: str, theta, trunc: int) -> str:
        theta_tag = hashlib.sha256(
            ",".join(fmt(t) for t in np.atleast_1d(theta)).encode()
        ).hexdigest()[:12]
        return f"hom-{coef_digest}-N{trunc}-{theta_tag}"

    def _path(self, key: str) -> str:
        return os.path.join(self.directory, key + ".npy")

    def get(self, key: str):
        path = self._path(key)
        if not os.path.exists(path):
            return None
        return np.load(path)

    def put(self, key: str, entries: np.ndarray):
        os.makedirs(self.directory, exist_ok=True)
        path = self._path(key)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".npy")
        try:
            with os.fdopen(fd, "wb") as handle:
                np.save(handle, entries, allow_pickle=False)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
