"""Projection, learning and total errors and their norm summaries.

Norm convention (``"per-snapshot/M"``): for an ``M x Nt`` error matrix with
columns ``e_t``,

    l1_t = ||e_t||_1 / M,   l2_t = ||e_t||_2 / M,

``L1`` and ``L2`` are the means of ``l1_t`` and ``l2_t`` over snapshots and
``Linf`` is the largest absolute entry.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Mapping

import numpy as np

from .data import SnapshotMatrix
from .exceptions import DataError, ShapeMismatchError

__all__ = [
    "NORM_CONVENTION",
    "ErrorReport",
    "error_fields",
    "per_snapshot_norms",
    "summarize",
    "error_report",
    "ERROR_COLUMNS",
    "write_errors_csv",
]

NORM_CONVENTION = "per-snapshot/M"
KINDS = ("projection", "learning", "total")


def _values(q) -> np.ndarray:
    return np.asarray(q.values if isinstance(q, SnapshotMatrix) else q, dtype=np.float64)


def error_fields(q_ref, q_hat) -> np.ndarray:
    """``q_hat - q_ref`` for two aligned ``M x Nt`` matrices."""
    ref, hat = _values(q_ref), _values(q_hat)
    if ref.shape != hat.shape:
        raise ShapeMismatchError(f"misaligned fields: {ref.shape} vs {hat.shape}")
    return hat - ref


def per_snapshot_norms(e) -> Dict[str, np.ndarray]:
    """Per-column ``l1_t``, ``l2_t`` and ``linf_t``."""
    e = _values(e)
    if e.ndim != 2 or e.size == 0:
        raise DataError(f"need a nonempty 2-D error matrix, got shape {e.shape}")
    M = e.shape[0]
    a = np.abs(e)
    linf = a.max(axis=0)
    # Scale each column by its max entry so squaring neither underflows nor overflows.
    s = np.where(linf > 0, linf, 1.0)
    return {
        "l1": a.sum(axis=0) / M,
        "l2": linf * np.sqrt(np.sum((a / s) ** 2, axis=0)) / M,
        "linf": linf,
    }


def summarize(e) -> Dict[str, float]:
    """``{"L1", "L2", "Linf"}`` of an error matrix."""
    n = per_snapshot_norms(e)
    return {"L1": float(n["l1"].mean()), "L2": float(n["l2"].mean()), "Linf": float(n["linf"].max())}


@dataclass
class ErrorReport:
    """Summaries of the three error kinds over the predicted window.

    ``triangle_fraction`` is the share of snapshots with
    ``||total_t|| <= ||projection_t|| + ||learning_t||`` (up to rounding).
    """

    projection: Dict[str, float]
    learning: Dict[str, float]
    total: Dict[str, float]
    n_snapshots: int
    triangle_fraction: float
    convention: str = NORM_CONVENTION
    per_snapshot: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def triangle_ok(self) -> bool:
        return self.triangle_fraction == 1.0

    def row(self) -> Dict[str, float]:
        """Flat mapping ``{"proj_L1": ..., "learn_L2": ..., "total_Linf": ...}``."""
        out = {}
        for short, kind in zip(("proj", "learn", "total"), KINDS):
            for k, v in getattr(self, kind).items():
                out[f"{short}_{k}"] = v
        return out


def error_report(q_truth, q_proj, q_pred) -> ErrorReport:
    """Projection (``proj - truth``), learning (``pred - proj``) and total (``pred - truth``) errors.

    All three inputs must already be restricted to the snapshots that have
    a prediction.
    """
    e_proj = error_fields(q_truth, q_proj)
    e_learn = error_fields(q_proj, q_pred)
    e_tot = error_fields(q_truth, q_pred)
    norms = {k: per_snapshot_norms(e) for k, e in zip(KINDS, (e_proj, e_learn, e_tot))}
    lhs = norms["total"]["l2"]
    rhs = norms["projection"]["l2"] + norms["learning"]["l2"]
    ok = lhs <= rhs * (1.0 + 1e-12) + 1e-300
    return ErrorReport(
        projection=summarize(e_proj),
        learning=summarize(e_learn),
        total=summarize(e_tot),
        n_snapshots=e_tot.shape[1],
        triangle_fraction=float(np.mean(ok)),
        per_snapshot={k: v["l2"] for k, v in norms.items()},
    )


CONFIG_COLUMNS = ("kind", "modes", "freqs", "n_tauF", "seed")
ERROR_COLUMNS = CONFIG_COLUMNS + tuple(
    f"{p}_{n}" for p in ("proj", "learn", "total") for n in ("L1", "L2", "Linf")
)


def write_errors_csv(path, rows: Iterable[Mapping], append: bool = True) -> None:
    """Append rows to ``errors.csv``; the header is written when the file is new.

    Each row maps every name in ``ERROR_COLUMNS`` to a value; floats are
    written with ``repr`` so that the file round-trips exactly.
    """
    path = Path(path)
    new = not (append and path.exists())
    with path.open("w" if new else "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(ERROR_COLUMNS)
        for r in rows:
            missing = [c for c in ERROR_COLUMNS if c not in r]
            if missing:
                raise DataError(f"errors row is missing {missing}")
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in ERROR_COLUMNS])
