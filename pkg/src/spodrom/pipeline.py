"""Staged pipeline with persistent artifacts and a provenance hash chain.

Layout under ``output.dir``::

    data/provenance.json
    basis_<kind>/                        meta.json, modes.npy, ... , provenance.json
    coeffs_<kind>_L<L_r>_f<band>/        train.npy, test.npy (+ index), provenance.json
    cells/<cell>/model/                  checkpoint, loss.csv, provenance.json
    cells/<cell>/report/                 predictions, errors.csv, dumps, provenance.json
    errors.csv                           one row per cell

Each ``provenance.json`` records the stage hash and the hash of the upstream
artifact it was built from. A stage reuses an existing artifact only when its
recorded hash matches; consuming an artifact whose upstream hash differs
from the current upstream raises :class:`ProvenanceError`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import data as dat
from . import decomposition as dec
from . import emulator as emu
from . import latent as lat
from . import metrics as met
from .config import Cell, PipelineConfig
from .datasets import make_latlon_field, make_wavepacket_field
from .exceptions import DataError, ProvenanceError

logger = logging.getLogger(__name__)

__all__ = [
    "PreparedData",
    "prepare_data",
    "run_decompose",
    "run_project",
    "run_train",
    "run_forecast",
    "run_cell",
    "run_sweep",
]


def _hash(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(json.dumps(p, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _write_prov(d: Path, stage: str, own: str, upstream: Dict[str, str]) -> None:
    d.mkdir(parents=True, exist_ok=True)
    (d / "provenance.json").write_text(json.dumps({"stage": stage, "hash": own, "upstream": upstream}, indent=2))


def _read_prov(d: Path) -> Optional[dict]:
    p = d / "provenance.json"
    return json.loads(p.read_text()) if p.exists() else None


def _check_upstream(d: Path, key: str, expected: str) -> dict:
    prov = _read_prov(d)
    if prov is None:
        raise ProvenanceError(f"{d} has no provenance record")
    got = prov["upstream"].get(key)
    if got != expected:
        raise ProvenanceError(
            f"{d} was built from {key}={str(got)[:12]}..., current {key} is {expected[:12]}..."
        )
    return prov


# ---------------------------------------------------------------------------
# data


@dataclass
class PreparedData:
    train: dat.SnapshotMatrix
    test: dat.SnapshotMatrix
    weights: np.ndarray
    hash: str


def _load_raw(cfg: PipelineConfig) -> Tuple[dat.SnapshotMatrix, Optional[np.ndarray], Optional[np.ndarray]]:
    d = cfg["data"]
    if d["synthetic"] is not None:
        syn = dict(d["synthetic"])
        kind = syn.pop("kind")
        if kind == "wavepacket":
            q = make_wavepacket_field(dt=d["dt"], **syn)
            return q, None, None
        q, lats, lons = make_latlon_field(dt=d["dt"], **syn)
        return q, lats, lons
    q = dat.load_snapshot_matrix(cfg.data_path, d["layout"], n_vars=d["n_vars"], dt=d["dt"], grid=d["grid"])
    g = d["grid"] or {}
    return q, (np.asarray(g["lat"]) if "lat" in g else None), (np.asarray(g["lon"]) if "lon" in g else None)


def prepare_data(cfg: PipelineConfig) -> PreparedData:
    """Load, split (both parts centered on the train mean) and build weights."""
    q, lats, lons = _load_raw(cfg)
    train, test = dat.split_train_test(q, cfg["split"]["train_fraction"])
    if cfg["data"]["weights"] == "spherical":
        if lats is None or lons is None:
            raise DataError("spherical weights need latitude and longitude coordinates")
        w = dat.build_spherical_weights(lats, lons, cfg["data"]["n_vars"])
        if w.size != q.M:
            raise DataError(f"grid gives {w.size} weights for M={q.M}")
    else:
        w = dat.build_uniform_weights(q.M)
    h = _hash(dat.data_hash(q.values), cfg["split"], cfg["data"]["weights"])
    _write_prov(cfg.output_dir / "data", "data", h, {})
    return PreparedData(train, test, w, h)


# ---------------------------------------------------------------------------
# stages


def _welch(cfg: PipelineConfig) -> dec.WelchParams:
    w = cfg["welch"]
    return dec.WelchParams(w["n_fft"], w["overlap"], w["window"], w["normalize_window"])


def run_decompose(cfg: PipelineConfig, pd: PreparedData, kind: str, n_jobs: int = 1):
    """Compute (or reuse) the full basis of the given kind."""
    d = cfg.output_dir / f"basis_{kind}"
    own = _hash(pd.hash, kind, cfg["welch"] if kind == "spod" else None)
    prov = _read_prov(d)
    if prov is not None and prov["hash"] == own and (d / "meta.json").exists():
        return dec.load_basis(d), own
    t0 = time.perf_counter()
    if kind == "spod":
        b = dec.compute_spod(pd.train, _welch(cfg), pd.weights, n_jobs=n_jobs)
    else:
        b = dec.compute_pod(pd.train, pd.weights)
    logger.info("decompose %s: %.2fs", kind, time.perf_counter() - t0)
    dec.save_basis(b, d)
    _write_prov(d, "basis", own, {"data": pd.hash})
    return b, own


def _band(cfg: PipelineConfig, cell: Cell, n_freq: int) -> Tuple[int, int]:
    b = cfg["basis"]
    flb = 0 if b["flb"] is None else b["flb"]
    if cell.n_freqs is not None:
        return flb, flb + cell.n_freqs - 1
    return flb, n_freq - 1 if b["fub"] is None else b["fub"]


def run_project(cfg: PipelineConfig, pd: PreparedData, basis, basis_hash: str, cell: Cell):
    """Train and test coefficients for the cell's basis truncation."""
    domain = cfg["basis"]["coeff_domain"]
    band = _band(cfg, cell, basis.n_freq) if cell.kind == "spod" else (0, 0)
    d = _coeff_dir(cfg, cell, basis.n_freq)
    bdir = cfg.output_dir / f"basis_{cell.kind}"
    _check_upstream(bdir, "data", pd.hash)
    rb = dec.select_band(basis, cell.L_r, *band) if cell.kind == "spod" else dec.select_band(basis, cell.L_r)
    own = _hash(basis_hash, cell.L_r, band, domain)
    prov = _read_prov(d)
    if prov is not None and prov["hash"] == own and (d / "train.npy").exists():
        a_tr, _ = lat.load_coeffs(d, "train")
        a_te, _ = lat.load_coeffs(d, "test")
        return rb, a_tr, a_te, own
    if domain == "time":
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            a_tr = lat.oblique_project(rb, pd.weights, pd.train)
            a_te = lat.oblique_project(rb, pd.weights, pd.test)
    else:
        p = basis.welch
        if pd.test.n_time < p.n_fft:
            raise DataError(f"test record of {pd.test.n_time} snapshots is shorter than n_fft={p.n_fft}")
        f_tr = lat.freq_project(basis, dec.fourier_ensembles(pd.train, p))
        f_te = lat.freq_project(basis, dec.fourier_ensembles(pd.test, p))
        a_tr = lat.freq_coeffs_to_series(f_tr, cell.L_r, band)
        a_te = lat.freq_coeffs_to_series(f_te, cell.L_r, band)
    lat.save_coeffs(a_tr, d, "train")
    lat.save_coeffs(a_te, d, "test")
    _write_prov(d, "coeffs", own, {"basis": basis_hash})
    return rb, a_tr, a_te, own


def _hp(cfg: PipelineConfig, cell: Cell) -> emu.Hyperparams:
    e = cfg["emulator"]
    return emu.Hyperparams(
        n_cells=e["N_c"], epochs=e["epochs"], batch_size=e["batch"], lr=float(e["lr"]),
        dropout=float(e["dropout"]), seed=cell.seed,
        clip_norm=None if e["clip_norm"] is None else float(e["clip_norm"]),
    )


def _write_loss_csv(path: Path, ens: emu.EmulatorEnsemble) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        n = ens.n_networks
        w.writerow(["epoch"] + [f"net{i}_{k}" for i in range(n) for k in ("train", "heldout")])
        n_ep = len(ens.models[0].history["loss"]) if n else 0
        for ep in range(n_ep):
            row = [ep + 1]
            for m in ens.models:
                v = m.history["val_loss"]
                row += [repr(m.history["loss"][ep]), repr(v[ep]) if ep < len(v) else ""]
            w.writerow(row)


def _coeff_dir(cfg: PipelineConfig, cell: Cell, n_freq: int) -> Path:
    band = _band(cfg, cell, n_freq) if cell.kind == "spod" else (0, 0)
    return cfg.output_dir / f"coeffs_{cell.kind}_L{cell.L_r}_f{band[0]}-{band[1]}_{cfg['basis']['coeff_domain']}"


def run_train(cfg: PipelineConfig, cell: Cell, a_tr, a_te, coeff_hash: str, n_jobs: int = 1):
    d = cfg.output_dir / "cells" / cell.name / "model"
    e = cfg["emulator"]
    own = _hash(coeff_hash, {k: v for k, v in e.items() if k not in ("seed", "n_tauF")}, cell.n_tauF, cell.seed)
    prov = _read_prov(d)
    if prov is not None and prov["hash"] == own and (d / "hyperparams.json").exists():
        ens, _ = emu.load_ensemble(d)
        return ens, own
    t0 = time.perf_counter()
    ens = emu.train_ensemble(a_tr, _hp(cfg, cell), e["n_tauP"], cell.n_tauF, validation=a_te, n_jobs=n_jobs)
    train_time = time.perf_counter() - t0
    emu.save_ensemble(ens, d, extra={"train_seconds": train_time})
    _write_loss_csv(d / "loss.csv", ens)
    _write_prov(d, "model", own, {"coeffs": coeff_hash})
    return ens, own


def _dump_field(d: Path, name: str, v: np.ndarray, grid_shape: Optional[Tuple[int, int]]) -> None:
    np.save(d / f"{name}.npy", v)
    arr = v.reshape(grid_shape) if grid_shape is not None else v[:, None]
    np.savetxt(d / f"{name}.csv", arr, delimiter=",")


def _grid_shape(cfg: PipelineConfig, M: int) -> Optional[Tuple[int, int]]:
    d = cfg["data"]
    if d["synthetic"] is not None:
        s = d["synthetic"]
        if s["kind"] == "wavepacket":
            return s.get("n_r", 22), s.get("n_x", 88)
        return s.get("n_lat", 16), s.get("n_lon", 36)
    g = d["grid"] or {}
    if "lat" in g and "lon" in g and len(g["lat"]) * len(g["lon"]) == M:
        return len(g["lat"]), len(g["lon"])
    return None


def run_forecast(cfg: PipelineConfig, pd: PreparedData, basis, rb, cell: Cell, ens, a_te, model_hash: str,
                 dump_snapshot: Optional[int] = None) -> met.ErrorReport:
    """Predict over the test record, reconstruct, and write the cell's error report."""
    d = cfg.output_dir / "cells" / cell.name / "report"
    d.mkdir(parents=True, exist_ok=True)
    pred = emu.predict_over_test(ens, a_te)
    if cfg["basis"]["coeff_domain"] == "time":
        times = np.arange(pred.t0, pred.t0 + pred.n_time)
        truth = pd.test.values[:, times]
        proj = lat.reconstruct_time_domain(rb, a_te).values[:, times]
        fc = lat.reconstruct_time_domain(rb, pred).values
    else:
        truth, proj, fc, times = _frequency_fields(cfg, pd, basis, a_te, pred)
    report = met.error_report(truth, proj, fc)
    np.save(d / "predicted_coeffs.npy", pred.values)
    row = {"kind": cell.kind, "modes": cell.L_r, "freqs": _freq_count(cfg, cell, basis),
           "n_tauF": cell.n_tauF, "seed": cell.seed, **report.row()}
    met.write_errors_csv(d / "errors.csv", [row], append=False)
    (d / "summary.json").write_text(json.dumps({
        "report": {k: getattr(report, k) for k in ("projection", "learning", "total")},
        "n_snapshots": report.n_snapshots, "triangle_fraction": report.triangle_fraction,
        "first_test_index": int(times[0]), "imaginary_residue": lat.imaginary_residue(rb, a_te)
        if cfg["basis"]["coeff_domain"] == "time" else None,
        "compression_ratio": lat.compression_ratio(rb, rb.M),
    }, indent=2))
    if dump_snapshot is not None:
        hit = np.flatnonzero(times == dump_snapshot)
        if hit.size == 0:
            raise DataError(f"test snapshot {dump_snapshot} has no prediction (forecasts cover "
                            f"{int(times[0])}..{int(times[-1])})")
        j = int(hit[0])
        dd = d / f"snapshot_{dump_snapshot}"
        dd.mkdir(exist_ok=True)
        mean = 0.0 if cfg["report"]["fluctuations_only"] else pd.train.mean
        gs = _grid_shape(cfg, rb.M)
        for name, v in (("truth", truth[:, j]), ("projection", proj[:, j]), ("prediction", fc[:, j])):
            _dump_field(dd, name, v + mean, gs)
    _write_prov(d, "report", _hash(model_hash, dump_snapshot), {"model": model_hash})
    return report


def _freq_count(cfg, cell, basis) -> int:
    if cell.kind == "pod":
        return 0
    lo, hi = _band(cfg, cell, basis.n_freq)
    return hi - lo + 1


def _frequency_fields(cfg, pd, basis, a_te, pred):
    """Block-center snapshots of truth, projection and forecast for the frequency route."""
    p = basis.welch
    keep = sorted({k for _, k in a_te.index})
    full = lat.series_to_freq_coeffs(a_te, basis.n_freq, p)
    fcst = lat.series_to_freq_coeffs(pred, basis.n_freq, p)
    center = p.n_fft // 2
    blocks = np.arange(pred.t0, pred.t0 + pred.n_time)
    divide = cfg["report"]["reconstruction"] == "window-division"
    proj, fc = [], []
    for i, l in enumerate(blocks):
        proj.append(lat.reconstruct_frequency_domain(basis, full, keep, int(l), divide_window=divide)[:, center])
        fc.append(lat.reconstruct_frequency_domain(basis, fcst, keep, i, divide_window=divide)[:, center])
    times = blocks * p.stride + center
    return pd.test.values[:, times], np.stack(proj, 1), np.stack(fc, 1), times


def load_basis_stage(cfg: PipelineConfig, pd: PreparedData, kind: str):
    """Existing basis checked against the current data."""
    d = cfg.output_dir / f"basis_{kind}"
    if not (d / "meta.json").exists():
        raise DataError(f"no basis in {d}; run 'decompose' first")
    prov = _check_upstream(d, "data", pd.hash)
    return dec.load_basis(d), prov["hash"]


def load_coeffs_stage(cfg: PipelineConfig, cell: Cell, basis, basis_hash: str):
    """Existing coefficients checked against the current basis."""
    d = _coeff_dir(cfg, cell, basis.n_freq)
    if not (d / "train.npy").exists():
        raise DataError(f"no coefficients in {d}; run 'project' first")
    prov = _check_upstream(d, "basis", basis_hash)
    band = _band(cfg, cell, basis.n_freq) if cell.kind == "spod" else None
    rb = dec.select_band(basis, cell.L_r, *band) if band else dec.select_band(basis, cell.L_r)
    return rb, lat.load_coeffs(d, "train")[0], lat.load_coeffs(d, "test")[0], prov["hash"]


def load_model_stage(cfg: PipelineConfig, cell: Cell, coeff_hash: str):
    """Existing ensemble checked against the current coefficients."""
    d = cfg.output_dir / "cells" / cell.name / "model"
    if not (d / "hyperparams.json").exists():
        raise DataError(f"no trained model in {d}; run 'train' first")
    prov = _check_upstream(d, "coeffs", coeff_hash)
    return emu.load_ensemble(d)[0], prov["hash"]


def run_cell(cfg: PipelineConfig, pd: PreparedData, cell: Cell, n_jobs: int = 1,
             dump_snapshot: Optional[int] = None, bases: Optional[dict] = None) -> dict:
    bases = {} if bases is None else bases
    if cell.kind not in bases:
        bases[cell.kind] = run_decompose(cfg, pd, cell.kind, n_jobs)
    basis, bh = bases[cell.kind]
    rb, a_tr, a_te, ch = run_project(cfg, pd, basis, bh, cell)
    ens, mh = run_train(cfg, cell, a_tr, a_te, ch, n_jobs)
    report = run_forecast(cfg, pd, basis, rb, cell, ens, a_te, mh, dump_snapshot)
    return {"kind": cell.kind, "modes": cell.L_r, "freqs": _freq_count(cfg, cell, basis),
            "n_tauF": cell.n_tauF, "seed": cell.seed, **report.row(), "_report": report}


def run_sweep(cfg: PipelineConfig, n_jobs: int = 1, dump_snapshot: Optional[int] = None) -> List[dict]:
    """Run every cell and write ``errors.csv`` in cell order."""
    pd = prepare_data(cfg)
    cells = list(cfg.cells())
    bases: dict = {}
    for kind in dict.fromkeys(c.kind for c in cells):
        bases[kind] = run_decompose(cfg, pd, kind, n_jobs)
    if n_jobs > 1 and len(cells) > 1:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(run_cell)(cfg, pd, c, 1, dump_snapshot, bases) for c in cells
        )
    else:
        rows = [run_cell(cfg, pd, c, 1, dump_snapshot, bases) for c in cells]
    met.write_errors_csv(cfg.output_dir / "errors.csv", rows, append=False)
    return rows
