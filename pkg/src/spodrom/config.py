"""Pipeline configuration: one strict JSON document.

Unknown keys anywhere are errors. Sweepable fields (``basis.kind``,
``basis.L_r``, ``basis.n_freqs``, ``emulator.n_tauF``, ``emulator.seed``) accept
a list; :meth:`PipelineConfig.cells` expands the cross product.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

from .exceptions import ConfigError

__all__ = ["DEFAULTS", "PipelineConfig", "load_config", "Cell"]

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "data": {
        "path": None,
        "layout": None,
        "n_vars": 1,
        "dt": 1.0,
        "grid": None,
        "weights": "uniform",
        "synthetic": None,
    },
    "split": {"train_fraction": 0.8},
    "welch": {"n_fft": 64, "overlap": 0.5, "window": "hamming", "normalize_window": True},
    "basis": {
        "kind": "spod",
        "L_r": 10,
        "flb": None,
        "fub": None,
        "n_freqs": None,
        "coeff_domain": "time",
    },
    "emulator": {
        "N_c": 25,
        "epochs": 130,
        "batch": 32,
        "lr": 1e-3,
        "dropout": 0.15,
        "clip_norm": 1.0,
        "n_tauP": 60,
        "n_tauF": 1,
        "seed": 0,
    },
    "report": {"fluctuations_only": False, "reconstruction": "window-division"},
    "output": {"dir": "spodrom_run"},
}

SYNTHETIC_KEYS = {"kind", "seed", "n_time", "noise_level", "n_lat", "n_lon", "n_x", "n_r"}
SWEEPABLE = {("basis", "kind"), ("basis", "L_r"), ("basis", "n_freqs"), ("emulator", "n_tauF"), ("emulator", "seed")}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _merge(raw: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    out = copy.deepcopy(DEFAULTS)
    for sec, body in raw.items():
        if not isinstance(body, dict):
            raise ConfigError(f"section '{sec}' must be an object")
        bad = set(body) - set(DEFAULTS[sec])
        if bad:
            raise ConfigError(f"unknown keys in '{sec}': {sorted(bad)}")
        out[sec].update(body)
    return out


@dataclass(frozen=True)
class Cell:
    """One point of a sweep."""

    kind: str
    L_r: int
    n_freqs: Optional[int]
    n_tauF: int
    seed: int

    @property
    def name(self) -> str:
        f = "all" if self.n_freqs is None else str(self.n_freqs)
        return f"{self.kind}_L{self.L_r}_f{f}_F{self.n_tauF}_s{self.seed}"


class PipelineConfig:
    """Validated configuration. ``sections`` holds the merged JSON document."""

    def __init__(self, raw: Dict[str, Any], base_dir: Optional[Path] = None):
        self.sections = _merge(raw)
        self.base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        self._validate()

    def __getitem__(self, key):
        return self.sections[key]

    # -- validation -----------------------------------------------------
    def _values(self, sec: str, key: str) -> List[Any]:
        v = self.sections[sec][key]
        if isinstance(v, list):
            if (sec, key) not in SWEEPABLE:
                raise ConfigError(f"{sec}.{key} does not accept a list")
            if not v:
                raise ConfigError(f"{sec}.{key} sweep list is empty")
            return v
        return [v]

    def _validate(self) -> None:
        d = self.sections["data"]
        if (d["path"] is None) == (d["synthetic"] is None):
            raise ConfigError("data needs exactly one of 'path' or 'synthetic'")
        if d["path"] is not None:
            p = self.data_path
            if not p.exists():
                raise ConfigError(f"data.path does not exist: {p}")
        else:
            syn = d["synthetic"]
            if not isinstance(syn, dict) or syn.get("kind") not in ("wavepacket", "latlon"):
                raise ConfigError("data.synthetic.kind must be 'wavepacket' or 'latlon'")
            bad = set(syn) - SYNTHETIC_KEYS
            if bad:
                raise ConfigError(f"unknown keys in data.synthetic: {sorted(bad)}")
        if not _is_int(d["n_vars"]) or d["n_vars"] < 1:
            raise ConfigError("data.n_vars must be a positive integer")
        if not isinstance(d["dt"], (int, float)) or d["dt"] <= 0:
            raise ConfigError("data.dt must be positive")
        if d["weights"] not in ("uniform", "spherical"):
            raise ConfigError("data.weights must be 'uniform' or 'spherical'")
        if d["weights"] == "spherical" and d["synthetic"] is None:
            g = d["grid"] or {}
            if "lat" not in g or "lon" not in g:
                raise ConfigError("spherical weights need data.grid with 'lat' and 'lon'")
        tf = self.sections["split"]["train_fraction"]
        if not isinstance(tf, (int, float)) or not 0 < tf < 1:
            raise ConfigError("split.train_fraction must be in (0, 1)")
        w = self.sections["welch"]
        if not _is_int(w["n_fft"]) or w["n_fft"] < 2:
            raise ConfigError("welch.n_fft must be an integer >= 2")
        if not isinstance(w["overlap"], (int, float)) or not 0 <= w["overlap"] < 1:
            raise ConfigError("welch.overlap must be in [0, 1)")
        if w["window"] not in ("hamming", "boxcar"):
            raise ConfigError("welch.window must be 'hamming' or 'boxcar'")
        b = self.sections["basis"]
        for kind in self._values("basis", "kind"):
            if kind not in ("spod", "pod"):
                raise ConfigError(f"basis.kind must be 'spod' or 'pod', got {kind!r}")
        for L in self._values("basis", "L_r"):
            if not _is_int(L) or L < 1:
                raise ConfigError(f"basis.L_r must be a positive integer, got {L!r}")
        n_f = w["n_fft"] // 2 + 1
        flb = 0 if b["flb"] is None else b["flb"]
        for key in ("flb", "fub"):
            v = b[key]
            if v is not None and (not _is_int(v) or not 0 <= v < n_f):
                raise ConfigError(f"basis.{key} must be an integer in 0..{n_f - 1}")
        if b["fub"] is not None and b["fub"] < flb:
            raise ConfigError(f"basis band flb={flb} > fub={b['fub']}")
        if b["fub"] is not None and b["n_freqs"] is not None:
            raise ConfigError("give basis.fub or basis.n_freqs, not both")
        for nf in self._values("basis", "n_freqs"):
            if nf is not None and (not _is_int(nf) or nf < 1 or flb + nf > n_f):
                raise ConfigError(f"basis.n_freqs={nf!r} does not fit in {n_f} bins from flb={flb}")
        if b["coeff_domain"] not in ("time", "frequency"):
            raise ConfigError("basis.coeff_domain must be 'time' or 'frequency'")
        if b["coeff_domain"] == "frequency" and "pod" in self._values("basis", "kind"):
            raise ConfigError("frequency-domain coefficients require basis.kind='spod'")
        e = self.sections["emulator"]
        for key in ("N_c", "batch", "n_tauP"):
            if not _is_int(e[key]) or e[key] < 1:
                raise ConfigError(f"emulator.{key} must be a positive integer")
        if not _is_int(e["epochs"]) or e["epochs"] < 0:
            raise ConfigError("emulator.epochs must be a nonnegative integer")
        if not isinstance(e["lr"], (int, float)) or e["lr"] <= 0:
            raise ConfigError("emulator.lr must be positive")
        if not isinstance(e["dropout"], (int, float)) or not 0 <= e["dropout"] < 1:
            raise ConfigError("emulator.dropout must be in [0, 1)")
        if e["clip_norm"] is not None and (not isinstance(e["clip_norm"], (int, float)) or e["clip_norm"] <= 0):
            raise ConfigError("emulator.clip_norm must be positive or null")
        for h in self._values("emulator", "n_tauF"):
            if not _is_int(h) or h < 1:
                raise ConfigError(f"emulator.n_tauF must be a positive integer, got {h!r}")
        for s in self._values("emulator", "seed"):
            if not _is_int(s) or s < 0:
                raise ConfigError(f"emulator.seed must be a nonnegative integer, got {s!r}")
        r = self.sections["report"]
        if r["reconstruction"] not in ("window-division", "overlap-add"):
            raise ConfigError("report.reconstruction must be 'window-division' or 'overlap-add'")
        if not isinstance(r["fluctuations_only"], bool):
            raise ConfigError("report.fluctuations_only must be a boolean")
        if not isinstance(self.sections["output"]["dir"], str):
            raise ConfigError("output.dir must be a string")

    # -- accessors ------------------------------------------------------
    @property
    def data_path(self) -> Path:
        p = Path(self.sections["data"]["path"])
        return p if p.is_absolute() else self.base_dir / p

    @property
    def output_dir(self) -> Path:
        p = Path(self.sections["output"]["dir"])
        return p if p.is_absolute() else self.base_dir / p

    def is_sweep(self) -> bool:
        return any(isinstance(self.sections[s][k], list) for s, k in SWEEPABLE)

    def cells(self) -> Iterator[Cell]:
        """Cross product of the sweepable fields, in a fixed order."""
        grid = itertools.product(
            self._values("basis", "kind"),
            self._values("basis", "L_r"),
            self._values("basis", "n_freqs"),
            self._values("emulator", "n_tauF"),
            self._values("emulator", "seed"),
        )
        for kind, L_r, nf, h, seed in grid:
            yield Cell(kind, L_r, None if kind == "pod" else nf, h, seed)

    def with_overrides(self, **sections) -> "PipelineConfig":
        raw = copy.deepcopy(self.sections)
        for sec, body in sections.items():
            raw[sec].update(body)
        return PipelineConfig(raw, self.base_dir)

    def section_hash(self, *names: str) -> str:
        blob = json.dumps({n: self.sections[n] for n in names}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self) -> str:
        return json.dumps(self.sections, indent=2, sort_keys=True)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return PipelineConfig(raw, base_dir=path.parent)
