import csv
import json
import shutil

import numpy as np
import pytest

from spodrom.cli import main
from spodrom.datasets import make_wavepacket_field


def _config(tmp_path, **sections):
    raw = {
        "data": {"synthetic": {"kind": "wavepacket", "n_x": 8, "n_r": 3, "n_time": 300, "seed": 2}},
        "welch": {"n_fft": 32, "overlap": 0.5},
        "basis": {"kind": "spod", "L_r": 2, "n_freqs": 4},
        "emulator": {"N_c": 4, "epochs": 2, "n_tauP": 8, "n_tauF": 1, "seed": 0},
        "output": {"dir": "out"},
    }
    for sec, body in sections.items():
        raw.setdefault(sec, {}).update(body)
    p = tmp_path / "run.json"
    p.write_text(json.dumps(raw))
    return p


def test_staged_commands(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert main(["decompose", "--config", str(cfg)]) == 0
    assert "14 blocks x 17 frequencies" in capsys.readouterr().out
    assert main(["project", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg)]) == 0
    assert main(["forecast", "--config", str(cfg), "--dump-snapshot", "20"]) == 0
    out = capsys.readouterr().out
    assert "projection" in out and "learning" in out
    cell = tmp_path / "out" / "cells" / "spod_L2_f4_F1_s0"
    rows = list(csv.reader((cell / "model" / "loss.csv").open()))
    assert rows[0] == ["epoch", "net0_train", "net0_heldout", "net1_train", "net1_heldout"]
    assert len(rows) == 3
    dump = cell / "report" / "snapshot_20"
    for name in ("truth", "projection", "prediction"):
        assert np.loadtxt(dump / f"{name}.csv", delimiter=",").shape == (3, 8)
    assert main(["forecast", "--config", str(cfg), "--dump-snapshot", "2"]) == 3


def test_missing_stage_and_bad_config(tmp_path):
    cfg = _config(tmp_path)
    assert main(["train", "--config", str(cfg)]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"data": {"synthetic": {"kind": "wavepacket"}}, "welch": {"nfft": 3}}))
    assert main(["pipeline", "--config", str(bad)]) == 2
    assert main(["pipeline", "--config", str(tmp_path / "nope.json")]) == 2
    sweep = _config(tmp_path, emulator={"seed": [0, 1]})
    assert main(["pipeline", "--config", str(sweep)]) == 2


def test_provenance_mismatch(tmp_path):
    q = make_wavepacket_field(n_x=8, n_r=3, n_time=300, seed=2)
    np.save(tmp_path / "q.npy", q.values)
    cfg = _config(tmp_path, data={"path": "q.npy", "synthetic": None})
    assert main(["decompose", "--config", str(cfg)]) == 0
    np.save(tmp_path / "q.npy", q.values * 1.5)
    assert main(["project", "--config", str(cfg)]) == 5


def test_pipeline_deterministic_and_rebuilds(tmp_path):
    cfg = _config(tmp_path, basis={"kind": "pod", "L_r": 2, "n_freqs": None})
    args = ["pipeline", "--config", str(cfg), "--single-thread"]
    assert main(args) == 0
    first = (tmp_path / "out" / "errors.csv").read_bytes()
    shutil.rmtree(tmp_path / "out")
    assert main(args) == 0
    assert (tmp_path / "out" / "errors.csv").read_bytes() == first
    shutil.rmtree(tmp_path / "out" / "basis_pod")
    assert main(args) == 0
    assert (tmp_path / "out" / "errors.csv").read_bytes() == first


def test_sweep_rows_in_cell_order(tmp_path):
    cfg = _config(tmp_path, basis={"kind": ["pod", "spod"]}, emulator={"n_tauF": [1, 2], "epochs": 1})
    assert main(["sweep", "--config", str(cfg)]) == 0
    rows = list(csv.DictReader((tmp_path / "out" / "errors.csv").open()))
    assert [(r["kind"], r["n_tauF"]) for r in rows] == [("pod", "1"), ("pod", "2"), ("spod", "1"), ("spod", "2")]
    assert all(float(r["total_L2"]) <= float(r["proj_L2"]) + float(r["learn_L2"]) + 1e-15 for r in rows)


def test_frequency_domain_pipeline(tmp_path):
    cfg = _config(tmp_path, welch={"n_fft": 16, "overlap": 0.75},
                  basis={"coeff_domain": "frequency", "L_r": 2, "n_freqs": 3},
                  emulator={"n_tauP": 4})
    assert main(["pipeline", "--config", str(cfg)]) == 0
    rows = list(csv.DictReader((tmp_path / "out" / "errors.csv").open()))
    assert rows[0]["freqs"] == "3" and float(rows[0]["proj_L2"]) > 0


def test_epochs_zero_warns(tmp_path):
    cfg = _config(tmp_path, emulator={"epochs": 0})
    with pytest.warns(UserWarning, match="epochs=0"):
        assert main(["pipeline", "--config", str(cfg)]) == 0
