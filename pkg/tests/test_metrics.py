import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from spodrom.exceptions import DataError, ShapeMismatchError
from spodrom.metrics import ERROR_COLUMNS, error_fields, error_report, summarize, write_errors_csv

finite = st.floats(-1e3, 1e3, allow_nan=False)
mats = arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 12)), elements=finite)


def test_summarize_hand_example():
    s = summarize(np.array([[3.0], [-4.0]]))
    assert s == {"L1": 3.5, "L2": 2.5, "Linf": 4.0}


def test_error_fields_examples(rng):
    q = rng.standard_normal((5, 4))
    assert np.all(error_fields(q, q) == 0)
    np.testing.assert_array_equal(error_fields(q, np.zeros_like(q)), -q)
    h = rng.standard_normal((5, 4))
    np.testing.assert_array_equal(error_fields(q, h), h - q)
    with pytest.raises(ShapeMismatchError):
        error_fields(q, h[:, :3])
    with pytest.raises(DataError):
        summarize(np.zeros((0, 3)))


def test_magnitude_of_norm_convention():
    e = np.full((1936, 3), 3e-3)
    s = summarize(e)
    assert s["L2"] == pytest.approx(3e-3 / np.sqrt(1936))
    assert s["L1"] == pytest.approx(3e-3)


@settings(max_examples=60, deadline=None)
@given(mats, st.integers(0, 2**31 - 1))
def test_triangle_inequality_always_holds(truth, seed):
    r = np.random.default_rng(seed)
    proj = truth + r.standard_normal(truth.shape)
    pred = proj + r.standard_normal(truth.shape)
    rep = error_report(truth, proj, pred)
    assert rep.triangle_ok
    assert rep.total["L2"] <= rep.projection["L2"] + rep.learning["L2"] + 1e-12 * (1 + rep.total["L2"])
    assert all(v >= 0 for k in ("projection", "learning", "total") for v in getattr(rep, k).values())


@settings(max_examples=60, deadline=None)
@given(mats, st.randoms(use_true_random=False))
def test_summary_invariant_to_snapshot_order(e, rnd):
    perm = list(range(e.shape[1]))
    rnd.shuffle(perm)
    a, b = summarize(e), summarize(e[:, perm])
    for k in a:
        assert a[k] == pytest.approx(b[k], rel=1e-12, abs=1e-300)
    assert a["L2"] <= a["L1"] * (1 + 1e-12) + 1e-300


def test_report_edge_cases(rng):
    q = rng.standard_normal((6, 5))
    perfect_learner = error_report(q, q + 0.1, q + 0.1)
    assert perfect_learner.learning["L2"] == 0
    assert perfect_learner.total == perfect_learner.projection
    perfect_basis = error_report(q, q, q - 0.2)
    assert perfect_basis.projection["L2"] == 0
    assert perfect_basis.total == perfect_basis.learning
    row = perfect_learner.row()
    assert set(row) == {c for c in ERROR_COLUMNS if "_" in c and c != "n_tauF"}


def test_errors_csv(tmp_path):
    row = {c: 0.1 for c in ERROR_COLUMNS}
    row.update(kind="pod", modes=10, freqs=1, n_tauF=1, seed=0, proj_L2=1 / 3)
    path = tmp_path / "errors.csv"
    write_errors_csv(path, [row], append=False)
    write_errors_csv(path, [row])
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 2 and tuple(rows[0]) == ERROR_COLUMNS
    assert float(rows[1]["proj_L2"]) == 1 / 3
    with pytest.raises(DataError):
        write_errors_csv(path, [{"kind": "pod"}])
