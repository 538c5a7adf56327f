from types import SimpleNamespace

import numpy as np
import pytest

from qcanvas.labels import assemble_labels
from qcanvas.stats import (
    NoDataError,
    UnknownElementError,
    bin_counts,
    build_report,
    channel_statistics,
    group_aggregate,
    pearson_matrix,
    summarize,
)


def test_summary_quartiles():
    s = summarize([1, 2, 3, 4])
    assert (s.mean, s.median, s.q1, s.q3) == (2.5, 2.5, 1.75, 3.25)
    assert s.std == pytest.approx(np.sqrt(1.25), abs=1e-15)


def test_summary_singleton_and_skewed():
    s = summarize([7.0])
    assert (s.mean, s.median, s.std) == (7.0, 7.0, 0.0)
    assert summarize([0, 0, 0, 1]).median == 0


def test_summary_excludes_sentinels():
    assert summarize([1.0, None, 3.0]).count == 2
    with pytest.raises(NoDataError):
        summarize([None])


def test_pearson_basic():
    x = [1.0, 2.0, 3.0]
    res = pearson_matrix({"x": x, "neg": [-v for v in x], "y": [1.0, 2.0, 4.0]})
    m = dict(zip(res.names, range(3)))
    assert res.matrix[m["x"], m["x"]] == 1.0
    assert res.matrix[m["x"], m["neg"]] == pytest.approx(-1.0, abs=1e-15)
    assert res.matrix[m["x"], m["y"]] == pytest.approx(0.981981, abs=1e-6)
    assert res.matrix[m["x"], m["y"]] == pytest.approx(3 / np.sqrt(2 * 14 / 3), abs=1e-15)


def test_pearson_exclusions():
    res = pearson_matrix({"a": [1.0, 2.0, 3.0], "c": [5.0, 5.0, 5.0], "n": [None, 1.0, None]})
    assert res.names == ["a"] and res.zero_variance == ["c"] and res.too_few == ["n"]


def test_pearson_pairwise_complete():
    res = pearson_matrix({"a": [1.0, 2.0, 3.0, 4.0], "b": [2.0, None, 6.0, 8.0]})
    assert res.matrix[0, 1] == pytest.approx(1.0, abs=1e-15)


def _row(a, b, gap, r=2.0):
    return SimpleNamespace(elem_a=a, elem_b=b, e_g=gap, bond_r=r)


GROUPS = {"Li": "alkali", "Na": "alkali", "F": "halogen", "Cl": "halogen"}


def test_group_aggregate():
    out = group_aggregate([_row("Li", "Li", 0.0), _row("Na", "Na", 0.0)], GROUPS)
    assert out["alkali|alkali"].count == 2 and out["alkali|alkali"].mean_gap == 0.0
    out = group_aggregate([_row("Li", "F", 1.0), _row("Cl", "Na", 2.0), _row("F", "Li", 6.0)], GROUPS)
    assert list(out) == ["alkali|halogen"] and out["alkali|halogen"].mean_gap == 3.0


def test_group_unknown_element():
    with pytest.raises(UnknownElementError):
        group_aggregate([_row("Li", "Xx", 1.0)], GROUPS)


def test_bins():
    assert bin_counts([1.5, 2.5, 3.5], (2, 3), ("a", "b", "c")) == {"a": 1, "b": 1, "c": 1}
    assert bin_counts([], (2, 3), ("a", "b", "c")) == {"a": 0, "b": 0, "c": 0}
    assert bin_counts([2.0], (2, 3), ("a", "b", "c"))["b"] == 1
    with pytest.raises(ValueError):
        bin_counts([1.0], (3, 2), ("a", "b", "c"))


def test_channel_stats():
    mean, std = channel_statistics([np.zeros((10, 32, 32))])
    assert not mean.any() and not std.any()
    t = np.zeros((10, 32, 32))
    t[0] = 0.7
    mean, std = channel_statistics([t])
    assert mean[0] == pytest.approx(0.7, abs=1e-15) and std[0] == pytest.approx(0.0, abs=1e-15)
    t2 = np.zeros((10, 32, 32))
    t2[0] = 2.0
    mean, std = channel_statistics([np.zeros((10, 32, 32)), t2])
    assert (mean[0], std[0]) == (1.0, 1.0)


def test_channel_stats_order_invariant(rng):
    ts = [rng.normal(loc=k, size=(10, 32, 32)) for k in range(6)]
    m1, s1 = channel_statistics(ts)
    m2, s2 = channel_statistics(ts[::-1])
    stacked = np.stack(ts).transpose(1, 0, 2, 3).reshape(10, -1)
    assert np.allclose(m1, m2, atol=1e-12, rtol=0) and np.allclose(s1, s2, atol=1e-12, rtol=0)
    assert np.allclose(m1, stacked.mean(axis=1), atol=1e-12) and np.allclose(s1, stacked.std(axis=1), atol=1e-12)


def test_build_report(sample_records):
    labels = [assemble_labels(r) for r in sample_records]
    rep = build_report(labels).to_dict()
    assert "channel_stats" not in rep and "group_pairs" not in rep
    assert rep["n_records"] == len(labels)
    assert sum(rep["bins"]["bond_r"].values()) == len(labels)
    assert rep["summaries"]["e_g"]["count"] == len(labels)
