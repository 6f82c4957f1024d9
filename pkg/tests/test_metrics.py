"""Error metrics and the Mann-Whitney U test against enumeration oracles."""

import itertools
import math

import numpy as np
import pytest

from cascadefit.errors import DegenerateTargetError, DegenerateTestError
from cascadefit.metrics import (
    CascadeRow,
    ComparisonReport,
    fit_error,
    mann_whitney_u,
    mean_deviation,
    read_rows_csv,
)


class TestFitError:
    def test_identical(self):
        assert fit_error([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_zero_model(self):
        assert fit_error([0.0, 0.0], [3.0, 4.0]) == pytest.approx(1.0)

    def test_hand_computed(self):
        # ||[0,0,1]|| / ||[1,2,3]|| = 1/sqrt(14)
        assert fit_error([1.0, 2.0, 4.0], [1.0, 2.0, 3.0]) \
            == pytest.approx(1.0 / math.sqrt(14.0), rel=1e-12)

    def test_zero_target_degenerate(self):
        with pytest.raises(DegenerateTargetError):
            fit_error([1.0, 2.0], [0.0, 0.0])

    def test_scale_covariant(self):
        rng = np.random.default_rng(3)
        m = rng.uniform(0, 10, size=20)
        t = rng.uniform(1, 10, size=20)
        for c in (0.01, 3.0, 1e4):
            assert fit_error(c * m, c * t) == pytest.approx(fit_error(m, t), rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            fit_error([1.0], [1.0, 2.0])


class TestMeanDeviation:
    def test_identical(self):
        assert mean_deviation([5.0, 5.0], [5.0, 5.0]) == 0.0

    def test_simple(self):
        assert mean_deviation([0.0, 0.0], [2.0, 4.0]) == pytest.approx(3.0)

    def test_hand_computed(self):
        assert mean_deviation([1.0, 2.0, 4.0], [1.0, 2.0, 3.0]) \
            == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mean_deviation([1.0], [1.0, 2.0])


def oracle_u(sample_a, sample_b) -> float:
    """Pairwise-count definition of U_a, independent of rank-sum algebra."""
    u = 0.0
    for x in sample_a:
        for y in sample_b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u


def oracle_exact_p(sample_a, sample_b) -> float:
    """Two-sided exact p by full enumeration of group assignments."""
    pooled = list(sample_a) + list(sample_b)
    n_a = len(sample_a)
    mu = n_a * len(sample_b) / 2.0
    dev_obs = abs(oracle_u(sample_a, sample_b) - mu)
    hits = 0
    total = 0
    for idx in itertools.combinations(range(len(pooled)), n_a):
        chosen = set(idx)
        a = [pooled[i] for i in idx]
        b = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        total += 1
        if abs(oracle_u(a, b) - mu) >= dev_obs:
            hits += 1
    return hits / total


class TestMannWhitney:
    def test_complete_separation(self):
        res = mann_whitney_u([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
        assert res.u == 0.0

    def test_same_multiset_high_p(self):
        res = mann_whitney_u([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0])
        assert res.p > 0.9

    def test_hand_computed_example(self):
        res = mann_whitney_u([1.0, 2.0, 4.0, 5.0], [3.0, 6.0, 7.0, 8.0])
        assert res.u == 2.0
        assert res.method == "exact"
        assert res.p == pytest.approx(8.0 / 70.0, rel=1e-12)

    def test_pairwise_count_agreement(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a = rng.integers(0, 8, size=rng.integers(2, 12)).astype(float)
            b = rng.integers(0, 8, size=rng.integers(2, 12)).astype(float)
            if np.all(a[0] == np.concatenate([a, b])):
                continue
            res = mann_whitney_u(a, b)
            assert res.u == pytest.approx(oracle_u(a, b), abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(12)
        a = rng.normal(size=12)
        b = rng.normal(loc=0.8, size=15)
        res_ab = mann_whitney_u(a, b)
        res_ba = mann_whitney_u(b, a)
        assert res_ba.u == pytest.approx(len(a) * len(b) - res_ab.u)
        assert res_ba.p == pytest.approx(res_ab.p, rel=1e-12)

    def test_exact_matches_enumeration(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            a = rng.integers(0, 6, size=4).astype(float)
            b = rng.integers(0, 6, size=5).astype(float)
            if np.all(np.concatenate([a, b]) == a[0]):
                continue
            res = mann_whitney_u(a, b)
            assert res.method == "exact"
            assert res.p == pytest.approx(oracle_exact_p(a, b), rel=1e-12)

    def test_normal_path_monotone_in_z(self):
        rng = np.random.default_rng(14)
        base = rng.normal(size=30)
        results = []
        for shift in (0.1, 0.5, 1.0, 2.0):
            res = mann_whitney_u(base, base + shift)
            assert res.method == "normal"
            results.append(res)
        zs = [abs(r.z) for r in results]
        ps = [r.p for r in results]
        assert zs == sorted(zs)
        assert ps == sorted(ps, reverse=True)

    def test_degenerate(self):
        with pytest.raises(DegenerateTestError):
            mann_whitney_u([2.0, 2.0], [2.0, 2.0, 2.0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mann_whitney_u([], [1.0])

    def test_scipy_cross_check(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = np.random.default_rng(15)
        for _ in range(20):
            a = rng.normal(size=int(rng.integers(12, 30)))
            b = rng.normal(loc=rng.uniform(-1, 1), size=int(rng.integers(12, 30)))
            res = mann_whitney_u(a, b)
            ref = scipy_stats.mannwhitneyu(a, b, alternative="two-sided",
                                           method="asymptotic", use_continuity=True)
            assert res.u == pytest.approx(ref.statistic, abs=1e-9)
            assert res.p == pytest.approx(ref.pvalue, rel=1e-9)


def _rows():
    rng = np.random.default_rng(21)
    rows = []
    for i in range(12):
        sis = float(rng.uniform(0.2, 0.4))
        seiz = float(rng.uniform(0.1, 0.2))
        cd = float(rng.uniform(0.02, 0.1))
        rows.append(CascadeRow(
            cascade_id=f"c{i:03d}", size=int(rng.integers(10, 500)),
            errors={"sis": sis, "seiz": seiz, "cdseiz": cd},
            mean_devs={"sis": sis * 10, "seiz": seiz * 10, "cdseiz": cd * 10},
            status={"sis": "ok", "seiz": "ok", "cdseiz": "ok"},
        ))
    return rows


class TestComparisonReport:
    def test_summary_and_tests(self):
        report = ComparisonReport.from_rows(_rows())
        assert report.summary["cdseiz"]["median_error"] \
            < report.summary["seiz"]["median_error"] \
            < report.summary["sis"]["median_error"]
        primary = report.tests["seiz_vs_cdseiz"]
        assert primary["status"] == "ok"
        assert primary["extension"] is False
        assert 0.0 <= primary["p"] <= 1.0
        assert report.tests["sis_vs_seiz"]["extension"] is True

    def test_single_row_insufficient(self):
        report = ComparisonReport.from_rows(_rows()[:1])
        assert report.tests["seiz_vs_cdseiz"]["status"] == "insufficient sample"

    def test_failed_fits_excluded(self):
        rows = _rows()
        rows[0].errors["cdseiz"] = None
        rows[0].status["cdseiz"] = "failed: boom"
        report = ComparisonReport.from_rows(rows)
        assert report.summary["cdseiz"]["n_ok"] == len(rows) - 1
        assert report.summary["cdseiz"]["n_failed"] == 1
        assert report.tests["seiz_vs_cdseiz"]["n_a"] == len(rows) - 1

    def test_csv_round_trip(self, tmp_path):
        report = ComparisonReport.from_rows(_rows())
        path = tmp_path / "rows.csv"
        report.write_csv(path)
        rows2 = read_rows_csv(path)
        assert [r.cascade_id for r in rows2] == [r.cascade_id for r in report.rows]
        for r1, r2 in zip(report.rows, rows2):
            for name in ("sis", "seiz", "cdseiz"):
                assert r2.errors[name] == pytest.approx(r1.errors[name], rel=1e-15)

    def test_histogram(self, tmp_path):
        report = ComparisonReport.from_rows(_rows())
        path = tmp_path / "hist.csv"
        report.write_histogram_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "bin_lo,bin_hi,count_sis,count_seiz,count_cdseiz"
        assert len(lines) == 1 + 100 + 1  # header + bins + overflow
        body = [ln.split(",") for ln in lines[1:]]
        for col in (2, 3, 4):
            assert sum(int(r[col]) for r in body) == len(report.rows)
        assert body[-1][0] == "0.500"
        assert body[-1][1] == "inf"

    def test_json_summary(self, tmp_path):
        report = ComparisonReport.from_rows(_rows(), metadata={"seed": 1})
        path = tmp_path / "summary.json"
        report.write_json(path)
        import json
        obj = json.loads(path.read_text())
        assert obj["n_cascades"] == 12
        assert obj["metadata"]["seed"] == 1
        assert "sidedness" in obj["metadata"]
