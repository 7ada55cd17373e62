import json
import math
import statistics

import numpy as np
import pytest

from lntune import PF
from lntune.circuit import load_from_optimal_caps
from lntune.dataset import GridSpec, LoadSample, generate_pool, stratified_split
from lntune.evaluation import (
    RESULTS_HEADER,
    ResultsFormatError,
    cap_error_stats,
    cap_relative_errors,
    ecdf,
    ecdf_at,
    exploration_sweep,
    landscape_grid,
    per_frequency_stats,
    read_results,
    summary_stats,
    write_report,
    write_results,
)
from lntune.nn import MlpSpec, init_weights
from lntune.records import TuningResult


def result(sid, g, steps=5, method="agent", eps=0.0, cp=11 * PF, cs=11 * PF, wt=0.001):
    return TuningResult(sid, method, eps, g, steps, g < 0.01, wt, cp, cs)


class TestEcdf:
    def test_small_examples(self):
        assert ecdf_at([0.1, 0.2, 0.3], 0.2) == pytest.approx(2 / 3)
        assert ecdf_at([0.1, 0.2, 0.3], 0.05) == 0.0
        assert ecdf_at([0.1, 0.2, 0.3], 0.5) == 1.0
        assert ecdf_at([0.1, 0.2, 0.3], math.inf) == 1.0

    def test_right_continuous_with_ties(self):
        e = ecdf([0.3, 0.1, 0.1, 0.2])
        assert e(0.1) == 0.5
        assert e(0.1 - 1e-12) == 0.0
        assert e.points() == [(0.1, 0.5), (0.2, 0.75), (0.3, 1.0)]

    def test_monotone(self):
        vals = np.random.default_rng(0).exponential(size=500)
        e = ecdf(vals)
        xs = np.linspace(-1, 10, 1000)
        ys = e(xs)
        assert np.all(np.diff(ys) >= 0)
        assert ys[0] == 0.0 and ys[-1] == 1.0

    def test_rejects_empty_and_nan(self):
        with pytest.raises(ValueError):
            ecdf([])
        with pytest.raises(ValueError):
            ecdf([0.1, math.nan])


class TestSummaryStats:
    def test_small(self):
        mean, median, sd = summary_stats([1, 2, 3])
        assert (mean, median) == (2.0, 2.0)
        assert sd == pytest.approx(math.sqrt(2 / 3))

    def test_constant(self):
        assert summary_stats([0.4] * 7)[2] == 0.0

    def test_even_median_midpoint(self):
        assert summary_stats([1, 2, 3, 10])[1] == 2.5

    def test_against_statistics_module(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            vals = rng.exponential(scale=0.05, size=int(rng.integers(1, 60))).tolist()
            mean, median, sd = summary_stats(vals)
            assert mean == pytest.approx(statistics.fmean(vals), rel=1e-12)
            assert median == pytest.approx(statistics.median(vals), rel=1e-12)
            assert sd == pytest.approx(statistics.pstdev(vals), rel=1e-12, abs=1e-15)


class TestPerFrequency:
    def test_constant_groups(self):
        res = [result(i, 0.2 if i < 3 else 0.5, steps=4) for i in range(6)]
        freqs = {i: (1e9 if i < 3 else 2e9) for i in range(6)}
        stats = per_frequency_stats(res, freqs)
        assert [s.f for s in stats] == [1e9, 2e9]
        assert [s.n for s in stats] == [3, 3]
        assert all(s.sd_gamma == 0 and s.sd_steps == 0 for s in stats)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(1)
        fs = [1e9, 1.3e9, 1.6e9, 2e9]
        freqs = {i: fs[int(rng.integers(4))] for i in range(300)}
        res = [result(i, float(rng.uniform()), steps=int(rng.integers(1, 200))) for i in range(300)]
        stats = per_frequency_stats(res, freqs)
        assert sum(s.n for s in stats) == 300
        for s in stats:
            g = [r.final_gamma for r in res if freqs[r.sample_id] == s.f]
            k = [r.steps for r in res if freqs[r.sample_id] == s.f]
            assert s.n == len(g)
            assert s.mean_gamma == pytest.approx(statistics.fmean(g), rel=1e-12)
            assert s.sd_gamma == pytest.approx(statistics.pstdev(g), rel=1e-12)
            assert s.mean_steps == pytest.approx(statistics.fmean(k), rel=1e-12)


class TestCapErrors:
    def _sample(self, sid=0):
        return LoadSample(sid, 1e9, load_from_optimal_caps(11 * PF, 11 * PF, 1e9), 11 * PF, 11 * PF)

    def test_exact_gives_zero(self):
        cp_e, cs_e = cap_relative_errors([result(0, 0.0)], [self._sample()])
        assert cp_e.tolist() == [0.0] and cs_e.tolist() == [0.0]

    def test_half_step_error(self):
        cp_e, _ = cap_relative_errors([result(0, 0.01, cp=11.5 * PF)], [self._sample()])
        assert cp_e[0] == pytest.approx(0.5 / 11, rel=1e-12)

    def test_ecdf_and_nan_skip(self):
        res = [result(0, 0.0), result(1, 0.3, method="none", cp=math.nan, cs=math.nan)]
        cp_ecdf, _ = cap_error_stats(res, [self._sample(0), self._sample(1)])
        assert len(cp_ecdf.values) == 1


class TestLandscape:
    caps = np.arange(0.5, 21.0 + 1e-9, 0.5) * PF

    def test_argmin_at_generating_pair(self):
        for f in (1e9, 2e9):
            zl = load_from_optimal_caps(11 * PF, 11 * PF, f)
            land = landscape_grid(zl, f, self.caps)
            assert land.argmin == (pytest.approx(11 * PF), pytest.approx(11 * PF))
            assert land.gamma.shape == (42, 42)

    def test_higher_frequency_is_steeper(self):
        s1 = landscape_grid(load_from_optimal_caps(11 * PF, 11 * PF, 1e9), 1e9, self.caps)
        s2 = landscape_grid(load_from_optimal_caps(11 * PF, 11 * PF, 2e9), 2e9, self.caps)
        assert s2.max_steepness > s1.max_steepness

    def test_pure(self):
        zl = 20 + 30j
        a = landscape_grid(zl, 1.4e9, self.caps).gamma
        b = landscape_grid(zl, 1.4e9, self.caps).gamma
        np.testing.assert_array_equal(a, b)


def _toy_test_pool():
    grid = GridSpec(cap_min=9 * PF, cap_max=13 * PF, cap_step=1 * PF,
                    f_min=1e9, f_max=1.5e9, f_step=0.5e9)
    return [s for s in stratified_split(generate_pool(grid), grid) if s.split == "test"]


class TestExplorationSweep:
    def test_rows_in_input_order(self):
        w = init_weights(MlpSpec((6, 16, 16, 8)), 0)
        pool = _toy_test_pool()
        rows, res = exploration_sweep(w, pool, [0.3, 0.0, 0.1], seed=1, max_steps=20)
        assert [r.eps_test for r in rows] == [0.3, 0.0, 0.1]
        assert all(r.n == len(pool) for r in rows)
        assert len(res) == 3 * len(pool)

    def test_greedy_row_ignores_seed(self):
        w = init_weights(MlpSpec((6, 16, 16, 8)), 0)
        pool = _toy_test_pool()
        a, _ = exploration_sweep(w, pool, [0.0, 0.2], seed=1, max_steps=20)
        b, _ = exploration_sweep(w, pool, [0.0, 0.2], seed=2, max_steps=20)
        assert (a[0].mean, a[0].sd) == (b[0].mean, b[0].sd)

    def test_parallel_matches_serial(self):
        w = init_weights(MlpSpec((6, 16, 16, 8)), 0)
        pool = _toy_test_pool()
        _, serial = exploration_sweep(w, pool, [0.2], seed=3, max_steps=20)
        _, par = exploration_sweep(w, pool, [0.2], seed=3, max_steps=20, jobs=2)
        assert [(r.sample_id, r.final_gamma, r.steps) for r in serial] == \
            [(r.sample_id, r.final_gamma, r.steps) for r in par]


class TestResultsFile:
    def test_round_trip_and_append(self, tmp_path):
        path = tmp_path / "r.csv"
        first = [result(0, 0.005), result(1, 0.5, method="none", cp=math.nan, cs=math.nan)]
        write_results(first, path)
        write_results([result(2, 0.02, method="sapso")], path, append=True)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(RESULTS_HEADER)
        assert len(lines) == 4
        back = read_results(path)
        assert [r.sample_id for r in back] == [0, 1, 2]
        assert back[0].final_gamma == 0.005 and back[0].success
        assert back[0].final_cp == pytest.approx(11 * PF, rel=1e-15)
        assert math.isnan(back[1].final_cp)

    def test_bad_row(self, tmp_path):
        path = tmp_path / "r.csv"
        write_results([result(0, 0.1)], path)
        path.write_text(path.read_text() + "x,agent,0,0,0,0,0,0,0\n")
        with pytest.raises(ResultsFormatError, match="line 3"):
            read_results(path)


class TestReport:
    def test_bundle(self, tmp_path):
        pool = _toy_test_pool()
        res = [result(s.sample_id, 0.001 * (i + 1), cp=s.cp_opt, cs=s.cs_opt * 1.02)
               for i, s in enumerate(pool)]
        res += [result(s.sample_id, 0.3, method="none", cp=math.nan, cs=math.nan) for s in pool]
        summary = write_report(res, tmp_path, pool)
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["cap_error_ecdf_agent@0.csv", "ecdf_agent@0.csv", "ecdf_none.csv",
                         "exploration.csv", "per_frequency.csv", "summary.csv", "summary.json"]
        on_disk = json.loads((tmp_path / "summary.json").read_text())
        assert on_disk == json.loads(json.dumps(summary))
        agent = on_disk["groups"]["agent@0"]
        assert agent["n"] == len(pool)
        assert agent["cp_err_below_1pct"] == 1.0 and agent["cs_err_below_1pct"] == 0.0
        assert on_disk["groups"]["none"]["below_0p2"] == 0.0
        assert len(on_disk["exploration"]) == 1
