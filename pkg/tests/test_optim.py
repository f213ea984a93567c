"""Optimizer tests against the analytical evaluator and plumbing stubs."""

from __future__ import annotations

import numpy as np
import pytest

from dabdesign.fixtures import fixture_converter
from dabdesign.optim import (
    GaConfig,
    InfeasibleTargetError,
    ObjectiveSpec,
    OracleEvaluator,
    PsoConfig,
    SearchSpace,
    compare_strategies,
    evaluate_candidate,
    fitness_from_metrics,
    ga_optimize,
    grid_search,
    landscape_to_csv,
    match_sps_power,
    pso_optimize,
    sample_landscape,
)
from dabdesign.physics import (
    ModulationParams,
    PerformanceMetrics,
    SamplingGrid,
    Strategy,
    sps,
    sps_average_power,
    sps_shift_for_power,
)
from dabdesign.surrogate import OperatingPoint

CP = fixture_converter()
GRID = SamplingGrid.for_converter(CP)
EV = OracleEvaluator(GRID)
OP = OperatingPoint(sps(0.25), CP.v_in, CP.v_out)


def tight(target: float) -> ObjectiveSpec:
    return ObjectiveSpec("min_current_stress", target, power_tol=1e-3,
                         penalty_weight=1e4)


class SphereEvaluator:
    """Plumbing stub: fitness reduces to a shifted sphere in the ratios."""

    tag = "oracle"
    center = np.array([0.3, 0.5, 0.6])

    def evaluate(self, cp, op) -> PerformanceMetrics:
        x = np.array([op.mp.d0, op.mp.d1, op.mp.d2])
        value = float(np.sum((x - self.center) ** 2))
        i_base = 200.0 / cp.v_out
        return PerformanceMetrics(p_avg=200.0, i_pp=value * i_base, i_rms=0.0,
                                  i_peak=1.0, zvs_flags=(), zvs_complete=True)


class TestFitness:
    def test_exact_power_has_zero_penalty(self):
        obj = ObjectiveSpec("min_current_stress", 500.0)
        fit = evaluate_candidate(EV, CP, OP, obj)
        assert fit == pytest.approx(10.0 / (500.0 / 160.0), rel=1e-9)

    def test_zero_power_penalty_dominates(self):
        obj = ObjectiveSpec("min_current_stress", 200.0)
        zero_op = OperatingPoint(sps(0.0), CP.v_in, CP.v_out)
        fit = evaluate_candidate(EV, CP, zero_op, obj)
        assert fit >= obj.penalty_weight * (0.99 - 0.01) ** 2

    def test_zvs_goal_counts_failed_edges(self):
        obj = ObjectiveSpec("max_zvs_range", 240.0)
        # d0 = 0.1: both secondary edges sit exactly at zero current -> miss
        op = OperatingPoint(sps(0.1), CP.v_in, CP.v_out)
        m = EV.evaluate(CP, op)
        val = fitness_from_metrics(m, obj, CP)
        assert val == pytest.approx(0.5, abs=1e-9)  # 2 of 4 edges fail, zero penalty

    def test_bad_goal_rejected(self):
        with pytest.raises(ValueError):
            ObjectiveSpec("beauty", 100.0)


class TestSearchSpace:
    def test_active_dimensions(self):
        assert len(SearchSpace(Strategy.SPS).bounds()) == 1
        assert len(SearchSpace(Strategy.EPS).bounds()) == 2
        assert len(SearchSpace(Strategy.DPS).bounds()) == 2
        assert len(SearchSpace(Strategy.TPS).bounds()) == 3

    def test_vector_round_trip(self):
        space = SearchSpace(Strategy.TPS)
        mp = ModulationParams(Strategy.TPS, 0.2, 0.7, 0.9)
        assert space.to_modulation(space.to_vector(mp)) == mp

    def test_eps_upper_bound_stays_valid(self):
        space = SearchSpace(Strategy.EPS)
        hi = space.bounds()[1][1]
        mp = space.to_modulation(np.array([0.2, hi]))
        assert mp.strategy is Strategy.EPS and mp.d2 == 1.0 and mp.d1 < 1.0


class TestPso:
    def test_sphere_self_test(self):
        space = SearchSpace(Strategy.TPS)
        obj = ObjectiveSpec("min_current_stress", 200.0)
        res = pso_optimize(space, obj, SphereEvaluator(), CP, OP,
                           PsoConfig(swarm_size=30, iterations=200, seed=3))
        assert res.best_fitness < 1e-6

    def test_recovers_quarter_shift_for_500w(self):
        space = SearchSpace(Strategy.SPS)
        res = pso_optimize(space, tight(500.0), EV, CP, OP, PsoConfig(seed=0))
        assert abs(res.best_mp.d0 - 0.25) < 1e-3

    def test_monotone_history_and_bounds(self):
        space = SearchSpace(Strategy.TPS)
        obj = ObjectiveSpec("min_current_stress", 200.0)
        seen: list[np.ndarray] = []

        class Recorder(OracleEvaluator):
            def evaluate(self, cp, op):
                seen.append(np.array([op.mp.d0, op.mp.d1, op.mp.d2]))
                return super().evaluate(cp, op)

        res = pso_optimize(space, obj, Recorder(GRID), CP, OP,
                           PsoConfig(swarm_size=12, iterations=25, seed=1))
        assert all(b >= a or np.isclose(a, b) for a, b in zip(res.history[1:], res.history))
        assert np.all(np.diff(res.history) <= 1e-15)
        lo = np.array([0.0, 0.1, 0.1])
        hi = np.array([0.5, 1.0, 1.0])
        pts = np.array(seen)
        assert np.all(pts >= lo - 1e-12) and np.all(pts <= hi + 1e-12)

    def test_deterministic(self):
        space = SearchSpace(Strategy.TPS)
        obj = ObjectiveSpec("min_current_stress", 200.0)
        cfg = PsoConfig(swarm_size=10, iterations=15, seed=7)
        a = pso_optimize(space, obj, EV, CP, OP, cfg)
        b = pso_optimize(space, obj, EV, CP, OP, cfg)
        assert a.best_mp == b.best_mp
        assert a.history == b.history


class TestGridSearch:
    def test_sps_lattice_hits_quarter(self):
        space = SearchSpace(Strategy.SPS)
        res = grid_search(space, tight(500.0), EV, CP, OP, resolution=501)
        assert abs(res.best_mp.d0 - 0.25) <= 0.5 / 500 + 1e-12

    def test_resolution_two_counts_corners(self):
        space = SearchSpace(Strategy.TPS)
        obj = ObjectiveSpec("min_current_stress", 200.0)
        res = grid_search(space, obj, EV, CP, OP, resolution=2)
        assert res.evaluations == 8

    def test_deterministic_tie_break(self):
        space = SearchSpace(Strategy.TPS)
        obj = ObjectiveSpec("min_current_stress", 200.0)
        a = grid_search(space, obj, EV, CP, OP, resolution=7)
        b = grid_search(space, obj, EV, CP, OP, resolution=7)
        assert a.best_mp == b.best_mp and a.best_fitness == b.best_fitness

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            grid_search(SearchSpace(Strategy.SPS), tight(100.0), EV, CP, OP, 1)


class TestGa:
    def test_ga_reaches_pso_neighborhood(self):
        space = SearchSpace(Strategy.TPS)
        obj = ObjectiveSpec("min_current_stress", 200.0)
        pso = pso_optimize(space, obj, EV, CP, OP, PsoConfig(seed=0))
        ga = ga_optimize(space, obj, EV, CP, OP, GaConfig(seed=0))
        assert ga.best_fitness <= pso.best_fitness * 1.02

    def test_ga_deterministic(self):
        space = SearchSpace(Strategy.SPS)
        obj = ObjectiveSpec("min_current_stress", 200.0)
        cfg = GaConfig(population=12, generations=10, seed=5)
        a = ga_optimize(space, obj, EV, CP, OP, cfg)
        b = ga_optimize(space, obj, EV, CP, OP, cfg)
        assert a.best_mp == b.best_mp


class TestLandscape:
    def test_sps_sweep_shape(self):
        space = SearchSpace(Strategy.SPS)
        obj = ObjectiveSpec("min_current_stress", 200.0)
        samples, slice_ = sample_landscape(space, EV, CP, OP, obj, resolution=33)
        assert len(samples) == 33 and slice_ == []
        shifts = [p.mp.d0 for p in samples]
        assert shifts[0] == 0.0 and shifts[-1] == 0.5
        # i_pp rises monotonically once past the light-load minimum region
        ipp = [p.i_pp for p in samples]
        tail = ipp[8:]
        assert np.all(np.diff(tail) >= -1e-9)

    def test_tps_slice_through_best(self):
        space = SearchSpace(Strategy.TPS)
        obj = ObjectiveSpec("min_current_stress", 200.0)
        samples, slice_ = sample_landscape(space, EV, CP, OP, obj, resolution=9)
        assert len(samples) == 9 ** 3
        assert len(slice_) == 9 ** 2
        d0_star = min(samples, key=lambda p: p.fitness).mp.d0
        assert all(p.mp.d0 == d0_star for p in slice_)

    def test_resolution_cap(self):
        with pytest.raises(ValueError):
            sample_landscape(SearchSpace(Strategy.SPS), EV, CP, OP,
                             ObjectiveSpec("min_current_stress", 100.0), resolution=200)

    def test_csv_export(self, tmp_path):
        space = SearchSpace(Strategy.SPS)
        obj = ObjectiveSpec("min_current_stress", 200.0)
        samples, _ = sample_landscape(space, EV, CP, OP, obj, resolution=5)
        path = tmp_path / "landscape.csv"
        landscape_to_csv(samples, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "d0,d1,d2,fitness,p_avg,i_pp,zvs_complete"
        assert len(lines) == 6


class TestCompare:
    def test_sps_power_match(self):
        # the sampled-waveform power differs from the closed form by the
        # quadrature bias at misaligned shifts (tens of ppm); allow for it
        mp = match_sps_power(EV, CP, OP, 200.0)
        assert sps_average_power(CP, mp.d0) == pytest.approx(200.0, rel=1e-4)
        assert mp.d0 == pytest.approx(sps_shift_for_power(CP, 200.0), abs=1e-5)

    def test_tps_beats_sps_at_rated_power(self):
        cmp_ = compare_strategies(CP, OP, 200.0, EV, seed=0)
        assert cmp_.improvement_i_pp >= 0.0
        assert cmp_.tps.metrics.i_pp <= cmp_.sps_metrics.i_pp + 1e-9

    def test_max_sps_power_boundary(self):
        p_max = sps_average_power(CP, 0.5)
        mp = match_sps_power(EV, CP, OP, p_max)
        assert mp.d0 == pytest.approx(0.5, abs=1e-6)

    def test_infeasible_target_rejected(self):
        with pytest.raises(InfeasibleTargetError):
            match_sps_power(EV, CP, OP, 10_000.0)
