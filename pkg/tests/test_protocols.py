"""Protocol-layer tests: schedules, ramps, phase diagrams, sweeps, the
early-warning indicator, and collapse estimation."""

from __future__ import annotations

import math

import numpy as np
import pytest

from netduel import dynamics as dyn
from netduel import meanfield as mf
from netduel import protocols as pr
from netduel.errors import ConfigurationError
from netduel.topology import GeneratorConfig, generate


def small_net(seed=0, n=200, m_S=3, m_W=3, m_SW=2):
    cfg = GeneratorConfig(kind="BA", n_S=n, n_W=n, m_S=m_S, m_W=m_W, m_SW=m_SW)
    return generate(cfg, np.random.default_rng(seed))


def quiet_params(**kw):
    base = dict(p1_S=0.001, p1_W=0.001, p2=0.0, tau=50, T_S=0.3, T_W=0.7)
    base.update(kw)
    return dyn.DynamicsParams(**base)


class TestAttackSchedule:
    def test_baseline_outside_segments(self):
        sched = pr.AttackSchedule(baseline_S=0.001, baseline_W=0.002,
                                  segments=((10, 20, 0.5, 0.6),))
        assert sched.p1_at(9) == (0.001, 0.002)
        assert sched.p1_at(10) == (0.5, 0.6)
        assert sched.p1_at(19) == (0.5, 0.6)
        assert sched.p1_at(20) == (0.001, 0.002)

    def test_constant(self):
        sched = pr.AttackSchedule.constant(0.004)
        assert sched.p1_at(123) == (0.004, 0.004)

    def test_overlap_rejected(self):
        with pytest.raises(ConfigurationError):
            pr.AttackSchedule(0.0, 0.0, segments=((0, 10, 0.1, 0.1),
                                                  (5, 15, 0.2, 0.2)))

    def test_empty_segment_rejected(self):
        with pytest.raises(ConfigurationError):
            pr.AttackSchedule(0.0, 0.0, segments=((5, 5, 0.1, 0.1),))

    def test_range_checks(self):
        with pytest.raises(ConfigurationError):
            pr.AttackSchedule(1.5, 0.0)
        with pytest.raises(ConfigurationError):
            pr.AttackSchedule(0.0, 0.0, segments=((0, 5, 2.0, 0.1),))


class TestRunTimeseries:
    def test_zero_horizon_empty(self):
        net = small_net(n=30)
        ts = pr.run_timeseries(net, quiet_params(), None, 0,
                               np.random.default_rng(1))
        assert len(ts) == 0
        assert list(ts.rows()) == []

    def test_records_every_step_with_increasing_t(self):
        net = small_net(n=50)
        ts = pr.run_timeseries(net, quiet_params(), None, 25,
                               np.random.default_rng(1))
        assert len(ts) == 25
        assert ts.t.tolist() == list(range(1, 26))

    def test_quiet_run_hovers_at_occupancy_level(self):
        net = small_net(seed=3, n=400)
        params = quiet_params(p1_S=0.002, p1_W=0.002, tau=50)
        ts = pr.run_timeseries(net, params, pr.AttackSchedule.constant(0.002),
                               4000, np.random.default_rng(2))
        expected = 1.0 - (-math.expm1(-0.002 * 50))
        tail_S = ts.f_S[2000:].mean()
        tail_W = ts.f_W[2000:].mean()
        assert tail_S == pytest.approx(expected, abs=0.01)
        assert tail_W == pytest.approx(expected, abs=0.01)

    def test_schedule_segment_is_applied(self):
        net = small_net(n=40)
        sched = pr.AttackSchedule(0.0, 0.0, segments=((5, 6, 1.0, 1.0),))
        ts = pr.run_timeseries(net, quiet_params(p1_S=0.0, p1_W=0.0, tau=10),
                               sched, 8, np.random.default_rng(1))
        # all active until the burst at step 5 -> 6 knocks everyone out
        assert ts.f_S[4] == 1.0 and ts.f_W[4] == 1.0
        assert ts.f_S[5] == 0.0 and ts.f_W[5] == 0.0
        assert ts.f_S[6] == 0.0  # still inside tau

    def test_deterministic_given_seed(self):
        net = small_net(n=60)
        params = quiet_params(p1_S=0.05, p1_W=0.05, p2=0.5, tau=5)
        a = pr.run_timeseries(net, params, None, 100, np.random.default_rng(9))
        b = pr.run_timeseries(net, params, None, 100, np.random.default_rng(9))
        assert np.array_equal(a.f_S, b.f_S)
        assert np.array_equal(a.wealth_W, b.wealth_W)
        assert list(a.rows()) == list(b.rows())

    def test_negative_horizon_rejected(self):
        with pytest.raises(ConfigurationError):
            pr.run_timeseries(small_net(n=30), quiet_params(), None, -1,
                              np.random.default_rng(0))


class TestHysteresisSim:
    def test_grid_validation(self):
        net = small_net(n=30)
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigurationError):
            pr.run_hysteresis_sim(net, quiet_params(), [0.001], 10, 1, rng)
        with pytest.raises(ConfigurationError):
            pr.run_hysteresis_sim(net, quiet_params(), [0.002, 0.001], 10, 1, rng)
        with pytest.raises(ConfigurationError):
            pr.run_hysteresis_sim(net, quiet_params(), [0.001, 0.002], 1, 1, rng)

    def test_no_external_coupling_branches_coincide_with_occupancy(self):
        net = small_net(seed=5, n=300)
        params = quiet_params(p2=0.0, tau=40)
        grid = [0.0005, 0.002, 0.005]
        res = pr.run_hysteresis_sim(net, params, grid, 400, 2,
                                    np.random.default_rng(11))
        for branch in ("ascending", "descending"):
            g, f_S, f_W = res.branch_fractions(branch)
            for x, v_S, v_W in zip(g, f_S, f_W):
                expected = 1.0 - (-math.expm1(-x * params.tau))
                assert v_S == pytest.approx(expected, abs=0.02)
                assert v_W == pytest.approx(expected, abs=0.02)

    def test_carryover_produces_weak_network_hysteresis(self):
        net = small_net(seed=8, n=300)
        params = quiet_params(p2=0.9, tau=20)
        grid = list(np.linspace(0.0, 0.012, 5))
        res = pr.run_hysteresis_sim(net, params, grid, 250, 3,
                                    np.random.default_rng(13))
        _, asc_S, asc_W = res.branch_fractions("ascending")
        _, desc_S, desc_W = res.branch_fractions("descending")
        # W collapses on the way up and does not recover on the way down
        assert asc_W[0] > 0.9
        assert asc_W[-1] < 0.3
        assert desc_W[0] < asc_W[0] - 0.4
        # S rides out the ramp and recovers
        assert desc_S[0] > 0.85

    def test_rows_shape_and_source(self):
        net = small_net(n=40)
        res = pr.run_hysteresis_sim(net, quiet_params(), [0.001, 0.002], 20, 2,
                                    np.random.default_rng(3))
        rows = res.rows()
        assert len(rows) == 4
        assert all(len(r) == len(pr.HYSTERESIS_COLUMNS) for r in rows)
        assert {r[0] for r in rows} == {"ascending", "descending"}
        assert all(r[-1] == "sim" for r in rows)
        # descending rows come out in traversal order: high control first
        desc = [r for r in rows if r[0] == "descending"]
        assert desc[0][1] > desc[-1][1]
        # activity columns mirror the fraction columns
        for r in rows:
            assert r[2] == pytest.approx(1.0 - r[4])
            assert r[3] == pytest.approx(1.0 - r[5])

    def test_deterministic_and_worker_count_irrelevant(self):
        net = small_net(n=60)
        params = quiet_params(p1_S=0.02, p1_W=0.02, p2=0.5, tau=5)
        grid = [0.005, 0.02]
        a = pr.run_hysteresis_sim(net, params, grid, 30, 3,
                                  np.random.default_rng(21), workers=1)
        b = pr.run_hysteresis_sim(net, params, grid, 30, 3,
                                  np.random.default_rng(21), workers=3)
        assert np.array_equal(a.asc_f_S, b.asc_f_S)
        assert np.array_equal(a.desc_f_W, b.desc_f_W)


class TestPhaseDiagram:
    def test_validation(self):
        rng = np.random.default_rng(0)
        cfg = GeneratorConfig(kind="BA", n_S=30, n_W=30, m_S=2, m_W=2, m_SW=1)
        with pytest.raises(ConfigurationError):
            pr.run_phase_diagram(cfg, quiet_params(), [], [0.5], 1, 10, rng)
        with pytest.raises(ConfigurationError):
            pr.run_phase_diagram(cfg, quiet_params(), [0.001], [0.5], 0, 10, rng)

    def test_no_internal_failures_active_sheet_stays_up(self):
        cfg = GeneratorConfig(kind="BA", n_S=100, n_W=100, m_S=3, m_W=3, m_SW=2)
        res = pr.run_phase_diagram(cfg, quiet_params(), [0.0], [0.1], 2, 200,
                                   np.random.default_rng(4))
        assert res.mean("f_S", "active")[0, 0] == pytest.approx(1.0)
        assert res.mean("f_W", "active")[0, 0] == pytest.approx(1.0)

    def test_decoupled_column_matches_occupancy_on_both_sheets(self):
        cfg = GeneratorConfig(kind="BA", n_S=150, n_W=150, m_S=3, m_W=3, m_SW=2)
        params = quiet_params(tau=30)
        res = pr.run_phase_diagram(cfg, params, [0.002, 0.006], [0.0], 2, 600,
                                   np.random.default_rng(6))
        for i, p1 in enumerate(res.p1_grid):
            expected = 1.0 - (-math.expm1(-p1 * params.tau))
            for sheet in pr.SHEETS:
                assert res.mean("f_S", sheet)[i, 0] == pytest.approx(expected, abs=0.03)
                assert res.mean("f_W", sheet)[i, 0] == pytest.approx(expected, abs=0.03)

    def test_active_sheet_dominates_failed_sheet(self):
        cfg = GeneratorConfig(kind="BA", n_S=150, n_W=150, m_S=3, m_W=3, m_SW=2)
        params = quiet_params(p2=0.85, tau=30)
        res = pr.run_phase_diagram(cfg, params, [0.003], [0.85], 4, 400,
                                   np.random.default_rng(7))
        for which in ("f_S", "f_W"):
            active = res.f_S if which == "f_S" else res.f_W
            a = active[0, 0, 0]
            f = active[1, 0, 0]
            diff = a.mean() - f.mean()
            guard = 2 * (pr._se(a) + pr._se(f))
            assert diff >= -guard

    def test_rows_cover_grid_in_fixed_order(self):
        cfg = GeneratorConfig(kind="BA", n_S=40, n_W=40, m_S=2, m_W=2, m_SW=1)
        res = pr.run_phase_diagram(cfg, quiet_params(), [0.001, 0.002],
                                   [0.1, 0.2], 2, 20, np.random.default_rng(8))
        rows = res.rows()
        assert len(rows) == 2 * 2 * 2
        assert [r[:3] for r in rows[:4]] == [
            (0.001, 0.1, "active"), (0.001, 0.1, "failed"),
            (0.001, 0.2, "active"), (0.001, 0.2, "failed"),
        ]
        assert all(len(r) == len(pr.PHASE_COLUMNS) for r in rows)
        assert all(r[-1] == 2 for r in rows)

    def test_worker_count_irrelevant(self):
        cfg = GeneratorConfig(kind="BA", n_S=50, n_W=50, m_S=2, m_W=2, m_SW=1)
        params = quiet_params(p1_S=0.01, p1_W=0.01, p2=0.5, tau=10)
        a = pr.run_phase_diagram(cfg, params, [0.005, 0.01], [0.4], 2, 60,
                                 np.random.default_rng(30), workers=1)
        b = pr.run_phase_diagram(cfg, params, [0.005, 0.01], [0.4], 2, 60,
                                 np.random.default_rng(30), workers=4)
        assert np.array_equal(a.f_S, b.f_S)
        assert np.array_equal(a.f_W, b.f_W)


class TestTakeoverSweep:
    def test_validation(self):
        cfg = GeneratorConfig(kind="BA", n_S=30, n_W=30, m_S=2, m_W=2, m_SW=1)
        rng = np.random.default_rng(0)
        params = quiet_params(mechanism="takeover")
        with pytest.raises(ConfigurationError):
            pr.takeover_sweep(cfg, params, [], 1, 10, rng)
        with pytest.raises(ConfigurationError):
            pr.takeover_sweep(cfg, params, [2.0, 1.0], 1, 10, rng)
        with pytest.raises(ConfigurationError):
            pr.takeover_sweep(cfg, quiet_params(), [1.0], 1, 10, rng)

    def test_multiplier_beyond_horizon_means_no_acquisitions(self):
        cfg = GeneratorConfig(kind="BA", n_S=60, n_W=60, m_S=2, m_W=2, m_SW=1)
        params = quiet_params(p1_S=0.05, p1_W=0.05, p2=0.5, tau=5,
                              mechanism="takeover", cost_enabled=True)
        # n*tau = 500 > 200 steps: the spell clock can never get there
        res = pr.takeover_sweep(cfg, params, [100.0], 3, 200,
                                np.random.default_rng(2))
        assert (res.takeover_fraction == 0.0).all()
        assert (res.final_T_S == params.T_S).all()

    def test_aggressive_multiplier_acquires(self):
        cfg = GeneratorConfig(kind="BA", n_S=80, n_W=80, m_S=3, m_W=3, m_SW=2)
        params = quiet_params(p1_S=0.0, p1_W=0.1, p2=0.0, tau=5,
                              mechanism="takeover", cost_enabled=True)
        res = pr.takeover_sweep(cfg, params, [1.0], 2, 400,
                                np.random.default_rng(3))
        assert res.takeover_fraction.min() > 0.5
        assert (res.final_T_S > params.T_S).all()
        assert res.f_S_peak.max() > 1.0

    def test_deterministic(self):
        cfg = GeneratorConfig(kind="BA", n_S=40, n_W=40, m_S=2, m_W=2, m_SW=1)
        params = quiet_params(p1_S=0.05, p1_W=0.08, p2=0.3, tau=4,
                              mechanism="takeover", cost_enabled=True)
        a = pr.takeover_sweep(cfg, params, [1.0, 2.0], 2, 80,
                              np.random.default_rng(5))
        b = pr.takeover_sweep(cfg, params, [1.0, 2.0], 2, 80,
                              np.random.default_rng(5))
        assert np.array_equal(a.takeover_fraction, b.takeover_fraction)
        assert a.rows() == b.rows()
        assert all(len(r) == len(pr.SWEEP_COLUMNS) for r in a.rows())


def synthetic_series(f_S, f_W):
    n = len(f_S)
    z = np.zeros(n)
    return pr.TimeSeries(
        t=np.arange(1, n + 1, dtype=np.int64),
        f_S=np.asarray(f_S, dtype=float), f_W=np.asarray(f_W, dtype=float),
        T_S_current=z + 0.3, n_takeovers=np.zeros(n, dtype=np.int64),
        wealth_S=z, wealth_W=z,
        params=quiet_params(),
    )


def brute_force_stop(ts, dt):
    best_t, best_v = None, -np.inf
    for i in range(len(ts) - dt):
        if ts.f_W[i] > 0 and ts.f_W[i + dt] > 0:
            v = ts.f_S[i + dt] / ts.f_W[i + dt] - ts.f_S[i] / ts.f_W[i]
            if v > best_v:
                best_v, best_t = v, int(ts.t[i])
    return best_t


class TestEarlyWarning:
    def test_constant_fractions_zero_indicator_first_index(self):
        ts = synthetic_series(np.ones(60), np.full(60, 0.8))
        res = pr.early_warning(ts, delta_t=20)
        assert np.allclose(res.values, 0.0)
        assert res.stop_time == int(ts.t[0])
        assert res.skipped == 0

    def test_ramp_then_flat_matches_brute_force(self):
        t = np.arange(1, 121)
        f_W = np.where(t < 50, 1.0 - 0.01 * t, 1.0 - 0.01 * 49)
        ts = synthetic_series(np.ones(120), f_W)
        res = pr.early_warning(ts, delta_t=20)
        assert res.stop_time == brute_force_stop(ts, 20)
        assert res.stop_time < 50

    def test_random_series_match_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            n = int(rng.integers(25, 120))
            f_S = rng.uniform(0.0, 1.2, n)
            f_W = rng.uniform(0.0, 1.0, n)
            f_W[rng.random(n) < 0.2] = 0.0
            ts = synthetic_series(f_S, f_W)
            res = pr.early_warning(ts, delta_t=20)
            assert res.stop_time == brute_force_stop(ts, 20)

    def test_dead_weak_network_gives_no_signal(self):
        ts = synthetic_series(np.ones(50), np.zeros(50))
        res = pr.early_warning(ts, delta_t=10)
        assert res.no_signal
        assert res.stop_time is None
        assert res.skipped == 40

    def test_short_series_rejected(self):
        ts = synthetic_series(np.ones(10), np.ones(10))
        with pytest.raises(ConfigurationError):
            pr.early_warning(ts, delta_t=20)

    def test_default_window(self):
        assert pr.EARLY_WARNING_WINDOW == 20


def manual_sim_curve(grid, asc_f_S, asc_f_W):
    g = len(grid)
    return pr.SimHysteresis(
        grid=tuple(grid), dwell=10,
        asc_f_S=np.asarray([asc_f_S]), asc_f_W=np.asarray([asc_f_W]),
        desc_f_S=np.ones((1, g)), desc_f_W=np.ones((1, g)),
    )


class TestCollapseEstimate:
    def test_worked_fluctuation(self):
        curve = manual_sim_curve([0.001, 0.002, 0.003],
                                 [1.0, 0.95, 0.9], [0.9, 0.2, 0.1])
        res = pr.collapse_threshold_estimate(curve, p_X=0.0001)
        assert res.p1c_W == pytest.approx(0.002)
        assert res.fluctuation_W == pytest.approx(0.0019)
        assert res.open_ended_S
        assert res.fluctuation_S is None

    def test_monostable_curve_open_ended(self):
        curve = manual_sim_curve([0.001, 0.002], [1.0, 0.99], [0.9, 0.89])
        res = pr.collapse_threshold_estimate(curve, p_X=0.0)
        assert res.open_ended_S and res.open_ended_W

    def test_floor_monotone(self):
        grid = list(np.linspace(0.0, 0.01, 11))
        f = list(np.linspace(1.0, 0.0, 11))
        curve = manual_sim_curve(grid, f, f)
        prev = -1.0
        for frac in (0.8, 0.5, 0.2):
            res = pr.collapse_threshold_estimate(curve, 0.0, floor_fraction=frac)
            assert res.p1c_W is not None
            assert res.p1c_W >= prev
            prev = res.p1c_W

    def test_floor_fraction_validated(self):
        curve = manual_sim_curve([0.0, 0.1], [1.0, 1.0], [1.0, 1.0])
        with pytest.raises(ConfigurationError):
            pr.collapse_threshold_estimate(curve, 0.0, floor_fraction=1.5)

    def test_meanfield_curve_weak_collapses_first(self):
        system = mf.MeanFieldSystem(k_S=20, k_W=5, k_WS=10, k_SW=10,
                                    t_S=10, t_W=10, p2_S=0.8, p2_W=0.8,
                                    pstar_S=0.0, pstar_W=0.05)
        grid = tuple(np.linspace(0.0, 0.6, 61))
        curve = mf.trace_hysteresis(system, "pstar_S", grid)
        res = pr.collapse_threshold_estimate(curve, p_X=0.0)
        assert res.p1c_W is not None and res.p1c_S is not None
        assert res.p1c_W <= res.p1c_S


class TestHysteresisRows:
    def test_meanfield_rows(self):
        system = mf.MeanFieldSystem(k_S=6, k_W=4, k_WS=2, k_SW=2, t_S=3,
                                    t_W=2, p2_S=0.5, p2_W=0.5,
                                    pstar_S=0.0, pstar_W=0.02)
        curve = mf.trace_hysteresis(system, "pstar_S", (0.0, 0.1, 0.2))
        rows = pr.hysteresis_rows(curve)
        assert len(rows) == 6
        assert all(len(r) == len(pr.HYSTERESIS_COLUMNS) for r in rows)
        assert all(r[-1] == "meanfield" for r in rows)
        asc = [r for r in rows if r[0] == "ascending"]
        assert [r[1] for r in asc] == [0.0, 0.1, 0.2]

    def test_unknown_type_rejected(self):
        with pytest.raises(TypeError):
            pr.hysteresis_rows(42)
