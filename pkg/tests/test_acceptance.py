"""End-to-end checks of the headline behaviors, one test per claim.

These pin the quantitative story the package tells: where the mean-field
collapse sits, when an attack becomes effective, the cost-law identities,
the irreversible simulated collapse of the weaker network, acquisition
trends, and byte-level reproducibility of every shipped config.  They are
slow by unit-test standards (a few minutes total) and run the real
engine at realistic sizes.  Tests marked strict-xfail assert behaviors
the model does not actually produce at the stated parameters; they are
kept failing on purpose so any engine change that alters the outcome is
noticed.
"""

import dataclasses
import time
from pathlib import Path

import numpy as np
import pytest

from netduel import cli, dynamics, meanfield, protocols, topology
from netduel.config import parse_config
from netduel.dynamics import CostLedger, DualThresholds, DynamicsParams
from netduel.streams import derive_stream

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def _sem(samples: np.ndarray) -> np.ndarray:
    return samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])


@pytest.fixture(scope="module")
def meanfield_trace():
    system = meanfield.MeanFieldSystem(
        k_S=20, k_W=5, k_WS=10, k_SW=10, t_S=10, t_W=10,
        p2_S=0.8, p2_W=0.8, pstar_S=0.0, pstar_W=0.05,
    )
    grid = np.linspace(0.0, 0.6, 61)
    t0 = time.perf_counter()
    curve = meanfield.trace_hysteresis(system, "pstar_S", grid)
    return curve, time.perf_counter() - t0


@pytest.mark.xfail(
    strict=True,
    reason="the fold on the ascending branch sits near 0.37 for these "
    "parameters, not 0.33",
)
def test_meanfield_collapse_point(meanfield_trace):
    curve, elapsed = meanfield_trace
    assert elapsed < 10.0
    report = meanfield.spinodal_detect(curve)
    assert report.ascending_S is not None
    assert abs(report.ascending_S - 0.33) <= 0.02


def test_effective_attack_onset(meanfield_trace):
    curve, _ = meanfield_trace
    region = meanfield.effective_region(curve)
    assert region is not None
    onset = region[0]
    assert abs(onset - 0.18) <= 0.03
    # at the onset the attacker still looks worse off; past it W drops
    # sharply and the ordering flips, staying flipped until S collapses
    fold = meanfield.spinodal_detect(curve).ascending_S
    assert fold is not None
    asc = curve.ascending
    grid = curve.grid
    i_onset = grid.index(onset)
    assert asc[i_onset].f_S < asc[i_onset].f_W
    window = [i for i, g in enumerate(grid) if onset < g < fold]
    flipped = [i for i in window if asc[i].f_S > asc[i].f_W]
    assert flipped, "f_S never overtook f_W past the onset"
    assert all(asc[i].f_S > asc[i].f_W for i in range(flipped[0], window[-1] + 1))


@pytest.mark.xfail(
    strict=True,
    reason="no collapsed solution exists at zero attack rate, so the "
    "descending branch recovers completely instead of staying down",
)
def test_post_collapse_irreversibility(meanfield_trace):
    curve, _ = meanfield_trace
    pre_S = curve.ascending[0].f_S
    pre_W = curve.ascending[0].f_W
    end = curve.descending[0]
    assert end.f_S < 0.5 * pre_S
    assert end.f_W < 0.5 * pre_W


def test_crit_prob_matches_enumeration():
    # brute force: enumerate every activity pattern of the neighborhood
    # and sum the probability of those with at most t_abs active
    rng = np.random.default_rng(90210)
    t0 = time.perf_counter()
    for k_self in range(13):
        for k_other in range(13 - k_self):
            n = k_self + k_other
            idx = np.arange(2**n, dtype=np.int64)
            bits = (idx[:, None] >> np.arange(n)) & 1
            for _ in range(20):
                a_self, a_other = rng.uniform(0.0, 1.0, size=2)
                p_self = np.where(bits[:, :k_self] == 1, 1.0 - a_self, a_self)
                p_other = np.where(bits[:, k_self:] == 1, 1.0 - a_other, a_other)
                weight = p_self.prod(axis=1) * p_other.prod(axis=1)
                by_count = np.bincount(
                    bits.sum(axis=1), weights=weight, minlength=n + 1
                )
                cum = np.cumsum(by_count)
                for t_abs in range(n + 1):
                    ours = meanfield.crit_prob(
                        a_self, a_other, k_self, k_other, t_abs
                    )
                    assert abs(ours - cum[t_abs]) <= 1e-12
    assert time.perf_counter() - t0 < 30.0


def test_conservation_law():
    # threshold-mass identity after every acquisition of a long mixed run
    gen = topology.GeneratorConfig(
        kind="BA", n_S=150, n_W=150, n0=3, m_S=3, m_W=3, m_SW=2
    )
    params = DynamicsParams(
        p1_S=0.004, p1_W=0.004, p2=0.9, tau=50, T_S=0.3, T_W=0.7,
        mechanism="takeover", cost_enabled=True,
    )
    rng = derive_stream(820, 0)
    net = topology.generate(gen, rng)
    state = dynamics.init_state(net, params)
    protocols.run_timeseries(net, params, None, 10_000, rng, state=state)
    events = state.ledger.acquisitions
    assert len(events) > 10
    mass = float(net.total_degree[net.is_S].sum())
    T = params.T_S
    for _, _, k in events:
        t_new = (mass * T + k * params.T_W) / (mass + k)
        assert abs(mass * (t_new - T) - k * (params.T_W - t_new)) <= 1e-10
        mass += k
        T = t_new
    assert abs(T - state.ledger.T_S_current) <= 1e-12
    assert mass == state.ledger.mass

    # folding acquisitions in one batch equals folding them one at a time
    rng = np.random.default_rng(5150)
    for _ in range(1000):
        n_nodes = int(rng.integers(5, 400))
        k_avg = float(rng.uniform(2.0, 20.0))
        t_s = float(rng.uniform(0.0, 0.5))
        t_w = float(rng.uniform(t_s, 1.0))
        degrees = rng.integers(1, 30, size=int(rng.integers(0, 40)))
        batch = dynamics.update_threshold_batch(t_s, n_nodes, k_avg, degrees, t_w)
        ledger = CostLedger(mass=n_nodes * k_avg, T_S_current=t_s)
        for k in degrees:
            dynamics.update_threshold_single(ledger, float(k), t_w)
        assert abs(batch - ledger.T_S_current) <= 1e-12

    # worked value: one degree-10 node folded into mass 600 at 0.3 vs 0.7
    ledger = CostLedger(mass=600.0, T_S_current=0.3)
    dynamics.update_threshold_single(ledger, 10.0, 0.7)
    assert abs(ledger.T_S_current - 0.30656) <= 1e-5


def test_simulated_hysteresis_ramp():
    # ramp p1 up then down: W collapses while S holds, and only S recovers
    gen = topology.GeneratorConfig(
        kind="BA", n_S=1000, n_W=1000, n0=3, m_S=3, m_W=3, m_SW=2
    )
    params = DynamicsParams(
        p1_S=0.0, p1_W=0.0, p2=0.9, tau=50, T_S=0.3, T_W=0.7
    )
    grid = tuple(float(v) for v in np.linspace(0.0, 0.006, 13))
    t0 = time.perf_counter()
    collapse_ok = 0
    descent_ok = 0
    for seed in range(10):
        rng = derive_stream(500, seed)
        net = topology.generate(gen, rng)
        res = protocols.run_hysteresis_sim(net, params, grid, 500, 1, rng)
        asc_S, asc_W = res.asc_f_S[0], res.asc_f_W[0]
        desc_S, desc_W = res.desc_f_S[0], res.desc_f_W[0]
        if any(
            w < 0.2 and s > 0.5
            for g, w, s in zip(grid, asc_W, asc_S)
            if g <= 0.004
        ):
            collapse_ok += 1
        if desc_W.max() < 0.2 and desc_S[0] > 0.9:
            descent_ok += 1
    assert collapse_ok >= 8
    assert descent_ok >= 8
    assert time.perf_counter() - t0 < 300.0


def test_takeover_sweep_trends():
    gen = topology.GeneratorConfig(
        kind="BA", n_S=150, n_W=150, n0=3, m_S=3, m_W=3, m_SW=2
    )
    params = DynamicsParams(
        p1_S=0.004, p1_W=0.004, p2=0.9, tau=50, T_S=0.3, T_W=0.7,
        mechanism="takeover", cost_enabled=True,
    )
    sweep = protocols.takeover_sweep(
        gen, params, (1.0, 1.5, 2.5, 5.0, 10.0), 10, 3000, derive_stream(650, 0)
    )
    frac_mean = sweep.takeover_fraction.mean(axis=0)
    frac_se = _sem(sweep.takeover_fraction)
    rises = [
        i for i in range(len(frac_mean) - 1) if frac_mean[i + 1] > frac_mean[i]
    ]
    assert len(rises) <= 1
    for i in rises:
        gap = frac_mean[i + 1] - frac_mean[i]
        assert gap <= np.hypot(frac_se[i], frac_se[i + 1])
    t_mean = sweep.final_T_S.mean(axis=0)
    t_se = _sem(sweep.final_T_S)
    assert abs(t_mean[-1] - 0.3) <= 0.02
    assert t_mean[0] > t_mean[-1]
    for i in range(len(t_mean) - 1):
        slack = np.hypot(t_se[i], t_se[i + 1]) + 1e-12
        assert t_mean[i + 1] <= t_mean[i] + slack
    # on a slow p1 ramp with no delay premium, acquisitions outrun the
    # attacker's own losses and its active count outgrows its own size;
    # a tail mean above 1 implies single steps above 1
    gen_ramp = topology.GeneratorConfig(
        kind="BA", n_S=300, n_W=300, n0=3, m_S=3, m_W=3, m_SW=2
    )
    ramp_params = dataclasses.replace(params, p1_S=0.0, p1_W=0.0)
    grid = tuple(float(v) for v in np.linspace(0.0, 0.006, 13))
    above_one = 0
    for seed in range(10):
        rng = derive_stream(670, seed)
        net = topology.generate(gen_ramp, rng)
        res = protocols.run_hysteresis_sim(net, ramp_params, grid, 500, 1, rng)
        top = max(float(res.asc_f_S.max()), float(res.desc_f_S.max()))
        if top > 1.0:
            above_one += 1
    assert above_one >= 8


@pytest.mark.xfail(
    strict=True,
    reason="at these rates ownership erodes node by node: f_W never drops "
    "0.4 inside a 100-step window, and the threshold rise never changes a "
    "criticality outcome so the paired cost runs coincide",
)
def test_substitution_flip_with_cost_twin():
    gen = topology.GeneratorConfig(
        kind="BA", n_S=500, n_W=500, n0=6, m_S=6, m_W=3, m_SW=2
    )
    base = DynamicsParams(
        p1_S=0.0004, p1_W=0.0004, p2=0.6, tau=50, T_S=0.3, T_W=0.7,
        n=1.5, mechanism="substitution",
        dual=DualThresholds(T_WS=0.4, T_SW=0.4),
    )
    horizon = 20_000
    flips = 0
    ordered = 0
    lower = 0
    for seed in range(10):
        net = topology.generate(gen, derive_stream(700, seed))
        runs = {}
        for cost in (False, True):
            params = dataclasses.replace(base, cost_enabled=cost)
            runs[cost] = protocols.run_timeseries(
                net, params, None, horizon, derive_stream(710, seed)
            )
        ts = runs[False]
        drop = ts.f_W[:-100] - ts.f_W[100:]
        if drop.max() >= 0.4:
            flips += 1
            first = int(np.argmax(drop >= 0.4))
            completion = int(ts.t[first + 100])
            warn = protocols.early_warning(ts)
            if warn.stop_time is not None and warn.stop_time <= completion:
                ordered += 1
        if runs[True].f_S[-1] < runs[False].f_S[-1]:
            lower += 1
    assert flips >= 7
    assert ordered == flips
    assert lower >= 8


def test_sustained_ordering_between_networks():
    # the stronger side keeps more of itself active essentially always
    gen = topology.GeneratorConfig(
        kind="BA", n_S=8000, n_W=8000, n0=3, m_S=3, m_W=3, m_SW=2
    )
    params = DynamicsParams(
        p1_S=0.0012, p1_W=0.0012, p2=0.48, tau=50, T_S=0.3, T_W=0.7
    )
    rng = derive_stream(400, 0)
    net = topology.generate(gen, rng)
    ts = protocols.run_timeseries(net, params, None, 50_000, rng)
    assert float((ts.f_S >= ts.f_W).mean()) >= 0.95


def test_occupancy_matches_internal_failure_law():
    # with external failures off, nodes are independent and the tail
    # inactive fraction must match the renewal value 1 - exp(-p1 tau)
    gen = topology.GeneratorConfig(
        kind="BA", n_S=2500, n_W=2500, n0=3, m_S=3, m_W=3, m_SW=2
    )
    cases = ((0.0004, 60_000), (0.002, 15_000), (0.004, 15_000))
    for i, (p1, horizon) in enumerate(cases):
        params = DynamicsParams(
            p1_S=p1, p1_W=p1, p2=0.0, tau=50, T_S=0.3, T_W=0.7
        )
        rng = derive_stream(800, i)
        net = topology.generate(gen, rng)
        ts = protocols.run_timeseries(net, params, None, horizon, rng)
        skip = 5_000
        inactive = 1.0 - (ts.f_S[skip:].mean() + ts.f_W[skip:].mean()) / 2.0
        expected = float(-np.expm1(-p1 * 50))
        assert abs(inactive - expected) / expected <= 0.02


def test_shipped_configs_rerun_byte_identical(tmp_path):
    subcommand_for = {v: k for k, v in cli.COMMAND_PROTOCOL.items()}
    cfg_paths = sorted(CONFIG_DIR.glob("*.cfg"))
    assert cfg_paths, "no shipped configs found"
    for cfg_path in cfg_paths:
        protocol = parse_config(cfg_path.read_text()).protocol
        sub = subcommand_for[protocol]
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{cfg_path.stem}-{tag}"
            rc = cli.main([
                sub, "--config", str(cfg_path),
                "--out", str(out), "--workers", "4",
            ])
            assert rc == 0, f"{cfg_path.name} exited {rc}"
            outs.append(out)
        first, second = outs
        names = sorted(p.name for p in first.glob("*.csv"))
        assert names, f"{cfg_path.name} wrote no CSV"
        for name in names:
            same = (first / name).read_bytes() == (second / name).read_bytes()
            assert same, f"{cfg_path.name}: {name} differs between reruns"
