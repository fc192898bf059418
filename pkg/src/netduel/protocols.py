"""Experiment drivers over the dynamics engine: scheduled-attack time
series, hysteresis ramps, two-parameter phase diagrams, takeover sweeps,
the early-warning indicator, and collapse-threshold estimation.

Replicates are independent work units: each gets its own spawned child
stream up front, results land in slots indexed by replicate, and
aggregation reads the slots in index order, so worker completion order
can never change any output.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np

from . import meanfield
from .dynamics import DynamicsParams, SimulationState, init_state, measure_fractions, step, wealth
from .errors import ConfigurationError
from .topology import GeneratorConfig, generate

TIMESERIES_COLUMNS = (
    "t", "f_S", "f_W", "T_S_current", "n_takeovers_cum", "wealth_S", "wealth_W"
)
HYSTERESIS_COLUMNS = (
    "branch", "control", "a_S", "a_W", "f_S", "f_W", "converged",
    "residual", "iterations", "source"
)
PHASE_COLUMNS = (
    "p1", "p2", "sheet", "f_S_mean", "f_W_mean", "f_S_se", "f_W_se", "replicates"
)
SWEEP_COLUMNS = (
    "n", "takeover_fraction_mean", "takeover_fraction_se",
    "final_T_S_mean", "final_T_S_se", "f_S_peak_mean", "replicates"
)

SHEETS = ("active", "failed")

EARLY_WARNING_WINDOW = 20


@dataclass(frozen=True)
class AttackSchedule:
    """Piecewise-constant internal-failure rates over time.

    Each segment is (start, end, p1_S, p1_W) applied to steps
    start <= t < end; outside all segments the baselines apply.
    """

    baseline_S: float
    baseline_W: float
    segments: tuple = ()

    def __post_init__(self) -> None:
        for name in ("baseline_S", "baseline_W"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")
        prev_end = None
        for seg in self.segments:
            if len(seg) != 4:
                raise ConfigurationError(
                    f"segment must be (start, end, p1_S, p1_W), got {seg}"
                )
            start, end, v_s, v_w = seg
            if end <= start:
                raise ConfigurationError(f"segment {seg} must have end > start")
            if prev_end is not None and start < prev_end:
                raise ConfigurationError("segments must not overlap")
            for v in (v_s, v_w):
                if not 0.0 <= v <= 1.0:
                    raise ConfigurationError(
                        f"segment rate must lie in [0, 1], got {v}"
                    )
            prev_end = end

    @classmethod
    def constant(cls, p_X: float) -> "AttackSchedule":
        return cls(baseline_S=p_X, baseline_W=p_X)

    def p1_at(self, t: int) -> tuple[float, float]:
        for start, end, v_s, v_w in self.segments:
            if start <= t < end:
                return float(v_s), float(v_w)
        return self.baseline_S, self.baseline_W


@dataclass
class TimeSeries:
    """Per-step record of one run."""

    t: np.ndarray
    f_S: np.ndarray
    f_W: np.ndarray
    T_S_current: np.ndarray
    n_takeovers: np.ndarray
    wealth_S: np.ndarray
    wealth_W: np.ndarray
    params: DynamicsParams | None = None
    schedule: AttackSchedule | None = None

    def __len__(self) -> int:
        return len(self.t)

    def rows(self):
        for i in range(len(self.t)):
            yield (
                int(self.t[i]), float(self.f_S[i]), float(self.f_W[i]),
                float(self.T_S_current[i]), int(self.n_takeovers[i]),
                float(self.wealth_S[i]), float(self.wealth_W[i]),
            )


def run_timeseries(network, params: DynamicsParams,
                   schedule: AttackSchedule | None, horizon: int,
                   rng: np.random.Generator,
                   state: SimulationState | None = None) -> TimeSeries:
    """Step the dynamics `horizon` steps, recording every step."""
    if horizon < 0:
        raise ConfigurationError("horizon must be >= 0")
    if state is None:
        state = init_state(network, params)
    cols = {name: np.empty(horizon) for name in
            ("f_S", "f_W", "T_S_current", "wealth_S", "wealth_W")}
    t_col = np.empty(horizon, dtype=np.int64)
    n_col = np.empty(horizon, dtype=np.int64)
    current = (params.p1_S, params.p1_W)
    live = params
    for i in range(horizon):
        if schedule is not None:
            wanted = schedule.p1_at(state.clock)
            if wanted != current:
                live = dataclasses.replace(live, p1_S=wanted[0], p1_W=wanted[1])
                current = wanted
        step(state, live, rng)
        f_S, f_W = measure_fractions(state)
        w_S, w_W = wealth(state)
        t_col[i] = state.clock
        cols["f_S"][i] = f_S
        cols["f_W"][i] = f_W
        cols["T_S_current"][i] = state.ledger.T_S_current
        n_col[i] = state.ledger.n_acquisitions
        cols["wealth_S"][i] = w_S
        cols["wealth_W"][i] = w_W
    return TimeSeries(t=t_col, n_takeovers=n_col, params=params,
                      schedule=schedule, **cols)


def _tail_mean(values: list[float]) -> float:
    tail = values[len(values) // 2:]
    return float(np.mean(tail))


def _dwell_tail(state: SimulationState, params: DynamicsParams, dwell: int,
                rng: np.random.Generator) -> tuple[float, float]:
    """Run dwell steps, returning tail-averaged (f_S, f_W) (last 50%)."""
    tail_start = dwell // 2
    acc_S = acc_W = 0.0
    count = 0
    for i in range(dwell):
        step(state, params, rng)
        if i >= tail_start:
            f_S, f_W = measure_fractions(state)
            acc_S += f_S
            acc_W += f_W
            count += 1
    return acc_S / count, acc_W / count


def _se(samples: np.ndarray, axis: int = 0) -> np.ndarray:
    n = samples.shape[axis]
    if n < 2:
        return np.zeros_like(samples.mean(axis=axis))
    return samples.std(axis=axis, ddof=1) / np.sqrt(n)


@dataclass
class SimHysteresis:
    """Tail fractions along an ascending then descending p1 ramp.

    Per-replicate arrays have shape (replicates, len(grid)); the
    descending arrays are aligned to the grid (index 0 = smallest p1).
    """

    grid: tuple
    dwell: int
    asc_f_S: np.ndarray
    asc_f_W: np.ndarray
    desc_f_S: np.ndarray
    desc_f_W: np.ndarray

    def branch_fractions(self, name: str):
        if name == "ascending":
            pair = (self.asc_f_S, self.asc_f_W)
        elif name == "descending":
            pair = (self.desc_f_S, self.desc_f_W)
        else:
            raise ValueError(f"unknown branch {name!r}")
        return (np.asarray(self.grid), pair[0].mean(axis=0), pair[1].mean(axis=0))

    def rows(self):
        """Replicate-mean rows, ascending in grid order then descending in
        traversal order; iterations reports the dwell per grid point."""
        out = []
        for branch, order in (("ascending", range(len(self.grid))),
                              ("descending", range(len(self.grid) - 1, -1, -1))):
            _, f_S, f_W = self.branch_fractions(branch)
            for i in order:
                out.append((
                    branch, float(self.grid[i]),
                    1.0 - float(f_S[i]), 1.0 - float(f_W[i]),
                    float(f_S[i]), float(f_W[i]),
                    True, 0.0, self.dwell, "sim",
                ))
        return out


def _hysteresis_replicate(network, params: DynamicsParams, grid, dwell: int,
                          rng: np.random.Generator):
    state = init_state(network, params)
    n_grid = len(grid)
    asc_S = np.empty(n_grid)
    asc_W = np.empty(n_grid)
    desc_S = np.empty(n_grid)
    desc_W = np.empty(n_grid)
    for i, p1 in enumerate(grid):
        live = dataclasses.replace(params, p1_S=float(p1), p1_W=float(p1))
        asc_S[i], asc_W[i] = _dwell_tail(state, live, dwell, rng)
    for i in range(n_grid - 1, -1, -1):
        live = dataclasses.replace(params, p1_S=float(grid[i]), p1_W=float(grid[i]))
        desc_S[i], desc_W[i] = _dwell_tail(state, live, dwell, rng)
    return asc_S, asc_W, desc_S, desc_W


def _run_indexed(task_fn, tasks: list[tuple], workers: int) -> list:
    """Run tasks, returning results in task order regardless of completion."""
    if workers > 1 and len(tasks) > 1:
        out = [None] * len(tasks)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(task_fn, *t): i for i, t in enumerate(tasks)}
            for fut in as_completed(futures):
                out[futures[fut]] = fut.result()
        return out
    return [task_fn(*t) for t in tasks]


def run_hysteresis_sim(network, params: DynamicsParams, grid, dwell: int,
                       replicates: int, rng: np.random.Generator,
                       workers: int = 1) -> SimHysteresis:
    """Ramp p1 up the grid and back down, state carried between points.

    The carried state is what produces hysteresis; each replicate is an
    independent traversal of the full ramp on the same network.
    """
    grid = tuple(float(g) for g in grid)
    if len(grid) < 2:
        raise ConfigurationError("hysteresis grid needs at least 2 points")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigurationError("hysteresis grid must be strictly increasing")
    if dwell < 2:
        raise ConfigurationError("dwell must be >= 2")
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    children = rng.spawn(replicates)
    tasks = [(network, params, grid, dwell, children[r])
             for r in range(replicates)]
    results = _run_indexed(_hysteresis_replicate, tasks, workers)
    shape = (replicates, len(grid))
    out = SimHysteresis(
        grid=grid, dwell=dwell,
        asc_f_S=np.empty(shape), asc_f_W=np.empty(shape),
        desc_f_S=np.empty(shape), desc_f_W=np.empty(shape),
    )
    for r, (a_S, a_W, d_S, d_W) in enumerate(results):
        out.asc_f_S[r] = a_S
        out.asc_f_W[r] = a_W
        out.desc_f_S[r] = d_S
        out.desc_f_W[r] = d_W
    return out


@dataclass
class PhaseDiagram:
    """Tail fractions per (p1, p2) cell, from active and failed starts."""

    p1_grid: tuple
    p2_grid: tuple
    f_S: np.ndarray  # (sheet, p1, p2, replicate)
    f_W: np.ndarray

    def mean(self, which: str, sheet: str) -> np.ndarray:
        arr = self.f_S if which == "f_S" else self.f_W
        return arr[SHEETS.index(sheet)].mean(axis=-1)

    def se(self, which: str, sheet: str) -> np.ndarray:
        arr = self.f_S if which == "f_S" else self.f_W
        return _se(arr[SHEETS.index(sheet)], axis=-1)

    def rows(self):
        reps = self.f_S.shape[-1]
        out = []
        for i, p1 in enumerate(self.p1_grid):
            for j, p2 in enumerate(self.p2_grid):
                for s, sheet in enumerate(SHEETS):
                    out.append((
                        float(p1), float(p2), sheet,
                        float(self.f_S[s, i, j].mean()),
                        float(self.f_W[s, i, j].mean()),
                        float(_se(self.f_S[s, i, j])),
                        float(_se(self.f_W[s, i, j])),
                        reps,
                    ))
        return out


def _seed_failed_start(state: SimulationState, tau: int,
                       rng: np.random.Generator) -> None:
    """Put every node into an internal-failure spell with staggered
    recovery times, approximating a settled fully-failed configuration."""
    n = state.network.n_nodes
    remaining = 1 + (rng.random(n) * tau).astype(np.int64)
    state.recover_at = remaining
    state.spell_start = remaining - tau


def _phase_cell(gen_config: GeneratorConfig, params: DynamicsParams,
                p1: float, p2: float, sheet: str, steps: int,
                rng: np.random.Generator) -> tuple[float, float]:
    network = generate(gen_config, rng)
    live = dataclasses.replace(params, p1_S=p1, p1_W=p1, p2=p2)
    state = init_state(network, live)
    if sheet == "failed":
        _seed_failed_start(state, live.tau, rng)
    return _dwell_tail(state, live, steps, rng)


def run_phase_diagram(gen_config: GeneratorConfig, params: DynamicsParams,
                      p1_grid, p2_grid, replicates: int, steps: int,
                      rng: np.random.Generator, workers: int = 1) -> PhaseDiagram:
    """Tail-averaged fractions over a p1 x p2 grid, two starting sheets.

    Every (cell, sheet, replicate) runs on a freshly generated network
    from its own derived stream.
    """
    p1_grid = tuple(float(v) for v in p1_grid)
    p2_grid = tuple(float(v) for v in p2_grid)
    if not p1_grid or not p2_grid:
        raise ConfigurationError("phase-diagram grids must be nonempty")
    if replicates < 1 or steps < 2:
        raise ConfigurationError("need replicates >= 1 and steps >= 2")
    n1, n2 = len(p1_grid), len(p2_grid)
    children = rng.spawn(2 * n1 * n2 * replicates)
    tasks = []
    slots = []
    c = 0
    for s, sheet in enumerate(SHEETS):
        for i, p1 in enumerate(p1_grid):
            for j, p2 in enumerate(p2_grid):
                for r in range(replicates):
                    tasks.append((gen_config, params, p1, p2, sheet, steps,
                                  children[c]))
                    slots.append((s, i, j, r))
                    c += 1
    results = _run_indexed(_phase_cell, tasks, workers)
    f_S = np.empty((2, n1, n2, replicates))
    f_W = np.empty((2, n1, n2, replicates))
    for (s, i, j, r), (v_S, v_W) in zip(slots, results):
        f_S[s, i, j, r] = v_S
        f_W[s, i, j, r] = v_W
    return PhaseDiagram(p1_grid=p1_grid, p2_grid=p2_grid, f_S=f_S, f_W=f_W)


@dataclass
class TakeoverSweep:
    """Acquisition outcomes across the takeover-multiplier grid."""

    n_grid: tuple
    takeover_fraction: np.ndarray  # (replicates, len(n_grid))
    final_T_S: np.ndarray
    f_S_peak: np.ndarray

    def rows(self):
        reps = self.takeover_fraction.shape[0]
        out = []
        for i, n in enumerate(self.n_grid):
            out.append((
                float(n),
                float(self.takeover_fraction[:, i].mean()),
                float(_se(self.takeover_fraction[:, i])),
                float(self.final_T_S[:, i].mean()),
                float(_se(self.final_T_S[:, i])),
                float(self.f_S_peak[:, i].mean()),
                reps,
            ))
        return out


def _sweep_task(gen_config: GeneratorConfig, params: DynamicsParams,
                n_value: float, steps: int,
                rng: np.random.Generator) -> tuple[float, float, float]:
    network = generate(gen_config, rng)
    live = dataclasses.replace(params, n=n_value)
    state = init_state(network, live)
    peak = 0.0
    for _ in range(steps):
        step(state, live, rng)
        f_S, _ = measure_fractions(state)
        peak = max(peak, f_S)
    frac = state.ledger.n_acquisitions / network.n_W
    return frac, state.ledger.T_S_current, peak


def takeover_sweep(gen_config: GeneratorConfig, params: DynamicsParams,
                   n_grid, replicates: int, steps: int,
                   rng: np.random.Generator, workers: int = 1) -> TakeoverSweep:
    """Acquired fraction, final threshold, and peak f_S per multiplier."""
    n_grid = tuple(float(v) for v in n_grid)
    if not n_grid or any(v <= 0 for v in n_grid):
        raise ConfigurationError("n grid must be positive")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigurationError("n grid must be strictly increasing")
    if params.mechanism == "none":
        raise ConfigurationError("takeover sweep needs an acquisition mechanism")
    if replicates < 1 or steps < 1:
        raise ConfigurationError("need replicates >= 1 and steps >= 1")
    children = rng.spawn(len(n_grid) * replicates)
    tasks = []
    slots = []
    c = 0
    for i, n_value in enumerate(n_grid):
        for r in range(replicates):
            tasks.append((gen_config, params, n_value, steps, children[c]))
            slots.append((r, i))
            c += 1
    results = _run_indexed(_sweep_task, tasks, workers)
    shape = (replicates, len(n_grid))
    sweep = TakeoverSweep(
        n_grid=n_grid,
        takeover_fraction=np.empty(shape),
        final_T_S=np.empty(shape),
        f_S_peak=np.empty(shape),
    )
    for (r, i), (frac, t_final, peak) in zip(slots, results):
        sweep.takeover_fraction[r, i] = frac
        sweep.final_T_S[r, i] = t_final
        sweep.f_S_peak[r, i] = peak
    return sweep


@dataclass(frozen=True)
class EarlyWarning:
    """Ratio-difference indicator and its argmax stopping time."""

    times: np.ndarray
    values: np.ndarray
    stop_time: int | None
    skipped: int

    @property
    def no_signal(self) -> bool:
        return self.stop_time is None


def early_warning(ts: TimeSeries, delta_t: int = EARLY_WARNING_WINDOW) -> EarlyWarning:
    """indicator(t) = f_S(t+dt)/f_W(t+dt) - f_S(t)/f_W(t).

    Points where either ratio is undefined (f_W = 0) are skipped; the
    stopping time is the earliest argmax over the remaining points.
    """
    if delta_t < 1:
        raise ConfigurationError("delta_t must be >= 1")
    if len(ts) <= delta_t:
        raise ConfigurationError(
            f"series of length {len(ts)} too short for window {delta_t}"
        )
    idx = np.arange(len(ts) - delta_t)
    valid = (ts.f_W[idx] > 0) & (ts.f_W[idx + delta_t] > 0)
    use = idx[valid]
    values = (
        ts.f_S[use + delta_t] / ts.f_W[use + delta_t]
        - ts.f_S[use] / ts.f_W[use]
    )
    times = ts.t[use]
    skipped = int(len(idx) - len(use))
    if len(use) == 0:
        return EarlyWarning(times=times, values=values, stop_time=None,
                            skipped=skipped)
    stop = int(times[int(np.argmax(values))])
    return EarlyWarning(times=times, values=values, stop_time=stop,
                        skipped=skipped)


@dataclass(frozen=True)
class CollapseEstimate:
    """First control value at which each network's tail falls below its
    collapse floor, with the fluctuation relative to the baseline p_X."""

    p1c_S: float | None
    fluctuation_S: float | None
    floor_S: float
    p1c_W: float | None
    fluctuation_W: float | None
    floor_W: float

    @property
    def open_ended_S(self) -> bool:
        return self.p1c_S is None

    @property
    def open_ended_W(self) -> bool:
        return self.p1c_W is None


def _ascending_fractions(curve):
    if hasattr(curve, "branch_fractions"):
        return curve.branch_fractions("ascending")
    grid = np.asarray(curve.grid, dtype=float)
    branch = curve.branch("ascending")
    f_S = np.array([fp.f_S for fp in branch])
    f_W = np.array([fp.f_W for fp in branch])
    return grid, f_S, f_W


def collapse_threshold_estimate(curve, p_X: float,
                                floor_fraction: float = 0.5) -> CollapseEstimate:
    """Collapse onset per network from an ascending branch.

    The floor is floor_fraction times the pre-attack level (the value at
    the first grid point); a network that never crosses it in range is
    reported open-ended (None).
    """
    if not 0.0 < floor_fraction < 1.0:
        raise ConfigurationError("floor_fraction must lie in (0, 1)")
    grid, f_S, f_W = _ascending_fractions(curve)
    if len(grid) < 2:
        raise ConfigurationError("ascending branch needs at least 2 points")
    results = {}
    for label, f in (("S", f_S), ("W", f_W)):
        floor = floor_fraction * float(f[0])
        below = np.flatnonzero(f < floor)
        if len(below) == 0:
            results[label] = (None, None, floor)
        else:
            p1c = float(grid[below[0]])
            results[label] = (p1c, p1c - p_X, floor)
    return CollapseEstimate(
        p1c_S=results["S"][0], fluctuation_S=results["S"][1],
        floor_S=results["S"][2],
        p1c_W=results["W"][0], fluctuation_W=results["W"][1],
        floor_W=results["W"][2],
    )


def hysteresis_rows(result) -> list[tuple]:
    """CSV rows for either a simulated or an analytical hysteresis result."""
    if isinstance(result, SimHysteresis):
        return result.rows()
    if isinstance(result, meanfield.HysteresisCurve):
        out = []
        for branch, order in (("ascending", range(len(result.grid))),
                              ("descending", range(len(result.grid) - 1, -1, -1))):
            points = result.branch(branch)
            for i in order:
                fp = points[i]
                out.append((
                    branch, float(result.grid[i]),
                    float(fp.a_S), float(fp.a_W),
                    float(fp.f_S), float(fp.f_W),
                    bool(fp.converged), float(fp.residual), int(fp.iterations),
                    "meanfield",
                ))
        return out
    raise TypeError(f"no row form for {type(result).__name__}")
