"""Self-consistent failure levels for two coupled random-regular networks.

Nodes fail internally (spontaneously, with a stationary occupancy p*) or
externally (when too few of their neighbors are active).  For two coupled
networks S and W the stationary inactive fractions (a_S, a_W) solve a pair
of fixed-point equations.  This module solves them by damped iteration,
follows the solution branch while a parameter is swept up and then down,
locates discontinuities (spinodals) on each branch, and finds the control
interval where pushing on network S damages network W faster than S itself.

Degree convention: k_WS is the number of neighbors a node of S has inside
W, and k_SW the number a node of W has inside S.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

DAMPING = 0.5
TOLERANCE = 1e-10
MAX_ITER = 100_000


@dataclass(frozen=True)
class MeanFieldSystem:
    """Parameters of the coupled fixed-point equations.

    t_S and t_W are absolute thresholds: a node is critical when its total
    number of active neighbors (own network plus the other) is <= t.  The
    fractional thresholds are t_S/(k_S + k_WS) and t_W/(k_W + k_SW).
    """

    k_S: int
    k_W: int
    k_WS: int
    k_SW: int
    t_S: int
    t_W: int
    p2_S: float
    p2_W: float
    pstar_S: float
    pstar_W: float

    def __post_init__(self) -> None:
        for name in ("k_S", "k_W", "k_WS", "k_SW"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.t_S <= self.k_S + self.k_WS:
            raise ValueError("t_S must lie in [0, k_S + k_WS]")
        if not 0 <= self.t_W <= self.k_W + self.k_SW:
            raise ValueError("t_W must lie in [0, k_W + k_SW]")
        for name in ("p2_S", "p2_W", "pstar_S", "pstar_W"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class FixedPoint:
    """A solution of the coupled equations, with solver diagnostics.

    residual is the self-consistency defect max(|rhs_S - a_S|, |rhs_W - a_W|)
    at the returned point; it is below the solver tolerance iff converged.
    """

    a_S: float
    a_W: float
    residual: float
    iterations: int
    converged: bool

    @property
    def f_S(self) -> float:
        return 1.0 - self.a_S

    @property
    def f_W(self) -> float:
        return 1.0 - self.a_W


@dataclass(frozen=True)
class HysteresisCurve:
    """Fixed points along a swept control parameter, one per branch.

    Both branches are stored aligned to the same ascending grid; the
    descending branch was traversed from grid[-1] down to grid[0].
    """

    control: str
    grid: tuple[float, ...]
    ascending: tuple[FixedPoint, ...]
    descending: tuple[FixedPoint, ...]

    def branch(self, name: str) -> tuple[FixedPoint, ...]:
        if name == "ascending":
            return self.ascending
        if name == "descending":
            return self.descending
        raise ValueError(f"unknown branch {name!r}")


@dataclass(frozen=True)
class SpinodalReport:
    """Control values of the largest per-branch jumps, None when below floor."""

    ascending_S: float | None
    ascending_W: float | None
    descending_S: float | None
    descending_W: float | None


def p_star(p1: float, tau: float) -> float:
    """Stationary fraction of internally failed nodes, 1 - exp(-p1*tau)."""
    if not 0.0 <= p1 <= 1.0:
        raise ValueError("p1 must lie in [0, 1]")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return -math.expm1(-p1 * tau)


def _binom_pmf(k: int, p: float) -> np.ndarray:
    # log-space evaluation keeps large-degree coefficients finite; also much
    # cheaper than scipy.stats dispatch, and this sits in the solver hot loop
    if k == 0:
        return np.ones(1)
    if p <= 0.0:
        out = np.zeros(k + 1)
        out[0] = 1.0
        return out
    if p >= 1.0:
        out = np.zeros(k + 1)
        out[k] = 1.0
        return out
    i = np.arange(k + 1)
    logpmf = (
        gammaln(k + 1)
        - gammaln(i + 1)
        - gammaln(k - i + 1)
        + i * np.log(p)
        + (k - i) * np.log1p(-p)
    )
    return np.exp(logpmf)


def binom_tail(k: int, m: int, p_active: float) -> float:
    """P(at most m active among k neighbors each active with p_active)."""
    if m < 0:
        return 0.0
    if m >= k:
        return 1.0
    return float(np.clip(_binom_pmf(k, p_active)[: m + 1].sum(), 0.0, 1.0))


def crit_prob(
    a_self: float, a_other: float, k_self: int, k_other: int, t_abs: int
) -> float:
    """Probability that a node's total active neighbor count is <= t_abs.

    Neighbors are independent: k_self of them are active with probability
    1 - a_self and k_other with probability 1 - a_other.
    """
    if t_abs < 0:
        return 0.0
    if t_abs >= k_self + k_other:
        return 1.0
    pmf = np.convolve(_binom_pmf(k_self, 1.0 - a_self), _binom_pmf(k_other, 1.0 - a_other))
    return float(np.clip(pmf[: t_abs + 1].sum(), 0.0, 1.0))


def _rhs(system: MeanFieldSystem, a_S: float, a_W: float) -> tuple[float, float]:
    e_S = crit_prob(a_S, a_W, system.k_S, system.k_WS, system.t_S)
    e_W = crit_prob(a_W, a_S, system.k_W, system.k_SW, system.t_W)
    return (
        system.pstar_S + system.p2_S * (1.0 - system.pstar_S) * e_S,
        system.pstar_W + system.p2_W * (1.0 - system.pstar_W) * e_W,
    )


def _iterate(
    rhs,
    init: tuple[float, float],
    tolerance: float,
    max_iter: int,
    damping: float,
) -> FixedPoint:
    a_S, a_W = float(init[0]), float(init[1])
    if not (0.0 <= a_S <= 1.0 and 0.0 <= a_W <= 1.0):
        raise ValueError("init must lie in [0, 1]^2")
    defect = math.inf
    for it in range(1, max_iter + 1):
        r_S, r_W = rhs(a_S, a_W)
        defect = max(abs(r_S - a_S), abs(r_W - a_W))
        if defect < tolerance:
            return FixedPoint(a_S, a_W, defect, it, True)
        a_S += damping * (r_S - a_S)
        a_W += damping * (r_W - a_W)
    return FixedPoint(a_S, a_W, defect, max_iter, False)


def fixed_point(
    system: MeanFieldSystem,
    init: tuple[float, float] = (0.0, 0.0),
    tolerance: float = TOLERANCE,
    max_iter: int = MAX_ITER,
    damping: float = DAMPING,
) -> FixedPoint:
    """Solve the coupled equations by damped iteration from a warm start.

    The warm start selects the branch in the bistable region: an all-active
    init (0, 0) finds the functioning state, an all-failed init the
    collapsed one.  An unconverged result is returned flagged, never as if
    it had converged.
    """
    return _iterate(
        lambda a_S, a_W: _rhs(system, a_S, a_W), init, tolerance, max_iter, damping
    )


def trace_hysteresis(
    system: MeanFieldSystem,
    control: str,
    grid,
    tolerance: float = TOLERANCE,
    max_iter: int = MAX_ITER,
    damping: float = DAMPING,
) -> HysteresisCurve:
    """Follow both solution branches while `control` sweeps over `grid`.

    Ascending: solve at each grid value, warm-starting from the previous
    solution (all-active start at the first point).  Descending: sweep the
    same grid in reverse, warm-starting from the ascending endpoint.  Both
    branches are returned aligned to the ascending grid.
    """
    grid = [float(g) for g in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    if not hasattr(system, control):
        raise ValueError(f"unknown control parameter {control!r}")

    def solve(value: float, init: tuple[float, float]) -> FixedPoint:
        sys_v = dataclasses.replace(system, **{control: value})
        return fixed_point(sys_v, init, tolerance, max_iter, damping)

    ascending: list[FixedPoint] = []
    init = (0.0, 0.0)
    for g in grid:
        fp = solve(g, init)
        ascending.append(fp)
        init = (fp.a_S, fp.a_W)

    descending_rev: list[FixedPoint] = []
    init = (ascending[-1].a_S, ascending[-1].a_W)
    for g in reversed(grid):
        fp = solve(g, init)
        descending_rev.append(fp)
        init = (fp.a_S, fp.a_W)

    return HysteresisCurve(
        control=control,
        grid=tuple(grid),
        ascending=tuple(ascending),
        descending=tuple(descending_rev[::-1]),
    )


def _branch_jump(
    grid: tuple[float, ...], values: list[float], jump_floor: float, reverse: bool
) -> float | None:
    diffs = [abs(b - a) for a, b in zip(values, values[1:])]
    if not diffs:
        return None
    best = max(range(len(diffs)), key=diffs.__getitem__)
    if diffs[best] < jump_floor:
        return None
    # report the grid value the branch lands on after the jump, in its own
    # traversal direction
    return grid[best] if reverse else grid[best + 1]


def spinodal_detect(curve: HysteresisCurve, jump_floor: float = 0.2) -> SpinodalReport:
    """Locate the largest single-step jump in a per branch and network.

    Returns the control value just past the jump along each branch's
    traversal direction; None where no step reaches `jump_floor`.
    Accuracy is limited by the grid spacing.
    """
    if len(curve.grid) < 3:
        raise ValueError("curve needs at least 3 grid points per branch")
    asc_S = [fp.a_S for fp in curve.ascending]
    asc_W = [fp.a_W for fp in curve.ascending]
    des_S = [fp.a_S for fp in curve.descending]
    des_W = [fp.a_W for fp in curve.descending]
    return SpinodalReport(
        ascending_S=_branch_jump(curve.grid, asc_S, jump_floor, reverse=False),
        ascending_W=_branch_jump(curve.grid, asc_W, jump_floor, reverse=False),
        descending_S=_branch_jump(curve.grid, des_S, jump_floor, reverse=True),
        descending_W=_branch_jump(curve.grid, des_W, jump_floor, reverse=True),
    )


def effective_region(
    curve: HysteresisCurve, slope_eps: float = 1e-12
) -> tuple[float, float] | None:
    """Control interval on the ascending branch where d a_W / d a_S > 1.

    Inside this interval an increase of the control damages W faster than S.
    Slopes are discrete differences between consecutive grid points; when
    a_S barely moves but a_W does, the slope counts as above one.  Returns
    (start, end) of the longest contiguous run, or None when the slope
    never exceeds one.
    """
    a_S = [fp.a_S for fp in curve.ascending]
    a_W = [fp.a_W for fp in curve.ascending]
    above: list[bool] = []
    for i in range(len(a_S) - 1):
        d_S = a_S[i + 1] - a_S[i]
        d_W = a_W[i + 1] - a_W[i]
        if abs(d_S) <= slope_eps:
            above.append(d_W > slope_eps)
        else:
            above.append(d_W / d_S > 1.0)
    best: tuple[int, int] | None = None
    run_start = None
    for i, flag in enumerate(above + [False]):
        if flag and run_start is None:
            run_start = i
        elif not flag and run_start is not None:
            if best is None or (i - run_start) > (best[1] - best[0]):
                best = (run_start, i)
            run_start = None
    if best is None:
        return None
    # intervals [i, i+1] from run_start to i-1 inclusive span those grid values
    return (curve.grid[best[0]], curve.grid[best[1]])


def fixed_point_independent(
    system: MeanFieldSystem,
    m_S: int,
    m_WS: int,
    m_W: int,
    m_SW: int,
    init: tuple[float, float] = (0.0, 0.0),
    tolerance: float = TOLERANCE,
    max_iter: int = MAX_ITER,
    damping: float = DAMPING,
) -> FixedPoint:
    """Variant treating the failure channels as independent events.

    Here each network channel is critical on its own: a node of S is at
    risk when its active neighbors inside S number at most m_S, or when
    its active neighbors inside W number at most m_WS (likewise m_W, m_SW
    for nodes of W).  These m are count thresholds on active neighbors,
    not attachment counts.  Internal failure and the two external-failure
    channels combine by inclusion-exclusion, equivalently

        a = 1 - (1 - p*) (1 - p2 E_own) (1 - p2 E_cross).

    The absolute thresholds t_S, t_W of `system` are ignored here.
    """
    if not 0 <= m_S <= system.k_S:
        raise ValueError("m_S must lie in [0, k_S]")
    if not 0 <= m_WS <= system.k_WS:
        raise ValueError("m_WS must lie in [0, k_WS]")
    if not 0 <= m_W <= system.k_W:
        raise ValueError("m_W must lie in [0, k_W]")
    if not 0 <= m_SW <= system.k_SW:
        raise ValueError("m_SW must lie in [0, k_SW]")

    def rhs(a_S: float, a_W: float) -> tuple[float, float]:
        e_S_own = binom_tail(system.k_S, m_S, 1.0 - a_S)
        e_S_cross = binom_tail(system.k_WS, m_WS, 1.0 - a_W)
        e_W_own = binom_tail(system.k_W, m_W, 1.0 - a_W)
        e_W_cross = binom_tail(system.k_SW, m_SW, 1.0 - a_S)
        r_S = 1.0 - (1.0 - system.pstar_S) * (1.0 - system.p2_S * e_S_own) * (
            1.0 - system.p2_S * e_S_cross
        )
        r_W = 1.0 - (1.0 - system.pstar_W) * (1.0 - system.p2_W * e_W_own) * (
            1.0 - system.p2_W * e_W_cross
        )
        return r_S, r_W

    return _iterate(rhs, init, tolerance, max_iter, damping)


def finance_threshold_shift(
    k_i: int, T_h: float, epsilon: float, alpha: float = 1.0
) -> float:
    """Threshold of a node after an asset perturbation epsilon.

    A gain (epsilon > 0) spread over k_i**alpha neighbors lowers the
    threshold (more resilient); a loss raises it.  The caller is
    responsible for clamping to [0, 1], see `clamp_unit`.
    """
    if k_i < 1:
        raise ValueError("k_i must be >= 1")
    return T_h - epsilon / float(k_i) ** alpha


def clamp_unit(x: float) -> tuple[float, bool]:
    """Clamp to [0, 1]; the flag reports whether clamping occurred."""
    if x < 0.0:
        return 0.0, True
    if x > 1.0:
        return 1.0, True
    return float(x), False
