"""Per-step failure/recovery dynamics, acquisitions, and the resilience cost law.

Time semantics: a SimulationState with clock t describes the configuration
at time t.  One step produces time t+1 from a frozen snapshot of activity
at time t (synchronous update):

  1. every node draws internal failure with its owner's p1; a hit sets
     recover_at = (t+1) + tau, and starts a new spell only if the node was
     not already internally failed (a re-hit stretches the current spell
     by restarting the recovery countdown, keeping the spell onset);
  2. nodes whose recovery time has arrived and were not re-hit are
     eligible again;
  3. every eligible node whose time-t neighborhood is critical is
     externally failed with probability p2 for exactly this one step,
     and is Active otherwise; external failure is re-drawn every step
     while criticality persists;
  4. the acquisition mechanism (takeover/substitution) runs, re-owning
     W nodes whose contiguous internal-failure spell exceeded n*tau and
     applying the cost law per acquisition in ascending node order.

All randomness enters through two per-step uniform arrays (one internal,
one external draw per node), so the transition itself is a pure function
of (state, params, u_int, u_ext).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .topology import S, W, LABELS, DuplexNetwork

MECHANISMS = ("none", "takeover", "substitution")

ACTIVE = "Active"
INTERNAL_FAILED = "InternalFailed"
EXTERNAL_FAILED = "ExternalFailed"


@dataclass(frozen=True)
class NodeState:
    """Read-only view of one node's activity and spell clocks."""

    activity: str
    internal_fail_start: int | None
    recover_at: int | None


@dataclass(frozen=True)
class DualThresholds:
    """Cross-network criticality thresholds, one pair per network.

    T_WS applies to the W-neighbor active fraction of S-owned nodes,
    T_SW to the S-neighbor active fraction of W-owned nodes.
    """

    T_WS: float
    T_SW: float

    def __post_init__(self) -> None:
        for name in ("T_WS", "T_SW"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class DynamicsParams:
    """Failure, recovery, and mechanism parameters.

    T_S <= T_W keeps network S at least as resilient as W (a larger
    threshold means a node is critical more easily); equality is allowed
    so that fully symmetric networks can be configured.
    """

    p1_S: float
    p1_W: float
    p2: float
    tau: int
    T_S: float
    T_W: float
    n: float = 1.0
    mechanism: str = "none"
    cost_enabled: bool = False
    dual: DualThresholds | None = None

    def __post_init__(self) -> None:
        for name in ("p1_S", "p1_W", "p2", "T_S", "T_W"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")
        if self.tau < 1:
            raise ConfigurationError("tau must be >= 1")
        if self.T_S > self.T_W:
            raise ConfigurationError("T_S must be <= T_W")
        if not self.n > 0:
            raise ConfigurationError("n must be > 0")
        if self.mechanism not in MECHANISMS:
            raise ConfigurationError(
                f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}"
            )


@dataclass
class CostLedger:
    """Accumulated link mass and the live threshold of network S."""

    mass: float
    T_S_current: float
    acquisitions: list = field(default_factory=list)

    @property
    def n_acquisitions(self) -> int:
        return len(self.acquisitions)


class SimulationState:
    """Mutable per-run state over an immutable DuplexNetwork."""

    def __init__(self, network: DuplexNetwork, params: DynamicsParams):
        n = network.n_nodes
        self.network = network
        self.owner = network.home.copy()
        self.recover_at = np.zeros(n, dtype=np.int64)
        self.spell_start = np.zeros(n, dtype=np.int64)
        self.ext_failed = np.zeros(n, dtype=bool)
        self.clock = 0
        self.T_W = params.T_W
        # cost-law denominator starts at the realized total link mass of S
        mass = float(network.total_degree[network.is_S].sum())
        self.ledger = CostLedger(mass=mass, T_S_current=params.T_S)
        iu = sp.triu(network.intra, k=1).tocoo()
        xu = sp.triu(network.inter, k=1).tocoo()
        self._edge_u = np.concatenate([iu.row, xu.row])
        self._edge_v = np.concatenate([iu.col, xu.col])
        self._tally: tuple[int, int] | None = None

    def copy(self) -> "SimulationState":
        dup = object.__new__(SimulationState)
        dup.network = self.network
        dup.owner = self.owner.copy()
        dup.recover_at = self.recover_at.copy()
        dup.spell_start = self.spell_start.copy()
        dup.ext_failed = self.ext_failed.copy()
        dup.clock = self.clock
        dup.T_W = self.T_W
        dup.ledger = CostLedger(
            mass=self.ledger.mass,
            T_S_current=self.ledger.T_S_current,
            acquisitions=list(self.ledger.acquisitions),
        )
        dup._edge_u = self._edge_u
        dup._edge_v = self._edge_v
        dup._tally = self._tally
        return dup

    def internal_failed(self) -> np.ndarray:
        return self.clock < self.recover_at

    def active(self) -> np.ndarray:
        return ~(self.internal_failed() | self.ext_failed)

    def node_state(self, i: int) -> NodeState:
        if self.clock < self.recover_at[i]:
            return NodeState(
                activity=INTERNAL_FAILED,
                internal_fail_start=int(self.spell_start[i]),
                recover_at=int(self.recover_at[i]),
            )
        if self.ext_failed[i]:
            return NodeState(EXTERNAL_FAILED, None, None)
        return NodeState(ACTIVE, None, None)

    def owner_label(self, i: int) -> str:
        return LABELS[self.owner[i]]

    def _ownership_tally(self) -> tuple[int, int]:
        # an edge counts toward each owner side it touches: a mixed edge
        # belongs to both tallies
        if self._tally is None:
            u_is_S = self.owner[self._edge_u] == S
            v_is_S = self.owner[self._edge_v] == S
            both_S = int(np.count_nonzero(u_is_S & v_is_S))
            both_W = int(np.count_nonzero(~u_is_S & ~v_is_S))
            mixed = len(self._edge_u) - both_S - both_W
            self._tally = (both_S + mixed, both_W + mixed)
        return self._tally


def init_state(network: DuplexNetwork, params: DynamicsParams) -> SimulationState:
    """Fresh all-active state at clock 0."""
    return SimulationState(network, params)


def _class_fractions(state: SimulationState, active: np.ndarray):
    net = state.network
    cnt_intra = net.intra @ active.astype(np.int32)
    cnt_inter = net.inter @ active.astype(np.int32)
    return cnt_intra, cnt_inter


def _critical_mask(state: SimulationState, params: DynamicsParams,
                   active: np.ndarray) -> np.ndarray:
    net = state.network
    cnt_intra, cnt_inter = _class_fractions(state, active)
    d_intra = net.intra_degree
    d_inter = net.inter_degree
    own_T = np.where(state.owner == S, state.ledger.T_S_current, state.T_W)
    if params.dual is None:
        d_tot = d_intra + d_inter
        cnt = cnt_intra + cnt_inter
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(d_tot > 0, cnt / np.maximum(d_tot, 1), 1.0)
        return (d_tot > 0) & (frac <= own_T)
    cross_T = np.where(state.owner == S, params.dual.T_WS, params.dual.T_SW)
    with np.errstate(divide="ignore", invalid="ignore"):
        f_intra = np.where(d_intra > 0, cnt_intra / np.maximum(d_intra, 1), 1.0)
        f_inter = np.where(d_inter > 0, cnt_inter / np.maximum(d_inter, 1), 1.0)
    crit_own = (d_intra > 0) & (f_intra <= own_T)
    crit_cross = (d_inter > 0) & (f_inter <= cross_T)
    return crit_own | crit_cross


def neighborhood_critical(state: SimulationState, node: int,
                          params: DynamicsParams):
    """Evaluate one node's criticality from current activity.

    Returns (critical, intra_active_fraction, inter_active_fraction);
    a fraction is reported as 1.0 when that neighbor class is empty, and
    an isolated node (or empty class in dual mode) is never critical
    through it.
    """
    net = state.network
    active = state.active()
    nb_intra = net.neighbors_intra(node)
    nb_inter = net.neighbors_inter(node)
    f_intra = float(active[nb_intra].mean()) if len(nb_intra) else 1.0
    f_inter = float(active[nb_inter].mean()) if len(nb_inter) else 1.0
    own_T = state.ledger.T_S_current if state.owner[node] == S else state.T_W
    if params.dual is None:
        total = len(nb_intra) + len(nb_inter)
        if total == 0:
            return False, f_intra, f_inter
        frac = float(active[nb_intra].sum() + active[nb_inter].sum()) / total
        return frac <= own_T, f_intra, f_inter
    cross_T = params.dual.T_WS if state.owner[node] == S else params.dual.T_SW
    crit = (len(nb_intra) > 0 and f_intra <= own_T) or (
        len(nb_inter) > 0 and f_inter <= cross_T
    )
    return crit, f_intra, f_inter


def update_threshold_single(ledger: CostLedger, k_Wi: float, T_W: float) -> CostLedger:
    """Fold one acquired node of degree k_Wi into the threshold of S.

    The new threshold balances the resilience gained by the acquired links
    against the dilution of the existing mass:
    mass*(T' - T_cur) = k_Wi*(T_W - T'), then mass grows by k_Wi.
    """
    if ledger.mass + k_Wi == 0:
        raise ConfigurationError("degenerate network: mass + k_Wi = 0")
    t_new = (ledger.mass * ledger.T_S_current + k_Wi * T_W) / (ledger.mass + k_Wi)
    ledger.T_S_current = t_new
    ledger.mass += k_Wi
    return ledger


def update_threshold_batch(T_S: float, N_S: int, k_avg: float, degrees,
                           T_W: float) -> float:
    """Threshold of S after acquiring all of `degrees` at once."""
    mass0 = N_S * k_avg
    if mass0 <= 0:
        raise ConfigurationError("N_S * k_avg must be > 0")
    total = float(np.sum(degrees)) if len(degrees) else 0.0
    return (total * T_W + mass0 * T_S) / (mass0 + total)


def _acquire(state: SimulationState, params: DynamicsParams) -> list:
    """Re-own W nodes whose internal-failure spell exceeded n*tau."""
    int_failed = state.internal_failed()
    overdue = (
        (state.owner == W)
        & int_failed
        & ((state.clock - state.spell_start) > params.n * params.tau)
    )
    nodes = np.flatnonzero(overdue)
    events = []
    for i in nodes:
        i = int(i)
        k = int(state.network.total_degree[i])
        if params.cost_enabled:
            update_threshold_single(state.ledger, k, params.T_W)
        state.owner[i] = S
        state.recover_at[i] = state.clock
        state.spell_start[i] = state.clock
        state.ext_failed[i] = False
        event = (state.clock, i, k)
        state.ledger.acquisitions.append(event)
        events.append(event)
    if events:
        state._tally = None
    return events


def apply_takeover(state: SimulationState, params: DynamicsParams):
    """Permanent acquisition of long-failed W nodes by S."""
    return state, _acquire(state, params)


def apply_substitution(state: SimulationState, params: DynamicsParams):
    """Replacement of long-failed W nodes by fresh S nodes in place.

    The replacement keeps the node's adjacency and hands it S's thresholds
    and internal-failure rate; requires dual thresholds, which is the
    regime this mechanism belongs to.
    """
    if params.dual is None:
        raise ConfigurationError("substitution requires dual thresholds")
    return state, _acquire(state, params)


def transition(state: SimulationState, params: DynamicsParams,
               u_int: np.ndarray, u_ext: np.ndarray) -> SimulationState:
    """Advance one step using the supplied uniform draws (pure in rng)."""
    t_next = state.clock + 1
    prev_active = state.active()

    p1 = np.where(state.owner == S, params.p1_S, params.p1_W)
    hits = u_int < p1
    was_failed = state.internal_failed()
    new_spell = hits & ~was_failed
    state.spell_start[new_spell] = t_next
    state.recover_at[hits] = t_next + params.tau

    critical = _critical_mask(state, params, prev_active)
    state.clock = t_next
    eligible = ~state.internal_failed()
    state.ext_failed = eligible & critical & (u_ext < params.p2)

    if params.mechanism == "takeover":
        apply_takeover(state, params)
    elif params.mechanism == "substitution":
        apply_substitution(state, params)
    return state


def step(state: SimulationState, params: DynamicsParams,
         rng: np.random.Generator) -> SimulationState:
    """Draw the per-node uniforms and advance one step."""
    n = state.network.n_nodes
    u_int = rng.random(n)
    u_ext = rng.random(n)
    return transition(state, params, u_int, u_ext)


def measure_fractions(state: SimulationState) -> tuple[float, float]:
    """Active counts per owner, relative to the initial network sizes."""
    active = state.active()
    n_S0, n_W0 = state.network.initial_counts
    f_S = float(np.count_nonzero(active & (state.owner == S))) / n_S0
    f_W = float(np.count_nonzero(active & (state.owner == W))) / n_W0
    return f_S, f_W


def wealth(state: SimulationState) -> tuple[float, float]:
    """Link tally per owner times (1 - that owner's current threshold).

    A mixed-ownership edge counts toward both sides' link tallies; the
    product form is a documented default for "proportional to links and
    resilience".
    """
    links_S, links_W = state._ownership_tally()
    return (
        links_S * (1.0 - state.ledger.T_S_current),
        links_W * (1.0 - state.T_W),
    )
