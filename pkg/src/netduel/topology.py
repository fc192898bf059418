"""Construction of two interconnected networks (a duplex).

Node indices are global: S nodes occupy [0, n_S), W nodes [n_S, n_S + n_W).
The `home` label records the network a node was created in and never
changes; ownership changes during simulation are tracked by the dynamics
state, not here.  A generated DuplexNetwork is immutable and shareable.

Degree convention: k_WS is the number of W-neighbors of an S node, k_SW
the number of S-neighbors of a W node (so k_WS * n_S == k_SW * n_W).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, GenerationError
from .output import atomic_write_text

S, W = 0, 1
LABELS = ("S", "W")

KINDS = ("BA", "ER", "ER-assortative", "random-regular")

# attempts per requested edge before a rejection sampler gives up
REJECTION_CAP_FACTOR = 10_000


@dataclass(frozen=True)
class NodeRef:
    """A node's identity: immutable home network plus current owner."""

    index: int
    home: str
    owner: str


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters for all four topology kinds; validation is kind-specific.

    ER edge budgets: explicit counts win over probabilities; when neither
    is given, counts are chosen to match the BA totals for the same
    (n0, m_S, m_W, m_SW), so kinds are comparable like-for-like.
    """

    kind: str
    n_S: int
    n_W: int
    n0: int = 3
    m_S: int = 3
    m_W: int = 3
    m_SW: int = 2
    er_edges_intra_S: int | None = None
    er_edges_intra_W: int | None = None
    er_edges_inter: int | None = None
    er_p_intra_S: float | None = None
    er_p_intra_W: float | None = None
    er_p_inter: float | None = None
    k_S: int | None = None
    k_W: int | None = None
    k_WS: int | None = None
    k_SW: int | None = None

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(
                f"kind must be one of {KINDS}, got {self.kind!r}"
            )
        if self.n_S < 1 or self.n_W < 1:
            raise ConfigurationError("n_S and n_W must be >= 1")
        if self.kind == "BA":
            if self.m_S < 1 or self.m_W < 1:
                raise ConfigurationError("m_S and m_W must be >= 1")
            if self.m_SW < 0:
                raise ConfigurationError("m_SW must be >= 0")
            if self.n0 < max(self.m_S, self.m_W, self.m_SW, 2):
                raise ConfigurationError(
                    "n0 must be >= max(m_S, m_W, m_SW) and >= 2"
                )
            if self.n_S < self.n0 or self.n_W < self.n0:
                raise ConfigurationError("network sizes must be >= n0")
        elif self.kind in ("ER", "ER-assortative"):
            e_S, e_W, e_X = self.er_edge_budgets()
            if e_S > self.n_S * (self.n_S - 1) // 2:
                raise ConfigurationError(
                    f"intra-S edges {e_S} exceed possible pairs"
                )
            if e_W > self.n_W * (self.n_W - 1) // 2:
                raise ConfigurationError(
                    f"intra-W edges {e_W} exceed possible pairs"
                )
            if e_X > self.n_S * self.n_W:
                raise ConfigurationError(
                    f"inter edges {e_X} exceed possible pairs"
                )
        elif self.kind == "random-regular":
            for name in ("k_S", "k_W", "k_WS", "k_SW"):
                if getattr(self, name) is None or getattr(self, name) < 0:
                    raise ConfigurationError(f"{name} must be given and >= 0")
            if self.k_S > self.n_S - 1 or self.k_W > self.n_W - 1:
                raise ConfigurationError("intra degree exceeds network size - 1")
            if self.k_WS > self.n_W or self.k_SW > self.n_S:
                raise ConfigurationError("inter degree exceeds other network size")
            if (self.k_S * self.n_S) % 2 or (self.k_W * self.n_W) % 2:
                raise ConfigurationError("k * N must be even within each network")
            if self.k_WS * self.n_S != self.k_SW * self.n_W:
                raise ConfigurationError(
                    "inter stubs must balance: k_WS * n_S == k_SW * n_W"
                )

    def er_edge_budgets(self) -> tuple[int, int, int]:
        """Resolve (intra_S, intra_W, inter) edge counts for the ER kinds."""

        def resolve(count, prob, possible, ba_default):
            if count is not None:
                if count < 0:
                    raise ConfigurationError("edge counts must be >= 0")
                return int(count)
            if prob is not None:
                if not 0.0 <= prob <= 1.0:
                    raise ConfigurationError("edge probabilities must lie in [0, 1]")
                return int(round(prob * possible))
            return ba_default

        ba_S = self.n0 * (self.n0 - 1) // 2 + self.m_S * (self.n_S - self.n0)
        ba_W = self.n0 * (self.n0 - 1) // 2 + self.m_W * (self.n_W - self.n0)
        ba_X = self.m_SW * ((self.n_S - self.n0) + (self.n_W - self.n0))
        return (
            resolve(self.er_edges_intra_S, self.er_p_intra_S,
                    self.n_S * (self.n_S - 1) // 2, max(ba_S, 0)),
            resolve(self.er_edges_intra_W, self.er_p_intra_W,
                    self.n_W * (self.n_W - 1) // 2, max(ba_W, 0)),
            resolve(self.er_edges_inter, self.er_p_inter,
                    self.n_S * self.n_W, max(ba_X, 0)),
        )


class DuplexNetwork:
    """Immutable topology: home labels plus intra/inter adjacency."""

    def __init__(self, home: np.ndarray, intra: sp.csr_matrix, inter: sp.csr_matrix,
                 initial_counts: tuple[int, int]):
        self.home = home
        self.intra = intra
        self.inter = inter
        self.initial_counts = initial_counts

    @property
    def n_nodes(self) -> int:
        return len(self.home)

    @property
    def n_S(self) -> int:
        return self.initial_counts[0]

    @property
    def n_W(self) -> int:
        return self.initial_counts[1]

    @cached_property
    def is_S(self) -> np.ndarray:
        return self.home == S

    @cached_property
    def is_W(self) -> np.ndarray:
        return self.home == W

    @cached_property
    def intra_degree(self) -> np.ndarray:
        return np.asarray(self.intra.sum(axis=1)).ravel().astype(np.int64)

    @cached_property
    def inter_degree(self) -> np.ndarray:
        return np.asarray(self.inter.sum(axis=1)).ravel().astype(np.int64)

    @cached_property
    def total_degree(self) -> np.ndarray:
        return self.intra_degree + self.inter_degree

    def neighbors_intra(self, i: int) -> np.ndarray:
        return self.intra.indices[self.intra.indptr[i]:self.intra.indptr[i + 1]]

    def neighbors_inter(self, i: int) -> np.ndarray:
        return self.inter.indices[self.inter.indptr[i]:self.inter.indptr[i + 1]]

    def node(self, i: int) -> NodeRef:
        label = LABELS[self.home[i]]
        return NodeRef(index=i, home=label, owner=label)

    def edge_lines(self):
        """Deterministic edge listing: `u v kind`, upper triangle, sorted."""
        for matrix, inter_flag in ((self.intra, False), (self.inter, True)):
            coo = sp.triu(matrix, k=1).tocoo()
            order = np.lexsort((coo.col, coo.row))
            for u, v in zip(coo.row[order], coo.col[order]):
                if inter_flag:
                    kind = "inter"
                else:
                    kind = "intra_S" if self.home[u] == S else "intra_W"
                yield f"{u} {v} {kind}"


def _build_symmetric_csr(edges, n: int) -> sp.csr_matrix:
    if not edges:
        return sp.csr_matrix((n, n), dtype=np.int8)
    arr = np.asarray(edges, dtype=np.int64)
    rows = np.concatenate([arr[:, 0], arr[:, 1]])
    cols = np.concatenate([arr[:, 1], arr[:, 0]])
    data = np.ones(len(rows), dtype=np.int8)
    mat = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    mat.data[:] = 1  # collapse accidental duplicates instead of summing
    mat.sort_indices()
    return mat


def _assemble(config: GeneratorConfig, intra_edges, inter_edges) -> DuplexNetwork:
    n = config.n_S + config.n_W
    home = np.zeros(n, dtype=np.int8)
    home[config.n_S:] = W
    return DuplexNetwork(
        home=home,
        intra=_build_symmetric_csr(intra_edges, n),
        inter=_build_symmetric_csr(inter_edges, n),
        initial_counts=(config.n_S, config.n_W),
    )


def _pa_pick(pool: list, existing: list, m: int, rng: np.random.Generator,
             forbid: set) -> list:
    """Pick m distinct attachment targets, degree-proportionally from pool.

    Falls back to uniform choice over the remaining eligible nodes when the
    pool is empty or rejection stalls, so the pick always terminates.
    """
    picked: list = []
    seen = set(forbid)
    stall = 0
    while len(picked) < m:
        if pool and stall < 50 * (m + 1):
            cand = pool[int(rng.integers(len(pool)))]
            if cand in seen:
                stall += 1
                continue
        else:
            eligible = [x for x in existing if x not in seen]
            if not eligible:
                raise GenerationError(
                    f"cannot place {m} attachments among {len(existing)} nodes"
                )
            cand = eligible[int(rng.integers(len(eligible)))]
        picked.append(cand)
        seen.add(cand)
        stall = 0
    return picked


def gen_interconnected_ba(config: GeneratorConfig, rng: np.random.Generator) -> DuplexNetwork:
    """Grow both networks in lockstep with preferential attachment.

    Seeds are n0-cliques inside each network with no inter edges.  Each new
    node of S attaches to m_S distinct nodes of S and m_SW distinct nodes
    of W, chosen proportionally to total degree (intra + inter); W-nodes
    symmetrically.  S and W alternate until both reach target size.
    """
    config.validate()
    if config.kind != "BA":
        raise ConfigurationError(f"expected kind BA, got {config.kind!r}")
    n_S, n_W, n0 = config.n_S, config.n_W, config.n0

    intra_edges: list = []
    inter_edges: list = []
    # one entry per unit of total degree, per network: the attachment pools
    pool = {S: [], W: []}
    existing = {S: list(range(n0)), W: list(range(n_S, n_S + n0))}

    def net_of(i: int) -> int:
        return S if i < n_S else W

    def add_edge(u: int, v: int, store: list) -> None:
        store.append((u, v))
        pool[net_of(u)].append(u)
        pool[net_of(v)].append(v)

    for base in (0, n_S):
        for i in range(n0):
            for j in range(i + 1, n0):
                add_edge(base + i, base + j, intra_edges)

    grown = {S: n0, W: n0}
    target = {S: n_S, W: n_W}
    base_index = {S: 0, W: n_S}
    m_intra = {S: config.m_S, W: config.m_W}
    while grown[S] < target[S] or grown[W] < target[W]:
        for net in (S, W):
            if grown[net] >= target[net]:
                continue
            other = W if net == S else S
            idx = base_index[net] + grown[net]
            for t in _pa_pick(pool[net], existing[net], m_intra[net], rng, {idx}):
                add_edge(idx, t, intra_edges)
            for t in _pa_pick(pool[other], existing[other], config.m_SW, rng, set()):
                add_edge(idx, t, inter_edges)
            existing[net].append(idx)
            grown[net] += 1

    return _assemble(config, intra_edges, inter_edges)


def _sample_distinct_pairs(n_edges: int, draw_pair, seen: set,
                           rng: np.random.Generator, what: str) -> list:
    edges: list = []
    attempts = 0
    cap = REJECTION_CAP_FACTOR * max(n_edges, 1)
    while len(edges) < n_edges:
        attempts += 1
        if attempts > cap:
            raise GenerationError(
                f"could not place {n_edges} {what} edges", attempts=attempts
            )
        pair = draw_pair()
        if pair is None or pair in seen:
            continue
        seen.add(pair)
        edges.append(pair)
    return edges


def gen_interconnected_er(config: GeneratorConfig, rng: np.random.Generator) -> DuplexNetwork:
    """Uniform-random intra edges per network plus uniform inter edges."""
    config.validate()
    if config.kind != "ER":
        raise ConfigurationError(f"expected kind ER, got {config.kind!r}")
    e_S, e_W, e_X = config.er_edge_budgets()
    intra_edges = _er_intra_edges(config, e_S, e_W, rng)

    def draw_inter():
        u = int(rng.integers(config.n_S))
        v = config.n_S + int(rng.integers(config.n_W))
        return (u, v)

    inter_edges = _sample_distinct_pairs(e_X, draw_inter, set(), rng, "inter")
    return _assemble(config, intra_edges, inter_edges)


def _er_intra_edges(config: GeneratorConfig, e_S: int, e_W: int,
                    rng: np.random.Generator) -> list:
    intra_edges: list = []
    for n_edges, base, size, label in (
        (e_S, 0, config.n_S, "intra-S"),
        (e_W, config.n_S, config.n_W, "intra-W"),
    ):
        def draw_pair():
            u = int(rng.integers(size))
            v = int(rng.integers(size))
            if u == v:
                return None
            if u > v:
                u, v = v, u
            return (base + u, base + v)

        intra_edges += _sample_distinct_pairs(n_edges, draw_pair, set(), rng, label)
    return intra_edges


def gen_interconnected_er_assortative(config: GeneratorConfig,
                                      rng: np.random.Generator) -> DuplexNetwork:
    """ER intra parts, inter links biased toward similar endpoint degrees.

    A candidate pair (u in S, v in W) with intra degrees d1, d2 is accepted
    with probability 1 / (|d1 - d2| + 1); degrees are those of the already
    generated intra graphs and stay fixed while inter links accumulate.
    """
    config.validate()
    if config.kind != "ER-assortative":
        raise ConfigurationError(
            f"expected kind ER-assortative, got {config.kind!r}"
        )
    e_S, e_W, e_X = config.er_edge_budgets()
    intra_edges = _er_intra_edges(config, e_S, e_W, rng)

    degree = np.zeros(config.n_S + config.n_W, dtype=np.int64)
    for u, v in intra_edges:
        degree[u] += 1
        degree[v] += 1

    def draw_inter():
        u = int(rng.integers(config.n_S))
        v = config.n_S + int(rng.integers(config.n_W))
        gap = abs(int(degree[u]) - int(degree[v]))
        if rng.random() >= 1.0 / (gap + 1):
            return None
        return (u, v)

    inter_edges = _sample_distinct_pairs(e_X, draw_inter, set(), rng, "assortative inter")
    return _assemble(config, intra_edges, inter_edges)


def _repair_matching(rows: list, rng: np.random.Generator,
                     canonical: bool, what: str) -> list:
    """Make a stub pairing simple by degree-preserving pair swaps."""

    def key(u, v):
        return (v, u) if canonical and u > v else (u, v)

    seen: dict = {}
    bad: list = []
    for i, (u, v) in enumerate(rows):
        k = key(u, v)
        if u == v or k in seen:
            bad.append(i)
        else:
            seen[k] = i

    attempts = 0
    cap = REJECTION_CAP_FACTOR * max(len(rows), 1)
    while bad:
        i = bad[-1]
        u_i, v_i = rows[i]
        attempts += 1
        if attempts > cap:
            raise GenerationError(
                f"stub matching for {what} stalled with {len(bad)} conflicts",
                attempts=attempts,
            )
        j = int(rng.integers(len(rows)))
        if j == i or j in bad:
            continue
        u_j, v_j = rows[j]
        k_j_old = key(u_j, v_j)
        k_a, k_b = key(u_i, v_j), key(u_j, v_i)
        del seen[k_j_old]
        if (u_i != v_j and u_j != v_i and k_a != k_b
                and k_a not in seen and k_b not in seen):
            rows[i] = (u_i, v_j)
            rows[j] = (u_j, v_i)
            seen[k_a] = i
            seen[k_b] = j
            bad.pop()
        else:
            seen[k_j_old] = j
    return rows


def _match_within(nodes: np.ndarray, k: int, rng: np.random.Generator,
                  what: str) -> list:
    if k == 0 or len(nodes) == 0:
        return []
    stubs = np.repeat(nodes, k)
    rng.shuffle(stubs)
    rows = [(int(u), int(v)) for u, v in zip(stubs[0::2], stubs[1::2])]
    return _repair_matching(rows, rng, canonical=True, what=what)


def _match_across(left_nodes: np.ndarray, k_left: int,
                  right_nodes: np.ndarray, k_right: int,
                  rng: np.random.Generator, what: str) -> list:
    if k_left == 0 or k_right == 0:
        return []
    left = np.repeat(left_nodes, k_left)
    right = np.repeat(right_nodes, k_right)
    rng.shuffle(left)
    rng.shuffle(right)
    rows = [(int(u), int(v)) for u, v in zip(left, right)]
    return _repair_matching(rows, rng, canonical=False, what=what)


def gen_random_regular_duplex(config: GeneratorConfig,
                              rng: np.random.Generator) -> DuplexNetwork:
    """Exact degrees: k_S/k_WS for every S node, k_W/k_SW for every W node."""
    config.validate()
    if config.kind != "random-regular":
        raise ConfigurationError(
            f"expected kind random-regular, got {config.kind!r}"
        )
    s_nodes = np.arange(config.n_S, dtype=np.int64)
    w_nodes = np.arange(config.n_S, config.n_S + config.n_W, dtype=np.int64)
    intra_edges = _match_within(s_nodes, config.k_S, rng, "intra-S")
    intra_edges += _match_within(w_nodes, config.k_W, rng, "intra-W")
    inter_edges = _match_across(s_nodes, config.k_WS, w_nodes, config.k_SW,
                                rng, "inter")
    return _assemble(config, intra_edges, inter_edges)


_GENERATORS = {
    "BA": gen_interconnected_ba,
    "ER": gen_interconnected_er,
    "ER-assortative": gen_interconnected_er_assortative,
    "random-regular": gen_random_regular_duplex,
}


def generate(config: GeneratorConfig, rng: np.random.Generator) -> DuplexNetwork:
    """Dispatch to the generator for config.kind."""
    config.validate()
    return _GENERATORS[config.kind](config, rng)


def dump_edges(net: DuplexNetwork, path: str, comments=()) -> None:
    """Write the edge list atomically: comment header, then `u v kind` lines."""
    lines = [f"# {c}" for c in comments]
    lines.extend(net.edge_lines())
    atomic_write_text(path, "\n".join(lines) + "\n")


def validate_invariants(net: DuplexNetwork) -> None:
    """Raise AssertionError when a structural invariant is broken."""
    for mat in (net.intra, net.inter):
        assert (mat != mat.T).nnz == 0, "adjacency must be symmetric"
        assert mat.diagonal().sum() == 0, "self-loops are forbidden"
        assert mat.nnz == 0 or mat.data.max() == 1, "duplicate edges are forbidden"
    coo = sp.triu(net.inter, k=1).tocoo()
    assert all(
        net.home[u] != net.home[v] for u, v in zip(coo.row, coo.col)
    ), "inter edges must connect different homes"
    both = net.intra.multiply(net.inter)
    assert both.nnz == 0, "an edge cannot be both intra and inter"
    coo_i = sp.triu(net.intra, k=1).tocoo()
    assert all(
        net.home[u] == net.home[v] for u, v in zip(coo_i.row, coo_i.col)
    ), "intra edges must stay within one home network"
