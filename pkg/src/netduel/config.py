"""Experiment configuration: a flat key = value document.

Grammar: one `key = value` pair per line; blank lines and lines starting
with `#` are ignored; keys are dotted (`section.field`); values are
scalars, comma-separated lists, or `start:stop:count` grid expressions.
Parsing materializes every default, so serializing a parsed config shows
the complete effective setting, and parse(serialize(x)) == x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DualThresholds, DynamicsParams
from .errors import ConfigurationError
from .meanfield import DAMPING, MAX_ITER, TOLERANCE, MeanFieldSystem
from .output import format_value
from .topology import KINDS, GeneratorConfig

PROTOCOLS = (
    "timeseries", "hysteresis-sim", "phase-diagram", "meanfield-trace",
    "takeover-sweep", "early-warning",
)

# p_X baseline: both networks idle at the same small internal rate
DEFAULT_P1 = 0.0001
DEFAULT_TAU = 50
DEFAULT_T_S = 0.3
DEFAULT_T_W = 0.7
DEFAULT_DELTA_T = 20


@dataclass(frozen=True)
class TimeseriesSettings:
    horizon: int
    segments: tuple = ()


@dataclass(frozen=True)
class HysteresisSettings:
    grid: tuple
    dwell: int


@dataclass(frozen=True)
class PhaseSettings:
    p1_grid: tuple
    p2_grid: tuple
    steps: int


@dataclass(frozen=True)
class SweepSettings:
    n_grid: tuple
    steps: int


@dataclass(frozen=True)
class MeanfieldSettings:
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
    control: str
    grid: tuple
    damping: float
    tolerance: float
    max_iter: int

    def system(self) -> MeanFieldSystem:
        return MeanFieldSystem(
            k_S=self.k_S, k_W=self.k_W, k_WS=self.k_WS, k_SW=self.k_SW,
            t_S=self.t_S, t_W=self.t_W, p2_S=self.p2_S, p2_W=self.p2_W,
            pstar_S=self.pstar_S, pstar_W=self.pstar_W,
        )


@dataclass(frozen=True)
class AnalyzeSettings:
    input: str
    delta_t: int


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    seed: int
    replicates: int
    workers: int
    out: str | None
    network: GeneratorConfig | None
    dynamics: DynamicsParams | None
    timeseries: TimeseriesSettings | None
    hysteresis: HysteresisSettings | None
    phase: PhaseSettings | None
    sweep: SweepSettings | None
    meanfield: MeanfieldSettings | None
    analyze: AnalyzeSettings | None


def _parse_lines(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"line {lineno}: expected 'key = value', got {line!r}"
            )
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigurationError(f"line {lineno}: empty key")
        if key in pairs:
            raise ConfigurationError(f"duplicate key: {key}")
        pairs[key] = value
    return pairs


class _Section:
    """Typed reads over one dotted-key section, tracking consumption."""

    def __init__(self, pairs: dict[str, str], used: set):
        self.pairs = pairs
        self.used = used

    def has(self, key: str) -> bool:
        return key in self.pairs

    def raw(self, key: str, default=None, required: bool = False):
        if key not in self.pairs:
            if required:
                raise ConfigurationError(f"missing required field: {key}")
            return default
        self.used.add(key)
        return self.pairs[key]

    def _convert(self, key: str, kind: str, conv, default, required):
        raw = self.raw(key, default=None, required=required)
        if raw is None:
            return default
        try:
            return conv(raw)
        except (ValueError, TypeError):
            raise ConfigurationError(
                f"{key}: expected {kind}, got {raw!r}"
            ) from None

    def int(self, key, default=None, required=False):
        return self._convert(key, "integer", int, default, required)

    def float(self, key, default=None, required=False):
        return self._convert(key, "number", float, default, required)

    def str(self, key, default=None, required=False):
        return self._convert(key, "string", str, default, required)

    def bool(self, key, default=None, required=False):
        def conv(raw):
            if raw == "true":
                return True
            if raw == "false":
                return False
            raise ValueError(raw)
        return self._convert(key, "true/false", conv, default, required)

    def grid(self, key, default=None, required=False):
        return self._convert(key, "grid (a:b:count or v,v,...)",
                             _parse_grid, default, required)

    def segments(self, key, default=(), required=False):
        return self._convert(key, "segments (start:end:p1_S:p1_W, ...)",
                             _parse_segments, default, required)


def _parse_grid(raw: str) -> tuple:
    if ":" in raw:
        parts = raw.split(":")
        if len(parts) != 3:
            raise ValueError(raw)
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError(raw)
        return tuple(float(v) for v in np.linspace(start, stop, count))
    return tuple(float(p) for p in raw.split(",") if p.strip() != "")


def _grid_text(grid: tuple) -> str:
    return ",".join(format_value(float(v)) for v in grid)


def _parse_segments(raw: str) -> tuple:
    out = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 4:
            raise ValueError(raw)
        out.append((int(parts[0]), int(parts[1]),
                    float(parts[2]), float(parts[3])))
    return tuple(out)


def _segments_text(segments: tuple) -> str:
    return ",".join(
        f"{s}:{e}:{format_value(float(a))}:{format_value(float(b))}"
        for s, e, a, b in segments
    )


_NETWORK_KEYS = (
    "kind", "n_S", "n_W", "n0", "m_S", "m_W", "m_SW",
    "er_edges_intra_S", "er_edges_intra_W", "er_edges_inter",
    "er_p_intra_S", "er_p_intra_W", "er_p_inter",
    "k_S", "k_W", "k_WS", "k_SW",
)


def _parse_network(sec: _Section) -> GeneratorConfig | None:
    if not sec.has("network.kind"):
        return None
    kind = sec.str("network.kind", required=True)
    if kind not in KINDS:
        raise ConfigurationError(
            f"network.kind: must be one of {KINDS}, got {kind!r}"
        )
    kw = dict(
        kind=kind,
        n_S=sec.int("network.n_S", required=True),
        n_W=sec.int("network.n_W", required=True),
        n0=sec.int("network.n0", default=3),
        m_S=sec.int("network.m_S", default=3),
        m_W=sec.int("network.m_W", default=3),
        m_SW=sec.int("network.m_SW", default=2),
    )
    for key in ("er_edges_intra_S", "er_edges_intra_W", "er_edges_inter",
                "k_S", "k_W", "k_WS", "k_SW"):
        if sec.has(f"network.{key}"):
            kw[key] = sec.int(f"network.{key}")
    for key in ("er_p_intra_S", "er_p_intra_W", "er_p_inter"):
        if sec.has(f"network.{key}"):
            kw[key] = sec.float(f"network.{key}")
    config = GeneratorConfig(**kw)
    config.validate()
    return config


def _network_lines(cfg: GeneratorConfig) -> list[str]:
    lines = [f"network.kind = {cfg.kind}",
             f"network.n_S = {cfg.n_S}",
             f"network.n_W = {cfg.n_W}",
             f"network.n0 = {cfg.n0}",
             f"network.m_S = {cfg.m_S}",
             f"network.m_W = {cfg.m_W}",
             f"network.m_SW = {cfg.m_SW}"]
    for key in ("er_edges_intra_S", "er_edges_intra_W", "er_edges_inter",
                "er_p_intra_S", "er_p_intra_W", "er_p_inter",
                "k_S", "k_W", "k_WS", "k_SW"):
        value = getattr(cfg, key)
        if value is not None:
            lines.append(f"network.{key} = {format_value(value)}")
    return lines


def _parse_dynamics(sec: _Section) -> DynamicsParams | None:
    if not any(k.startswith("dynamics.") for k in sec.pairs):
        return None
    has_ws = sec.has("dynamics.T_WS")
    has_sw = sec.has("dynamics.T_SW")
    if has_ws != has_sw:
        raise ConfigurationError(
            "dynamics.T_WS and dynamics.T_SW must be given together"
        )
    dual = None
    if has_ws:
        dual = DualThresholds(T_WS=sec.float("dynamics.T_WS"),
                              T_SW=sec.float("dynamics.T_SW"))
    return DynamicsParams(
        p1_S=sec.float("dynamics.p1_S", default=DEFAULT_P1),
        p1_W=sec.float("dynamics.p1_W", default=DEFAULT_P1),
        p2=sec.float("dynamics.p2", required=True),
        tau=sec.int("dynamics.tau", default=DEFAULT_TAU),
        T_S=sec.float("dynamics.T_S", default=DEFAULT_T_S),
        T_W=sec.float("dynamics.T_W", default=DEFAULT_T_W),
        n=sec.float("dynamics.n", default=1.0),
        mechanism=sec.str("dynamics.mechanism", default="none"),
        cost_enabled=sec.bool("dynamics.cost_enabled", default=False),
        dual=dual,
    )


def _dynamics_lines(p: DynamicsParams) -> list[str]:
    lines = [
        f"dynamics.p1_S = {format_value(p.p1_S)}",
        f"dynamics.p1_W = {format_value(p.p1_W)}",
        f"dynamics.p2 = {format_value(p.p2)}",
        f"dynamics.tau = {p.tau}",
        f"dynamics.T_S = {format_value(p.T_S)}",
        f"dynamics.T_W = {format_value(p.T_W)}",
        f"dynamics.n = {format_value(p.n)}",
        f"dynamics.mechanism = {p.mechanism}",
        f"dynamics.cost_enabled = {format_value(p.cost_enabled)}",
    ]
    if p.dual is not None:
        lines.append(f"dynamics.T_WS = {format_value(p.dual.T_WS)}")
        lines.append(f"dynamics.T_SW = {format_value(p.dual.T_SW)}")
    return lines


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document, materializing all defaults."""
    pairs = _parse_lines(text)
    used: set[str] = set()
    sec = _Section(pairs, used)

    protocol = sec.str("protocol", required=True)
    if protocol not in PROTOCOLS:
        raise ConfigurationError(
            f"protocol: must be one of {PROTOCOLS}, got {protocol!r}"
        )
    seed = sec.int("seed", default=0)
    if seed < 0:
        raise ConfigurationError(f"seed: must be >= 0, got {seed}")
    replicates = sec.int("replicates", default=1)
    if replicates < 1:
        raise ConfigurationError(f"replicates: must be >= 1, got {replicates}")
    workers = sec.int("workers", default=1)
    if workers < 1:
        raise ConfigurationError(f"workers: must be >= 1, got {workers}")
    out = sec.str("out", default=None)

    network = _parse_network(sec)
    dynamics = _parse_dynamics(sec)

    timeseries = hysteresis = phase = sweep = meanfield = analyze = None

    needs_sim = protocol in ("timeseries", "hysteresis-sim", "phase-diagram",
                             "takeover-sweep")
    if needs_sim:
        if network is None:
            raise ConfigurationError(
                f"protocol {protocol} requires a network section "
                "(missing required field: network.kind)"
            )
        if dynamics is None:
            raise ConfigurationError(
                f"protocol {protocol} requires a dynamics section "
                "(missing required field: dynamics.p2)"
            )

    if protocol == "timeseries":
        timeseries = TimeseriesSettings(
            horizon=sec.int("timeseries.horizon", required=True),
            segments=sec.segments("timeseries.attack_segments", default=()),
        )
        if timeseries.horizon < 0:
            raise ConfigurationError(
                f"timeseries.horizon: must be >= 0, got {timeseries.horizon}"
            )
    elif protocol == "hysteresis-sim":
        hysteresis = HysteresisSettings(
            grid=sec.grid("hysteresis.grid", required=True),
            dwell=sec.int("hysteresis.dwell", default=10 * dynamics.tau),
        )
        if hysteresis.dwell < 2:
            raise ConfigurationError(
                f"hysteresis.dwell: must be >= 2, got {hysteresis.dwell}"
            )
    elif protocol == "phase-diagram":
        phase = PhaseSettings(
            p1_grid=sec.grid("phase.p1_grid", required=True),
            p2_grid=sec.grid("phase.p2_grid", required=True),
            steps=sec.int("phase.steps", required=True),
        )
        if phase.steps < 2:
            raise ConfigurationError(
                f"phase.steps: must be >= 2, got {phase.steps}"
            )
    elif protocol == "takeover-sweep":
        sweep = SweepSettings(
            n_grid=sec.grid("sweep.n_grid", required=True),
            steps=sec.int("sweep.steps", required=True),
        )
        if dynamics.mechanism == "none":
            raise ConfigurationError(
                "takeover-sweep requires dynamics.mechanism = takeover "
                "or substitution"
            )
        if sweep.steps < 1:
            raise ConfigurationError(
                f"sweep.steps: must be >= 1, got {sweep.steps}"
            )
    elif protocol == "meanfield-trace":
        meanfield = MeanfieldSettings(
            k_S=sec.int("meanfield.k_S", required=True),
            k_W=sec.int("meanfield.k_W", required=True),
            k_WS=sec.int("meanfield.k_WS", required=True),
            k_SW=sec.int("meanfield.k_SW", required=True),
            t_S=sec.int("meanfield.t_S", required=True),
            t_W=sec.int("meanfield.t_W", required=True),
            p2_S=sec.float("meanfield.p2_S", required=True),
            p2_W=sec.float("meanfield.p2_W", required=True),
            pstar_S=sec.float("meanfield.pstar_S", default=0.0),
            pstar_W=sec.float("meanfield.pstar_W", required=True),
            control=sec.str("meanfield.control", default="pstar_S"),
            grid=sec.grid("meanfield.grid", required=True),
            damping=sec.float("meanfield.damping", default=DAMPING),
            tolerance=sec.float("meanfield.tolerance", default=TOLERANCE),
            max_iter=sec.int("meanfield.max_iter", default=MAX_ITER),
        )
        if meanfield.control not in ("pstar_S", "pstar_W", "p2_S", "p2_W"):
            raise ConfigurationError(
                f"meanfield.control: unknown control {meanfield.control!r}"
            )
        try:
            meanfield.system()
        except ValueError as exc:
            raise ConfigurationError(f"meanfield: {exc}") from None
    elif protocol == "early-warning":
        analyze = AnalyzeSettings(
            input=sec.str("analyze.input", required=True),
            delta_t=sec.int("analyze.delta_t", default=DEFAULT_DELTA_T),
        )
        if analyze.delta_t < 1:
            raise ConfigurationError(
                f"analyze.delta_t: must be >= 1, got {analyze.delta_t}"
            )

    unknown = set(pairs) - used
    if unknown:
        raise ConfigurationError(
            "unknown key: " + ", ".join(sorted(unknown))
        )

    return ExperimentConfig(
        protocol=protocol, seed=seed, replicates=replicates, workers=workers,
        out=out, network=network, dynamics=dynamics, timeseries=timeseries,
        hysteresis=hysteresis, phase=phase, sweep=sweep, meanfield=meanfield,
        analyze=analyze,
    )


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form with every effective value explicit."""
    lines = [f"protocol = {cfg.protocol}",
             f"seed = {cfg.seed}",
             f"replicates = {cfg.replicates}",
             f"workers = {cfg.workers}"]
    if cfg.out is not None:
        lines.append(f"out = {cfg.out}")
    if cfg.network is not None:
        lines.extend(_network_lines(cfg.network))
    if cfg.dynamics is not None:
        lines.extend(_dynamics_lines(cfg.dynamics))
    if cfg.timeseries is not None:
        lines.append(f"timeseries.horizon = {cfg.timeseries.horizon}")
        if cfg.timeseries.segments:
            lines.append(
                "timeseries.attack_segments = "
                + _segments_text(cfg.timeseries.segments)
            )
    if cfg.hysteresis is not None:
        lines.append(f"hysteresis.grid = {_grid_text(cfg.hysteresis.grid)}")
        lines.append(f"hysteresis.dwell = {cfg.hysteresis.dwell}")
    if cfg.phase is not None:
        lines.append(f"phase.p1_grid = {_grid_text(cfg.phase.p1_grid)}")
        lines.append(f"phase.p2_grid = {_grid_text(cfg.phase.p2_grid)}")
        lines.append(f"phase.steps = {cfg.phase.steps}")
    if cfg.sweep is not None:
        lines.append(f"sweep.n_grid = {_grid_text(cfg.sweep.n_grid)}")
        lines.append(f"sweep.steps = {cfg.sweep.steps}")
    if cfg.meanfield is not None:
        m = cfg.meanfield
        lines.extend([
            f"meanfield.k_S = {m.k_S}",
            f"meanfield.k_W = {m.k_W}",
            f"meanfield.k_WS = {m.k_WS}",
            f"meanfield.k_SW = {m.k_SW}",
            f"meanfield.t_S = {m.t_S}",
            f"meanfield.t_W = {m.t_W}",
            f"meanfield.p2_S = {format_value(m.p2_S)}",
            f"meanfield.p2_W = {format_value(m.p2_W)}",
            f"meanfield.pstar_S = {format_value(m.pstar_S)}",
            f"meanfield.pstar_W = {format_value(m.pstar_W)}",
            f"meanfield.control = {m.control}",
            f"meanfield.grid = {_grid_text(m.grid)}",
            f"meanfield.damping = {format_value(m.damping)}",
            f"meanfield.tolerance = {format_value(m.tolerance)}",
            f"meanfield.max_iter = {m.max_iter}",
        ])
    if cfg.analyze is not None:
        lines.append(f"analyze.input = {cfg.analyze.input}")
        lines.append(f"analyze.delta_t = {cfg.analyze.delta_t}")
    return "\n".join(lines) + "\n"
