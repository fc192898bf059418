"""Command-line front end: run experiments described by a config file.

Each subcommand binds to one protocol, reads `--config`, and writes its
delimited output plus a run manifest into the output directory; with
`--render` a quick-look figure lands next to each CSV.  Exit codes:
0 success, 2 configuration error, 3 runtime failure, 4 analytics did not
converge and `--strict` was given.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__, meanfield, protocols, topology
from .config import ExperimentConfig, parse_config, serialize_config
from .errors import ConfigurationError, GenerationError
from .output import write_csv, write_manifest
from .protocols import AttackSchedule, TimeSeries
from .streams import derive_stream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_UNCONVERGED = 4

# subcommand -> required protocol; generate accepts any config with a network
COMMAND_PROTOCOL = {
    "simulate": "timeseries",
    "hysteresis": "hysteresis-sim",
    "phase-diagram": "phase-diagram",
    "meanfield": "meanfield-trace",
    "sweep-takeover": "takeover-sweep",
    "analyze": "early-warning",
}

INDICATOR_COLUMNS = ("t", "indicator")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netduel",
        description="competing interconnected networks: simulation and analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "generate": "generate a duplex network and write its edge list",
        "simulate": "run one trajectory and write the time series",
        "hysteresis": "ramp the internal failure rate up and down",
        "phase-diagram": "tail fractions over a p1 x p2 grid, two sheets",
        "meanfield": "trace both analytical branches over a control grid",
        "sweep-takeover": "acquisition outcome versus the duration multiplier",
        "analyze": "early-warning indicator from a written time series",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True,
                       help="path to a key = value config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--workers", type=int, default=None,
                       help="override the config worker count")
        p.add_argument("--out", default=None,
                       help="output directory (overrides the config)")
        p.add_argument("--strict", action="store_true",
                       help="fail (exit 4) when analytics do not converge")
        p.add_argument("--render", action="store_true",
                       help="also write a quick-look figure next to the output")
    return parser


def _load_config(args) -> ExperimentConfig:
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from None
    cfg = parse_config(text)
    updates = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigurationError(f"--seed must be >= 0, got {args.seed}")
        updates["seed"] = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigurationError(f"--workers must be >= 1, got {args.workers}")
        updates["workers"] = args.workers
    if args.out is not None:
        updates["out"] = args.out
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    if cfg.out is None:
        raise ConfigurationError(
            "no output directory: set out in the config or pass --out"
        )
    expected = COMMAND_PROTOCOL.get(args.command)
    if expected is not None and cfg.protocol != expected:
        raise ConfigurationError(
            f"{args.command} needs protocol = {expected}, "
            f"config says {cfg.protocol}"
        )
    if args.command == "generate" and cfg.network is None:
        raise ConfigurationError(
            "generate needs a network section "
            "(missing required field: network.kind)"
        )
    return cfg


def _config_echo_lines(cfg: ExperimentConfig) -> list[str]:
    # the output directory is where results land, not part of the
    # experiment identity: leaving it out keeps outputs byte-identical
    # across runs into different directories
    return [line for line in serialize_config(cfg).splitlines()
            if not line.startswith("out = ")]


def _comments(cfg: ExperimentConfig) -> list[str]:
    return _config_echo_lines(cfg)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, out_dir: str, name: str, outputs: dict) -> None:
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=150)
    outputs[name] = path


def _render_degrees(net, out_dir: str, outputs: dict) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    for mask, label in ((net.is_S, "S"), (net.is_W, "W")):
        counts = np.bincount(net.total_degree[mask])
        k = np.nonzero(counts)[0]
        ax.loglog(k, counts[k], "o", ms=4, label=label, alpha=0.7)
    ax.set_xlabel("total degree")
    ax.set_ylabel("nodes")
    ax.legend()
    fig.tight_layout()
    _save(fig, out_dir, "degrees.png", outputs)
    plt.close(fig)


def _render_timeseries(ts: TimeSeries, out_dir: str, outputs: dict) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts.t, ts.f_S, label="f_S", lw=1)
    ax.plot(ts.t, ts.f_W, label="f_W", lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("active fraction")
    ax2 = ax.twinx()
    ax2.plot(ts.t, ts.T_S_current, color="gray", ls="--", lw=1, label="T_S")
    ax2.set_ylabel("T_S")
    ax.legend(loc="best")
    fig.tight_layout()
    _save(fig, out_dir, "timeseries.png", outputs)
    plt.close(fig)


def _render_branches(result, name: str, xlabel: str, out_dir: str,
                     outputs: dict) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for branch, ls in (("ascending", "-"), ("descending", "--")):
        grid, f_S, f_W = _branch_xy(result, branch)
        ax.plot(grid, f_S, ls, color="C0",
                label=f"f_S {branch}" if ls == "-" else None)
        ax.plot(grid, f_W, ls, color="C1",
                label=f"f_W {branch}" if ls == "-" else None)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("active fraction")
    ax.legend()
    fig.tight_layout()
    _save(fig, out_dir, name, outputs)
    plt.close(fig)


def _branch_xy(result, branch: str):
    if isinstance(result, meanfield.HysteresisCurve):
        fps = result.branch(branch)
        return (result.grid, [fp.f_S for fp in fps], [fp.f_W for fp in fps])
    return result.branch_fractions(branch)


def _render_phase(result, out_dir: str, outputs: dict) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    extent = (result.p2_grid[0], result.p2_grid[-1],
              result.p1_grid[0], result.p1_grid[-1])
    for ax, sheet in zip(axes, protocols.SHEETS):
        img = ax.imshow(result.mean("f_W", sheet), origin="lower",
                        aspect="auto", extent=extent, vmin=0.0, vmax=1.0)
        ax.set_xlabel("p2")
        ax.set_ylabel("p1")
        ax.set_title(f"f_W, {sheet} start")
    fig.colorbar(img, ax=list(axes))
    _save(fig, out_dir, "phase.png", outputs)
    plt.close(fig)


def _render_sweep(result, out_dir: str, outputs: dict) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    n = result.n_grid
    axes[0].errorbar(n, result.takeover_fraction.mean(axis=0),
                     yerr=protocols._se(result.takeover_fraction), marker="o")
    axes[0].set_xlabel("duration multiplier n")
    axes[0].set_ylabel("acquired fraction of W")
    axes[1].errorbar(n, result.final_T_S.mean(axis=0),
                     yerr=protocols._se(result.final_T_S), marker="o")
    axes[1].set_xlabel("duration multiplier n")
    axes[1].set_ylabel("final T_S")
    fig.tight_layout()
    _save(fig, out_dir, "sweep.png", outputs)
    plt.close(fig)


def _render_indicator(result, out_dir: str, outputs: dict) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(result.times, result.values, lw=1)
    if result.stop_time is not None:
        ax.axvline(result.stop_time, color="red", ls="--", lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("indicator")
    fig.tight_layout()
    _save(fig, out_dir, "indicator.png", outputs)
    plt.close(fig)


def _run_generate(cfg, out_dir, render):
    rng = derive_stream(cfg.seed, 0)
    net = topology.generate(cfg.network, rng)
    path = os.path.join(out_dir, "edges.txt")
    topology.dump_edges(net, path, comments=_comments(cfg))
    outputs = {"edges.txt": path}
    if render:
        _render_degrees(net, out_dir, outputs)
    return outputs, False


def _run_simulate(cfg, out_dir, render):
    if cfg.replicates != 1:
        raise ConfigurationError(
            "simulate runs a single trajectory; set replicates = 1"
        )
    rng = derive_stream(cfg.seed, 0)
    net = topology.generate(cfg.network, rng)
    schedule = AttackSchedule(
        baseline_S=cfg.dynamics.p1_S, baseline_W=cfg.dynamics.p1_W,
        segments=cfg.timeseries.segments,
    )
    ts = protocols.run_timeseries(net, cfg.dynamics, schedule,
                                  cfg.timeseries.horizon, rng)
    path = os.path.join(out_dir, "timeseries.csv")
    write_csv(path, protocols.TIMESERIES_COLUMNS, ts.rows(),
              comments=_comments(cfg))
    outputs = {"timeseries.csv": path}
    if render:
        _render_timeseries(ts, out_dir, outputs)
    return outputs, False


def _run_hysteresis(cfg, out_dir, render):
    rng = derive_stream(cfg.seed, 0)
    net = topology.generate(cfg.network, rng)
    result = protocols.run_hysteresis_sim(
        net, cfg.dynamics, cfg.hysteresis.grid, cfg.hysteresis.dwell,
        cfg.replicates, rng, workers=cfg.workers,
    )
    path = os.path.join(out_dir, "hysteresis.csv")
    write_csv(path, protocols.HYSTERESIS_COLUMNS,
              protocols.hysteresis_rows(result), comments=_comments(cfg))
    outputs = {"hysteresis.csv": path}
    if render:
        _render_branches(result, "hysteresis.png", "p1", out_dir, outputs)
    return outputs, False


def _run_phase(cfg, out_dir, render):
    rng = derive_stream(cfg.seed, 0)
    result = protocols.run_phase_diagram(
        cfg.network, cfg.dynamics, cfg.phase.p1_grid, cfg.phase.p2_grid,
        cfg.replicates, cfg.phase.steps, rng, workers=cfg.workers,
    )
    path = os.path.join(out_dir, "phase.csv")
    write_csv(path, protocols.PHASE_COLUMNS, result.rows(),
              comments=_comments(cfg))
    outputs = {"phase.csv": path}
    if render:
        _render_phase(result, out_dir, outputs)
    return outputs, False


def _run_meanfield(cfg, out_dir, render):
    m = cfg.meanfield
    curve = meanfield.trace_hysteresis(
        m.system(), m.control, m.grid,
        tolerance=m.tolerance, max_iter=m.max_iter, damping=m.damping,
    )
    path = os.path.join(out_dir, "meanfield.csv")
    write_csv(path, protocols.HYSTERESIS_COLUMNS,
              protocols.hysteresis_rows(curve), comments=_comments(cfg))
    outputs = {"meanfield.csv": path}
    if render:
        _render_branches(curve, "meanfield.png", m.control, out_dir, outputs)
    unconverged = any(
        not fp.converged for fp in curve.ascending + curve.descending
    )
    return outputs, unconverged


def _run_sweep(cfg, out_dir, render):
    rng = derive_stream(cfg.seed, 0)
    result = protocols.takeover_sweep(
        cfg.network, cfg.dynamics, cfg.sweep.n_grid,
        cfg.replicates, cfg.sweep.steps, rng, workers=cfg.workers,
    )
    path = os.path.join(out_dir, "sweep.csv")
    write_csv(path, protocols.SWEEP_COLUMNS, result.rows(),
              comments=_comments(cfg))
    outputs = {"sweep.csv": path}
    if render:
        _render_sweep(result, out_dir, outputs)
    return outputs, False


def load_timeseries_csv(path: str) -> TimeSeries:
    """Read a written time-series CSV back into arrays."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise ConfigurationError(f"cannot read time series: {exc}") from None
    if not lines or tuple(lines[0].split(",")) != tuple(protocols.TIMESERIES_COLUMNS):
        raise ConfigurationError(
            f"{path}: expected columns {','.join(protocols.TIMESERIES_COLUMNS)}"
        )
    cells = [ln.split(",") for ln in lines[1:] if ln.strip()]
    if not cells:
        raise ConfigurationError(f"{path}: no data rows")
    try:
        arr = np.asarray(cells, dtype=float)
    except ValueError:
        raise ConfigurationError(f"{path}: non-numeric cell") from None
    if arr.shape[1] != len(protocols.TIMESERIES_COLUMNS):
        raise ConfigurationError(f"{path}: ragged rows")
    return TimeSeries(
        t=arr[:, 0].astype(np.int64), f_S=arr[:, 1], f_W=arr[:, 2],
        T_S_current=arr[:, 3], n_takeovers=arr[:, 4].astype(np.int64),
        wealth_S=arr[:, 5], wealth_W=arr[:, 6],
    )


def _run_analyze(cfg, out_dir, render):
    ts = load_timeseries_csv(cfg.analyze.input)
    result = protocols.early_warning(ts, delta_t=cfg.analyze.delta_t)
    stop = "none" if result.stop_time is None else str(result.stop_time)
    comments = _comments(cfg) + [f"stop_time = {stop}",
                                 f"skipped = {result.skipped}"]
    path = os.path.join(out_dir, "indicator.csv")
    rows = [(int(t), float(v)) for t, v in zip(result.times, result.values)]
    write_csv(path, INDICATOR_COLUMNS, rows, comments=comments)
    outputs = {"indicator.csv": path}
    if render:
        _render_indicator(result, out_dir, outputs)
    return outputs, False


_RUNNERS = {
    "generate": _run_generate,
    "simulate": _run_simulate,
    "hysteresis": _run_hysteresis,
    "phase-diagram": _run_phase,
    "meanfield": _run_meanfield,
    "sweep-takeover": _run_sweep,
    "analyze": _run_analyze,
}


def _manifest_entries(command: str, cfg: ExperimentConfig, strict: bool,
                      hashes: dict, wall: float) -> dict:
    entries = {
        "command": command,
        "strict": strict,
        "wall_time_s": round(wall, 3),
        "python_version": platform.python_version(),
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "netduel_version": __version__,
    }
    for name in sorted(hashes):
        entries[f"output.{name}.sha256"] = hashes[name]
    for line in _config_echo_lines(cfg):
        key, value = line.split(" = ", 1)
        entries[f"config.{key}"] = value
    return entries


def manifest_to_config_text(text: str) -> str:
    """Recover the effective config document embedded in a manifest."""
    lines = [ln[len("config."):] for ln in text.splitlines()
             if ln.startswith("config.")]
    if not lines:
        raise ConfigurationError("manifest carries no config echo")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    started = time.monotonic()
    try:
        cfg = _load_config(args)
        os.makedirs(cfg.out, exist_ok=True)
        outputs, unconverged = _RUNNERS[args.command](cfg, cfg.out, args.render)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GenerationError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything unexpected still gets a clean exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    wall = time.monotonic() - started
    hashes = {name: _sha256(path) for name, path in outputs.items()}
    entries = _manifest_entries(args.command, cfg, args.strict, hashes, wall)
    manifest_path = os.path.join(cfg.out, "manifest.txt")
    write_manifest(manifest_path, entries)
    for name in sorted(outputs):
        print(f"wrote {outputs[name]}")
    print(f"wrote {manifest_path}")
    if unconverged:
        print("warning: analytics did not converge", file=sys.stderr)
        if args.strict:
            return EXIT_UNCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
