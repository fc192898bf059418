"""Figure kinds over the published CSV schemas.

Five kinds cover the experiment outputs: phase-diagram heatmaps (both
start sheets side by side), hysteresis branches with direction arrows,
time series with the threshold trace on a twin axis, acquisition sweeps,
and the early-warning indicator with its stop time marked.  Rendering is
a pure function of (CSV bytes, spec): fixed sizes, fixed colormaps, no
timestamps, so re-renders are byte-identical.
"""

from dataclasses import dataclass

import numpy as np

from figrender.tables import InputError, Table, read_table

# columns each kind actually reads; nothing else is ever touched
SCHEMAS = {
    "heatmap": ("p1", "p2", "sheet", "f_W_mean"),
    "hysteresis": ("branch", "control", "f_S", "f_W"),
    "timeseries": ("t", "f_S", "f_W", "T_S_current"),
    "sweep": (
        "n", "takeover_fraction_mean", "takeover_fraction_se",
        "final_T_S_mean", "final_T_S_se",
    ),
    "indicator": ("t", "indicator"),
}

DEFAULT_LABELS = {
    "heatmap": ("p1", "p2"),
    "hysteresis": ("control", "active fraction"),
    "timeseries": ("t", "active fraction"),
    "sweep": ("n", "takeover fraction"),
    "indicator": ("t", "indicator"),
}

DPI = 120


@dataclass(frozen=True)
class FigureSpec:
    """One render request: input CSV, figure kind, labels, output path."""

    input: str
    kind: str
    out: str
    xlabel: str | None = None
    ylabel: str | None = None
    title: str | None = None


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _arrow(ax, x, y, color) -> None:
    # one mid-path arrow showing traversal direction; skipped when the
    # branch is a single point
    if len(x) < 2:
        return
    m = min(len(x) // 2, len(x) - 2)
    ax.annotate(
        "", xy=(x[m + 1], y[m + 1]), xytext=(x[m], y[m]),
        arrowprops={"arrowstyle": "->", "color": color},
    )


def _draw_heatmap(plt, table: Table):
    p1 = table.col("p1")
    p2 = table.col("p2")
    val = table.col("f_W_mean")
    sheet = table.text("sheet")
    sheets = list(dict.fromkeys(sheet))
    fig, axes = plt.subplots(
        1, len(sheets), figsize=(4.5 * len(sheets), 4.0),
        sharey=True, squeeze=False,
    )
    axes = axes[0]
    p1s = np.unique(p1)
    p2s = np.unique(p2)
    mesh = None
    for ax, name in zip(axes, sheets):
        grid = np.full((len(p2s), len(p1s)), np.nan)
        pick = sheet == name
        i = np.searchsorted(p1s, p1[pick])
        j = np.searchsorted(p2s, p2[pick])
        grid[j, i] = val[pick]
        mesh = ax.pcolormesh(
            p1s, p2s, grid, shading="nearest", cmap="viridis",
            vmin=0.0, vmax=1.0,
        )
        ax.set_title(f"{name} start")
    fig.colorbar(mesh, ax=list(axes), label="f_W")
    return fig, list(axes)


def _draw_hysteresis(plt, table: Table):
    branch = table.text("branch")
    control = table.col("control")
    f_S = table.col("f_S")
    f_W = table.col("f_W")
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    drew = False
    for name, style in (("ascending", "-"), ("descending", "--")):
        pick = branch == name
        if not pick.any():
            continue
        drew = True
        x = control[pick]
        for y, color, label in ((f_S[pick], "C0", "f_S"),
                                (f_W[pick], "C1", "f_W")):
            ax.plot(x, y, style, color=color, label=f"{label} {name}")
            _arrow(ax, x, y, color)
    if not drew:
        raise InputError(
            f"{table.path}: no ascending or descending rows in column branch"
        )
    ax.legend(loc="best")
    return fig, [ax]


def _draw_timeseries(plt, table: Table):
    t = table.col("t")
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(t, table.col("f_S"), color="C0", label="f_S")
    ax.plot(t, table.col("f_W"), color="C1", label="f_W")
    twin = ax.twinx()
    twin.plot(t, table.col("T_S_current"), color="C3", ls="--", label="T_S")
    twin.set_ylabel("T_S")
    lines = ax.get_lines() + twin.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], loc="best")
    return fig, [ax]


def _draw_sweep(plt, table: Table):
    n = table.col("n")
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.errorbar(
        n, table.col("takeover_fraction_mean"),
        yerr=table.col("takeover_fraction_se"),
        color="C0", marker="o", capsize=3, label="takeover fraction",
    )
    twin = ax.twinx()
    twin.errorbar(
        n, table.col("final_T_S_mean"), yerr=table.col("final_T_S_se"),
        color="C3", marker="s", ls="--", capsize=3, label="final T_S",
    )
    twin.set_ylabel("final T_S")
    lines = ax.get_lines() + twin.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], loc="center right")
    return fig, [ax]


def _draw_indicator(plt, table: Table):
    t = table.col("t")
    values = table.col("indicator")
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(t, values, color="C0")
    stop = int(np.argmax(values))
    ax.axvline(t[stop], color="0.5", ls=":")
    ax.plot([t[stop]], [values[stop]], "o", color="C3")
    return fig, [ax]


_DRAWERS = {
    "heatmap": _draw_heatmap,
    "hysteresis": _draw_hysteresis,
    "timeseries": _draw_timeseries,
    "sweep": _draw_sweep,
    "indicator": _draw_indicator,
}


def render(spec: FigureSpec) -> str:
    """Render one figure, returning the written path."""
    if spec.kind not in SCHEMAS:
        raise InputError(
            f"unknown kind {spec.kind!r}; pick one of {sorted(SCHEMAS)}"
        )
    table = read_table(spec.input)
    table.require(SCHEMAS[spec.kind])
    if table.n_rows < 2:
        raise InputError(
            f"{table.path}: insufficient points ({table.n_rows} data row)"
        )
    plt = _pyplot()
    fig, axes = _DRAWERS[spec.kind](plt, table)
    xlabel, ylabel = DEFAULT_LABELS[spec.kind]
    for ax in axes:
        ax.set_xlabel(spec.xlabel or xlabel)
    axes[0].set_ylabel(spec.ylabel or ylabel)
    if spec.title:
        fig.suptitle(spec.title)
    fig.savefig(spec.out, dpi=DPI)
    plt.close(fig)
    return spec.out
