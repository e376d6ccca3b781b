"""Figures written next to the delimited reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .engine import EventRecord, TICKS_PER_MS  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "ftsim",
}


def figure_path(report_path, suffix: str = ".png") -> Path:
    """``out/table1.csv`` -> ``out/table1.png``."""
    return Path(report_path).with_suffix(suffix)


def _save(fig, path) -> Path:
    path = Path(path)
    # pin metadata so repeated runs write identical files
    meta = {"Software": None} if path.suffix == ".png" else {}
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata=meta)
    plt.close(fig)
    return path


def plot_comparison(rows, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 2.8))
        schemes = list(dict.fromkeys(r.scheme for r in rows))
        for y, name in enumerate(schemes):
            for r in (r for r in rows if r.scheme == name):
                ax.scatter(r.simultaneous_faults, y, s=120,
                           marker="o" if r.survived else "x",
                           color="tab:green" if r.survived else "tab:red")
        ax.set_yticks(range(len(schemes)), schemes)
        ax.set_xlabel("simultaneous blank modules")
        ax.set_title("masked (o) / failed (x)")
        ax.set_xticks(sorted({r.simultaneous_faults for r in rows}))
        ax.set_ylim(-0.6, len(schemes) - 0.4)
        return _save(fig, path)


def plot_calibration(rows, model, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        sizes = [r.size_kb for r in rows]
        ax.scatter(sizes, [r.actual_ms for r in rows], label="measured", zorder=3)
        lo, hi = 0.9 * min(sizes), 1.1 * max(sizes)
        ax.plot([lo, hi], [model.duration(lo), model.duration(hi)], color="tab:orange",
                label=f"{model.overhead_ms:.2f} + {model.ms_per_kb:.4f}*KB")
        ax.set_xlabel("bitstream size (KB)")
        ax.set_ylabel("recovery time (ms)")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_reliability(estimates, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for i, e in enumerate(estimates):
            ax.errorbar(i, e.failure_probability, yerr=e.confidence_halfwidth, fmt="o",
                        capsize=4, color="tab:blue", label="estimate" if i == 0 else None)
            ax.scatter(i, e.exact, marker="_", s=300, color="k",
                       label="binomial tail" if i == 0 else None)
        ax.set_xticks(range(len(estimates)), [f"{e.scheme}\nq={e.q:g}" for e in estimates])
        ax.set_ylabel("P(voted != golden)")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_timeline(events: list[EventRecord], n_modules: int, path,
                  window_ms: float | None = 5_000.0) -> Path:
    """Fault and recovery intervals per module over the first ``window_ms``."""
    horizon = None if window_ms is None else window_ms * TICKS_PER_MS
    faulty_since: dict[int, int] = {}
    recovering_since: dict[int, int] = {}
    bars = {"faulty": [], "recovering": []}
    errors = []
    for ev in events:
        if horizon is not None and ev.time > horizon:
            break
        if ev.kind == "Inject":
            faulty_since[ev.module] = ev.time
        elif ev.kind == "RecoverStart":
            start = faulty_since.pop(ev.module, None)
            if start is not None:
                bars["faulty"].append((ev.module, start, ev.time))
            recovering_since[ev.module] = ev.time
        elif ev.kind == "RecoverEnd":
            bars["recovering"].append((ev.module, recovering_since.pop(ev.module), ev.time))
        elif ev.kind == "SystemError":
            errors.append(ev.time)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(7.0, 0.4 * n_modules + 1.2))
        colors = {"faulty": "tab:red", "recovering": "tab:orange"}
        for kind, spans in bars.items():
            for i, (mid, a, b) in enumerate(spans):
                ax.broken_barh([(a / TICKS_PER_MS, (b - a) / TICKS_PER_MS)], (mid - 0.4, 0.8),
                               color=colors[kind], label=kind if i == 0 else None)
        for t in errors:
            ax.axvline(t / TICKS_PER_MS, color="k", lw=0.5)
        ax.set_yticks(range(1, n_modules + 1))
        ax.set_ylabel("module")
        ax.set_xlabel("time (ms)")
        ax.legend(frameon=False, loc="lower right", bbox_to_anchor=(1.0, 1.0), ncols=2)
        return _save(fig, path)
