"""Figure rendering for report CSVs.

Each report subcommand saves a PNG next to its CSV unless plotting is
disabled. All rendering is headless (Agg backend).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["render_ablate", "render_bench", "render_recovery"]

_KIND_COLORS = {"gaussian": "tab:blue", "linear": "tab:orange",
                "l2": "tab:green", "delta": "tab:red"}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_recovery(rows, path, sigma2=None):
    """Recovery MSE vs neighbor count, log scale."""
    ks = [int(r["k"]) for r in rows]
    mse = [max(float(r["mse"]), 1e-30) for r in rows]
    fails = [int(r["failures"]) for r in rows]
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.semilogy(ks, mse, "o-", color="tab:blue")
    for k, m, f in zip(ks, mse, fails):
        if f:
            ax.annotate(f"{f} fail", (k, m), textcoords="offset points",
                        xytext=(4, 4), fontsize=8)
    ax.set_xlabel("neighbors k")
    ax.set_ylabel("recovery MSE (position units$^2$)")
    title = "Position recovery vs neighbor count"
    if sigma2 is not None:
        title += f" ($\\sigma^2$={sigma2})"
    ax.set_title(title)
    ax.set_xticks(sorted(set(ks)))
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, path)


def render_bench(rows, path):
    """Median pooling latency vs k, one line per (kind, mode, workers)."""
    series = {}
    for r in rows:
        key = (r["kind"], r["mode"], r["workers"])
        series.setdefault(key, []).append((int(r["k"]), float(r["median_ms"]),
                                           float(r["p95_ms"])))
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    for (kind, mode, workers), pts in sorted(series.items()):
        pts.sort()
        ks = [p[0] for p in pts]
        med = [p[1] for p in pts]
        p95 = [p[2] for p in pts]
        label = f"{mode} ({kind}, w={workers})"
        style = "s--" if mode == "baseline" else "o-"
        line, = ax.plot(ks, med, style, label=label)
        if mode != "baseline":
            ax.fill_between(ks, med, p95, alpha=0.15, color=line.get_color())
    ax.set_xlabel("neighbors k")
    ax.set_ylabel("pooling latency (ms)")
    ax.set_title("Pooling latency vs neighbor count (band: median to p95)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def render_ablate(rows, path):
    """Two panels: recovery MSE per kind/k, latency per grid size."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 3.8))
    by_kind = {}
    for r in rows:
        by_kind.setdefault((r["kind"], float(r["grid_size"])), []).append(
            (int(r["k"]), max(float(r["mse"]), 1e-30)))
    finest = min(g for (_, g) in by_kind)
    for (kind, gs), pts in sorted(by_kind.items()):
        if gs != finest:
            continue
        pts.sort()
        ax1.semilogy([p[0] for p in pts], [p[1] for p in pts], "o-",
                     color=_KIND_COLORS.get(kind), label=kind)
    ax1.set_xlabel("neighbors k")
    ax1.set_ylabel("recovery MSE (position units$^2$)")
    ax1.set_title(f"Weight-kind recovery (grid {finest} m)")
    ax1.grid(True, which="both", alpha=0.3)
    ax1.legend(fontsize=8)

    by_gs = {}
    for r in rows:
        by_gs.setdefault((float(r["grid_size"]), r["kind"]), []).append(
            (int(r["k"]), float(r["median_ms"])))
    for (gs, kind), pts in sorted(by_gs.items()):
        pts.sort()
        ax2.plot([p[0] for p in pts], [p[1] for p in pts], "o-",
                 label=f"{gs} m {kind}")
    ax2.set_xlabel("neighbors k")
    ax2.set_ylabel("pooling latency (ms)")
    ax2.set_title("Latency by grid size")
    ax2.grid(True, alpha=0.3)
    ax2.legend(fontsize=7)
    _save(fig, path)
