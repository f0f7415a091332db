"""Figure rendering for evaluation reports.

Consumes the JSON-ready report produced by ``evaluation.build_report``
and writes matplotlib figures next to the delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def plot_discard_curve(discard: dict, path, title: str = "Discard test") -> None:
    """Line plot of retained-set error vs. discard fraction."""
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.plot(discard["fractions"], discard["errors"], marker="o", color="tab:blue")
    ax.set_xlabel("discard fraction")
    ax.set_ylabel("error (mean loss on retained samples)")
    ax.set_title(f"{title}  (MF={discard['mf']:.2f}, DI={discard['di']:.4f})")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_densities(densities: dict, path, max_panels: int = 9) -> None:
    """Histogram panels of uncertainty by correctness, one per scope.

    Median uncertainty per group is marked with a dashed vertical line.
    """
    scopes = list(densities.items())[:max_panels]
    ncols = min(3, len(scopes))
    nrows = (len(scopes) + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.2 * ncols, 3.0 * nrows), squeeze=False)

    for ax, (scope, groups) in zip(axes.ravel(), scopes):
        for group, style in (("correct", "tab:green"), ("incorrect", "tab:red")):
            gd = groups[group]
            edges = gd["histogram"]["bin_edges"]
            counts = gd["histogram"]["counts"]
            widths = [b - a for a, b in zip(edges[:-1], edges[1:])]
            ax.bar(
                edges[:-1],
                counts,
                width=widths,
                align="edge",
                alpha=0.45,
                color=style,
                label=f"{group} (n={gd['count']})",
            )
            if gd["median"] is not None:
                ax.axvline(gd["median"], color=style, linestyle="--", linewidth=1.2)
        ax.set_title(scope)
        ax.set_xlabel("uncertainty")
        ax.set_ylabel("count")
        ax.legend(fontsize=7)
    for ax in axes.ravel()[len(scopes):]:
        ax.set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
