"""Figure rendering for the CLI report layer (library code never imports this)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# experiments whose plot data are curves rather than scatter clouds
_LINES = {"calibrate", "conditions", "ip-law", "weight-limit", "coupling", "char-probe"}


def render_figure(experiment: str, plotdata: list[dict], path: Path, tag: str = "") -> None:
    series: dict[str, tuple[list, list]] = {}
    for r in plotdata:
        xs, ys = series.setdefault(str(r["series"]), ([], []))
        xs.append(float(r["x"]))
        ys.append(float(r["y"]))
    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    for name, (xs, ys) in sorted(series.items()):
        if experiment in _LINES:
            ax.plot(xs, ys, marker="." if len(xs) < 50 else None, label=name)
        else:
            ax.scatter(xs, ys, s=6, alpha=0.6, label=name)
    ax.set_title(f"{experiment} {tag}".strip())
    if len(series) <= 8:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
