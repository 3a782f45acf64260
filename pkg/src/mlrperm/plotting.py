"""Figure output for the CLI (optional, written next to the delimited report)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .schemes import NullDistribution  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "svg.hashsalt": "mlrperm",
}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"Date": None} if path.suffix == ".svg" else {}
    fig.savefig(path, metadata=meta)
    plt.close(fig)
    return path


def null_histograms(nulls: Mapping[str, NullDistribution], labels: Mapping[str, str], out_dir: str | Path,
                    fmt: str = "png") -> list[Path]:
    """One histogram per method with the observed statistic marked."""
    out = []
    with plt.rc_context(STYLE):
        for name, null in nulls.items():
            fig, ax = plt.subplots(figsize=(4.0, 2.6))
            ax.hist(null.t_stars, bins=min(60, max(10, null.b // 40)), color="0.7", edgecolor="0.45", linewidth=0.4)
            for s in (1, -1):
                ax.axvline(null.center + s * abs(null.t_obs - null.center), color="C3", lw=1,
                           ls="-" if s == 1 else "--")
            ax.set_xlabel("t*")
            ax.set_ylabel("count")
            ax.set_title(f"{labels.get(name, name)}  (B = {null.b})")
            out.append(_save(fig, Path(out_dir) / f"null_{name}.{fmt}"))
    return out


def rejection_rates(rows: Sequence[dict], alpha: float, out_path: str | Path) -> Path:
    """Rejection rates with their intervals, one line per configuration."""
    good = [r for r in rows if r.get("rejection_rate") is not None]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 0.35 * max(len(good), 2) + 0.8))
        y = np.arange(len(good))[::-1]
        for yi, r in zip(y, good):
            color = {"anticonservative": "C3", "conservative": "C0"}.get(r["classification"], "0.3")
            ax.plot([r["ci_low"], r["ci_high"]], [yi, yi], color=color, lw=1.5)
            ax.plot(r["rejection_rate"], yi, "o", color=color, ms=4)
        ax.axvline(alpha, color="0.5", ls=":", lw=1)
        ax.set_yticks(y)
        ax.set_yticklabels([r["label"] for r in good])
        ax.set_xlabel("Type I error rate")
        return _save(fig, Path(out_path))
