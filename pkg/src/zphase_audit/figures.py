"""Matplotlib rendering of the audit and sweep tables.

Figures are rendered headlessly to PNG next to the delimited tables. All
inputs are the already-computed table rows, so a figure never disagrees
with its table.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .stats import RatioStratum

_CONDITION_COLORS = ("#1f77b4", "#ff7f0e", "#d62728")


def _errorbars(cells):
    """(values, lower errors, upper errors) for non-empty cells."""
    values = [c.sensitivity for c in cells]
    lower = [c.sensitivity - c.ci_low for c in cells]
    upper = [c.ci_high - c.sensitivity for c in cells]
    return values, lower, upper


def render_audit_figures(report, out_dir: Path) -> list[Path]:
    """Render the condition/phase figure and the ratio-strata figure."""
    out_dir = Path(out_dir)
    written = []

    conditions = [condition for condition, _ in report.condition_rows]
    fig, (ax_summary, ax_phase) = plt.subplots(1, 2, figsize=(11, 4.5))

    cells = [cell for _, cell in report.condition_rows if not cell.empty]
    labels = [condition.label for condition, cell in report.condition_rows if not cell.empty]
    if cells:
        values, err_lo, err_hi = _errorbars(cells)
        ax_summary.bar(
            labels, values, yerr=[err_lo, err_hi], capsize=4,
            color=_CONDITION_COLORS[: len(labels)],
        )
    ax_summary.set_ylabel("sensitivity")
    ax_summary.set_ylim(0.0, 1.05)
    ax_summary.set_title("Sensitivity by condition")

    for index, condition in enumerate(conditions):
        rows = [row for c, row in report.phase_rows if c is condition and not row.cell.empty]
        if not rows:
            continue
        centers = [row.bin_center for row in rows]
        values, err_lo, err_hi = _errorbars([row.cell for row in rows])
        color = _CONDITION_COLORS[index % len(_CONDITION_COLORS)]
        ax_phase.errorbar(
            centers, values, yerr=[err_lo, err_hi], marker="o", capsize=3,
            label=condition.label, color=color,
        )
    risk_threshold = report.metadata["config"]["risk_phase_threshold"]
    ax_phase.axvspan(risk_threshold, 0.5, alpha=0.12, color="#d62728")
    ax_phase.set_xlabel("z-phase (folded)")
    ax_phase.set_ylabel("sensitivity")
    ax_phase.set_xlim(0.0, 0.5)
    ax_phase.set_ylim(0.0, 1.05)
    ax_phase.set_title("Sensitivity by z-phase bin")
    ax_phase.legend(loc="lower left", fontsize="small")

    fig.tight_layout()
    path = out_dir / "zphase_sensitivity.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, axes = plt.subplots(1, len(RatioStratum), figsize=(13, 4.0), sharey=True)
    marginal = {row.stratum: row.cell for row in report.ratio_rows}
    for ax, stratum in zip(axes, RatioStratum):
        rows = [
            row
            for row in report.ratio_phase_rows
            if row.stratum is stratum and not row.cell.empty
        ]
        if rows:
            centers = [row.bin_center for row in rows]
            values, err_lo, err_hi = _errorbars([row.cell for row in rows])
            ax.errorbar(centers, values, yerr=[err_lo, err_hi], marker="o", capsize=3)
        cell = marginal.get(stratum)
        if cell is not None and not cell.empty:
            ax.axhline(cell.sensitivity, linestyle="--", linewidth=1, color="#555555")
        ax.set_xlim(0.0, 0.5)
        ax.set_ylim(0.0, 1.05)
        ax.set_xlabel("z-phase (folded)")
        ax.set_title(f"{stratum.label} (n={cell.total if cell else 0})")
    axes[0].set_ylabel("sensitivity")
    fig.suptitle("Sensitivity by interval/diameter stratum", y=1.0)

    fig.tight_layout()
    path = out_dir / "ratio_strata.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


def render_sweep_figure(cells, out_dir: Path, threshold: float | None = None) -> Path:
    """One sensitivity-vs-phase curve per simulated ratio."""
    out_dir = Path(out_dir)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ratios = sorted({c.ratio for c in cells})
    for ratio in ratios:
        rows = [c for c in cells if c.ratio == ratio]
        rows.sort(key=lambda c: c.phase)
        phases = [c.phase for c in rows]
        values, err_lo, err_hi = _errorbars([c.cell for c in rows])
        ax.errorbar(
            phases, values, yerr=[err_lo, err_hi], marker="o", capsize=3,
            label=f"d/D = {ratio:g}",
        )
    ax.set_xlabel("z-phase (folded)")
    ax.set_ylabel("sensitivity")
    ax.set_xlim(-0.01, 0.51)
    ax.set_ylim(-0.05, 1.05)
    title = "Simulated sensitivity by z-phase"
    if threshold is not None:
        title += f" (threshold {threshold:g})"
    ax.set_title(title)
    ax.legend(loc="lower left", fontsize="small")
    fig.tight_layout()
    path = out_dir / "sweep_sensitivity.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
