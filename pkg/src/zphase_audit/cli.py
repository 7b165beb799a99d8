"""Command-line interface.

Subcommands: ``audit`` (full pipeline), ``phase`` (geometry-only listing
from a manifest plus nodule list), ``simulate`` (synthetic sensitivity
sweep), ``fixtures`` (emit the bundled reference dataset).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ._version import __version__
from .consensus import (
    DEFAULT_CLUSTER_RADIUS_MM,
    DEFAULT_MIN_READERS,
    Z_CENTER_CENTROID,
    Z_CENTER_MID_EXTENT,
)
from .errors import AuditError, ConfigurationError, EmptyConsensusError
from .geometry import DEFAULT_PHASE_BINS
from .matching import (
    DEFAULT_CONFIDENCE_THRESHOLD,
    DEFAULT_MATCH_RADIUS_MM,
    DEFAULT_RISK_PHASE_THRESHOLD,
    DEFAULT_RISK_RATIO_THRESHOLD,
    Condition,
)
from .simulator import (
    DEFAULT_QUADRATURE_STEP_MM,
    SSP_RECT,
    SSP_SHAPES,
    SliceModel,
    sweep,
)
from .stats import DEFAULT_CI_LEVEL, DEFAULT_RESAMPLES

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EMPTY_CONSENSUS = 2


def _parse_detections_args(pairs: list[str]) -> dict[Condition, Path]:
    detections: dict[Condition, Path] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not value:
            raise ConfigurationError(
                f"--detections expects condition=file, got {pair!r}"
            )
        condition = Condition.from_label(key)
        if condition in detections:
            raise ConfigurationError(f"duplicate --detections for condition {key!r}")
        detections[condition] = Path(value)
    return detections


def _comma_floats(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zphase-audit",
        description=(
            "Batch audit of AI nodule-detection sensitivity versus position in the "
            "CT reconstruction cycle (z-phase) and interval-to-diameter ratio."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log progress details to stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    audit = sub.add_parser("audit", help="run the full audit pipeline")
    audit.add_argument("--annotations", type=Path, required=True, metavar="DIR",
                       help="directory of annotation XML files (one per series)")
    audit.add_argument("--manifest", type=Path, required=True, metavar="FILE",
                       help="geometry manifest JSON")
    audit.add_argument("--detections", action="append", required=True, metavar="CONDITION=FILE",
                       help="detection CSV for one condition; repeatable")
    audit.add_argument("--cluster-radius-mm", type=float, default=DEFAULT_CLUSTER_RADIUS_MM)
    audit.add_argument("--min-readers", type=int, default=DEFAULT_MIN_READERS)
    audit.add_argument("--match-radius-mm", type=float, default=DEFAULT_MATCH_RADIUS_MM)
    audit.add_argument("--confidence-threshold", type=float,
                       default=DEFAULT_CONFIDENCE_THRESHOLD)
    audit.add_argument("--bins", type=int, default=DEFAULT_PHASE_BINS)
    audit.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    audit.add_argument("--ci-level", type=float, default=DEFAULT_CI_LEVEL)
    audit.add_argument("--seed", type=int, required=True,
                       help="base seed for all bootstrap resampling")
    audit.add_argument("--risk-phase-threshold", type=float,
                       default=DEFAULT_RISK_PHASE_THRESHOLD)
    audit.add_argument("--risk-ratio-threshold", type=float,
                       default=DEFAULT_RISK_RATIO_THRESHOLD)
    audit.add_argument("--z-center", choices=[Z_CENTER_CENTROID, Z_CENTER_MID_EXTENT],
                       default=Z_CENTER_CENTROID,
                       help="annotation z-center rule: ROI mean or extent midpoint")
    audit.add_argument("--out", type=Path, required=True, metavar="DIR")
    audit.add_argument("--format", choices=["csv", "json"], default="csv")
    audit.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                       help="render PNG figures alongside the tables")

    phase = sub.add_parser("phase", help="geometry-only phase/ratio listing")
    phase.add_argument("--manifest", type=Path, required=True, metavar="FILE")
    phase.add_argument("--nodules", type=Path, required=True, metavar="FILE",
                       help="CSV of series_id,z_mm[,diameter_mm]")
    phase.add_argument("--bins", type=int, default=DEFAULT_PHASE_BINS)
    phase.add_argument("--risk-phase-threshold", type=float,
                       default=DEFAULT_RISK_PHASE_THRESHOLD)
    phase.add_argument("--risk-ratio-threshold", type=float,
                       default=DEFAULT_RISK_RATIO_THRESHOLD)
    phase.add_argument("--out", type=Path, required=True, metavar="DIR")
    phase.add_argument("--format", choices=["csv", "json"], default="csv")

    simulate = sub.add_parser("simulate", help="synthetic partial-volume sensitivity sweep")
    simulate.add_argument("--interval-mm", type=float, default=5.0,
                          help="reconstruction interval of the simulated grid")
    simulate.add_argument("--ssp-shape", choices=list(SSP_SHAPES), default=SSP_RECT)
    simulate.add_argument("--ssp-width-mm", type=float, default=None,
                          help="SSP full width; defaults to the interval")
    simulate.add_argument("--threshold", type=float, default=0.6,
                          help="detection threshold as a fraction of the on-plane signal")
    simulate.add_argument("--ratios", type=_comma_floats, default=[0.3, 0.6, 1.2],
                          metavar="R1,R2,...", help="interval/diameter ratios to sweep")
    simulate.add_argument("--phase-steps", type=int, default=11,
                          help="number of equally spaced phases over [0, 0.5]")
    simulate.add_argument("--n-per-cell", type=int, default=500)
    simulate.add_argument("--noise-sd", type=float, default=0.05,
                          help="sd of additive gaussian noise on the signal score")
    simulate.add_argument("--step-mm", type=float, default=DEFAULT_QUADRATURE_STEP_MM)
    simulate.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    simulate.add_argument("--ci-level", type=float, default=DEFAULT_CI_LEVEL)
    simulate.add_argument("--seed", type=int, required=True)
    simulate.add_argument("--out", type=Path, required=True, metavar="DIR")
    simulate.add_argument("--format", choices=["csv", "json"], default="csv")
    simulate.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)

    fixtures = sub.add_parser("fixtures", help="emit the bundled reference dataset")
    fixtures.add_argument("--out", type=Path, required=True, metavar="DIR")

    return parser


def _run_audit(args: argparse.Namespace) -> int:
    from .report import AuditConfig, run_audit

    config = AuditConfig(
        annotations_dir=args.annotations,
        manifest_path=args.manifest,
        detections=_parse_detections_args(args.detections),
        out_dir=args.out,
        seed=args.seed,
        cluster_radius_mm=args.cluster_radius_mm,
        min_readers=args.min_readers,
        match_radius_mm=args.match_radius_mm,
        confidence_threshold=args.confidence_threshold,
        bins=args.bins,
        resamples=args.resamples,
        ci_level=args.ci_level,
        risk_phase_threshold=args.risk_phase_threshold,
        risk_ratio_threshold=args.risk_ratio_threshold,
        z_center=args.z_center,
        format=args.format,
        figures=args.figures,
    )
    report = run_audit(config)
    for path in report.written:
        print(path)
    return EXIT_OK


def _run_phase(args: argparse.Namespace) -> int:
    from .report import run_phase

    for path in run_phase(
        args.manifest,
        args.nodules,
        args.out,
        bin_count=args.bins,
        risk_phase_threshold=args.risk_phase_threshold,
        risk_ratio_threshold=args.risk_ratio_threshold,
        fmt=args.format,
    ):
        print(path)
    return EXIT_OK


def _run_simulate(args: argparse.Namespace) -> int:
    from .report import emit_sweep_table

    if args.phase_steps < 1:
        raise ConfigurationError(f"--phase-steps must be >= 1, got {args.phase_steps}")
    if args.seed < 0:
        raise ConfigurationError(f"--seed must be >= 0, got {args.seed}")
    phases = [0.5 * i / (args.phase_steps - 1) for i in range(args.phase_steps)] \
        if args.phase_steps > 1 else [0.0]
    model = SliceModel(
        recon_interval_mm=args.interval_mm,
        ssp_width_mm=args.ssp_width_mm,
        ssp_shape=args.ssp_shape,
    )
    cells = sweep(
        phases,
        args.ratios,
        model,
        args.threshold,
        args.n_per_cell,
        args.noise_sd,
        args.seed,
        step_mm=args.step_mm,
        resamples=args.resamples,
        ci_level=args.ci_level,
    )
    metadata = {
        "tool": "zphase-audit",
        "version": __version__,
        "seed": args.seed,
        "config": {
            "interval_mm": args.interval_mm,
            "ssp_shape": args.ssp_shape,
            "ssp_width_mm": args.ssp_width_mm,
            "threshold": args.threshold,
            "ratios": args.ratios,
            "phase_steps": args.phase_steps,
            "n_per_cell": args.n_per_cell,
            "noise_sd": args.noise_sd,
            "step_mm": args.step_mm,
            "resamples": args.resamples,
            "ci_level": args.ci_level,
            "format": args.format,
            "figures": args.figures,
        },
    }
    written = emit_sweep_table(cells, args.format, args.out, metadata)
    if args.figures:
        from .figures import render_sweep_figure

        written.append(render_sweep_figure(cells, args.out, args.threshold))
    for path in written:
        print(path)
    return EXIT_OK


def _run_fixtures(args: argparse.Namespace) -> int:
    from .fixtures import write_reference_fixture

    paths = write_reference_fixture(args.out)
    print(paths.annotations_dir)
    print(paths.manifest_path)
    for condition in Condition:
        print(paths.detection_paths[condition])
    return EXIT_OK


_COMMANDS = {
    "audit": _run_audit,
    "phase": _run_phase,
    "simulate": _run_simulate,
    "fixtures": _run_fixtures,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _COMMANDS[args.command](args)
    except EmptyConsensusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY_CONSENSUS
    except (AuditError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
