"""Audit orchestration: ingest -> consensus -> matching -> stats -> emission.

Emits one file per table (CSV or JSON), a run_metadata.json echoing every
configurable parameter, and — unless disabled — rendered figures. Output is
deterministic for a fixed config and seed, byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ._version import __version__
from .consensus import (
    DEFAULT_CLUSTER_RADIUS_MM,
    DEFAULT_MIN_READERS,
    Z_CENTER_CENTROID,
    Z_CENTER_MODES,
    ConsensusNodule,
    cluster_annotations_with_discards,
)
from .errors import (
    ConfigurationError,
    EmptyConsensusError,
    MissingInputError,
)
from .geometry import DEFAULT_PHASE_BINS, bin_phase, compute_zphase, interval_diameter_ratio
from .ingest import (
    DetectionRecord,
    parse_annotations,
    parse_detections,
    parse_manifest,
    parse_nodule_list,
)
from .matching import (
    DEFAULT_CONFIDENCE_THRESHOLD,
    DEFAULT_MATCH_RADIUS_MM,
    DEFAULT_RISK_PHASE_THRESHOLD,
    DEFAULT_RISK_RATIO_THRESHOLD,
    Condition,
    NoduleOutcome,
    assemble_outcomes,
    condition_geometry,
    match_detections,
)
from .stats import (
    DEFAULT_CI_LEVEL,
    DEFAULT_RESAMPLES,
    PhaseRow,
    RatioRow,
    SensitivityCell,
    stratify_by_phase,
    stratify_by_ratio,
    subseed,
    summarize_conditions,
)

log = logging.getLogger(__name__)

FORMAT_CSV = "csv"
FORMAT_JSON = "json"
FORMATS = (FORMAT_CSV, FORMAT_JSON)

# Namespace for per-table seeds (stats uses its own cell-level namespaces).
_NS_PHASE_TABLE = 4

ASSUMPTION_NOTES = (
    "annotation z center: mean of ROI z positions (configurable to mid-extent)",
    "matching: 3D Euclidean distance to the consensus center, boundary inclusive",
    "nodules without a positive size estimate keep their phase but are excluded from ratio analyses",
    "risk flag: ratio >= risk_ratio_threshold and phase > risk_phase_threshold",
)


@dataclass(frozen=True)
class AuditConfig:
    """Everything a run needs; echoed verbatim into run_metadata.json."""

    annotations_dir: Path
    manifest_path: Path
    detections: dict[Condition, Path]
    out_dir: Path
    seed: int
    cluster_radius_mm: float = DEFAULT_CLUSTER_RADIUS_MM
    min_readers: int = DEFAULT_MIN_READERS
    match_radius_mm: float = DEFAULT_MATCH_RADIUS_MM
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    bins: int = DEFAULT_PHASE_BINS
    resamples: int = DEFAULT_RESAMPLES
    ci_level: float = DEFAULT_CI_LEVEL
    risk_phase_threshold: float = DEFAULT_RISK_PHASE_THRESHOLD
    risk_ratio_threshold: float = DEFAULT_RISK_RATIO_THRESHOLD
    z_center: str = Z_CENTER_CENTROID
    format: str = FORMAT_CSV
    figures: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "annotations_dir", Path(self.annotations_dir))
        object.__setattr__(self, "manifest_path", Path(self.manifest_path))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        object.__setattr__(
            self, "detections", {c: Path(p) for c, p in self.detections.items()}
        )
        if not self.detections:
            raise ConfigurationError("at least one condition=detections file is required")
        if self.format not in FORMATS:
            raise ConfigurationError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.z_center not in Z_CENTER_MODES:
            raise ConfigurationError(
                f"z_center must be one of {Z_CENTER_MODES}, got {self.z_center!r}"
            )
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class RiskRow:
    """One nodule's risk summary under one condition."""

    series_id: str
    nodule_index: int
    diameter_mm: float | None
    ratio: float | None
    zphase: float
    detected: bool
    risk_flag: bool


@dataclass
class AuditReport:
    """Everything run_audit computed, before and after table emission."""

    metadata: dict
    condition_rows: list[tuple[Condition, SensitivityCell]]
    phase_rows: list[tuple[Condition, PhaseRow]]
    ratio_rows: list[RatioRow]
    ratio_phase_rows: list[RatioRow]
    risk_rows: dict[Condition, list[RiskRow]]
    outcomes: dict[Condition, list[NoduleOutcome]]
    written: list[Path] = field(default_factory=list)


def _config_echo(config: AuditConfig) -> dict:
    echo = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, Path):
            value = str(value)
        elif f.name == "detections":
            value = {c.label: str(p) for c, p in value.items()}
        echo[f.name] = value
    return echo


def config_from_metadata(metadata: dict) -> AuditConfig:
    """Rebuild the exact run configuration from an emitted run_metadata.json."""
    echo = dict(metadata["config"])
    echo["detections"] = {
        Condition.from_label(label): Path(path) for label, path in echo["detections"].items()
    }
    echo["annotations_dir"] = Path(echo["annotations_dir"])
    echo["manifest_path"] = Path(echo["manifest_path"])
    echo["out_dir"] = Path(echo["out_dir"])
    return AuditConfig(**echo)


def _check_inputs(config: AuditConfig) -> None:
    if not config.annotations_dir.is_dir():
        raise MissingInputError(f"annotations directory not found: {config.annotations_dir}")
    if not config.manifest_path.is_file():
        raise MissingInputError(f"manifest not found: {config.manifest_path}")
    for condition, path in config.detections.items():
        if not path.is_file():
            raise MissingInputError(
                f"detections file for {condition.label} not found: {path}"
            )


def _load_series(config: AuditConfig) -> tuple[dict, dict, list[str]]:
    """Parse manifest + annotation files; return (manifests, documents, diagnostics)."""
    manifests = {}
    for manifest in parse_manifest(config.manifest_path.read_bytes()):
        if manifest.series_id in manifests:
            raise ConfigurationError(f"duplicate manifest entry for series {manifest.series_id!r}")
        manifests[manifest.series_id] = manifest

    xml_paths = sorted(config.annotations_dir.glob("*.xml"))
    if not xml_paths:
        raise MissingInputError(f"no annotation XML files in {config.annotations_dir}")

    documents = {}
    diagnostics = []
    for path in xml_paths:
        document = parse_annotations(path.read_bytes())
        series_id = document.series_id or path.stem
        if series_id in documents:
            raise ConfigurationError(f"duplicate annotation document for series {series_id!r}")
        if series_id not in manifests:
            raise ConfigurationError(
                f"annotation document {path.name} names series {series_id!r}, "
                "which is missing from the manifest"
            )
        documents[series_id] = document
        diagnostics.extend(f"{path.name}: {entry}" for entry in document.skipped)
    return manifests, documents, diagnostics


def run_audit(config: AuditConfig) -> AuditReport:
    """Execute the full pipeline and write tables (and figures) to out_dir."""
    _check_inputs(config)
    manifests, documents, diagnostics = _load_series(config)

    detections_by_condition: dict[Condition, dict[str, list[DetectionRecord]]] = {}
    for condition, path in config.detections.items():
        grouped: dict[str, list[DetectionRecord]] = {}
        for record in parse_detections(path.read_bytes()):
            grouped.setdefault(record.series_id, []).append(record)
        for series_id in grouped:
            if series_id not in manifests:
                log.warning(
                    "detections for unknown series %r (%s) ignored", series_id, condition.label
                )
        detections_by_condition[condition] = grouped

    nodules_by_series: dict[str, list[ConsensusNodule]] = {}
    discarded_clusters = 0
    for series_id in sorted(documents):
        kept, discarded = cluster_annotations_with_discards(
            list(documents[series_id].annotations),
            manifests[series_id].geometry,
            config.cluster_radius_mm,
            config.min_readers,
            series_id=series_id,
            z_center=config.z_center,
        )
        discarded_clusters += len(discarded)
        kept.sort(key=lambda n: (n.center_mm[2], n.center_mm[0], n.center_mm[1]))
        nodules_by_series[series_id] = kept

    total_nodules = sum(len(v) for v in nodules_by_series.values())
    if total_nodules == 0:
        raise EmptyConsensusError(
            f"no clusters reached the consensus threshold (min_readers={config.min_readers})"
        )

    outcomes: dict[Condition, list[NoduleOutcome]] = {}
    risk_rows: dict[Condition, list[RiskRow]] = {}
    for condition in Condition:
        if condition not in config.detections:
            continue
        condition_outcomes = []
        rows = []
        for series_id in sorted(nodules_by_series):
            geometry = condition_geometry(manifests[series_id].geometry, condition)
            matched = match_detections(
                nodules_by_series[series_id],
                detections_by_condition[condition].get(series_id, []),
                config.match_radius_mm,
                config.confidence_threshold,
            )
            assembled = assemble_outcomes(
                matched,
                geometry,
                condition,
                risk_phase_threshold=config.risk_phase_threshold,
                risk_ratio_threshold=config.risk_ratio_threshold,
            )
            condition_outcomes.extend(assembled)
            # assemble_outcomes preserves input order, so an outcome's index
            # in this series is its nodule's index in the sorted nodule list.
            rows.extend(
                RiskRow(
                    series_id=o.series_id,
                    nodule_index=index,
                    diameter_mm=o.nodule.diameter_mm,
                    ratio=o.ratio,
                    zphase=o.zphase.value,
                    detected=o.detected,
                    risk_flag=o.risk_flag,
                )
                for index, o in enumerate(assembled)
            )
        rows.sort(
            key=lambda r: (
                not r.risk_flag,
                -(r.ratio if r.ratio is not None else float("-inf")),
                -r.zphase,
                r.series_id,
                r.nodule_index,
            )
        )
        outcomes[condition] = condition_outcomes
        risk_rows[condition] = rows

    condition_rows = summarize_conditions(
        outcomes, resamples=config.resamples, level=config.ci_level, seed=config.seed
    )
    phase_rows = []
    for index, condition in enumerate(Condition):
        if condition not in outcomes:
            continue
        table_seed = subseed(config.seed, _NS_PHASE_TABLE, index)
        for row in stratify_by_phase(
            outcomes[condition],
            bin_count=config.bins,
            resamples=config.resamples,
            level=config.ci_level,
            seed=table_seed,
        ):
            phase_rows.append((condition, row))

    pooled = [o for condition in Condition if condition in outcomes for o in outcomes[condition]]
    ratio_rows = stratify_by_ratio(
        pooled,
        crossed=False,
        bin_count=config.bins,
        resamples=config.resamples,
        level=config.ci_level,
        seed=config.seed,
    )
    ratio_phase_rows = stratify_by_ratio(
        pooled,
        crossed=True,
        bin_count=config.bins,
        resamples=config.resamples,
        level=config.ci_level,
        seed=config.seed,
    )

    metadata = {
        "tool": "zphase-audit",
        "version": __version__,
        "seed": config.seed,
        "config": _config_echo(config),
        "assumptions": list(ASSUMPTION_NOTES),
        "series_count": len(documents),
        "consensus_nodule_count": total_nodules,
        "excluded_nodule_count": sum(
            1 for nodules in nodules_by_series.values() for n in nodules if n.excluded
        ),
        "discarded_cluster_count": discarded_clusters,
        "skipped_annotations": diagnostics,
    }

    report = AuditReport(
        metadata=metadata,
        condition_rows=condition_rows,
        phase_rows=phase_rows,
        ratio_rows=ratio_rows,
        ratio_phase_rows=ratio_phase_rows,
        risk_rows=risk_rows,
        outcomes=outcomes,
    )

    config.out_dir.mkdir(parents=True, exist_ok=True)
    report.written = emit_tables(report, config.format, config.out_dir)
    if config.figures:
        from . import figures  # deferred: keeps table-only runs free of matplotlib

        report.written.extend(figures.render_audit_figures(report, config.out_dir))
    return report


# ---------------------------------------------------------------------------
# Emission


def _fmt(value: float | None, places: int = 4) -> str:
    return "" if value is None else f"{value:.{places}f}"


def _jnum(value: float | None, places: int = 4) -> float | None:
    return None if value is None else round(value, places)


def _cell_csv(cell: SensitivityCell) -> list[str]:
    return [
        str(cell.detected),
        str(cell.total),
        _fmt(cell.sensitivity),
        _fmt(cell.ci_low),
        _fmt(cell.ci_high),
    ]


def _cell_json(cell: SensitivityCell) -> dict:
    return {
        "detected": cell.detected,
        "total": cell.total,
        "sensitivity": _jnum(cell.sensitivity),
        "ci_low": _jnum(cell.ci_low),
        "ci_high": _jnum(cell.ci_high),
    }


def _write_table(
    out_dir: Path, name: str, fmt: str, header: list[str], csv_rows: list[list[str]],
    json_rows: list[dict],
) -> Path:
    if fmt == FORMAT_CSV:
        path = out_dir / f"{name}.csv"
        lines = [",".join(header)] + [",".join(row) for row in csv_rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        path = out_dir / f"{name}.json"
        path.write_text(json.dumps(json_rows, indent=2) + "\n", encoding="utf-8")
    return path


def emit_tables(report: AuditReport, fmt: str, out_dir: Path) -> list[Path]:
    """Write all tables plus run_metadata.json; returns the written paths.

    Statistics are rendered with 4 decimal places (bin centers with 2); CSV
    and JSON emission are value-equal after parsing. Row order is
    deterministic: condition order, then bin index; risk lists lead with the
    highest-risk nodules.
    """
    if fmt not in FORMATS:
        raise ConfigurationError(f"format must be one of {FORMATS}, got {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    written.append(
        _write_table(
            out_dir,
            "condition_summary",
            fmt,
            ["condition", "detected", "total", "sensitivity", "ci_low", "ci_high"],
            [[condition.label, *_cell_csv(cell)] for condition, cell in report.condition_rows],
            [
                {"condition": condition.label, **_cell_json(cell)}
                for condition, cell in report.condition_rows
            ],
        )
    )

    written.append(
        _write_table(
            out_dir,
            "phase_table",
            fmt,
            ["condition", "bin_center", "detected", "total", "sensitivity", "ci_low", "ci_high"],
            [
                [condition.label, _fmt(row.bin_center, 2), *_cell_csv(row.cell)]
                for condition, row in report.phase_rows
            ],
            [
                {
                    "condition": condition.label,
                    "bin_center": _jnum(row.bin_center, 2),
                    **_cell_json(row.cell),
                }
                for condition, row in report.phase_rows
            ],
        )
    )

    all_ratio_rows = [*report.ratio_rows, *report.ratio_phase_rows]
    written.append(
        _write_table(
            out_dir,
            "ratio_table",
            fmt,
            ["stratum", "bin_center", "detected", "total", "sensitivity", "ci_low", "ci_high"],
            [
                [
                    row.stratum.label,
                    "" if row.bin_center is None else _fmt(row.bin_center, 2),
                    *_cell_csv(row.cell),
                ]
                for row in all_ratio_rows
            ],
            [
                {
                    "stratum": row.stratum.label,
                    "bin_center": _jnum(row.bin_center, 2),
                    **_cell_json(row.cell),
                }
                for row in all_ratio_rows
            ],
        )
    )

    for condition, rows in report.risk_rows.items():
        written.append(
            _write_table(
                out_dir,
                f"risk_list_{condition.label}",
                fmt,
                [
                    "series_id",
                    "nodule_index",
                    "diameter_mm",
                    "ratio",
                    "zphase",
                    "detected",
                    "risk_flag",
                ],
                [
                    [
                        row.series_id,
                        str(row.nodule_index),
                        _fmt(row.diameter_mm),
                        _fmt(row.ratio),
                        _fmt(row.zphase),
                        str(row.detected).lower(),
                        str(row.risk_flag).lower(),
                    ]
                    for row in rows
                ],
                [
                    {
                        "series_id": row.series_id,
                        "nodule_index": row.nodule_index,
                        "diameter_mm": _jnum(row.diameter_mm),
                        "ratio": _jnum(row.ratio),
                        "zphase": _jnum(row.zphase),
                        "detected": row.detected,
                        "risk_flag": row.risk_flag,
                    }
                    for row in rows
                ],
            )
        )

    metadata_path = out_dir / "run_metadata.json"
    metadata_path.write_text(json.dumps(report.metadata, indent=2) + "\n", encoding="utf-8")
    written.append(metadata_path)
    return written


# ---------------------------------------------------------------------------
# Geometry-only phase listing (the `phase` subcommand)


def run_phase(
    manifest_path: Path,
    nodules_path: Path,
    out_dir: Path,
    *,
    bin_count: int = DEFAULT_PHASE_BINS,
    risk_phase_threshold: float = DEFAULT_RISK_PHASE_THRESHOLD,
    risk_ratio_threshold: float = DEFAULT_RISK_RATIO_THRESHOLD,
    fmt: str = FORMAT_CSV,
) -> list[Path]:
    """Phase/ratio listing for externally supplied nodule positions.

    Uses each series' native reconstruction interval from the manifest; no
    detections or statistics involved.
    """
    manifest_path = Path(manifest_path)
    nodules_path = Path(nodules_path)
    if not manifest_path.is_file():
        raise MissingInputError(f"manifest not found: {manifest_path}")
    if not nodules_path.is_file():
        raise MissingInputError(f"nodule list not found: {nodules_path}")
    manifests = {m.series_id: m for m in parse_manifest(manifest_path.read_bytes())}
    entries = parse_nodule_list(nodules_path.read_bytes())

    csv_rows = []
    json_rows = []
    for entry in entries:
        if entry.series_id not in manifests:
            raise ConfigurationError(
                f"nodule list names series {entry.series_id!r}, which is missing from the manifest"
            )
        geometry = manifests[entry.series_id].geometry
        phase = compute_zphase(entry.z_mm, geometry)
        center = bin_phase(phase, bin_count).center
        ratio = None
        if entry.diameter_mm is not None and entry.diameter_mm > 0:
            ratio = interval_diameter_ratio(geometry.recon_interval_mm, entry.diameter_mm)
        risk = (
            ratio is not None
            and ratio >= risk_ratio_threshold
            and phase.value > risk_phase_threshold
        )
        csv_rows.append(
            [
                entry.series_id,
                _fmt(entry.z_mm),
                _fmt(phase.value),
                _fmt(center, 2),
                _fmt(entry.diameter_mm),
                _fmt(ratio),
                str(risk).lower(),
            ]
        )
        json_rows.append(
            {
                "series_id": entry.series_id,
                "z_mm": _jnum(entry.z_mm),
                "zphase": _jnum(phase.value),
                "bin_center": _jnum(center, 2),
                "diameter_mm": _jnum(entry.diameter_mm),
                "ratio": _jnum(ratio),
                "risk_flag": risk,
            }
        )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = _write_table(
        out_dir,
        "phase_list",
        fmt,
        ["series_id", "z_mm", "zphase", "bin_center", "diameter_mm", "ratio", "risk_flag"],
        csv_rows,
        json_rows,
    )
    return [path]


# ---------------------------------------------------------------------------
# Sweep emission (the `simulate` subcommand)


def emit_sweep_table(cells, fmt: str, out_dir: Path, metadata: dict | None = None) -> list[Path]:
    """Write simulator sweep cells in the same tabular shape as the stats tables."""
    if fmt not in FORMATS:
        raise ConfigurationError(f"format must be one of {FORMATS}, got {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        _write_table(
            out_dir,
            "sweep_table",
            fmt,
            ["ratio", "phase", "detected", "total", "sensitivity", "ci_low", "ci_high"],
            [[f"{c.ratio:g}", _fmt(c.phase, 2), *_cell_csv(c.cell)] for c in cells],
            [
                {"ratio": c.ratio, "phase": _jnum(c.phase, 2), **_cell_json(c.cell)}
                for c in cells
            ],
        )
    ]
    if metadata is not None:
        path = out_dir / "run_metadata.json"
        path.write_text(json.dumps(metadata, indent=2) + "\n", encoding="utf-8")
        written.append(path)
    return written
