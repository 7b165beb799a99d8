"""Batch audit of AI lung-nodule detection sensitivity versus CT
reconstruction-cycle position (z-phase) and interval-to-diameter ratio."""

from ._version import __version__
from .consensus import ConsensusNodule, annotation_center, cluster_annotations, estimate_diameter
from .errors import AuditError
from .geometry import (
    PhaseBin,
    VolumeGeometry,
    ZPhase,
    bin_phase,
    compute_zphase,
    interval_diameter_ratio,
    phase_bins,
)
from .ingest import (
    AnnotationDocument,
    DetectionRecord,
    GeometryManifest,
    parse_annotations,
    parse_detections,
    parse_manifest,
)
from .matching import Condition, NoduleOutcome, assemble_outcomes, match_detections
from .report import AuditConfig, AuditReport, emit_tables, run_audit
from .simulator import (
    SliceModel,
    SyntheticNodule,
    peak_plane_fraction,
    plane_signal,
    simulate_detection,
    sweep,
)
from .stats import (
    RatioStratum,
    SensitivityCell,
    bootstrap_ci,
    sensitivity,
    stratify_by_phase,
    stratify_by_ratio,
)

__all__ = [
    "__version__",
    "AuditError",
    "AuditConfig",
    "AuditReport",
    "AnnotationDocument",
    "Condition",
    "ConsensusNodule",
    "DetectionRecord",
    "GeometryManifest",
    "NoduleOutcome",
    "PhaseBin",
    "RatioStratum",
    "SensitivityCell",
    "SliceModel",
    "SyntheticNodule",
    "VolumeGeometry",
    "ZPhase",
    "annotation_center",
    "assemble_outcomes",
    "bin_phase",
    "bootstrap_ci",
    "cluster_annotations",
    "compute_zphase",
    "emit_tables",
    "estimate_diameter",
    "interval_diameter_ratio",
    "match_detections",
    "parse_annotations",
    "parse_detections",
    "parse_manifest",
    "peak_plane_fraction",
    "phase_bins",
    "plane_signal",
    "run_audit",
    "sensitivity",
    "simulate_detection",
    "stratify_by_phase",
    "stratify_by_ratio",
    "sweep",
]
