"""Detection-to-nodule matching and per-nodule outcome assembly."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .consensus import ConsensusNodule
from .errors import ConfigurationError
from .geometry import VolumeGeometry, ZPhase, compute_zphase, interval_diameter_ratio
from .ingest import DetectionRecord

DEFAULT_MATCH_RADIUS_MM = 15.0
DEFAULT_CONFIDENCE_THRESHOLD = 0.5
DEFAULT_RISK_PHASE_THRESHOLD = 0.35
DEFAULT_RISK_RATIO_THRESHOLD = 1.0


class Condition(enum.Enum):
    """Reconstruction conditions under audit, each pinned to its interval."""

    BASELINE_1MM = ("baseline_1mm", 1.0)
    RECON_3MM = ("recon_3mm", 3.0)
    RECON_5MM = ("recon_5mm", 5.0)

    def __init__(self, label: str, interval_mm: float) -> None:
        self.label = label
        self.interval_mm = interval_mm

    @classmethod
    def from_label(cls, label: str) -> "Condition":
        for condition in cls:
            if condition.label == label:
                return condition
        valid = ", ".join(c.label for c in cls)
        raise ConfigurationError(f"unknown condition {label!r}; expected one of: {valid}")

    def __str__(self) -> str:
        return self.label


def condition_geometry(geometry: VolumeGeometry, condition: Condition) -> VolumeGeometry:
    """The series geometry re-sampled at a condition's reconstruction interval."""
    return replace(geometry, recon_interval_mm=condition.interval_mm)


@dataclass(frozen=True)
class NoduleOutcome:
    """One nodule's fate under one condition, with its geometry covariates."""

    series_id: str
    condition: Condition
    nodule: ConsensusNodule
    detected: bool
    zphase: ZPhase
    ratio: float | None
    risk_flag: bool


def match_detections(
    nodules: list[ConsensusNodule],
    detections: list[DetectionRecord],
    match_radius_mm: float = DEFAULT_MATCH_RADIUS_MM,
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
) -> list[tuple[ConsensusNodule, bool]]:
    """Mark each nodule detected or missed.

    A nodule counts as detected when any detection with confidence >= the
    threshold lies within the match radius (3D Euclidean, boundary
    inclusive) of its center. Matching is many-to-many: one detection can
    account for several nodules and vice versa.
    """
    if match_radius_mm <= 0 or not math.isfinite(match_radius_mm):
        raise ValueError(f"match_radius_mm must be > 0, got {match_radius_mm}")
    if not (0.0 <= confidence_threshold <= 1.0):
        raise ValueError(f"confidence_threshold must lie in [0, 1], got {confidence_threshold}")
    confident = [d.center_mm for d in detections if d.confidence >= confidence_threshold]
    return [
        (
            nodule,
            any(math.dist(nodule.center_mm, center) <= match_radius_mm for center in confident),
        )
        for nodule in nodules
    ]


def assemble_outcomes(
    matched: list[tuple[ConsensusNodule, bool]],
    geometry: VolumeGeometry,
    condition: Condition,
    *,
    risk_phase_threshold: float = DEFAULT_RISK_PHASE_THRESHOLD,
    risk_ratio_threshold: float = DEFAULT_RISK_RATIO_THRESHOLD,
) -> list[NoduleOutcome]:
    """Attach phase, ratio, and risk flag to each matched nodule.

    ``geometry`` must already carry the condition's reconstruction interval
    (see condition_geometry); a mismatch is a configuration error, since it
    would silently assign phases from the wrong grid. The risk flag marks
    undersampled nodules parked far from a reconstructed plane:
    ratio >= risk_ratio_threshold and phase > risk_phase_threshold.
    Nodules without a diameter get ratio None and are never risk-flagged.
    """
    if abs(geometry.recon_interval_mm - condition.interval_mm) > 1e-9:
        raise ConfigurationError(
            f"geometry interval {geometry.recon_interval_mm} mm does not match "
            f"condition {condition.label} ({condition.interval_mm} mm)"
        )
    outcomes = []
    for nodule, detected in matched:
        zphase = compute_zphase(nodule.center_mm[2], geometry)
        if nodule.excluded:
            ratio = None
        else:
            ratio = interval_diameter_ratio(geometry.recon_interval_mm, nodule.diameter_mm)
        risk_flag = (
            ratio is not None
            and ratio >= risk_ratio_threshold
            and zphase.value > risk_phase_threshold
        )
        outcomes.append(
            NoduleOutcome(
                series_id=nodule.series_id,
                condition=condition,
                nodule=nodule,
                detected=detected,
                zphase=zphase,
                ratio=ratio,
                risk_flag=risk_flag,
            )
        )
    return outcomes
