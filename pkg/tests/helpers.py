"""Small factories shared across test modules."""

from __future__ import annotations

from zphase_audit.consensus import ConsensusNodule
from zphase_audit.geometry import VolumeGeometry, ZPhase
from zphase_audit.ingest import NoduleRoi, ReaderAnnotation
from zphase_audit.matching import Condition, NoduleOutcome


def make_geometry(
    origin: float = 0.0,
    interval: float = 5.0,
    spacing: tuple[float, float] = (0.5, 0.5),
    slices: int = 100,
) -> VolumeGeometry:
    return VolumeGeometry(origin, interval, spacing, slices)


def point_annotation(
    reader: str,
    x_px: float,
    y_px: float,
    z_mm: float,
    nodule_id: str = "n",
) -> ReaderAnnotation:
    """Single-point, single-ROI annotation at the given position."""
    return ReaderAnnotation(reader, nodule_id, (NoduleRoi(z_mm, ((x_px, y_px),)),))


def box_annotation(
    reader: str,
    center_px: tuple[float, float],
    half_px: float,
    z_mm: float,
    nodule_id: str = "n",
    z_extent_mm: float = 0.0,
) -> ReaderAnnotation:
    """Square-outline annotation, optionally spanning a z extent over 3 ROIs."""
    cx, cy = center_px
    corners = (
        (cx - half_px, cy - half_px),
        (cx + half_px, cy - half_px),
        (cx + half_px, cy + half_px),
        (cx - half_px, cy + half_px),
    )
    if z_extent_mm == 0.0:
        rois = (NoduleRoi(z_mm, corners),)
    else:
        half_z = z_extent_mm / 2.0
        rois = (
            NoduleRoi(z_mm - half_z, corners),
            NoduleRoi(z_mm, corners),
            NoduleRoi(z_mm + half_z, corners),
        )
    return ReaderAnnotation(reader, nodule_id, rois)


def make_nodule(
    z_mm: float,
    diameter_mm: float | None = 6.0,
    series_id: str = "s",
    x_mm: float = 50.0,
    y_mm: float = 50.0,
) -> ConsensusNodule:
    """Consensus nodule with a synthetic 4-reader membership."""
    members = tuple(
        point_annotation(f"reader_{i}", x_mm * 2.0, y_mm * 2.0, z_mm) for i in range(4)
    )
    return ConsensusNodule(series_id, (x_mm, y_mm, z_mm), 4, members, diameter_mm)


def make_outcome(
    detected: bool,
    phase: float,
    ratio: float | None = 0.3,
    condition: Condition = Condition.RECON_5MM,
    series_id: str = "s",
) -> NoduleOutcome:
    """Outcome with the analysis covariates set directly."""
    diameter = None if ratio is None else condition.interval_mm / ratio
    return NoduleOutcome(
        series_id=series_id,
        condition=condition,
        nodule=make_nodule(10.0, diameter, series_id),
        detected=detected,
        zphase=ZPhase(phase),
        ratio=ratio,
        risk_flag=False,
    )
