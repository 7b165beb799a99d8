"""Reconstruction-grid geometry.

Core quantities: the folded z-phase of a position within the reconstruction
cycle, equal-width phase bins over [0, 0.5], and the interval-to-diameter
ratio d/D that indexes how coarsely a nodule is sampled along z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ExcludedNoduleError, InvalidGeometryError

PHASE_MAX = 0.5
DEFAULT_PHASE_BINS = 5

# Slack used when comparing a phase against a bin edge, so values that are a
# few ulp below an edge (from the division in compute_zphase) land in the bin
# the exact arithmetic would put them in.
EDGE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class VolumeGeometry:
    """Per-series reconstruction geometry.

    z_origin_mm:       z coordinate of the first reconstructed plane
    recon_interval_mm: spacing between reconstructed planes, > 0
    pixel_spacing_mm:  in-plane (x, y) spacing in mm per pixel, each > 0
    slice_count:       number of reconstructed planes, >= 1
    """

    z_origin_mm: float
    recon_interval_mm: float
    pixel_spacing_mm: tuple[float, float]
    slice_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixel_spacing_mm", tuple(self.pixel_spacing_mm))
        if not math.isfinite(self.z_origin_mm):
            raise InvalidGeometryError(f"z_origin_mm must be finite, got {self.z_origin_mm}")
        if not (math.isfinite(self.recon_interval_mm) and self.recon_interval_mm > 0):
            raise InvalidGeometryError(
                f"recon_interval_mm must be > 0, got {self.recon_interval_mm}"
            )
        if len(self.pixel_spacing_mm) != 2 or not all(
            math.isfinite(s) and s > 0 for s in self.pixel_spacing_mm
        ):
            raise InvalidGeometryError(
                f"pixel_spacing_mm must be two positive values, got {self.pixel_spacing_mm}"
            )
        if self.slice_count < 1:
            raise InvalidGeometryError(f"slice_count must be >= 1, got {self.slice_count}")


@dataclass(frozen=True)
class ZPhase:
    """Folded fractional position within the reconstruction cycle.

    0 means centered on a reconstructed plane, 0.5 exactly between two
    adjacent planes. Always in [0, 0.5].
    """

    value: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.value) and 0.0 <= self.value <= PHASE_MAX):
            raise ValueError(f"phase must lie in [0, {PHASE_MAX}], got {self.value}")


@dataclass(frozen=True)
class PhaseBin:
    """One bin of the phase axis: [lower, upper), closed at {PHASE_MAX} for the last bin."""

    index: int
    lower: float
    upper: float

    @property
    def center(self) -> float:
        return (self.lower + self.upper) / 2.0


def phase_bins(count: int = DEFAULT_PHASE_BINS) -> tuple[PhaseBin, ...]:
    """Equal-width bins partitioning [0, 0.5]."""
    if count < 1:
        raise ValueError(f"bin count must be >= 1, got {count}")
    width = PHASE_MAX / count
    return tuple(PhaseBin(i, i * width, (i + 1) * width) for i in range(count))


def compute_zphase(z_nodule_mm: float, geometry: VolumeGeometry) -> ZPhase:
    """Fold a z position onto [0, 0.5] of the reconstruction cycle.

    The fractional offset f = ((|z - z_origin|) mod d) / d is folded as
    min(f, 1 - f), so positions symmetric about a plane get the same phase.
    """
    if not math.isfinite(z_nodule_mm):
        raise InvalidGeometryError(f"nodule z must be finite, got {z_nodule_mm}")
    d = geometry.recon_interval_mm
    offset = abs(z_nodule_mm - geometry.z_origin_mm)
    frac = (offset - d * math.floor(offset / d)) / d
    # Rounding in the division can push frac a few ulp outside [0, 1] when
    # the offset sits on an exact multiple of d; clamp before folding.
    frac = min(1.0, max(0.0, frac))
    return ZPhase(min(frac, 1.0 - frac))


def bin_phase(phase: ZPhase, bin_count: int = DEFAULT_PHASE_BINS) -> PhaseBin:
    """Assign a folded phase to its bin.

    Bins are half-open [lower, upper) except the last, which is closed so a
    phase of exactly 0.5 lands in the final bin. A phase within
    EDGE_TOLERANCE below an edge is treated as on the edge.
    """
    bins = phase_bins(bin_count)
    width = PHASE_MAX / bin_count
    index = int(math.floor((phase.value + EDGE_TOLERANCE) / width))
    return bins[min(index, bin_count - 1)]


def interval_diameter_ratio(recon_interval_mm: float, diameter_mm: float) -> float:
    """d/D: reconstruction interval over estimated nodule diameter."""
    if not (math.isfinite(recon_interval_mm) and recon_interval_mm > 0):
        raise InvalidGeometryError(
            f"recon_interval_mm must be > 0, got {recon_interval_mm}"
        )
    if diameter_mm is None or not (math.isfinite(diameter_mm) and diameter_mm > 0):
        raise ExcludedNoduleError(
            f"diameter must be > 0 to form an interval/diameter ratio, got {diameter_mm}"
        )
    return recon_interval_mm / diameter_mm
