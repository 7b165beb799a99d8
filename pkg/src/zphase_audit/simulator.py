"""Partial-volume detection model for what-if studies on synthetic nodules.

A nodule is a uniform sphere; a reconstructed plane integrates the sphere's
cross-section area along z against a slice sensitivity profile (SSP). The
detection proxy scores a nodule by its best single plane's captured signal
relative to the signal the same nodule would produce centered exactly on a
plane, so scores are comparable across nodule sizes: 1.0 means "as good as
perfectly aligned", and a nodule is detected when the score reaches the
detection threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .stats import (
    DEFAULT_CI_LEVEL,
    DEFAULT_RESAMPLES,
    NS_SWEEP_CI,
    NS_SWEEP_NOISE,
    SensitivityCell,
    proportion_ci,
    subseed,
)

SSP_RECT = "rect"
SSP_TRIANGULAR = "triangular"
SSP_GAUSSIAN = "gaussian"
SSP_SHAPES = (SSP_RECT, SSP_TRIANGULAR, SSP_GAUSSIAN)

DEFAULT_QUADRATURE_STEP_MM = 0.01


@dataclass(frozen=True)
class SyntheticNodule:
    """Uniform sphere: diameter, z offset of its center, and intensity (arbitrary units)."""

    diameter_mm: float
    true_z_offset_mm: float = 0.0
    intensity: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.diameter_mm) and self.diameter_mm > 0):
            raise ValueError(f"diameter_mm must be > 0, got {self.diameter_mm}")
        if not math.isfinite(self.true_z_offset_mm):
            raise ValueError(f"true_z_offset_mm must be finite, got {self.true_z_offset_mm}")
        if not (math.isfinite(self.intensity) and self.intensity > 0):
            raise ValueError(f"intensity must be > 0, got {self.intensity}")


@dataclass(frozen=True)
class SliceModel:
    """Reconstruction grid plus the SSP of each reconstructed plane.

    ssp_width_mm is the profile's full width (FWHM for the gaussian shape);
    None means it equals the reconstruction interval, the usual coupling for
    contiguous reconstructions.
    """

    recon_interval_mm: float
    ssp_width_mm: float | None = None
    ssp_shape: str = SSP_RECT

    def __post_init__(self) -> None:
        if not (math.isfinite(self.recon_interval_mm) and self.recon_interval_mm > 0):
            raise ValueError(f"recon_interval_mm must be > 0, got {self.recon_interval_mm}")
        if self.ssp_width_mm is not None and not (
            math.isfinite(self.ssp_width_mm) and self.ssp_width_mm > 0
        ):
            raise ValueError(f"ssp_width_mm must be > 0, got {self.ssp_width_mm}")
        if self.ssp_shape not in SSP_SHAPES:
            raise ValueError(f"ssp_shape must be one of {SSP_SHAPES}, got {self.ssp_shape!r}")

    @property
    def width_mm(self) -> float:
        return self.recon_interval_mm if self.ssp_width_mm is None else self.ssp_width_mm


def _profile(nodule: SyntheticNodule, z: np.ndarray) -> np.ndarray:
    """Cross-section signal density at height z: intensity * pi * max(0, R^2 - (z-c)^2)."""
    radius = nodule.diameter_mm / 2.0
    return nodule.intensity * math.pi * np.maximum(
        0.0, radius * radius - np.square(z - nodule.true_z_offset_mm)
    )


def _ssp_weight(model: SliceModel, u: np.ndarray) -> np.ndarray:
    """SSP value at signed distance u from the plane, normalized to 1 on-plane."""
    half = model.width_mm / 2.0
    if model.ssp_shape == SSP_RECT:
        return (np.abs(u) <= half).astype(float)
    if model.ssp_shape == SSP_TRIANGULAR:
        return np.maximum(0.0, 1.0 - np.abs(u) / half)
    sigma = model.width_mm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return np.exp(-np.square(u) / (2.0 * sigma * sigma))


def _ssp_kinks(model: SliceModel, plane_z_mm: float) -> tuple[float, ...]:
    """z positions where the SSP is not smooth; quadrature must break there."""
    half = model.width_mm / 2.0
    if model.ssp_shape == SSP_RECT:
        return (plane_z_mm - half, plane_z_mm + half)
    if model.ssp_shape == SSP_TRIANGULAR:
        return (plane_z_mm - half, plane_z_mm, plane_z_mm + half)
    return ()


def plane_signal(
    nodule: SyntheticNodule,
    slice_model: SliceModel,
    plane_z_mm: float,
    step_mm: float = DEFAULT_QUADRATURE_STEP_MM,
) -> float:
    """Signal the plane at plane_z_mm collects from the nodule.

    Trapezoid quadrature of profile x SSP over the sphere's support, split
    at the SSP's kinks so hard profile edges never straddle a panel.
    """
    if not (math.isfinite(step_mm) and step_mm > 0):
        raise ValueError(f"step_mm must be > 0, got {step_mm}")
    radius = nodule.diameter_mm / 2.0
    lo = nodule.true_z_offset_mm - radius
    hi = nodule.true_z_offset_mm + radius
    breaks = sorted({lo, hi, *(k for k in _ssp_kinks(slice_model, plane_z_mm) if lo < k < hi)})
    total = 0.0
    for a, b in zip(breaks, breaks[1:]):
        samples = max(2, int(math.ceil((b - a) / step_mm)) + 1)
        z = np.linspace(a, b, samples)
        if slice_model.ssp_shape == SSP_RECT:
            # The weight is constant on each panel interior (panels are split
            # at the rect edges); sampling it at a shared endpoint would leak
            # half a sample of signal across the hard edge.
            if abs((a + b) / 2.0 - plane_z_mm) > slice_model.width_mm / 2.0:
                continue
            integrand = _profile(nodule, z)
        else:
            integrand = _profile(nodule, z) * _ssp_weight(slice_model, z - plane_z_mm)
        total += float(np.trapezoid(integrand, z))
    return total


def reference_signal(
    nodule: SyntheticNodule,
    slice_model: SliceModel,
    step_mm: float = DEFAULT_QUADRATURE_STEP_MM,
) -> float:
    """Best-case signal: the same nodule centered exactly on a plane."""
    centered = replace(nodule, true_z_offset_mm=0.0)
    return plane_signal(centered, slice_model, 0.0, step_mm)


def peak_plane_fraction(
    nodule: SyntheticNodule,
    slice_model: SliceModel,
    step_mm: float = DEFAULT_QUADRATURE_STEP_MM,
) -> float:
    """Best single-plane signal across the grid, as a fraction of the
    on-plane reference signal for the same nodule."""
    interval = slice_model.recon_interval_mm
    center = nodule.true_z_offset_mm
    reach = nodule.diameter_mm / 2.0 + slice_model.width_mm
    first = int(math.floor((center - reach) / interval))
    last = int(math.ceil((center + reach) / interval))
    best = max(
        plane_signal(nodule, slice_model, k * interval, step_mm) for k in range(first, last + 1)
    )
    return best / reference_signal(nodule, slice_model, step_mm)


def simulate_detection(
    nodule: SyntheticNodule,
    slice_model: SliceModel,
    threshold: float,
    step_mm: float = DEFAULT_QUADRATURE_STEP_MM,
) -> bool:
    """Detected when the best plane captures at least ``threshold`` of the
    on-plane reference signal."""
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return peak_plane_fraction(nodule, slice_model, step_mm) >= threshold


def phase_transition(
    slice_model: SliceModel,
    ratio: float,
    threshold: float,
    *,
    step_mm: float = DEFAULT_QUADRATURE_STEP_MM,
    tol: float = 1e-4,
) -> float | None:
    """Phase where the noiseless plane-fraction score crosses the threshold.

    Bisection over [0, 0.5] for a nodule with D = interval / ratio; None
    when the score does not cross the threshold on that range.
    """

    def margin(phase: float) -> float:
        nodule = SyntheticNodule(
            slice_model.recon_interval_mm / ratio,
            true_z_offset_mm=phase * slice_model.recon_interval_mm,
        )
        return peak_plane_fraction(nodule, slice_model, step_mm) - threshold

    lo, hi = 0.0, 0.5
    m_lo, m_hi = margin(lo), margin(hi)
    if m_lo == 0.0:
        return lo
    if m_hi == 0.0:
        return hi
    if (m_lo > 0) == (m_hi > 0):
        return None
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        m_mid = margin(mid)
        if m_mid == 0.0:
            return mid
        if (m_mid > 0) == (m_lo > 0):
            lo, m_lo = mid, m_mid
        else:
            hi = mid
    return (lo + hi) / 2.0


@dataclass(frozen=True)
class SweepCell:
    """One (ratio, phase) grid cell: the noiseless score plus noisy-detection counts."""

    ratio: float
    phase: float
    plane_fraction: float
    cell: SensitivityCell


def sweep(
    phases: Sequence[float],
    ratios: Sequence[float],
    slice_model: SliceModel,
    threshold: float,
    n_per_cell: int,
    noise_sd: float,
    seed: int,
    *,
    step_mm: float = DEFAULT_QUADRATURE_STEP_MM,
    resamples: int = DEFAULT_RESAMPLES,
    ci_level: float = DEFAULT_CI_LEVEL,
) -> list[SweepCell]:
    """Detection sensitivity over a (ratio, phase) grid under score noise.

    Each cell draws n_per_cell additive gaussian perturbations of the
    noiseless plane-fraction score and counts how many stay at or above the
    threshold. Sub-seeds derive from (seed, ratio index, phase index), so
    the grid layout — not its traversal — determines every cell's draw.
    """
    if not phases or not ratios:
        raise ValueError("phase and ratio grids must be non-empty")
    for phase in phases:
        if not (0.0 <= phase <= 0.5):
            raise ValueError(f"phases must lie in [0, 0.5], got {phase}")
    for ratio in ratios:
        if not (math.isfinite(ratio) and ratio > 0):
            raise ValueError(f"ratios must be > 0, got {ratio}")
    if n_per_cell < 1:
        raise ValueError(f"n_per_cell must be >= 1, got {n_per_cell}")
    if noise_sd < 0 or not math.isfinite(noise_sd):
        raise ValueError(f"noise_sd must be >= 0, got {noise_sd}")
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")

    cells = []
    for i, ratio in enumerate(ratios):
        diameter = slice_model.recon_interval_mm / ratio
        for j, phase in enumerate(phases):
            nodule = SyntheticNodule(
                diameter, true_z_offset_mm=phase * slice_model.recon_interval_mm
            )
            fraction = peak_plane_fraction(nodule, slice_model, step_mm)
            rng = np.random.default_rng(subseed(seed, NS_SWEEP_NOISE, i, j))
            if noise_sd > 0:
                scores = fraction + rng.normal(0.0, noise_sd, n_per_cell)
            else:
                scores = np.full(n_per_cell, fraction)
            flags = scores >= threshold
            detected = int(flags.sum())
            low, high = proportion_ci(
                flags, resamples, ci_level, seed=subseed(seed, NS_SWEEP_CI, i, j)
            )
            cells.append(
                SweepCell(
                    ratio=ratio,
                    phase=phase,
                    plane_fraction=fraction,
                    cell=SensitivityCell(
                        label=f"{ratio:g}:{phase:.2f}",
                        detected=detected,
                        total=n_per_cell,
                        sensitivity=detected / n_per_cell,
                        ci_low=low,
                        ci_high=high,
                    ),
                )
            )
    return cells
