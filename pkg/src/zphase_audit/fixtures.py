"""Bundled synthetic dataset generator.

Emits annotation XML, a geometry manifest, and per-condition detection CSVs
laid out so that a default audit reproduces the toolkit's reference
sensitivity counts exactly: per-condition totals, the five phase-bin cells
at the 5 mm condition, and the pooled interval/diameter strata. Generation
is pure arithmetic — no RNG — so the emitted bytes are identical on every
run, which makes the dataset usable as an end-to-end regression fixture.

Layout: 17 series x 24 nodules. Each series is a board of 8 z slots
(40 mm apart) x 3 in-plane sites (>= 100 mm apart), so annotation clusters
can never bleed into each other. A nodule's z offset from the volume origin
selects its phase bin at the 5 mm condition; reader jitter is mean-zero by
construction, which keeps consensus centers on the planned coordinates.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

from .matching import Condition
from .stats import RatioStratum

XML_NAMESPACE = "http://www.nih.gov"

PIXEL_SPACING_MM = 0.5
NATIVE_INTERVAL_MM = 1.0
SLICE_COUNT = 340
SERIES_COUNT = 17
Z_SLOTS = 8
Z_SLOT_SPACING_MM = 40.0
Z_SLOT_BASE_MM = 25.0

# Offsets from the volume origin, modulo 5 mm, put each bin's nodules at a
# folded phase of 0.05 / 0.15 / 0.25 / 0.33 / 0.45 under the 5 mm condition:
# safely interior to the five bins and clear of the 0.35 risk boundary
# except for the last bin, which is deliberately beyond it.
_BIN_OFFSETS_MM = (0.25, 0.75, 1.25, 1.65, 2.25)

# In-plane sites in pixels (x, y); 0.5 mm spacing puts them >= 100 mm apart.
_XY_SITES_PX = ((100, 120), (256, 256), (410, 390))

# Per-reader perturbations; each sums to zero across the four readers, so
# the consensus centroid stays on the planned coordinates.
_READER_JITTER_Z_MM = (-0.1, -0.05, 0.05, 0.1)
_READER_JITTER_XY_PX = ((-2, -1), (-1, 2), (1, -2), (2, 1))

_DETECTED_CONFIDENCE = 0.88
_SUBTHRESHOLD_CONFIDENCE = 0.31
_DECOY_CONFIDENCE = 0.95
_SUBTHRESHOLD_ROWS_PER_CONDITION = 5


@dataclass(frozen=True)
class _NoduleClass:
    name: str
    diameter_mm: float | None  # None: single-point marks, excluded from ratio analyses
    count: int
    detected: dict[Condition, int]


_CLASSES = (
    _NoduleClass(
        "large", 12.0, 146,
        {Condition.BASELINE_1MM: 140, Condition.RECON_3MM: 137, Condition.RECON_5MM: 133},
    ),
    _NoduleClass(
        "medium", 8.0, 33,
        {Condition.BASELINE_1MM: 31, Condition.RECON_3MM: 30, Condition.RECON_5MM: 26},
    ),
    _NoduleClass(
        "upper_critical", 5.5, 40,
        {Condition.BASELINE_1MM: 37, Condition.RECON_3MM: 33, Condition.RECON_5MM: 29},
    ),
    _NoduleClass(
        "small", 4.0, 64,
        {Condition.BASELINE_1MM: 55, Condition.RECON_3MM: 50, Condition.RECON_5MM: 38},
    ),
    _NoduleClass(
        "tiny", 2.5, 25,
        {Condition.BASELINE_1MM: 22, Condition.RECON_3MM: 17, Condition.RECON_5MM: 15},
    ),
    _NoduleClass(
        "degenerate", None, 100,
        {Condition.BASELINE_1MM: 61, Condition.RECON_3MM: 69, Condition.RECON_5MM: 51},
    ),
)

# The audit results the generated dataset reproduces exactly.
REFERENCE_CONDITION_COUNTS: dict[Condition, tuple[int, int]] = {
    Condition.BASELINE_1MM: (346, 408),
    Condition.RECON_3MM: (336, 408),
    Condition.RECON_5MM: (292, 408),
}
# (detected, total) per phase bin at the 5 mm condition, bins in order.
REFERENCE_PHASE_COUNTS_5MM: tuple[tuple[int, int], ...] = (
    (58, 88),
    (71, 92),
    (58, 73),
    (66, 92),
    (39, 63),
)
# (detected, total) per interval/diameter stratum, pooled over conditions.
REFERENCE_STRATUM_COUNTS: dict[RatioStratum, tuple[int, int]] = {
    RatioStratum.WELL_SAMPLED: (585, 633),
    RatioStratum.CRITICAL: (138, 177),
    RatioStratum.UNDERSAMPLED: (70, 114),
}


@dataclass(frozen=True)
class _PlannedNodule:
    series: int
    slot: int  # 0..23 within the series: z slot * 3 + site
    nodule_class: _NoduleClass
    bin_index: int
    detected: dict[Condition, bool]

    @property
    def z_slot(self) -> int:
        return self.slot // len(_XY_SITES_PX)

    @property
    def site_px(self) -> tuple[int, int]:
        return _XY_SITES_PX[self.slot % len(_XY_SITES_PX)]

    def z_nominal_mm(self, z_origin_mm: float) -> float:
        return (
            z_origin_mm
            + Z_SLOT_BASE_MM
            + Z_SLOT_SPACING_MM * self.z_slot
            + _BIN_OFFSETS_MM[self.bin_index]
        )


def _series_origin_mm(series: int) -> float:
    return -250.0 - 10.0 * series


def _plan_nodules() -> list[_PlannedNodule]:
    """Assign every nodule its class, detection flags, phase bin, and slot."""
    flagged = []
    for cls in _CLASSES:
        for k in range(cls.count):
            flagged.append((cls, {c: k < cls.detected[c] for c in Condition}))

    hits = [n for n in flagged if n[1][Condition.RECON_5MM]]
    misses = [n for n in flagged if not n[1][Condition.RECON_5MM]]
    binned = []
    hit_cursor = miss_cursor = 0
    for bin_index, (detected, total) in enumerate(REFERENCE_PHASE_COUNTS_5MM):
        for _ in range(detected):
            cls, flags = hits[hit_cursor]
            hit_cursor += 1
            binned.append((cls, flags, bin_index))
        for _ in range(total - detected):
            cls, flags = misses[miss_cursor]
            miss_cursor += 1
            binned.append((cls, flags, bin_index))
    if hit_cursor != len(hits) or miss_cursor != len(misses):
        raise AssertionError("phase-bin quotas do not cover the nodule population")

    slots_per_series = Z_SLOTS * len(_XY_SITES_PX)
    return [
        _PlannedNodule(i // slots_per_series, i % slots_per_series, cls, bin_index, flags)
        for i, (cls, flags, bin_index) in enumerate(binned)
    ]


def _bbox_halves(diameter_mm: float) -> tuple[int, int]:
    """Pixel extents left/right of the site so the bounding box spans D exactly."""
    extent_px = round(diameter_mm / PIXEL_SPACING_MM)
    lo = extent_px // 2
    return lo, extent_px - lo


def _roi_element(parent: ET.Element, z_mm: float, points: list[tuple[int, int]]) -> None:
    roi = ET.SubElement(parent, _q("roi"))
    ET.SubElement(roi, _q("imageZposition")).text = repr(z_mm)
    ET.SubElement(roi, _q("inclusion")).text = "TRUE"
    for x, y in points:
        edge = ET.SubElement(roi, _q("edgeMap"))
        ET.SubElement(edge, _q("xCoord")).text = str(x)
        ET.SubElement(edge, _q("yCoord")).text = str(y)


def _q(name: str) -> str:
    return f"{{{XML_NAMESPACE}}}{name}"


def _series_xml(series: int, nodules: list[_PlannedNodule]) -> bytes:
    origin = _series_origin_mm(series)
    root = ET.Element(_q("LidcReadMessage"))
    header = ET.SubElement(root, _q("ResponseHeader"))
    ET.SubElement(header, _q("SeriesInstanceUid")).text = _series_id(series)
    for reader in range(len(_READER_JITTER_Z_MM)):
        session = ET.SubElement(root, _q("readingSession"))
        ET.SubElement(session, _q("servicingRadiologistID")).text = f"rad-{reader:02d}"
        jitter_z = _READER_JITTER_Z_MM[reader]
        jitter_x, jitter_y = _READER_JITTER_XY_PX[reader]
        for nodule in nodules:
            elem = ET.SubElement(session, _q("unblindedReadNodule"))
            ET.SubElement(elem, _q("noduleID")).text = f"s{series:02d}-n{nodule.slot:02d}"
            z_center = nodule.z_nominal_mm(origin) + jitter_z
            cx, cy = nodule.site_px
            cx += jitter_x
            cy += jitter_y
            if nodule.nodule_class.diameter_mm is None:
                _roi_element(elem, z_center, [(cx, cy)])
                continue
            lo, hi = _bbox_halves(nodule.nodule_class.diameter_mm)
            corners = [
                (cx - lo, cy - lo),
                (cx + hi, cy - lo),
                (cx + hi, cy + hi),
                (cx - lo, cy + hi),
            ]
            # Large nodules span three contours; the z extent stays below the
            # in-plane extent so the bounding box still sets the diameter.
            if nodule.nodule_class.name == "large":
                for dz in (-1.0, 0.0, 1.0):
                    _roi_element(elem, z_center + dz, corners)
            else:
                _roi_element(elem, z_center, corners)
    return ET.tostring(
        root, encoding="utf-8", xml_declaration=True, default_namespace=XML_NAMESPACE
    )


def _series_id(series: int) -> str:
    return f"series-{series:02d}"


def _manifest_json(series_nodules: dict[int, list[_PlannedNodule]]) -> bytes:
    from .ingest import GeometryManifest, serialize_manifest
    from .geometry import VolumeGeometry

    manifests = [
        GeometryManifest(
            _series_id(series),
            VolumeGeometry(
                z_origin_mm=_series_origin_mm(series),
                recon_interval_mm=NATIVE_INTERVAL_MM,
                pixel_spacing_mm=(PIXEL_SPACING_MM, PIXEL_SPACING_MM),
                slice_count=SLICE_COUNT,
            ),
            source="synthetic reference dataset",
        )
        for series in sorted(series_nodules)
    ]
    return serialize_manifest(manifests)


def _detection_csv(condition: Condition, series_nodules: dict[int, list[_PlannedNodule]]) -> str:
    lines = ["series_id,x_mm,y_mm,z_mm,confidence"]
    subthreshold_left = _SUBTHRESHOLD_ROWS_PER_CONDITION
    for series in sorted(series_nodules):
        origin = _series_origin_mm(series)
        # One confident detection per series far from every nodule: matching
        # is many-to-many, so an unmatched extra must change nothing.
        lines.append(
            f"{_series_id(series)},20.0,20.0,{repr(origin + 17.5)},{_DECOY_CONFIDENCE}"
        )
        for nodule in series_nodules[series]:
            x_mm = nodule.site_px[0] * PIXEL_SPACING_MM
            y_mm = nodule.site_px[1] * PIXEL_SPACING_MM
            z_mm = nodule.z_nominal_mm(origin)
            if nodule.detected[condition]:
                lines.append(
                    f"{_series_id(series)},{repr(x_mm)},{repr(y_mm)},{repr(z_mm)},"
                    f"{_DETECTED_CONFIDENCE}"
                )
            elif subthreshold_left > 0:
                subthreshold_left -= 1
                lines.append(
                    f"{_series_id(series)},{repr(x_mm)},{repr(y_mm)},{repr(z_mm)},"
                    f"{_SUBTHRESHOLD_CONFIDENCE}"
                )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FixturePaths:
    """Where write_reference_fixture put each input."""

    root: Path
    annotations_dir: Path
    manifest_path: Path
    detection_paths: dict[Condition, Path]


def write_reference_fixture(out_dir: Path) -> FixturePaths:
    """Write the full synthetic dataset under out_dir and return its paths."""
    out_dir = Path(out_dir)
    annotations_dir = out_dir / "annotations"
    annotations_dir.mkdir(parents=True, exist_ok=True)

    nodules = _plan_nodules()
    series_nodules: dict[int, list[_PlannedNodule]] = {}
    for nodule in nodules:
        series_nodules.setdefault(nodule.series, []).append(nodule)

    for series, members in sorted(series_nodules.items()):
        path = annotations_dir / f"{_series_id(series)}.xml"
        path.write_bytes(_series_xml(series, members))

    manifest_path = out_dir / "manifest.json"
    manifest_path.write_bytes(_manifest_json(series_nodules))

    detection_paths = {}
    for condition in Condition:
        path = out_dir / f"detections_{condition.label}.csv"
        path.write_text(_detection_csv(condition, series_nodules), encoding="utf-8")
        detection_paths[condition] = path

    return FixturePaths(out_dir, annotations_dir, manifest_path, detection_paths)
