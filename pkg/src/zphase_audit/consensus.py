"""Multi-reader consensus: cluster annotations into nodules, estimate size.

Clustering is greedy agglomerative with a deterministic seed order:
annotation centers are sorted by (z, x, y, reader_id, nodule_id); each
annotation joins the nearest existing cluster whose running centroid lies
within the clustering radius and which does not already contain an
annotation from the same reader, otherwise it starts a new cluster.
Clusters with fewer readers than the consensus threshold are discarded.
The sort makes the result independent of input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import MalformedAnnotationError
from .geometry import VolumeGeometry
from .ingest import ReaderAnnotation

DEFAULT_CLUSTER_RADIUS_MM = 15.0
DEFAULT_MIN_READERS = 4

Z_CENTER_CENTROID = "centroid"
Z_CENTER_MID_EXTENT = "mid_extent"
Z_CENTER_MODES = (Z_CENTER_CENTROID, Z_CENTER_MID_EXTENT)


@dataclass(frozen=True)
class ConsensusNodule:
    """One consensus nodule: agreeing annotations from >= min_readers readers.

    ``diameter_mm`` is None when no member yields a positive size estimate
    (e.g. all members are single-point marks); such nodules stay in
    phase-based analyses but are excluded wherever a diameter is required.
    """

    series_id: str
    center_mm: tuple[float, float, float]
    reader_count: int
    members: tuple[ReaderAnnotation, ...]
    diameter_mm: float | None

    @property
    def excluded(self) -> bool:
        return self.diameter_mm is None


def annotation_center(
    annotation: ReaderAnnotation,
    geometry: VolumeGeometry,
    z_center: str = Z_CENTER_CENTROID,
) -> tuple[float, float, float]:
    """Annotation center in mm.

    x/y: mean of all edge points across ROIs, scaled by pixel spacing.
    z: mean of the ROI z positions (``centroid``, the default) or the
    midpoint of the z extent (``mid_extent``).
    """
    if not annotation.rois:
        raise MalformedAnnotationError(
            f"annotation {annotation.nodule_id!r} from {annotation.reader_id!r} has no ROIs"
        )
    xs = [p[0] for roi in annotation.rois for p in roi.edge_points]
    ys = [p[1] for roi in annotation.rois for p in roi.edge_points]
    if not xs:
        raise MalformedAnnotationError(
            f"annotation {annotation.nodule_id!r} from {annotation.reader_id!r} has no edge points"
        )
    spacing_x, spacing_y = geometry.pixel_spacing_mm
    x_mm = spacing_x * (sum(xs) / len(xs))
    y_mm = spacing_y * (sum(ys) / len(ys))
    z_values = [roi.z_position_mm for roi in annotation.rois]
    if z_center == Z_CENTER_CENTROID:
        z_mm = sum(z_values) / len(z_values)
    elif z_center == Z_CENTER_MID_EXTENT:
        z_mm = (min(z_values) + max(z_values)) / 2.0
    else:
        raise ValueError(f"unknown z_center mode {z_center!r}; expected one of {Z_CENTER_MODES}")
    return (x_mm, y_mm, z_mm)


def _member_diameter(annotation: ReaderAnnotation, geometry: VolumeGeometry) -> float:
    """Size estimate for one member: max of xy bounding-box sides (mm) and z extent."""
    xs = [p[0] for roi in annotation.rois for p in roi.edge_points]
    ys = [p[1] for roi in annotation.rois for p in roi.edge_points]
    z_values = [roi.z_position_mm for roi in annotation.rois]
    spacing_x, spacing_y = geometry.pixel_spacing_mm
    extent_x = (max(xs) - min(xs)) * spacing_x
    extent_y = (max(ys) - min(ys)) * spacing_y
    extent_z = max(z_values) - min(z_values)
    return max(extent_x, extent_y, extent_z)


def _mean_member_diameter(
    members: tuple[ReaderAnnotation, ...], geometry: VolumeGeometry
) -> float:
    return sum(_member_diameter(m, geometry) for m in members) / len(members)


def estimate_diameter(nodule: ConsensusNodule, geometry: VolumeGeometry) -> float:
    """Mean over members of each member's size estimate, in mm.

    May be 0 for degenerate (single-point) markings; callers treat a
    non-positive value as "no usable diameter".
    """
    if not nodule.members:
        raise MalformedAnnotationError("consensus nodule has no members")
    return _mean_member_diameter(nodule.members, geometry)


@dataclass
class _Cluster:
    annotations: list[ReaderAnnotation]
    centers: list[tuple[float, float, float]]
    readers: set[str]
    centroid: tuple[float, float, float]

    def add(self, annotation: ReaderAnnotation, center: tuple[float, float, float]) -> None:
        self.annotations.append(annotation)
        self.centers.append(center)
        self.readers.add(annotation.reader_id)
        n = len(self.centers)
        self.centroid = (
            sum(c[0] for c in self.centers) / n,
            sum(c[1] for c in self.centers) / n,
            sum(c[2] for c in self.centers) / n,
        )


def cluster_annotations_with_discards(
    annotations: list[ReaderAnnotation],
    geometry: VolumeGeometry,
    radius_mm: float = DEFAULT_CLUSTER_RADIUS_MM,
    min_readers: int = DEFAULT_MIN_READERS,
    *,
    series_id: str = "",
    z_center: str = Z_CENTER_CENTROID,
) -> tuple[list[ConsensusNodule], list[tuple[ReaderAnnotation, ...]]]:
    """Cluster annotations; also return the sub-threshold clusters.

    Returns (consensus nodules, discarded clusters). Every input annotation
    appears in exactly one of the two, so callers can account for coverage.
    """
    if radius_mm <= 0 or not math.isfinite(radius_mm):
        raise ValueError(f"radius_mm must be > 0, got {radius_mm}")
    if min_readers < 1:
        raise ValueError(f"min_readers must be >= 1, got {min_readers}")

    entries = [(annotation_center(a, geometry, z_center), a) for a in annotations]
    entries.sort(key=lambda e: (e[0][2], e[0][0], e[0][1], e[1].reader_id, e[1].nodule_id))

    clusters: list[_Cluster] = []
    for center, annotation in entries:
        best = None
        best_distance = None
        for cluster in clusters:
            if annotation.reader_id in cluster.readers:
                continue
            distance = math.dist(center, cluster.centroid)
            if distance <= radius_mm and (best is None or distance < best_distance):
                best = cluster
                best_distance = distance
        if best is None:
            clusters.append(_Cluster([annotation], [center], {annotation.reader_id}, center))
        else:
            best.add(annotation, center)

    kept = []
    discarded = []
    for cluster in clusters:
        if len(cluster.readers) >= min_readers:
            members = tuple(cluster.annotations)
            diameter = _mean_member_diameter(members, geometry)
            kept.append(
                ConsensusNodule(
                    series_id=series_id,
                    center_mm=cluster.centroid,
                    reader_count=len(cluster.readers),
                    members=members,
                    diameter_mm=diameter if diameter > 0 else None,
                )
            )
        else:
            discarded.append(tuple(cluster.annotations))
    return kept, discarded


def cluster_annotations(
    annotations: list[ReaderAnnotation],
    geometry: VolumeGeometry,
    radius_mm: float = DEFAULT_CLUSTER_RADIUS_MM,
    min_readers: int = DEFAULT_MIN_READERS,
    *,
    series_id: str = "",
    z_center: str = Z_CENTER_CENTROID,
) -> list[ConsensusNodule]:
    """Cluster annotations into consensus nodules (see module docstring)."""
    kept, _ = cluster_annotations_with_discards(
        annotations,
        geometry,
        radius_mm,
        min_readers,
        series_id=series_id,
        z_center=z_center,
    )
    return kept
