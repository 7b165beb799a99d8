"""Input parsing: reader-annotation XML, geometry manifests, detection CSVs.

Annotation files use the reading-session subset of the LIDC-IDRI XML schema:
``readingSession`` elements containing ``unblindedReadNodule`` elements, each
with one or more ``roi`` blocks carrying an ``imageZposition`` (mm) and
``edgeMap`` x/y pixel coordinates. Namespaces are ignored — elements are
matched by local name — and anything outside this subset is skipped.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterator
from xml.parsers import expat

from .errors import (
    AnnotationParseError,
    DetectionParseError,
    InvalidGeometryError,
    ManifestError,
)
from .geometry import VolumeGeometry

log = logging.getLogger(__name__)

DETECTION_COLUMNS = ("series_id", "x_mm", "y_mm", "z_mm", "confidence")
NODULE_LIST_COLUMNS = ("series_id", "z_mm", "diameter_mm")


@dataclass(frozen=True)
class NoduleRoi:
    """One annotated contour: a z position and its (x, y) edge points in pixels."""

    z_position_mm: float
    edge_points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class ReaderAnnotation:
    """One reader's marking of one nodule, possibly spanning several ROIs."""

    reader_id: str
    nodule_id: str
    rois: tuple[NoduleRoi, ...]
    characteristics: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ReadingSession:
    reader_id: str
    annotations: tuple[ReaderAnnotation, ...]


@dataclass(frozen=True)
class AnnotationDocument:
    """All reading sessions of one annotation file.

    ``skipped`` holds one diagnostic per annotation that was dropped for a
    recoverable structural problem; sessions themselves are never dropped.
    """

    series_id: str | None
    sessions: tuple[ReadingSession, ...]
    skipped: tuple[str, ...]

    @property
    def annotations(self) -> tuple[ReaderAnnotation, ...]:
        return tuple(a for session in self.sessions for a in session.annotations)


@dataclass(frozen=True)
class DetectionRecord:
    """One detector output row."""

    series_id: str
    center_mm: tuple[float, float, float]
    confidence: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center_mm", tuple(self.center_mm))
        if len(self.center_mm) != 3 or not all(math.isfinite(v) for v in self.center_mm):
            raise ValueError(f"detection center must be three finite values, got {self.center_mm}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class GeometryManifest:
    """Geometry of one series, keyed by its series id."""

    series_id: str
    geometry: VolumeGeometry
    source: str = ""


def _localname(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _iter_named(elem: ET.Element, name: str) -> Iterator[ET.Element]:
    for child in elem.iter():
        if _localname(child.tag) == name:
            yield child


def _first_text(elem: ET.Element, name: str) -> str | None:
    for child in _iter_named(elem, name):
        if child.text is not None:
            return child.text.strip()
    return None


def _error_byte_offset(data: bytes) -> int:
    """Byte offset of the first XML well-formedness error, or -1."""
    parser = expat.ParserCreate()
    try:
        parser.Parse(data, True)
    except expat.ExpatError:
        return parser.ErrorByteIndex
    return -1


def _parse_nodule(
    nodule_elem: ET.Element, reader_id: str, ordinal: int
) -> tuple[ReaderAnnotation | None, str | None]:
    """Build one annotation, or return a reason it must be skipped."""
    nodule_id = _first_text(nodule_elem, "noduleID") or f"nodule_{ordinal}"
    rois = []
    for roi_elem in _iter_named(nodule_elem, "roi"):
        z_text = _first_text(roi_elem, "imageZposition")
        if z_text is None:
            return None, f"{reader_id}/{nodule_id}: ROI without imageZposition"
        try:
            z_mm = float(z_text)
        except ValueError:
            return None, f"{reader_id}/{nodule_id}: unparseable imageZposition {z_text!r}"
        if not math.isfinite(z_mm):
            return None, f"{reader_id}/{nodule_id}: non-finite imageZposition {z_text!r}"
        points = []
        for edge in _iter_named(roi_elem, "edgeMap"):
            x_text = _first_text(edge, "xCoord")
            y_text = _first_text(edge, "yCoord")
            if x_text is None or y_text is None:
                return None, f"{reader_id}/{nodule_id}: edgeMap missing xCoord/yCoord"
            try:
                points.append((float(x_text), float(y_text)))
            except ValueError:
                return None, f"{reader_id}/{nodule_id}: unparseable edgeMap coordinate"
        if not points:
            return None, f"{reader_id}/{nodule_id}: ROI without edge points"
        rois.append(NoduleRoi(z_mm, tuple(points)))
    if not rois:
        return None, f"{reader_id}/{nodule_id}: no ROIs"
    characteristics = {}
    for char_elem in _iter_named(nodule_elem, "characteristics"):
        for child in char_elem:
            if child.text is not None and child.text.strip():
                characteristics[_localname(child.tag)] = child.text.strip()
        break
    return ReaderAnnotation(reader_id, nodule_id, tuple(rois), characteristics), None


def parse_annotations(data: bytes) -> AnnotationDocument:
    """Parse reader annotations from a reading-session XML document.

    Reading sessions are assigned reader ids ``reader_<n>`` by document
    order, so readers stay distinguishable even when the source omits or
    repeats radiologist identifiers. Annotations with a structural problem
    (ROI without a z position or edge points, unparseable numbers) are
    skipped with a diagnostic; a malformed document raises
    AnnotationParseError with the byte offset of the error.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        offset = _error_byte_offset(data)
        raise AnnotationParseError(
            f"malformed annotation XML at byte offset {offset}: {exc}"
        ) from exc

    series_id = _first_text(root, "SeriesInstanceUid")

    sessions = []
    skipped = []
    for session_index, session_elem in enumerate(_iter_named(root, "readingSession")):
        reader_id = f"reader_{session_index}"
        annotations = []
        for ordinal, nodule_elem in enumerate(_iter_named(session_elem, "unblindedReadNodule")):
            annotation, reason = _parse_nodule(nodule_elem, reader_id, ordinal)
            if annotation is None:
                skipped.append(f"{reason}; annotation skipped")
                log.warning("%s; annotation skipped", reason)
            else:
                annotations.append(annotation)
        sessions.append(ReadingSession(reader_id, tuple(annotations)))
    return AnnotationDocument(series_id, tuple(sessions), tuple(skipped))


def _require(entry: dict, index: int, key: str) -> object:
    if key not in entry:
        raise ManifestError(f"manifest entry {index}: missing field {key!r}")
    return entry[key]


def _require_number(entry: dict, index: int, key: str) -> float:
    value = _require(entry, index, key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ManifestError(f"manifest entry {index}: field {key!r} must be a number, got {value!r}")
    return float(value)


def parse_manifest(data: bytes) -> list[GeometryManifest]:
    """Parse a JSON geometry manifest: an array of per-series objects.

    Required fields per entry: series_id, z_origin_mm, recon_interval_mm,
    pixel_spacing_mm (pair), slice_count. ``source`` is optional free text.
    Schema violations raise ManifestError naming the entry and field;
    geometry violations (e.g. recon_interval_mm <= 0) raise
    InvalidGeometryError.
    """
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise ManifestError("manifest must be a JSON array of series entries")
    manifests = []
    for index, entry in enumerate(doc):
        if not isinstance(entry, dict):
            raise ManifestError(f"manifest entry {index}: expected an object")
        series_id = _require(entry, index, "series_id")
        if not isinstance(series_id, str) or not series_id:
            raise ManifestError(f"manifest entry {index}: series_id must be a non-empty string")
        z_origin = _require_number(entry, index, "z_origin_mm")
        interval = _require_number(entry, index, "recon_interval_mm")
        spacing = _require(entry, index, "pixel_spacing_mm")
        if (
            not isinstance(spacing, (list, tuple))
            or len(spacing) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in spacing)
        ):
            raise ManifestError(
                f"manifest entry {index}: pixel_spacing_mm must be a pair of numbers"
            )
        slice_count = _require(entry, index, "slice_count")
        if isinstance(slice_count, bool) or not isinstance(slice_count, int):
            raise ManifestError(f"manifest entry {index}: slice_count must be an integer")
        try:
            geometry = VolumeGeometry(
                z_origin, interval, (float(spacing[0]), float(spacing[1])), slice_count
            )
        except InvalidGeometryError as exc:
            raise InvalidGeometryError(f"series {series_id!r}: {exc}") from exc
        source = entry.get("source", "")
        if not isinstance(source, str):
            raise ManifestError(f"manifest entry {index}: source must be a string")
        manifests.append(GeometryManifest(series_id, geometry, source))
    return manifests


def serialize_manifest(manifests: list[GeometryManifest]) -> bytes:
    """Serialize manifests back to the JSON schema accepted by parse_manifest."""
    entries = []
    for m in manifests:
        entry = {
            "series_id": m.series_id,
            "z_origin_mm": m.geometry.z_origin_mm,
            "recon_interval_mm": m.geometry.recon_interval_mm,
            "pixel_spacing_mm": list(m.geometry.pixel_spacing_mm),
            "slice_count": m.geometry.slice_count,
        }
        if m.source:
            entry["source"] = m.source
        entries.append(entry)
    return (json.dumps(entries, indent=2) + "\n").encode("utf-8")


def parse_detections(data: bytes) -> list[DetectionRecord]:
    """Parse a detection CSV with header series_id,x_mm,y_mm,z_mm,confidence.

    Structural problems (wrong header, wrong column count, unparseable
    numbers) raise DetectionParseError with the offending line number. Rows
    that parse but carry an out-of-range confidence or a non-finite
    coordinate are rejected with a logged diagnostic and do not abort the
    run.
    """
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    try:
        header = next(reader)
    except StopIteration:
        raise DetectionParseError("empty detection file: missing header") from None
    if tuple(h.strip() for h in header) != DETECTION_COLUMNS:
        raise DetectionParseError(
            f"line 1: expected header {','.join(DETECTION_COLUMNS)}, got {','.join(header)}"
        )
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(DETECTION_COLUMNS):
            raise DetectionParseError(
                f"line {lineno}: expected {len(DETECTION_COLUMNS)} columns, got {len(row)}"
            )
        try:
            x_mm, y_mm, z_mm, confidence = (float(value) for value in row[1:])
        except ValueError as exc:
            raise DetectionParseError(f"line {lineno}: {exc}") from exc
        if not (0.0 <= confidence <= 1.0):
            log.warning("line %d: confidence %s outside [0, 1]; row rejected", lineno, row[4])
            continue
        if not all(math.isfinite(v) for v in (x_mm, y_mm, z_mm)):
            log.warning("line %d: non-finite coordinate; row rejected", lineno)
            continue
        records.append(DetectionRecord(row[0].strip(), (x_mm, y_mm, z_mm), confidence))
    return records


@dataclass(frozen=True)
class NoduleListEntry:
    """One row of a standalone nodule list (for phase-only analyses)."""

    series_id: str
    z_mm: float
    diameter_mm: float | None


def parse_nodule_list(data: bytes) -> list[NoduleListEntry]:
    """Parse a nodule-list CSV with header series_id,z_mm[,diameter_mm].

    diameter_mm may be omitted (column absent or empty cell); such nodules
    get phases but no interval/diameter ratio.
    """
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise DetectionParseError("empty nodule list: missing header") from None
    if header not in (NODULE_LIST_COLUMNS, NODULE_LIST_COLUMNS[:2]):
        raise DetectionParseError(
            f"line 1: expected header {','.join(NODULE_LIST_COLUMNS)} "
            f"(diameter_mm optional), got {','.join(header)}"
        )
    entries = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DetectionParseError(
                f"line {lineno}: expected {len(header)} columns, got {len(row)}"
            )
        try:
            z_mm = float(row[1])
            diameter = None
            if len(row) > 2 and row[2].strip():
                diameter = float(row[2])
        except ValueError as exc:
            raise DetectionParseError(f"line {lineno}: {exc}") from exc
        if not math.isfinite(z_mm):
            raise DetectionParseError(f"line {lineno}: z_mm must be finite")
        entries.append(NoduleListEntry(row[0].strip(), z_mm, diameter))
    return entries
