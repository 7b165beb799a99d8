"""Annotation XML, manifest JSON, and detection CSV parsing."""

import logging

import pytest

from zphase_audit.errors import (
    AnnotationParseError,
    DetectionParseError,
    InvalidGeometryError,
    ManifestError,
)
from zphase_audit.ingest import (
    DetectionRecord,
    parse_annotations,
    parse_detections,
    parse_manifest,
    parse_nodule_list,
    serialize_manifest,
)


def session_xml(nodules: str) -> str:
    return f"<readingSession><servicingRadiologistID>r</servicingRadiologistID>{nodules}</readingSession>"


def nodule_xml(nodule_id: str, rois: str) -> str:
    return f"<unblindedReadNodule><noduleID>{nodule_id}</noduleID>{rois}</unblindedReadNodule>"


def roi_xml(z: float, points: list[tuple[float, float]]) -> str:
    edges = "".join(
        f"<edgeMap><xCoord>{x}</xCoord><yCoord>{y}</yCoord></edgeMap>" for x, y in points
    )
    return f"<roi><imageZposition>{z}</imageZposition><inclusion>TRUE</inclusion>{edges}</roi>"


def document_xml(body: str, namespace: str = "", series: str | None = "1.2.3") -> bytes:
    xmlns = f' xmlns="{namespace}"' if namespace else ""
    header = (
        f"<ResponseHeader><SeriesInstanceUid>{series}</SeriesInstanceUid></ResponseHeader>"
        if series
        else ""
    )
    return f"<LidcReadMessage{xmlns}>{header}{body}</LidcReadMessage>".encode()


SIMPLE_ROI = roi_xml(-125.0, [(10, 20), (30, 20), (30, 40), (10, 40)])


class TestParseAnnotations:
    def test_four_sessions_one_nodule_each(self):
        body = "".join(session_xml(nodule_xml(f"n{i}", SIMPLE_ROI)) for i in range(4))
        document = parse_annotations(document_xml(body))
        assert document.series_id == "1.2.3"
        assert len(document.sessions) == 4
        annotations = document.annotations
        assert len(annotations) == 4
        assert len({a.reader_id for a in annotations}) == 4
        assert [a.reader_id for a in annotations] == [f"reader_{i}" for i in range(4)]

    def test_namespaced_and_plain_documents_parse_identically(self):
        body = session_xml(nodule_xml("n0", SIMPLE_ROI))
        plain = parse_annotations(document_xml(body))
        namespaced = parse_annotations(document_xml(body, namespace="http://www.nih.gov"))
        assert plain.annotations == namespaced.annotations
        assert plain.series_id == namespaced.series_id

    def test_roi_values(self):
        points = [(10.0, 20.0), (30.0, 20.0), (30.0, 40.0), (10.0, 40.0)]
        document = parse_annotations(document_xml(session_xml(nodule_xml("n0", roi_xml(-125.0, points)))))
        (annotation,) = document.annotations
        assert annotation.nodule_id == "n0"
        (roi,) = annotation.rois
        assert roi.z_position_mm == -125.0
        assert roi.edge_points == tuple(points)

    def test_multi_roi_annotation(self):
        rois = roi_xml(-100.0, [(5, 5)]) + roi_xml(-99.0, [(6, 6)])
        document = parse_annotations(document_xml(session_xml(nodule_xml("n0", rois))))
        (annotation,) = document.annotations
        assert [r.z_position_mm for r in annotation.rois] == [-100.0, -99.0]

    def test_session_without_nodules_still_counted(self):
        body = session_xml("") + session_xml(nodule_xml("n0", SIMPLE_ROI))
        document = parse_annotations(document_xml(body))
        assert len(document.sessions) == 2
        assert len(document.sessions[0].annotations) == 0
        assert len(document.sessions[1].annotations) == 1

    def test_missing_series_id(self):
        document = parse_annotations(document_xml(session_xml(""), series=None))
        assert document.series_id is None

    def test_missing_z_position_skips_annotation_only(self, caplog):
        bad_roi = "<roi><edgeMap><xCoord>1</xCoord><yCoord>2</yCoord></edgeMap></roi>"
        body = session_xml(nodule_xml("bad", bad_roi) + nodule_xml("good", SIMPLE_ROI))
        with caplog.at_level(logging.WARNING):
            document = parse_annotations(document_xml(body))
        assert [a.nodule_id for a in document.annotations] == ["good"]
        assert len(document.skipped) == 1
        assert "bad" in document.skipped[0]
        assert any("bad" in message for message in caplog.messages)

    @pytest.mark.parametrize(
        "roi",
        [
            "<roi><imageZposition>abc</imageZposition></roi>",
            "<roi><imageZposition>1.0</imageZposition></roi>",  # no edge points
            "<roi><imageZposition>inf</imageZposition><edgeMap><xCoord>1</xCoord><yCoord>2</yCoord></edgeMap></roi>",
            "<roi><imageZposition>1.0</imageZposition><edgeMap><xCoord>x</xCoord><yCoord>2</yCoord></edgeMap></roi>",
            "<roi><imageZposition>1.0</imageZposition><edgeMap><xCoord>1</xCoord></edgeMap></roi>",
        ],
    )
    def test_structurally_bad_rois_are_skipped(self, roi):
        document = parse_annotations(document_xml(session_xml(nodule_xml("n0", roi))))
        assert document.annotations == ()
        assert len(document.skipped) == 1

    def test_no_session_dropped_silently(self):
        # Sessions emitted plus per-annotation diagnostics account for everything.
        bad_roi = "<roi></roi>"
        body = (
            session_xml(nodule_xml("a", SIMPLE_ROI))
            + session_xml(nodule_xml("b", bad_roi))
            + session_xml("")
        )
        document = parse_annotations(document_xml(body))
        assert len(document.sessions) == 3
        total_annotations = sum(len(s.annotations) for s in document.sessions)
        assert total_annotations + len(document.skipped) == 2  # a parsed, b skipped

    def test_characteristics_captured(self):
        extras = "<characteristics><malignancy>4</malignancy><texture>5</texture></characteristics>"
        body = session_xml(
            f"<unblindedReadNodule><noduleID>n0</noduleID>{extras}{SIMPLE_ROI}</unblindedReadNodule>"
        )
        (annotation,) = parse_annotations(document_xml(body)).annotations
        assert annotation.characteristics == {"malignancy": "4", "texture": "5"}

    def test_malformed_xml_reports_byte_offset(self):
        data = b"<LidcReadMessage><readingSession></LidcReadMessage>"
        with pytest.raises(AnnotationParseError) as excinfo:
            parse_annotations(data)
        assert "byte offset" in str(excinfo.value)
        offset = int(str(excinfo.value).split("byte offset ")[1].split(":")[0])
        assert 0 <= offset <= len(data)


MANIFEST_ENTRY = {
    "series_id": "s-1",
    "z_origin_mm": -180.0,
    "recon_interval_mm": 1.25,
    "pixel_spacing_mm": [0.7, 0.7],
    "slice_count": 240,
    "source": "unit test",
}


def manifest_bytes(*entries) -> bytes:
    import json

    return json.dumps(list(entries)).encode()


class TestParseManifest:
    def test_round_trip(self):
        first = parse_manifest(manifest_bytes(MANIFEST_ENTRY))
        second = parse_manifest(serialize_manifest(first))
        assert first == second

    def test_values(self):
        (manifest,) = parse_manifest(manifest_bytes(MANIFEST_ENTRY))
        assert manifest.series_id == "s-1"
        assert manifest.geometry.z_origin_mm == -180.0
        assert manifest.geometry.recon_interval_mm == 1.25
        assert manifest.geometry.pixel_spacing_mm == (0.7, 0.7)
        assert manifest.geometry.slice_count == 240
        assert manifest.source == "unit test"

    def test_zero_interval_is_geometry_error(self):
        entry = {**MANIFEST_ENTRY, "recon_interval_mm": 0.0}
        with pytest.raises(InvalidGeometryError) as excinfo:
            parse_manifest(manifest_bytes(entry))
        assert "s-1" in str(excinfo.value)

    @pytest.mark.parametrize("field", ["series_id", "z_origin_mm", "recon_interval_mm",
                                       "pixel_spacing_mm", "slice_count"])
    def test_missing_field_named(self, field):
        entry = {k: v for k, v in MANIFEST_ENTRY.items() if k != field}
        with pytest.raises(ManifestError) as excinfo:
            parse_manifest(manifest_bytes(entry))
        assert field in str(excinfo.value)

    @pytest.mark.parametrize(
        "patch",
        [
            {"slice_count": 2.5},
            {"slice_count": True},
            {"pixel_spacing_mm": [0.7]},
            {"pixel_spacing_mm": "0.7,0.7"},
            {"z_origin_mm": "deep"},
            {"series_id": ""},
        ],
    )
    def test_schema_violations(self, patch):
        with pytest.raises(ManifestError):
            parse_manifest(manifest_bytes({**MANIFEST_ENTRY, **patch}))

    def test_not_json(self):
        with pytest.raises(ManifestError):
            parse_manifest(b"not json {")

    def test_not_an_array(self):
        with pytest.raises(ManifestError):
            parse_manifest(b"{}")


DETECTION_HEADER = "series_id,x_mm,y_mm,z_mm,confidence"


class TestParseDetections:
    def test_rows(self):
        data = f"{DETECTION_HEADER}\ns-1,10.0,20.0,-120.5,0.73\ns-2,1,2,3,1.0\n".encode()
        records = parse_detections(data)
        assert records == [
            DetectionRecord("s-1", (10.0, 20.0, -120.5), 0.73),
            DetectionRecord("s-2", (1.0, 2.0, 3.0), 1.0),
        ]

    def test_header_only(self):
        assert parse_detections(f"{DETECTION_HEADER}\n".encode()) == []

    def test_empty_file(self):
        with pytest.raises(DetectionParseError):
            parse_detections(b"")

    def test_wrong_header(self):
        with pytest.raises(DetectionParseError) as excinfo:
            parse_detections(b"a,b,c\n")
        assert "line 1" in str(excinfo.value)

    def test_wrong_column_count_names_line(self):
        data = f"{DETECTION_HEADER}\ns-1,1,2,3,0.9\ns-1,1,2\n".encode()
        with pytest.raises(DetectionParseError) as excinfo:
            parse_detections(data)
        assert "line 3" in str(excinfo.value)

    def test_unparseable_number_names_line(self):
        data = f"{DETECTION_HEADER}\ns-1,1,2,zz,0.9\n".encode()
        with pytest.raises(DetectionParseError) as excinfo:
            parse_detections(data)
        assert "line 2" in str(excinfo.value)

    def test_out_of_range_confidence_rejected_with_diagnostic(self, caplog):
        data = f"{DETECTION_HEADER}\ns-1,1,2,3,1.2\ns-1,4,5,6,0.8\n".encode()
        with caplog.at_level(logging.WARNING):
            records = parse_detections(data)
        assert [r.confidence for r in records] == [0.8]
        assert any("confidence" in m for m in caplog.messages)

    def test_non_finite_coordinate_rejected(self, caplog):
        data = f"{DETECTION_HEADER}\ns-1,nan,2,3,0.9\ns-1,4,5,6,0.8\n".encode()
        with caplog.at_level(logging.WARNING):
            records = parse_detections(data)
        assert len(records) == 1

    def test_record_validation(self):
        with pytest.raises(ValueError):
            DetectionRecord("s", (0.0, 0.0, 0.0), 1.5)
        with pytest.raises(ValueError):
            DetectionRecord("s", (float("nan"), 0.0, 0.0), 0.5)


class TestParseNoduleList:
    def test_with_diameter(self):
        data = b"series_id,z_mm,diameter_mm\ns-1,-72.75,4.0\ns-1,-33.75,\n"
        entries = parse_nodule_list(data)
        assert entries[0].diameter_mm == 4.0
        assert entries[1].diameter_mm is None

    def test_without_diameter_column(self):
        entries = parse_nodule_list(b"series_id,z_mm\ns-1,-72.75\n")
        assert entries[0].z_mm == -72.75
        assert entries[0].diameter_mm is None

    def test_bad_header(self):
        with pytest.raises(DetectionParseError):
            parse_nodule_list(b"series,z\ns-1,1\n")
