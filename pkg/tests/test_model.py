import io
import json

import numpy as np
import pytest

from canopy import testkit
from canopy.errors import IngestError
from canopy.model import (
    Corpus,
    identity_set,
    ingest_stream,
    write_stream,
)


def doc(lines):
    return io.StringIO("\n".join(json.dumps(l) for l in lines) + "\n")


def meta_line(video_id="v1", location="Lab", date="2024-01-01", fps=2.0, dim=2):
    return {
        "type": "meta",
        "video_id": video_id,
        "location": location,
        "date": date,
        "fps": fps,
        "dim": dim,
    }


def frame_line(idx, emb=(0.0, 0.0)):
    return {"type": "frame", "idx": idx, "emb": list(emb)}


def det_line(idx, ident, x=0.5, y=0.5):
    return {"type": "det", "idx": idx, "x": x, "y": y, "id": ident}


class TestIngest:
    def test_frames_without_detections(self):
        stream = ingest_stream(doc([meta_line()] + [frame_line(i) for i in range(10)]))
        assert stream.meta.frame_count == 10
        assert stream.detections == []
        assert stream.meta.location_label == "Lab"
        assert stream.meta.fps == 2.0

    def test_single_frame_single_detection(self):
        stream = ingest_stream(
            doc([meta_line(), frame_line(0), det_line(0, "A", 0.5, 0.5)])
        )
        assert len(stream.detections) == 1
        det = stream.detections[0]
        assert det.identity == "A"
        assert det.position == (0.5, 0.5)

    def test_timestamps_derived_from_fps(self):
        stream = ingest_stream(
            doc([meta_line(fps=4.0)] + [frame_line(i) for i in range(8)])
        )
        for frame in stream.frames:
            assert frame.timestamp == pytest.approx(frame.frame_index / 4.0, abs=1e-6)

    def test_scenario_counts_match_generator_manifest(self, scenario, corpus):
        _, _, manifest, _ = scenario
        for stream in corpus:
            counts = manifest["counts"][stream.meta.video_id]
            assert stream.meta.frame_count == counts["frames"]
            assert len(stream.detections) == counts["detections"]

    def test_identity_multiset_preserved(self, scenario, corpus):
        _, documents, _, _ = scenario
        for stream in corpus:
            raw = [
                json.loads(line)["id"]
                for line in documents[stream.meta.video_id].splitlines()
                if line and json.loads(line)["type"] == "det"
            ]
            ingested = [d.identity for d in stream.detections]
            assert sorted(raw) == sorted(ingested)


class TestIngestErrors:
    def test_malformed_json_reports_line(self):
        src = io.StringIO(json.dumps(meta_line()) + "\n{not json\n")
        with pytest.raises(IngestError, match="line 2"):
            ingest_stream(src)

    def test_first_record_must_be_meta(self):
        with pytest.raises(IngestError, match="meta"):
            ingest_stream(doc([frame_line(0)]))

    def test_unknown_record_type_rejected(self):
        with pytest.raises(IngestError, match="unknown record type"):
            ingest_stream(doc([meta_line(), {"type": "audio", "idx": 0}]))

    def test_dimension_mismatch(self):
        with pytest.raises(IngestError, match="dimension mismatch"):
            ingest_stream(doc([meta_line(dim=3), frame_line(0, (1.0, 2.0))]))

    def test_non_monotonic_frame_index(self):
        lines = [meta_line(), frame_line(0), frame_line(1), frame_line(1)]
        with pytest.raises(IngestError, match="non-monotonic"):
            ingest_stream(doc(lines))

    def test_gap_in_frame_index(self):
        with pytest.raises(IngestError, match="non-contiguous"):
            ingest_stream(doc([meta_line(), frame_line(0), frame_line(2)]))

    def test_position_out_of_range(self):
        with pytest.raises(IngestError, match=r"out of \[0,1\]"):
            ingest_stream(doc([meta_line(), frame_line(0), det_line(0, "A", x=1.5)]))

    def test_duplicate_identity_per_frame_rejected(self):
        lines = [meta_line(), frame_line(0), det_line(0, "A"), det_line(0, "A", 0.1, 0.1)]
        with pytest.raises(IngestError, match="duplicate detection"):
            ingest_stream(doc(lines))

    def test_detection_for_unknown_frame(self):
        with pytest.raises(IngestError, match="unknown frame"):
            ingest_stream(doc([meta_line(), frame_line(0), det_line(3, "A")]))

    def test_bad_fps(self):
        with pytest.raises(IngestError, match="fps"):
            ingest_stream(doc([meta_line(fps=0)]))

    def test_empty_document(self):
        with pytest.raises(IngestError, match="empty document"):
            ingest_stream(io.StringIO(""))

    def test_duplicate_meta(self):
        with pytest.raises(IngestError, match="duplicate meta"):
            ingest_stream(doc([meta_line(), meta_line()]))


class TestRoundTrip:
    def test_reserialization_is_equivalent(self, scenario):
        _, documents, _, _ = scenario
        for text in documents.values():
            stream = ingest_stream(io.StringIO(text))
            round_tripped = ingest_stream(io.StringIO(write_stream(stream)))
            assert round_tripped.meta == stream.meta
            assert len(round_tripped.frames) == len(stream.frames)
            for a, b in zip(stream.frames, round_tripped.frames):
                assert a.frame_index == b.frame_index
                assert np.array_equal(a.embedding, b.embedding)
            assert round_tripped.detections == stream.detections


class TestIdentitySet:
    def test_projection(self):
        stream = ingest_stream(
            doc([meta_line(), frame_line(0), det_line(0, "A"), det_line(0, "B", 0.2, 0.2)])
        )
        assert identity_set(stream.frames[0], stream) == {"A", "B"}

    def test_empty_for_frame_without_detections(self):
        stream = ingest_stream(doc([meta_line(), frame_line(0), frame_line(1)]))
        assert identity_set(stream.frames[1], stream) == frozenset()

    def test_missing_frame_yields_empty(self):
        s1 = ingest_stream(doc([meta_line(), frame_line(0)]))
        s2 = ingest_stream(doc([meta_line(video_id="v2"), frame_line(0), det_line(0, "A")]))
        assert identity_set(s2.frames[0], s1) == frozenset()


class TestCorpus:
    def test_duplicate_video_id_rejected(self):
        a = ingest_stream(doc([meta_line(), frame_line(0)]))
        b = ingest_stream(doc([meta_line(), frame_line(0)]))
        with pytest.raises(IngestError, match="duplicate video_id"):
            Corpus([a, b])

    def test_cross_video_dimension_mismatch(self):
        a = ingest_stream(doc([meta_line(), frame_line(0)]))
        b = ingest_stream(doc([meta_line(video_id="v2", dim=3), frame_line(0, (1, 2, 3))]))
        with pytest.raises(IngestError, match="dimension mismatch"):
            Corpus([a, b])

    def test_random_documents_all_parse(self):
        for seed in range(25):
            text = testkit.random_stream_document(seed, max_frames=60)
            stream = ingest_stream(io.StringIO(text))
            assert stream.meta.frame_count == len(stream.frames)
