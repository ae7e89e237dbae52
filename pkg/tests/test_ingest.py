"""CSV parsing, dense re-indexing, and bundle round-trips."""

import numpy as np
import pytest

from chronorec.errors import DataError, ParseError
from chronorec.ingest import (load_bundle, parse_event_csv, save_bundle)


class TestGenericFormat:
    def test_minimal(self):
        events, n, r, d_e, _, _ = parse_event_csv("0,0,1.0\n0,1,2.0")
        assert (n, r, d_e) == (1, 2, 0)
        assert len(events) == 2
        assert [e.seq_no for e in events] == [0, 1]

    def test_non_numeric_field_names_line(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_event_csv("0,x,1.0")

    def test_wrong_arity_names_line(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_event_csv("0,0,1.0\n0,1\n")

    def test_feature_arity_must_match_first_row(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_event_csv("0,0,1.0,0.5\n0,1,2.0\n")

    def test_empty_file(self):
        with pytest.raises(ParseError):
            parse_event_csv("")

    def test_negative_timestamp(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_event_csv("0,0,-3.0")

    def test_decreasing_timestamps_resorted(self):
        events, *_ = parse_event_csv("0,0,5.0\n0,1,1.0\n0,2,3.0")
        assert [e.timestamp for e in events] == [1.0, 3.0, 5.0]

    def test_dense_reindex_first_appearance(self):
        events, n, r, _, user_map, item_map = parse_event_csv(
            "7,100,1.0\n9,100,2.0\n7,200,3.0")
        assert (n, r) == (2, 2)
        assert user_map == {7: 0, 9: 1}
        assert item_map == {100: 0, 200: 1}
        assert [(e.user_id, e.item_id) for e in events] == [(0, 0), (1, 0), (0, 1)]

    def test_features_parsed(self):
        events, _, _, d_e, _, _ = parse_event_csv("0,0,1.0,0.5,0.25\n0,1,2.0,1.0,2.0")
        assert d_e == 2
        assert np.allclose(events[0].edge_features, [0.5, 0.25])


class TestJodieFormat:
    TEXT = ("user_id,item_id,timestamp,state_label,f0,f1\n"
            "0,0,1.0,0,0.5,0.25\n"
            "1,0,2.0,1,1.5,2.5\n")

    def test_header_and_state_label_discarded(self):
        events, n, r, d_e, _, _ = parse_event_csv(self.TEXT, fmt="jodie")
        assert (n, r, d_e) == (2, 1, 2)
        assert np.allclose(events[1].edge_features, [1.5, 2.5])

    def test_unknown_format(self):
        with pytest.raises(ParseError):
            parse_event_csv(self.TEXT, fmt="parquet")


class TestBundleRoundTrip:
    def test_round_trip(self, tmp_path):
        text = "3,10,1.5,0.5\n3,11,2.5,1.0\n4,10,3.5,2.0"
        events, n, r, d_e, user_map, item_map = parse_event_csv(text)
        save_bundle(tmp_path / "b", events, n, r, d_e, user_map, item_map)
        events2, n2, r2, d_e2, meta = load_bundle(tmp_path / "b")
        assert (n2, r2, d_e2) == (n, r, d_e)
        assert len(events2) == len(events)
        for a, b in zip(events, events2):
            assert (a.user_id, a.item_id, a.timestamp) == (b.user_id, b.item_id, b.timestamp)
            assert np.array_equal(a.edge_features, b.edge_features)
        assert meta["fingerprint"]["events"] == 3

    def test_id_map_files(self, tmp_path):
        events, n, r, d_e, user_map, item_map = parse_event_csv("7,9,1.0\n8,9,2.0")
        save_bundle(tmp_path / "b", events, n, r, d_e, user_map, item_map)
        lines = (tmp_path / "b" / "user_id_map.csv").read_text().strip().splitlines()
        assert lines[0] == "original_id,dense_id"
        assert lines[1:] == ["7,0", "8,1"]

    def test_not_a_bundle(self, tmp_path):
        with pytest.raises(DataError):
            load_bundle(tmp_path)

    def test_file_path_input(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("0,0,1.0\n0,1,2.0\n")
        events, n, r, d_e, _, _ = parse_event_csv(path)
        assert len(events) == 2 and (n, r, d_e) == (1, 2, 0)
