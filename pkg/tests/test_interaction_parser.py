import numpy as np
import pytest

from hdrm.common.errors import EmptyDatasetError, ParseError
from hdrm.data.interaction_parser import (
    InputFormat,
    InteractionParser,
    deduplicate,
    load_interactions,
)


class TestInteractionParser:
    def test_parses_four_columns(self):
        df = InteractionParser().parse("u1\ti1\t5\t100\nu2\ti1\t3.5\t101\n")
        assert list(df.columns) == ["user", "item", "rating", "timestamp", "line"]
        assert df["rating"].tolist() == [5.0, 3.5]
        assert df["timestamp"].dtype == np.int64
        assert df["line"].tolist() == [1, 2]

    def test_parses_three_columns_csv(self):
        df = InteractionParser(InputFormat.CSV).parse("a,b,4\nc,d,1\n")
        assert "timestamp" not in df.columns
        assert df["user"].tolist() == ["a", "c"]

    def test_skips_header_and_blank_lines(self):
        df = InteractionParser().parse("user\titem\trating\n\nu1\ti1\t4\n")
        assert len(df) == 1
        assert df["line"].iloc[0] == 3

    def test_bad_rating_on_first_line_is_not_a_header(self):
        with pytest.raises(ParseError) as excinfo:
            InteractionParser().parse("u1\ti1\tfive\nu2\ti2\t4\n")
        assert excinfo.value.line_number == 1

    def test_header_names_are_case_insensitive(self):
        df = InteractionParser(InputFormat.CSV).parse("UserId,MovieId,Rating,Timestamp\nu1,i1,4,7\n")
        assert len(df) == 1

    def test_wrong_field_count_reports_line(self):
        with pytest.raises(ParseError) as excinfo:
            InteractionParser().parse("u1\ti1\t5\nu2\ti2\n")
        assert excinfo.value.line_number == 2
        assert "line 2" in str(excinfo.value)

    def test_mixed_widths_rejected(self):
        with pytest.raises(ParseError) as excinfo:
            InteractionParser().parse("u1\ti1\t5\t1\nu2\ti2\t4\n")
        assert excinfo.value.line_number == 2

    def test_non_numeric_rating_after_first_record(self):
        with pytest.raises(ParseError) as excinfo:
            InteractionParser().parse("u1\ti1\t5\nu2\ti2\tgood\n")
        assert excinfo.value.line_number == 2

    def test_empty_id_rejected(self):
        with pytest.raises(ParseError):
            InteractionParser().parse("\ti1\t5\n")

    def test_empty_input(self):
        with pytest.raises(EmptyDatasetError):
            InteractionParser().parse("\n\n")

    def test_error_exit_code(self):
        assert ParseError("bad", 1).exit_code == 3


def test_deduplicate_keeps_highest_rating():
    df = InteractionParser().parse("u1\ti1\t2\nu1\ti1\t5\nu1\ti2\t3\nu1\ti2\t1\n")
    deduped = deduplicate(df)
    assert len(deduped) == 2
    ratings = dict(zip(deduped["item"], deduped["rating"]))
    assert ratings == {"i1": 5.0, "i2": 3.0}


def test_load_interactions_densifies_in_file_order(tmp_path):
    path = tmp_path / "log.tsv"
    path.write_text("b\tx\t5\na\ty\t4\nb\ty\t1\nc\tx\t2\n")
    records = load_interactions(path)
    assert records.user_ids.tolist() == ["b", "a", "c"]
    assert records.item_ids.tolist() == ["x", "y"]
    assert records.frame["user"].tolist() == [0, 1, 0, 2]
    assert records.frame["item"].tolist() == [0, 1, 1, 0]
    assert records.num_users == 3
    assert records.num_items == 2


def test_parse_file_rejects_invalid_utf8(tmp_path):
    path = tmp_path / "latin1.tsv"
    path.write_bytes(b"u1\ti1\t5\nu\xe9\ti2\t4\n")
    with pytest.raises(ParseError) as excinfo:
        InteractionParser().parse_file(path)
    assert excinfo.value.line_number == 2
    assert "UTF-8" in str(excinfo.value)
