import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabflow.preprocess import (
    NoBodyRows,
    TooSparse,
    classify_header,
    clean_body,
    load_merge_sidecar,
    parse_numericish,
    preprocess,
    resolve_missing,
    split_header_body,
    standardize_header,
)
from tabflow.table import MergeRegion, RawTable, parse_table, serialize_csv

FIXTURES = Path(__file__).parent / "fixtures" / "preprocess"


def load_fixture(name):
    path = FIXTURES / name
    merges_path = FIXTURES / (path.stem + ".merges.json")
    merges = load_merge_sidecar(merges_path) if merges_path.exists() else ()
    return parse_table(path.read_bytes(), source_name=path.stem, merges=merges)


class TestClassifyHeader:
    def test_text_row_then_numbers_is_simple(self):
        t = RawTable([["name", "score"], ["1", "2"], ["3", "4"]])
        cls = classify_header(t)
        assert not cls.complex and cls.header_rows == 1 and not cls.synthetic

    def test_vertical_merge_is_complex(self):
        t = RawTable(
            [["grp", "a"], [None, "b"], ["1", "2"]], merges=[MergeRegion(0, 0, 1, 0)]
        )
        cls = classify_header(t)
        assert cls.complex and cls.merged

    def test_all_numeric_first_row_is_synthetic_simple(self):
        t = RawTable([["1", "2"], ["3", "4"]])
        cls = classify_header(t)
        assert not cls.complex and cls.synthetic and cls.header_rows == 1

    def test_depth_capped_at_three(self):
        rows = [["a", "b"]] * 5 + [["1", "2"]]
        merges = [MergeRegion(0, 0, 4, 0)]
        t = RawTable(rows, merges=merges)
        assert classify_header(t).header_rows <= 3

    def test_horizontal_merge_in_single_header_row_is_complex(self):
        t = RawTable([["a", "a"], ["1", "2"]], merges=[MergeRegion(0, 0, 0, 1)])
        cls = classify_header(t)
        assert cls.complex and cls.header_rows == 1 and cls.merged


class TestSplitHeaderBody:
    def test_simple_split_row_is_one(self):
        t = RawTable([["name", "x"], ["1", "2"]])
        split = split_header_body(t)
        assert split.split_row == 1 and len(split.body_block) == 1

    def test_two_row_header_split(self):
        t = load_fixture("merged_two_row_header.csv")
        split = split_header_body(t)
        assert split.split_row == 2
        assert len(split.body_block) == 2

    def test_header_only_table_raises(self):
        t = RawTable([["name", "x"]])
        with pytest.raises(NoBodyRows):
            split_header_body(t)


class TestStandardizeHeader:
    def test_merge_then_underscore_join(self):
        names = standardize_header(
            [["Revenue", "Revenue"], ["2016", "2017"]], [MergeRegion(0, 0, 0, 1)]
        )
        assert names == ["Revenue_2016", "Revenue_2017"]

    def test_single_row_identity(self):
        assert standardize_header([["a", "b"]]) == ["a", "b"]

    def test_duplicate_names_suffixed(self):
        assert standardize_header([["x", "x"], [None, None]]) == ["x", "x_2"]

    def test_empty_column_gets_col_index(self):
        assert standardize_header([[None, "b"]]) == ["col0", "b"]

    @given(
        st.lists(
            st.lists(
                st.one_of(st.none(), st.text(alphabet="abcxyz_ ", max_size=6)),
                min_size=1,
                max_size=5,
            ),
            min_size=1,
            max_size=3,
        ).filter(lambda rows: len({len(r) for r in rows}) == 1)
    )
    @settings(max_examples=150)
    def test_names_always_unique_and_nonempty(self, grid):
        names = standardize_header(grid)
        assert len(names) == len(grid[0])
        assert all(n.strip() for n in names)
        assert len(set(names)) == len(names)


class TestCleanBody:
    def test_annotation_row_removed(self):
        body = [["* excludes tax", None, None], ["a", "1", "2"]]
        assert clean_body(body) == [["a", "1", "2"]]

    def test_note_prefix_removed_case_insensitive(self):
        body = [["NOTE: draft", None], ["a", "1"]]
        assert clean_body(body) == [["a", "1"]]

    def test_non_annotation_single_cell_kept(self):
        body = [["plain text", None], ["a", "1"]]
        assert len(clean_body(body)) == 2

    def test_superscripts_mapped(self):
        assert clean_body([["m²"]]) == [["m2"]]

    def test_formula_stripped(self):
        assert clean_body([["=SUM(A1:A3)"]]) == [["SUM(A1:A3)"]]

    def test_url_reduced_to_trailing_segment(self):
        assert clean_body([["https://example.com/a/b/page.html"]]) == [["page.html"]]

    @given(
        st.lists(
            st.lists(
                st.one_of(st.none(), st.text(max_size=8), st.floats(allow_nan=False, allow_infinity=False)),
                min_size=2,
                max_size=4,
            ),
            min_size=1,
            max_size=8,
        ).filter(lambda rows: len({len(r) for r in rows}) == 1)
    )
    @settings(max_examples=100)
    def test_column_count_stable_row_count_never_grows(self, body):
        out = clean_body(body)
        assert len(out) <= len(body)
        for row in out:
            assert len(row) == len(body[0])


class TestResolveMissing:
    def test_too_sparse_rejected(self):
        body = [["1", None], [None, None], [None, None], [None, None], [None, None]]
        with pytest.raises(TooSparse):
            resolve_missing(body)

    def test_seventy_percent_exactly_is_kept(self):
        # 7 of 10 nulls: strict > comparison keeps the table.
        body = [["1", "2", "3"], [None, None, None], [None, None, None], [None, "4", None]]
        grid, _ = resolve_missing(body)
        assert len(grid) == 4

    def test_currency_normalized_with_unit(self):
        grid, units = resolve_missing([["$1,214"]])
        assert grid == [[1214.0]]
        assert units == ["$"]

    def test_percent_normalized(self):
        grid, units = resolve_missing([["45%"]])
        assert grid == [[45.0]] and units == ["%"]

    def test_text_only_body_unchanged(self):
        body = [["alpha", "beta"], ["gamma", "delta"]]
        grid, units = resolve_missing(body)
        assert grid == body and units == [None, None]

    def test_null_fraction_after_resolve_bounded(self):
        grid, _ = resolve_missing([["1", None], ["2", "3"]])
        nulls = sum(1 for row in grid for c in row if c is None)
        assert nulls / 4 <= 0.70


class TestParseNumericish:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("1,214", (1214.0, None)),
            ("$1,214", (1214.0, "$")),
            ("45%", (45.0, "%")),
            ("€7.50", (7.5, "€")),
            ("3.14", (3.14, None)),
            ("-2e3", (-2000.0, None)),
        ],
    )
    def test_parses(self, text, expected):
        assert parse_numericish(text) == expected

    @pytest.mark.parametrize("text", ["abc", "1,2,3", "1_000", "inf", "nan", "", "1.2.3"])
    def test_rejects(self, text):
        assert parse_numericish(text) is None


class TestPreprocessGoldenSuite:
    GOLDEN_NAMES = [
        "simple_clean.csv",
        "merged_two_row_header.csv",
        "annotation_rows.csv",
        "formula_cells.csv",
        "currency_percent.csv",
        "superscripts.csv",
        "ragged_rows.csv",
        "duplicate_headers.csv",
        "empty_header_cell.csv",
        "synthetic_numeric_header.csv",
        "url_cells.csv",
    ]

    @pytest.mark.parametrize("name", GOLDEN_NAMES)
    def test_golden(self, name):
        table = load_fixture(name)
        processed = preprocess(table)
        golden = (FIXTURES / "golden" / name).read_text(encoding="utf-8")
        assert serialize_csv(processed).decode("utf-8") == golden

    def test_golden_units(self):
        units = json.loads((FIXTURES / "golden" / "units.json").read_text())
        processed = preprocess(load_fixture("currency_percent.csv"))
        assert processed.units == units["currency_percent.csv"]

    def test_sparse_fixture_rejected(self):
        with pytest.raises(TooSparse):
            preprocess(load_fixture("sparse_reject.csv"))

    @pytest.mark.parametrize("name", GOLDEN_NAMES)
    def test_idempotent_on_accepted_fixtures(self, name):
        first = preprocess(load_fixture(name))
        first_bytes = serialize_csv(first)
        second = preprocess(parse_table(first_bytes, source_name=name))
        assert serialize_csv(second) == first_bytes

    def test_provenance_lists_operators_in_order(self):
        processed = preprocess(load_fixture("simple_clean.csv"))
        assert processed.provenance[:4] == [
            "split_header_body",
            "standardize_header",
            "clean_body",
            "resolve_missing",
        ]

    _CELLS = st.one_of(
        st.sampled_from(["alpha", "beta", "note: x", "=SUM(A1)", "m²"]),
        st.sampled_from(["7", "3.5", "$1,214", "45%", "-2"]),
        st.none(),
        st.sampled_from(["gamma", "delta"]),
    )

    @given(
        st.integers(min_value=2, max_value=4).flatmap(
            lambda width: st.lists(
                st.lists(
                    TestPreprocessGoldenSuite._CELLS, min_size=width, max_size=width
                ),
                min_size=2,
                max_size=8,
            )
        )
    )
    @settings(max_examples=150, deadline=None)
    def test_idempotence_property(self, cells):
        from hypothesis import assume

        table = RawTable([list(r) for r in cells])
        try:
            first = serialize_csv(preprocess(table))
        except (TooSparse, NoBodyRows):
            assume(False)
            return
        second = serialize_csv(preprocess(parse_table(first)))
        assert second == first

    def test_header_and_body_paths_independent(self):
        # Editing header cells must not change the processed body, and
        # editing body cells must not change the processed header.
        base = RawTable([["name", "score"], ["a", "1"], ["b", "2"]])
        renamed = RawTable([["label", "points"], ["a", "1"], ["b", "2"]])
        assert preprocess(base).body == preprocess(renamed).body
        edited = RawTable([["name", "score"], ["a", "9"], ["c", "2"]])
        assert preprocess(base).header == preprocess(edited).header
