import csv
import io
from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darkbanner.dataset_io import (
    NO,
    PATTERNS,
    UNKNOWN,
    YES,
    BannerRecord,
    clean_corpus,
    clean_record,
    default_column_map,
    label_corpus,
    label_histogram,
    load_raw_csv,
    parse_csv_text,
    parse_tristate,
    resolve_labels,
    split_train_test,
    split_value_comment,
    write_records_csv,
)
from darkbanner.errors import InvalidFraction, MissingAnnotation, MissingColumn

VICE = {
    "siteid": "Vice",
    "country": "The US",
    "type": "News",
    "widgetlevel": "Yes, buttons",
    "nameofnotyesoption": "Configure Prefrences",
    "location": "Middle of page, middle",
    "contentblocking": "No",
    "optionswordscount": "559",
    "clickstorejecttall": "2",
    "iscookieusedlisted": "Cookie categories and their purposes are described in an understandable way. "
    "All cookies are listed.",
    "thirdparty": "No",
    "siteworkafterrejectingcoookies": "Yes",
    "clarityofoptions": "Very good: You easily understand what you can opt out from and not. "
    "You can opt out from everything possible by one click.",
    "notyesvisiblity": "Immediate",
}
# labels from the published sample site: nagging 0, obstruction 2, sneaking 0, interface interference 2, forced action 2
VICE_FLAGS = {
    "nagging": ("no", "no"),
    "obstruction": ("yes", "yes"),
    "sneaking": ("no", "no"),
    "interface_interference": ("yes", "yes"),
    "forced_action": ("yes", "yes"),
}


def make_csv(rows) -> str:
    cmap = default_column_map()
    header = list(cmap["fields"].values())
    for p in PATTERNS:
        header += cmap["annotations"][p]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for values, flags in rows:
        row = [values.get(h, "") for h in header[: len(cmap["fields"])]]
        for p in PATTERNS:
            row += list(flags[p])
        writer.writerow(row)
    return buf.getvalue()


def test_vice_row():
    records, report = parse_csv_text(make_csv([(VICE, VICE_FLAGS)]))
    (rec,) = records
    assert rec.options_words_count == 559
    assert rec.clicks_to_reject_all == 2
    assert rec.location_raw == "Middle of page, middle"
    labels = label_corpus(records)
    assert labels[0].as_dict() == {
        "nagging": 0, "obstruction": 2, "sneaking": 0, "interface_interference": 2, "forced_action": 2,
    }
    assert report.malformed_cells == [] and report.malformed_rows == []


def test_empty_file_with_header(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text(make_csv([]))
    records, report = load_raw_csv(path)
    assert records == [] and report.n_rows == 0


def test_malformed_count_is_flagged():
    bad = dict(VICE, optionswordscount="55g9")
    records, report = parse_csv_text(make_csv([(bad, VICE_FLAGS)]))
    assert records[0].options_words_count is None
    assert len(report.malformed_cells) == 1
    assert report.malformed_cells[0]["value"] == "55g9"


def test_missing_column():
    text = make_csv([(VICE, VICE_FLAGS)]).replace("clickstorejecttall", "clicks", 1)
    with pytest.raises(MissingColumn) as err:
        parse_csv_text(text)
    assert err.value.exit_code == 2


def test_malformed_rows_are_reported_not_raised():
    text = make_csv([(VICE, VICE_FLAGS), (VICE, VICE_FLAGS)]) + "only,three,fields\n"
    records, report = parse_csv_text(text)
    assert len(records) == 1
    reasons = [r["reason"] for r in report.malformed_rows]
    assert any("duplicate" in r for r in reasons)
    assert any("fields" in r for r in reasons)
    assert report.malformed_rows[-1]["line"] == 4


def test_unrecognised_mark_counts_as_absent():
    flags = dict(VICE_FLAGS, nagging=("maybe", "no"))
    records, report = parse_csv_text(make_csv([(VICE, flags)]))
    assert records[0].reviewer_annotations["nagging"] == (False, False)
    assert report.unrecognized_marks[0]["value"] == "maybe"


def test_clean_examples():
    rec = BannerRecord(
        site_id="x", content_blocking="No ", widget_level_raw="Yes, buttons",
        location_raw="  Middle of page,   middle",
    )
    cleaned = clean_record(rec)
    assert cleaned.content_blocking == NO
    assert cleaned.widget_level_raw == "yes, buttons"
    assert split_value_comment(cleaned.widget_level_raw) == ("yes", "buttons")
    assert cleaned.location_raw == "middle of page, middle"


def test_tristate_variants():
    for text in ("Yes", "yes ", "YES", "ja"):
        assert parse_tristate(text) == YES
    assert parse_tristate("No, but slow") == NO
    assert parse_tristate("") == UNKNOWN
    assert parse_tristate("perhaps") == UNKNOWN


def test_tristate_comment_goes_to_notes():
    cleaned = clean_record(BannerRecord(site_id="x", works_after_reject="Yes (mostly)"))
    assert cleaned.works_after_reject == YES
    assert cleaned.notes["works_after_reject"] == "mostly"


text_values = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=30)


@settings(max_examples=200, deadline=None)
@given(text_values, text_values, text_values, text_values)
def test_clean_is_idempotent(a, b, c, d):
    rec = BannerRecord(site_id="s", content_blocking=a, widget_level_raw=b, clarity_comment=c,
                       works_after_reject=d, location_raw=a + d)
    once = clean_record(rec)
    assert clean_record(once) == once


def test_resolve_labels_codes():
    base = {p: (False, False) for p in PATTERNS}
    assert resolve_labels(base)["nagging"] == 0
    assert resolve_labels(dict(base, nagging=(True, False)))["nagging"] == 1
    assert resolve_labels(dict(base, nagging=(True, True)))["nagging"] == 2
    with pytest.raises(MissingAnnotation):
        resolve_labels(dict(base, sneaking=(True, None)))


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=5, max_size=5))
def test_resolve_labels_symmetric(pairs):
    ann = dict(zip(PATTERNS, pairs))
    swapped = {p: (b, a) for p, (a, b) in ann.items()}
    assert resolve_labels(ann) == resolve_labels(swapped)


def test_histogram_sums_to_corpus_size():
    assert label_histogram([]) == {p: [0, 0, 0] for p in PATTERNS}
    records, _ = parse_csv_text(make_csv([(dict(VICE, siteid=f"s{i}"), VICE_FLAGS) for i in range(7)]))
    hist = label_histogram(label_corpus(records))
    assert all(sum(v) == 7 for v in hist.values())
    assert hist["obstruction"] == [0, 0, 7]


def test_split_sizes_and_determinism():
    s = split_train_test(300, Fraction(2, 3), seed=42)
    assert (len(s.train_ids), len(s.test_ids)) == (200, 100)
    assert set(s.train_ids).isdisjoint(s.test_ids)
    assert sorted(s.train_ids + s.test_ids) == list(range(300))
    assert split_train_test(300, Fraction(2, 3), seed=42) == s
    assert split_train_test(300, Fraction(2, 3), seed=43) != s
    small = split_train_test(3, "2/3", seed=5)
    assert (len(small.train_ids), len(small.test_ids)) == (2, 1)


def test_split_errors():
    for frac in (0, 1, Fraction(3, 2)):
        with pytest.raises(InvalidFraction):
            split_train_test(10, frac)
    with pytest.raises(InvalidFraction):
        split_train_test(2, Fraction(1, 10))


def test_write_then_read_round_trip():
    records, _ = parse_csv_text(make_csv([(VICE, VICE_FLAGS), (dict(VICE, siteid="Other", optionswordscount=""),
                                                              VICE_FLAGS)]))
    cleaned = clean_corpus(records)
    text = write_records_csv(cleaned, header_comment="config_hash=abc seed=1")
    assert text.startswith("# config_hash=abc seed=1\n")
    again, report = parse_csv_text(text)
    assert [replace(r, notes={}) for r in clean_corpus(again)] == [replace(r, notes={}) for r in cleaned]
    assert again[1].options_words_count is None
    assert report.missing_values[0]["column"] == "optionswordscount"
