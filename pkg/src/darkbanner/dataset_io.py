"""Loading, cleaning and labelling the annotated cookie-banner corpus."""

from __future__ import annotations

import csv
import io
import json
import re
import unicodedata
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import InvalidFraction, MissingAnnotation, MissingColumn

PATTERNS = ("nagging", "obstruction", "sneaking", "interface_interference", "forced_action")
PATTERN_TITLES = {
    "nagging": "Nagging",
    "obstruction": "Obstruction",
    "sneaking": "Sneaking",
    "interface_interference": "Interface Interference",
    "forced_action": "Forced action",
}

YES, NO, UNKNOWN = "yes", "no", "unknown"

TEXT_FIELDS = (
    "site_id",
    "country",
    "site_type",
    "widget_level_raw",
    "not_yes_text",
    "location_raw",
    "content_blocking",
    "not_yes_visibility_raw",
    "clarity_comment",
    "cookie_listing_comment",
    "third_party_raw",
    "works_after_reject",
)
COUNT_FIELDS = ("options_words_count", "clicks_to_reject_all")
# lowercased when cleaned; they are matched against vocabularies later on
MATCHING_FIELDS = ("widget_level_raw", "location_raw", "not_yes_visibility_raw", "third_party_raw")
TRISTATE_FIELDS = ("content_blocking", "works_after_reject")


@dataclass(frozen=True)
class BannerRecord:
    site_id: str
    country: str = ""
    site_type: str = ""
    widget_level_raw: str = ""
    not_yes_text: str = ""
    location_raw: str = ""
    content_blocking: str = ""
    options_words_count: int | None = None
    clicks_to_reject_all: int | None = None
    not_yes_visibility_raw: str = ""
    clarity_comment: str = ""
    cookie_listing_comment: str = ""
    third_party_raw: str = ""
    works_after_reject: str = ""
    # pattern -> (reviewer A, reviewer B); None marks a missing flag
    reviewer_annotations: Mapping[str, tuple[bool | None, bool | None]] = field(default_factory=dict)
    # comments split off recognised values by clean_record, keyed by field
    notes: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class LabelSet:
    nagging: int = 0
    obstruction: int = 0
    sneaking: int = 0
    interface_interference: int = 0
    forced_action: int = 0

    def __post_init__(self):
        for p in PATTERNS:
            if getattr(self, p) not in (0, 1, 2):
                raise ValueError(f"label for {p} must be 0, 1 or 2, got {getattr(self, p)!r}")

    def __getitem__(self, pattern: str) -> int:
        return getattr(self, pattern)

    def as_dict(self) -> dict[str, int]:
        return {p: getattr(self, p) for p in PATTERNS}


@dataclass(frozen=True)
class SplitIndices:
    train_ids: tuple[int, ...]
    test_ids: tuple[int, ...]
    seed: int
    train_fraction: Fraction

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "train_fraction": str(self.train_fraction),
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
        }


@dataclass
class LoadReport:
    path: str = ""
    n_rows: int = 0
    malformed_cells: list[dict] = field(default_factory=list)
    malformed_rows: list[dict] = field(default_factory=list)
    missing_values: list[dict] = field(default_factory=list)
    unrecognized_marks: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


# -- reference tables ---------------------------------------------------------


@lru_cache(maxsize=None)
def _data_json(name: str) -> dict:
    return json.loads(resources.files("darkbanner").joinpath("data", name).read_text("utf-8"))


def tristate_table() -> dict:
    return _data_json("tristate.json")


def default_column_map() -> dict:
    return _data_json("columns.json")


def load_column_map(path: str | Path | None) -> dict:
    if path is None:
        return default_column_map()
    mapping = json.loads(Path(path).read_text("utf-8"))
    base = default_column_map()
    return {
        "format_version": mapping.get("format_version", base["format_version"]),
        "fields": {**base["fields"], **mapping.get("fields", {})},
        "annotations": {**base["annotations"], **mapping.get("annotations", {})},
    }


# -- text normalisation -------------------------------------------------------

_WS = re.compile(r"\s+")
_SEPARATOR = re.compile(r"\s*[,;:(]\s*")


def normalize_text(text: str | None, lower: bool = False) -> str:
    if not text:
        return ""
    text = unicodedata.normalize("NFC", text)
    text = "".join(ch if ch.isprintable() else " " for ch in text)
    text = _WS.sub(" ", text).strip()
    return text.lower() if lower else text


def split_value_comment(text: str) -> tuple[str, str]:
    """Split ``"Yes, buttons"`` into its value part and trailing comment."""
    text = normalize_text(text)
    m = _SEPARATOR.search(text)
    if m is None:
        return text, ""
    comment = text[m.end():].strip().rstrip(")").strip()
    return text[: m.start()].strip(), comment


def parse_tristate(text: str | None) -> str:
    value, _ = split_value_comment(normalize_text(text, lower=True))
    return _classify_mark(value) or UNKNOWN


def _classify_mark(value: str) -> str | None:
    table = tristate_table()
    value = value.strip().lower()
    for state in (YES, NO, UNKNOWN):
        if value in table[state]:
            return state
    first = value.split(" ", 1)[0] if value else ""
    for state in (YES, NO):
        if first in table[state]:
            return state
    return None


# -- loading ------------------------------------------------------------------


def _parse_count(cell: str) -> int | None | str:
    """int for a valid count, None for an empty cell, the raw text if malformed."""
    cell = cell.strip()
    if not cell:
        return None
    try:
        value = float(cell)
    except ValueError:
        return cell
    if not value.is_integer() or value < 0:
        return cell
    return int(value)


def _parse_flag(cell: str) -> bool | None | str:
    cell = normalize_text(cell, lower=True)
    if not cell:
        return None
    state = _classify_mark(cell)
    if state == YES:
        return True
    if state == NO:
        return False
    return cell


def load_raw_csv(path: str | Path, column_map: Mapping | None = None) -> tuple[list[BannerRecord], LoadReport]:
    """Read the annotated corpus CSV.

    Returns the records together with a :class:`LoadReport`; malformed cells
    and rows are logged there instead of raising. Leading ``#`` lines (as
    written by the ``clean`` command) are skipped.
    """
    with open(path, encoding="utf-8-sig", newline="") as fh:
        text = fh.read()
    return parse_csv_text(text, column_map, source=str(path))


def parse_csv_text(text: str, column_map: Mapping | None = None, source: str = "") -> tuple[list[BannerRecord], LoadReport]:
    cmap = column_map or default_column_map()
    report = LoadReport(path=source)
    lines = text.splitlines(keepends=True)
    skip = 0
    while skip < len(lines) and lines[skip].startswith("#"):
        skip += 1
    reader = csv.reader(io.StringIO("".join(lines[skip:])))
    header = next(reader, None)
    if header is None:
        raise MissingColumn(cmap["fields"]["site_id"])
    header = [h.strip().lower() for h in header]
    index = {name: i for i, name in enumerate(header)}

    wanted = dict(cmap["fields"])
    for pattern in PATTERNS:
        a, b = cmap["annotations"][pattern]
        wanted[f"{pattern}:a"] = a
        wanted[f"{pattern}:b"] = b
    for column in wanted.values():
        if column.lower() not in index:
            raise MissingColumn(column)
    col = {key: index[column.lower()] for key, column in wanted.items()}

    records: list[BannerRecord] = []
    seen: set[str] = set()
    for row in reader:
        lineno = skip + reader.line_num
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            report.malformed_rows.append({"line": lineno, "reason": f"expected {len(header)} fields, got {len(row)}"})
            continue
        values: dict = {name: row[col[name]] for name in TEXT_FIELDS}
        site_id = values["site_id"].strip()
        if not site_id:
            report.malformed_rows.append({"line": lineno, "reason": "empty site id"})
            continue
        if site_id in seen:
            report.malformed_rows.append({"line": lineno, "reason": f"duplicate site id {site_id!r}"})
            continue
        seen.add(site_id)
        for name in COUNT_FIELDS:
            column = wanted[name]
            parsed = _parse_count(row[col[name]])
            if isinstance(parsed, str):
                report.malformed_cells.append({"line": lineno, "column": column, "value": parsed})
                parsed = None
            elif parsed is None:
                report.missing_values.append({"line": lineno, "column": column})
            values[name] = parsed
        annotations = {}
        for pattern in PATTERNS:
            pair = []
            for side in ("a", "b"):
                column = wanted[f"{pattern}:{side}"]
                flag = _parse_flag(row[col[f"{pattern}:{side}"]])
                if isinstance(flag, str):
                    # non-affirmative free text ("maybe", "?") counts as absent
                    report.unrecognized_marks.append({"line": lineno, "column": column, "value": flag})
                    flag = False
                elif flag is None:
                    report.missing_values.append({"line": lineno, "column": column})
                pair.append(flag)
            annotations[pattern] = tuple(pair)
        values["reviewer_annotations"] = annotations
        records.append(BannerRecord(**values))
    report.n_rows = len(records)
    return records, report


# -- cleaning -----------------------------------------------------------------


def clean_record(raw: BannerRecord) -> BannerRecord:
    """Normalise whitespace, case of matching fields and tri-state values.

    Total and idempotent. Comments trailing a tri-state value go to ``notes``.
    """
    changes: dict = {}
    notes = dict(raw.notes)
    for name in TEXT_FIELDS:
        value = getattr(raw, name)
        if name in TRISTATE_FIELDS:
            text = normalize_text(value, lower=True)
            if text in (YES, NO, UNKNOWN):
                changes[name] = text
                continue
            head, comment = split_value_comment(text)
            changes[name] = _classify_mark(head) or UNKNOWN
            if comment:
                notes[name] = comment
            elif text and changes[name] == UNKNOWN:
                notes[name] = text
        else:
            changes[name] = normalize_text(value, lower=name in MATCHING_FIELDS)
    return replace(raw, notes=notes, **changes)


def clean_corpus(records: Iterable[BannerRecord]) -> list[BannerRecord]:
    return [clean_record(r) for r in records]


# -- labels -------------------------------------------------------------------


def resolve_labels(annotations: Mapping[str, tuple[bool | None, bool | None]]) -> LabelSet:
    codes = {}
    for pattern in PATTERNS:
        pair = annotations.get(pattern)
        if pair is None or len(pair) != 2 or pair[0] is None or pair[1] is None:
            raise MissingAnnotation(pattern)
        codes[pattern] = int(bool(pair[0])) + int(bool(pair[1]))
    return LabelSet(**codes)


def label_corpus(records: Iterable[BannerRecord], report: LoadReport | None = None) -> list[LabelSet]:
    """Labels for every record; missing flags count as absent and are logged."""
    out = []
    for r in records:
        try:
            out.append(resolve_labels(r.reviewer_annotations))
        except MissingAnnotation:
            filled = {
                p: tuple(False if f is None else f for f in r.reviewer_annotations.get(p, (None, None)))
                for p in PATTERNS
            }
            if report is not None:
                report.unrecognized_marks.append({"site_id": r.site_id, "value": "missing flag treated as absent"})
            out.append(resolve_labels(filled))
    return out


def label_histogram(labels: Iterable[LabelSet]) -> dict[str, list[int]]:
    hist = {p: [0, 0, 0] for p in PATTERNS}
    for ls in labels:
        for p in PATTERNS:
            hist[p][ls[p]] += 1
    return hist


# -- splitting ----------------------------------------------------------------


def split_train_test(n: int, train_fraction: Fraction | float | str = Fraction(2, 3), seed: int = 42) -> SplitIndices:
    """Plain random train/test partition, a pure function of its arguments."""
    frac = Fraction(train_fraction)
    if isinstance(train_fraction, float):
        frac = frac.limit_denominator(10**6)
    if not 0 < frac < 1:
        raise InvalidFraction(f"train fraction must lie in (0, 1), got {train_fraction}")
    if n < 2:
        raise InvalidFraction(f"need at least two records to split, got {n}")
    n_train = round(frac * n)
    if not 0 < n_train < n:
        raise InvalidFraction(f"fraction {frac} leaves an empty side for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(
        train_ids=tuple(sorted(int(i) for i in perm[:n_train])),
        test_ids=tuple(sorted(int(i) for i in perm[n_train:])),
        seed=seed,
        train_fraction=frac,
    )


# -- writing ------------------------------------------------------------------


def write_records_csv(records: Iterable[BannerRecord], column_map: Mapping | None = None, header_comment: str | None = None) -> str:
    """Serialise records back to the input CSV schema (annotation flags as yes/no)."""
    cmap = column_map or default_column_map()
    fields = cmap["fields"]
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    order = list(fields)
    header = [fields[name] for name in order]
    for pattern in PATTERNS:
        header.extend(cmap["annotations"][pattern])
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in records:
        row = []
        for name in order:
            value = getattr(r, name)
            row.append("" if value is None else str(value))
        for pattern in PATTERNS:
            for flag in r.reviewer_annotations.get(pattern, (None, None)):
                row.append("" if flag is None else (YES if flag else NO))
        writer.writerow(row)
    return buf.getvalue()
