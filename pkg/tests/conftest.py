from __future__ import annotations

import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthetic import synthetic_csv  # noqa: E402

REAL_CORPUS_CANDIDATES = (
    os.environ.get("DARKBANNER_CORPUS", ""),
    str(Path(__file__).resolve().parents[1] / "data" / "cookiepopup.csv"),
)

_acceptance: list[tuple[str, str, str]] = []


def real_corpus() -> Path | None:
    for candidate in REAL_CORPUS_CANDIDATES:
        if candidate and Path(candidate).is_file():
            return Path(candidate)
    return None


@pytest.fixture(scope="session")
def synthetic_corpus(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("corpus") / "synthetic.csv"
    path.write_text(synthetic_csv(), encoding="utf-8")
    return path


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call":
        return
    status = "PASS" if report.passed else "FAIL"
    detail = ""
    if report.failed and call.excinfo is not None:
        detail = str(call.excinfo.value).splitlines()[0][:160]
    _acceptance.append((marker.args[0], status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in _acceptance:
        line = f"ACCEPTANCE {status}: {name}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
