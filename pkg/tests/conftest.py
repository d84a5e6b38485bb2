import pytest

from qeew.catalog import CatalogEntry, Entity
from qeew.eekb import build_eekb

QUERY = "play long distance love by sheena easton"
RESPONSE = "playing telefone by sheena easton"
REFORMULATION = "play telefone by sheena easton"

LDL = Entity("long distance love", "SongName")
SE = Entity("Sheena Easton", "ArtistName")
TEL = Entity("telefone", "SongName")


@pytest.fixture
def sheena_entry():
    return CatalogEntry(QUERY, RESPONSE, (LDL, SE, TEL))


@pytest.fixture
def sheena_eekb(sheena_entry):
    return build_eekb([sheena_entry])


_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.failed:
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[number] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        line = f"criterion {number}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
