from pathlib import Path

import pytest

from bevloc.geodesy import EnuFrame, GeodeticPoint
from bevloc.osm_map import parse_osm_xml

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def extract_vm():
    """Bundled 500 m x 500 m extract parsed once per session."""
    frame = EnuFrame(GeodeticPoint(42.3365, -71.0578, 0.0))
    return parse_osm_xml((DATA / "extract.osm").read_bytes(), frame)


# --- acceptance criterion reporting -------------------------------------

_criterion_lines: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    _criterion_lines.append(f"[criterion {number:2d}] {status}  {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_criterion_lines):
            terminalreporter.write_line(line)
