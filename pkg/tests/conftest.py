import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

_acceptance: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.outcome != "passed":
        label = report.outcome.upper() if report.outcome != "passed" else "PASS"
        _acceptance[name] = (label, report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        label, _ = _acceptance[name]
        terminalreporter.write_line(f"{label:7s} {name}")


@pytest.fixture
def make_image(tmp_path):
    """Write a random RGB image and return its path."""
    rng = np.random.default_rng(1234)

    def _make(name: str, h: int, w: int, fmt: str = "PNG") -> Path:
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(rng.integers(0, 256, (h, w, 3), dtype=np.uint8)).save(path, format=fmt)
        return path

    return _make
