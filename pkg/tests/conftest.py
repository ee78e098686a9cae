import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_VERDICTS = []


def record_verdict(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({name}): {detail}"
    _VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split("criterion ")[1].split()[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def oval():
    from tinylidarnet.sim import get_track

    return get_track("oval")


@pytest.fixture(scope="session")
def uturn():
    from tinylidarnet.sim import get_track

    return get_track("uturn")


@pytest.fixture(scope="session")
def small_data(oval):
    """Two expert laps on the oval (one per direction)."""
    from tinylidarnet.expert import collect

    return collect(oval, n_laps=2, seed=0)
