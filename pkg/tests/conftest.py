from __future__ import annotations

import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cparchive.anycast import Bus
from cparchive.archive import Archive
from cparchive.capability import Minter
from cparchive.gateway import Gateway
from cparchive.journal import Journal
from cparchive.pagecache import RecordingAdvisor, ScriptedResidency


def seeded_minter(seed: int = 1234) -> Minter:
    return Minter(random.Random(seed).randbytes)


@pytest.fixture
def advisor():
    return RecordingAdvisor()


@pytest.fixture
def residency():
    return ScriptedResidency()


@pytest.fixture
def archive(tmp_path, advisor, residency):
    a = Archive(tmp_path / "archive.dat", advisor=advisor, residency=residency, journal=Journal())
    yield a
    a.close()


@pytest.fixture
def bus(archive):
    return Bus(archive)


@pytest.fixture
def gateway(bus):
    return Gateway(bus)


def fill(archive: Archive, data: bytes):
    """Append *data* as a frozen, released region; returns its entity."""
    cap = archive.allocate_mutable(len(data))
    archive.write_mutable(cap, 0, data)
    entity = archive.freeze(cap)
    archive.release_mutable(cap)
    return entity


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.report_lines():
        terminalreporter.write_line(line)
