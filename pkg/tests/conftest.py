import math

import pytest

from evgrid import FEEDER240
from evgrid.grid import Bus, LineSegment, Network, VoltageLevel, load_network_dir
from evgrid.loads import LoadSnapshot, derive_nodal_pq, q_from_pf, read_meters, select_hour
from evgrid.rng import MT19937
from datetime import datetime, timezone

HOUR0 = datetime(2017, 7, 12, 13, tzinfo=timezone.utc)


def snapshot_from(p, pf, hour=HOUR0):
    return LoadSnapshot(hour, dict(p), {b: q_from_pf(v, pf[b]) for b, v in p.items()}, dict(pf))


def chain(n, r=0.3, x=0.5, length=1.0, ampacity=300.0, voltage=4.16, households=5, phases=3):
    """S -> B1 -> ... -> B{n-1} uniform chain."""
    ids = ["S"] + [f"B{i}" for i in range(1, n)]
    buses = {b: Bus(b, phases, 0 if b == "S" else households) for b in ids}
    lines = {
        f"L{i}": LineSegment(f"L{i}", ids[i - 1], ids[i], "overhead", phases, length, r, x, ampacity)
        for i in range(1, n)
    }
    return Network("S", VoltageLevel(voltage), buses, lines)


@pytest.fixture(scope="session")
def feeder():
    return load_network_dir(FEEDER240, VoltageLevel(4.16))


@pytest.fixture(scope="session")
def feeder_snapshots():
    series = read_meters((FEEDER240 / "meters.csv").read_text())
    return derive_nodal_pq(series, MT19937(42))


@pytest.fixture(scope="session")
def peak(feeder_snapshots):
    return select_hour(feeder_snapshots, "peak")


# acceptance criteria record their outcome here; printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, name, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {name} ({detail})")
