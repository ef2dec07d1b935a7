"""Synthetic feeders and meter data.

Everything here is made up: topology, impedances, ampacities and load
curves are typical-looking values chosen so that the study behaves like a
heavily loaded suburban system. None of it is measured utility data.
"""

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from evgrid.grid import Bus, LineSegment, Network, VoltageLevel
from evgrid.loads import MeterSeries, format_timestamp


@dataclass(frozen=True)
class LineType:
    construction: str
    phases: int
    r_ohm_per_mi: float
    x_ohm_per_mi: float
    ampacity_a: float


# large-conductor trunk cables keep series losses below one percent at 4.16 kV
TRUNK_OH = LineType("overhead", 3, 0.022, 0.045, 357.0)
TRUNK_UG = LineType("underground", 3, 0.025, 0.02, 330.0)
BRANCH_3PH = LineType("overhead", 3, 0.08, 0.14, 300.0)
LATERAL_2PH = LineType("overhead", 2, 0.15, 0.2, 280.0)
LATERAL_1PH = LineType("overhead", 1, 0.2, 0.22, 242.0)

# (prefix, non-source bus count, trunk length)
FEEDERS = (("1", 17, 6), ("2", 60, 14), ("3", 163, 24))


def _line(line_id, a, b, kind, length):
    return LineSegment(
        id=line_id, from_bus=a, to_bus=b, construction=kind.construction,
        phase_count=kind.phases, length=round(length, 3),
        r_per_length=kind.r_ohm_per_mi, x_per_length=kind.x_ohm_per_mi,
        rated_ampacity=kind.ampacity_a,
    )


def feeder240(seed=2017, total_households=1120, voltage_kv=4.16):
    """Three radial feeders (17, 60 and 163 buses) below one source bus.

    Buses are named ``<feeder><nnn>`` (``1001`` .. ``3163``) and the
    source is ``SUB``. Households are spread over the non-junction buses and
    sum to ``total_households``.
    """
    rng = np.random.default_rng(seed)
    buses = {"SUB": Bus("SUB", 3, 0)}
    lines = {}
    phases = {"SUB": 3}
    for prefix, count, trunk_len in FEEDERS:
        ids = [f"{prefix}{i:03d}" for i in range(1, count + 1)]
        trunk = ids[:trunk_len]
        prev = "SUB"
        for k, b in enumerate(trunk):
            kind = TRUNK_UG if k < 2 else TRUNK_OH
            lines[f"L{b}"] = _line(f"L{b}", prev, b, kind, rng.uniform(0.08, 0.2))
            phases[b] = 3
            prev = b
        rest = ids[trunk_len:]
        attach = list(trunk)
        i = 0
        while i < len(rest):
            run = min(int(rng.integers(1, 7)), len(rest) - i)
            parent = attach[int(rng.integers(0, len(attach)))]
            kind = [LATERAL_1PH, LATERAL_2PH, BRANCH_3PH][int(rng.choice(3, p=[0.6, 0.15, 0.25]))]
            if kind.phases > phases[parent]:
                kind = LATERAL_1PH
            for b in rest[i:i + run]:
                lines[f"L{b}"] = _line(f"L{b}", parent, b, kind, rng.uniform(0.04, 0.12))
                phases[b] = kind.phases
                parent = b
                if kind.phases == 3:
                    attach.append(b)
            i += run

    load_buses = [b for b in sorted(phases) if b != "SUB"]
    weights = rng.gamma(2.0, 1.0, size=len(load_buses))
    counts = np.floor(weights / weights.sum() * total_households).astype(int)
    short = total_households - int(counts.sum())
    for j in np.argsort(-(weights / weights.sum() * total_households - counts), kind="stable")[:short]:
        counts[j] += 1
    for b, h in zip(load_buses, counts):
        buses[b] = Bus(b, phases[b], int(h))
    return Network("SUB", VoltageLevel(voltage_kv), dict(sorted(buses.items())), lines)


def household_profile(hours):
    """Relative household demand by hour of day: overnight trough at 04:00, midday peak."""
    h = np.asarray(hours, dtype=float)
    return (
        0.55
        + 0.45 * np.exp(-((h - 13.0) ** 2) / (2 * 3.5**2))
        + 0.10 * np.exp(-((h - 19.0) ** 2) / (2 * 1.5**2))
        - 0.20 * np.exp(-((h - 4.0) ** 2) / (2 * 2.0**2))
    )


def synthetic_meters(network, start, n_hours, peak_kw=3.2, seed=0, peak_day=2):
    """Hourly kWh per bus proportional to its households with mild noise.

    Day ``peak_day`` (0-based) is scaled up so that its 13:00 hour is the
    global peak of the series.
    """
    rng = np.random.default_rng(seed)
    stamps = [start + timedelta(hours=k) for k in range(n_hours)]
    hod = np.array([t.hour for t in stamps])
    day = np.array([(t - start).days for t in stamps])
    shape = household_profile(hod) / household_profile([13.0])[0]
    shape = shape * np.where(day == peak_day, 1.0, 0.93 - 0.02 * (day % 3))
    out = []
    for b, bus in network.buses.items():
        if bus.households == 0:
            continue
        noise = rng.lognormal(0.0, 0.05, size=n_hours)
        kwh = bus.households * peak_kw * shape * noise
        out.append(MeterSeries(b, tuple(stamps), tuple(float(round(v, 4)) for v in kwh)))
    return out


def write_meters(series):
    rows = ["bus_id,timestamp,kwh"]
    for s in series:
        for t, e in zip(s.timestamps, s.energy):
            rows.append(f"{s.bus_id},{format_timestamp(t)},{e!r}")
    return "\n".join(rows) + "\n"


STUDY_START = datetime(2017, 7, 10, tzinfo=timezone.utc)


def random_radial(rng, n_buses, max_phase=3, r_range=(0.0, 0.5), load_kw=(0.0, 400.0)):
    """Random tree network plus matching loads (p_kw, q_kvar, pf) for tests."""
    ids = ["S"] + [f"B{i}" for i in range(1, n_buses)]
    buses = {"S": Bus("S", 3, 0)}
    lines = {}
    phases = {"S": 3}
    for i in range(1, n_buses):
        parent = ids[int(rng.integers(0, i))]
        ph = int(rng.integers(1, min(phases[parent], max_phase) + 1))
        phases[ids[i]] = ph
        buses[ids[i]] = Bus(ids[i], ph, int(rng.integers(0, 10)))
        lines[f"L{i}"] = LineSegment(
            id=f"L{i}", from_bus=parent, to_bus=ids[i], phase_count=ph,
            construction="overhead", length=float(rng.uniform(0.05, 1.0)),
            r_per_length=float(rng.uniform(*r_range)), x_per_length=float(rng.uniform(*r_range)),
            rated_ampacity=float(rng.uniform(242.0, 357.0)),
        )
    p = {b: float(rng.uniform(*load_kw)) for b in ids[1:]}
    pf = {b: float(rng.uniform(0.9, 0.95)) for b in ids[1:]}
    return Network("S", VoltageLevel(4.16), buses, lines), p, pf
