"""Hourly smart-meter energy to nodal P/Q spot loads."""

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

PF_LOW, PF_HIGH = 0.9, 0.95
PF_SPAN = 0.05
HOUR = timedelta(hours=1)
HOURS_PER_YEAR = 8760

METER_COLUMNS = ["bus_id", "timestamp", "kwh"]
LOAD_COLUMNS = ["bus_id", "timestamp", "p_kw", "q_kvar", "pf"]


class IngestError(ValueError):
    pass


class GapError(IngestError):
    def __init__(self, bus_id, hour):
        self.bus_id = bus_id
        self.hour = hour
        super().__init__(f"missing hour for bus {bus_id}: {format_timestamp(hour)}")


def parse_timestamp(text):
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts):
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def q_from_pf(p_kw, pf):
    return p_kw * math.tan(math.acos(pf))


@dataclass(frozen=True)
class MeterSeries:
    bus_id: str
    timestamps: tuple
    energy: tuple

    def __post_init__(self):
        if len(self.timestamps) != len(self.energy):
            raise IngestError(f"bus {self.bus_id}: timestamps and energy differ in length")
        for e in self.energy:
            if not e >= 0:
                raise IngestError(f"bus {self.bus_id}: negative or invalid energy {e}")
        for prev, cur in zip(self.timestamps, self.timestamps[1:]):
            step = cur - prev
            if step > HOUR and step % HOUR == timedelta(0):
                raise GapError(self.bus_id, prev + HOUR)
            if step != HOUR:
                raise IngestError(
                    f"bus {self.bus_id}: timestamps must be strictly increasing and hourly "
                    f"(at {format_timestamp(cur)})"
                )


@dataclass(frozen=True)
class LoadSnapshot:
    """Per-bus spot loads for one hour.

    ``pf`` is the power factor assigned to each bus during ingestion; it is
    carried along so that EV injection can keep the bus power factor.
    """

    hour: datetime
    p_kw: dict = field(default_factory=dict)
    q_kvar: dict = field(default_factory=dict)
    pf: dict = field(default_factory=dict)

    @property
    def buses(self):
        return list(self.p_kw)

    def mean_p(self):
        if not self.p_kw:
            return 0.0
        return math.fsum(self.p_kw.values()) / len(self.p_kw)


def read_meters(text):
    """Parse ``meters.csv`` text into one MeterSeries per bus (sorted by bus id)."""
    reader = csv.reader(line for line in io.StringIO(text) if not line.startswith("#"))
    header = [h.strip() for h in next(reader, [])]
    if header != METER_COLUMNS:
        raise IngestError(f"meters: expected header {','.join(METER_COLUMNS)}")
    rows = {}
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise IngestError(f"meters row {rowno}: expected 3 fields, got {len(row)}")
        bus_id, ts, kwh = (c.strip() for c in row)
        try:
            rows.setdefault(bus_id, []).append((parse_timestamp(ts), float(kwh)))
        except ValueError as exc:
            raise IngestError(f"meters row {rowno}: {exc}") from None
    series = []
    for bus_id in sorted(rows):
        pairs = rows[bus_id]
        series.append(MeterSeries(bus_id, tuple(t for t, _ in pairs), tuple(e for _, e in pairs)))
    return series


def derive_nodal_pq(series, rng):
    """Hourly snapshots from meter series.

    Energy over one hour is taken as constant demand, so P in kW equals the
    hour's kWh. Each bus draws one power factor from [0.9, 0.95), in
    ascending bus id order, and Q follows from it.
    """
    series = sorted(series, key=lambda s: s.bus_id)
    if not series:
        return []
    hours = sorted({t for s in series for t in s.timestamps})
    for prev, cur in zip(hours, hours[1:]):
        if cur - prev != HOUR:
            missing = prev + HOUR
            for s in series:
                if missing not in s.timestamps:
                    raise GapError(s.bus_id, missing)
    hour_index = {h: i for i, h in enumerate(hours)}
    for s in series:
        if len(s.timestamps) != len(hours):
            have = set(s.timestamps)
            raise GapError(s.bus_id, next(h for h in hours if h not in have))

    pf = {s.bus_id: PF_LOW + PF_SPAN * rng.next_f64() for s in series}
    p_rows = [dict() for _ in hours]
    for s in series:
        for t, e in zip(s.timestamps, s.energy):
            p_rows[hour_index[t]][s.bus_id] = e
    snapshots = []
    for h, p in zip(hours, p_rows):
        q = {b: q_from_pf(v, pf[b]) for b, v in p.items()}
        snapshots.append(LoadSnapshot(h, p, q, dict(pf)))
    return snapshots


def round_half_up(x):
    return math.floor(x + 0.5) if x >= 0 else -math.floor(-x + 0.5)


def per_household_average(total_kwh, declared_total, hours=HOURS_PER_YEAR):
    """(kWh per household over the period, average kWh per household-hour)."""
    if declared_total <= 0:
        raise ValueError("declared_total must be positive")
    avg = total_kwh / declared_total
    return avg, avg / hours


def estimate_households(annual_energy, declared_total):
    """Household count per bus from the bus's share of total energy.

    ``annual_energy`` maps bus id to kWh (a plain sequence is indexed by
    position). Counts are rounded half-up, then the buses with the largest
    counts are adjusted one household each (ties by ascending id) until the
    counts sum to ``declared_total``.
    """
    if declared_total <= 0:
        raise ValueError("declared_total must be positive")
    if not isinstance(annual_energy, dict):
        annual_energy = dict(enumerate(annual_energy))
    if any(e < 0 for e in annual_energy.values()):
        raise ValueError("annual energy must be non-negative")
    total = math.fsum(annual_energy.values())
    if total <= 0:
        raise ValueError("total energy must be positive")
    avg = total / declared_total
    counts = {b: round_half_up(e / avg) for b, e in annual_energy.items()}

    diff = sum(counts.values()) - declared_total
    while diff != 0:
        step = -1 if diff > 0 else 1
        ranked = sorted(
            (b for b, c in counts.items() if step > 0 or c > 0),
            key=lambda b: (-counts[b], str(b)),
        )
        for b in ranked[: abs(diff)]:
            counts[b] += step
            diff += step
    return counts


def select_hour(snapshots, selector):
    """Pick the peak, off-peak or an indexed hour; ties go to the earliest hour."""
    if not snapshots:
        raise ValueError("no snapshots to select from")
    if isinstance(selector, int) and not isinstance(selector, bool):
        if not 0 <= selector < len(snapshots):
            raise ValueError(f"hour index {selector} out of range 0..{len(snapshots) - 1}")
        return snapshots[selector]
    ordered = sorted(snapshots, key=lambda s: s.hour)
    means = [s.mean_p() for s in ordered]
    if selector == "peak":
        target = max(means)
    elif selector == "offpeak":
        target = min(means)
    else:
        raise ValueError(f"unknown hour selector {selector!r}")
    return ordered[means.index(target)]


def parse_hour_selector(text):
    text = str(text).strip().lower()
    if text in ("peak", "offpeak"):
        return text
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"hour must be peak, offpeak or an index, got {text!r}") from None


def write_loads(snapshots, header=None):
    out = io.StringIO()
    if header:
        out.write(f"# {header}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(LOAD_COLUMNS)
    for snap in snapshots:
        ts = format_timestamp(snap.hour)
        for b in snap.p_kw:
            w.writerow([b, ts, repr(snap.p_kw[b]), repr(snap.q_kvar[b]), repr(snap.pf[b])])
    return out.getvalue()


def read_loads(text):
    """Parse ``loads.csv`` text into snapshots ordered by hour."""
    reader = csv.reader(line for line in io.StringIO(text) if not line.startswith("#"))
    header = [h.strip() for h in next(reader, [])]
    if header != LOAD_COLUMNS:
        raise IngestError(f"loads: expected header {','.join(LOAD_COLUMNS)}")
    by_hour = {}
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise IngestError(f"loads row {rowno}: expected 5 fields, got {len(row)}")
        try:
            b, ts, p, q, pf = row
            p, q, pf = float(p), float(q), float(pf)
            rec = by_hour.setdefault(parse_timestamp(ts), ({}, {}, {}))
        except ValueError as exc:
            raise IngestError(f"loads row {rowno}: {exc}") from None
        if p < 0 or not 0 < pf <= 1:
            raise IngestError(f"loads row {rowno}: invalid p_kw or pf")
        rec[0][b], rec[1][b], rec[2][b] = p, q, pf
    return [LoadSnapshot(h, *by_hour[h]) for h in sorted(by_hour)]
