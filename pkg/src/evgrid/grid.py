"""Radial feeder data model, CSV parsing and topology checks."""

import csv
import io
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from pathlib import Path

STUDY_VOLTAGES_KV = (4.16, 6.9, 13.8, 23.9, 34.5)

BUS_COLUMNS = ["bus_id", "phases", "households"]
LINE_COLUMNS = [
    "line_id",
    "from_bus",
    "to_bus",
    "phases",
    "construction",
    "length_mi",
    "r_ohm_per_mi",
    "x_ohm_per_mi",
    "ampacity_a",
]
CONSTRUCTION_CODES = {"OH": "overhead", "UG": "underground"}
CONSTRUCTION_NAMES = {v: k for k, v in CONSTRUCTION_CODES.items()}


class NetworkError(ValueError):
    """Malformed network input or non-radial topology."""


@dataclass(frozen=True)
class VoltageLevel:
    v_ll_kv: float

    def __post_init__(self):
        if not self.v_ll_kv > 0:
            raise ValueError(f"voltage must be positive, got {self.v_ll_kv} kV")

    @property
    def v_ln_volts(self):
        return self.v_ll_kv * 1000.0 / math.sqrt(3.0)


@dataclass(frozen=True)
class Bus:
    id: str
    phase_count: int = 3
    households: int = 0

    def __post_init__(self):
        if self.phase_count not in (1, 2, 3):
            raise NetworkError(f"bus {self.id}: phases must be 1, 2 or 3")
        if self.households < 0:
            raise NetworkError(f"bus {self.id}: households must be >= 0")


@dataclass(frozen=True)
class LineSegment:
    id: str
    from_bus: str
    to_bus: str
    construction: str = "overhead"
    phase_count: int = 3
    length: float = 0.0
    r_per_length: float = 0.0
    x_per_length: float = 0.0
    rated_ampacity: float = 1.0

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise NetworkError(f"line {self.id}: from_bus equals to_bus")
        if self.construction not in CONSTRUCTION_NAMES:
            raise NetworkError(f"line {self.id}: unknown construction {self.construction!r}")
        if self.phase_count not in (1, 2, 3):
            raise NetworkError(f"line {self.id}: phases must be 1, 2 or 3")
        if self.length < 0 or self.r_per_length < 0 or self.x_per_length < 0:
            raise NetworkError(f"line {self.id}: length and impedance must be >= 0")
        if not self.rated_ampacity > 0:
            raise NetworkError(f"line {self.id}: ampacity must be positive")

    @property
    def impedance(self):
        """Series impedance of one phase conductor in ohms."""
        return complex(self.r_per_length * self.length, self.x_per_length * self.length)


@dataclass(frozen=True)
class Network:
    source_bus: str
    voltage: VoltageLevel
    buses: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)

    @property
    def total_households(self):
        return sum(b.households for b in self.buses.values())

    def households(self):
        return {bus_id: b.households for bus_id, b in self.buses.items()}


def _read_rows(text, columns, what):
    reader = csv.reader(line for line in io.StringIO(text) if not line.startswith("#"))
    try:
        header = next(reader)
    except StopIteration:
        raise NetworkError(f"{what}: empty table") from None
    header = [h.strip() for h in header]
    if header != columns:
        raise NetworkError(f"{what}: expected header {','.join(columns)}, got {','.join(header)}")
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(columns):
            raise NetworkError(f"{what} row {rowno}: expected {len(columns)} fields, got {len(row)}")
        yield rowno, dict(zip(columns, (c.strip() for c in row)))


def parse_network(bus_table, line_table, source_id, voltage):
    """Materialize a Network from bus and line CSV text. Topology is not checked."""
    if not isinstance(voltage, VoltageLevel):
        voltage = VoltageLevel(float(voltage))

    buses = {}
    for rowno, row in _read_rows(bus_table, BUS_COLUMNS, "buses"):
        try:
            bus = Bus(row["bus_id"], int(row["phases"]), int(row["households"]))
        except ValueError as exc:
            raise NetworkError(f"buses row {rowno}: {exc}") from None
        if not bus.id:
            raise NetworkError(f"buses row {rowno}: empty bus_id")
        if bus.id in buses:
            raise NetworkError(f"buses row {rowno}: duplicate bus {bus.id}")
        buses[bus.id] = bus

    lines = {}
    for rowno, row in _read_rows(line_table, LINE_COLUMNS, "lines"):
        for end in ("from_bus", "to_bus"):
            if row[end] not in buses:
                raise NetworkError(f"lines row {rowno}: unknown bus {row[end]}")
        code = row["construction"].upper()
        if code not in CONSTRUCTION_CODES:
            raise NetworkError(f"lines row {rowno}: construction must be OH or UG")
        try:
            line = LineSegment(
                id=row["line_id"],
                from_bus=row["from_bus"],
                to_bus=row["to_bus"],
                construction=CONSTRUCTION_CODES[code],
                phase_count=int(row["phases"]),
                length=float(row["length_mi"]),
                r_per_length=float(row["r_ohm_per_mi"]),
                x_per_length=float(row["x_ohm_per_mi"]),
                rated_ampacity=float(row["ampacity_a"]),
            )
        except ValueError as exc:
            raise NetworkError(f"lines row {rowno}: {exc}") from None
        if line.id in lines:
            raise NetworkError(f"lines row {rowno}: duplicate line {line.id}")
        if line.phase_count > buses[line.from_bus].phase_count:
            raise NetworkError(f"lines row {rowno}: line has more phases than bus {line.from_bus}")
        lines[line.id] = line

    if source_id not in buses:
        raise NetworkError(f"unknown source bus {source_id}")
    return Network(source_id, voltage, buses, lines)


def serialize_network(network):
    """Return (bus_table, line_table) CSV text; inverse of parse_network."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(BUS_COLUMNS)
    for b in network.buses.values():
        w.writerow([b.id, b.phase_count, b.households])
    bus_text = out.getvalue()

    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(LINE_COLUMNS)
    for ln in network.lines.values():
        w.writerow([
            ln.id, ln.from_bus, ln.to_bus, ln.phase_count,
            CONSTRUCTION_NAMES[ln.construction],
            repr(ln.length), repr(ln.r_per_length), repr(ln.x_per_length), repr(ln.rated_ampacity),
        ])
    return bus_text, out.getvalue()


def load_network_dir(path, voltage, source_id=None):
    """Read ``buses.csv`` and ``lines.csv`` from a directory.

    Without ``source_id`` the source is the one bus that never appears as a
    line's ``to_bus``.
    """
    path = Path(path)
    bus_text = (path / "buses.csv").read_text(encoding="utf-8")
    line_text = (path / "lines.csv").read_text(encoding="utf-8")
    if source_id is None:
        ids = [row["bus_id"] for _, row in _read_rows(bus_text, BUS_COLUMNS, "buses")]
        fed = {row["to_bus"] for _, row in _read_rows(line_text, LINE_COLUMNS, "lines")}
        roots = [b for b in ids if b not in fed]
        if len(roots) != 1:
            raise NetworkError(f"cannot infer source bus: candidates {roots}")
        source_id = roots[0]
    return parse_network(bus_text, line_text, source_id, voltage)


@dataclass(frozen=True)
class Topology:
    """Traversal order of a radial network.

    ``order`` lists buses source first with every child after its parent;
    ``parent_line`` maps each non-source bus to the line feeding it.
    """

    order: tuple
    parent_line: dict
    children: dict


def validate_radial(network):
    """Check that the network is a tree rooted at the source and return its order."""
    buses = network.buses
    adjacency = defaultdict(list)
    for ln in network.lines.values():
        adjacency[ln.from_bus].append((ln.to_bus, ln.id))
        adjacency[ln.to_bus].append((ln.from_bus, ln.id))
    for nbrs in adjacency.values():
        nbrs.sort()

    source = network.source_bus
    order = [source]
    parent_line = {}
    children = {b: [] for b in buses}
    seen = {source}
    queue = deque([source])
    while queue:
        bus = queue.popleft()
        via = parent_line.get(bus)
        for nbr, line_id in adjacency[bus]:
            if line_id == via:
                continue
            if nbr in seen:
                raise NetworkError("not radial")
            seen.add(nbr)
            parent_line[nbr] = line_id
            children[bus].append(nbr)
            order.append(nbr)
            queue.append(nbr)
    for bus_id in sorted(buses):
        if bus_id not in seen:
            raise NetworkError(f"unreachable bus {bus_id}")
    return Topology(tuple(order), parent_line, {k: tuple(v) for k, v in children.items()})


def rebase_voltage(network, voltage):
    """Same network operated at a different line-to-line voltage."""
    if not isinstance(voltage, VoltageLevel):
        voltage = VoltageLevel(float(voltage))
    return replace(network, voltage=voltage)
