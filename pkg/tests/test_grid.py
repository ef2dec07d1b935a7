import numpy as np
import pytest
from dataclasses import fields
from hypothesis import given, settings
from hypothesis import strategies as st

from evgrid.grid import (
    LINE_COLUMNS,
    Bus,
    LineSegment,
    Network,
    NetworkError,
    VoltageLevel,
    parse_network,
    rebase_voltage,
    serialize_network,
    validate_radial,
)
from evgrid.synthetic import random_radial

BUSES = "bus_id,phases,households\nS,3,0\nA,3,4\n"
LINES = "{}\nL1,S,A,3,OH,1.0,0.3,0.6,300\n".format(",".join(LINE_COLUMNS))
HEADER = ",".join(LINE_COLUMNS)


def test_parse_two_bus():
    net = parse_network(BUSES, LINES, "S", VoltageLevel(4.16))
    assert len(net.buses) == 2 and len(net.lines) == 1
    line = net.lines["L1"]
    assert line.construction == "overhead"
    assert line.impedance == complex(0.3, 0.6)
    assert net.buses["A"].households == 4


def test_unknown_bus():
    lines = f"{HEADER}\nL1,S,X,3,OH,1,0.3,0.6,300\n"
    with pytest.raises(NetworkError, match="unknown bus X"):
        parse_network(BUSES, lines, "S", VoltageLevel(4.16))


@pytest.mark.parametrize(
    "buses, lines, match",
    [
        ("bus_id,phases,households\nS,3,0\nS,3,1\n", LINES, "row 3: duplicate bus S"),
        ("bus_id,phases,households\nS,3,0\nA,3\n", LINES, "row 3"),
        ("bus_id,phases,households\nS,3,0\nA,4,1\n", LINES, "row 3"),
        ("bus_id,phases,households\nS,3,0\nA,3,-2\n", LINES, "row 3"),
        (BUSES, f"{HEADER}\nL1,S,A,3,OH,1,0.3,0.6,0\n", "row 2"),
        (BUSES, f"{HEADER}\nL1,S,A,3,XX,1,0.3,0.6,300\n", "row 2"),
        (BUSES, f"{HEADER}\nL1,S,A,3,OH,abc,0.3,0.6,300\n", "row 2"),
        (BUSES, f"{HEADER}\nL1,S,A,3,OH,1,0.3,0.6,300\nL1,A,S,3,OH,1,0.3,0.6,300\n", "duplicate line"),
        ("bus_id,phases,households\nS,1,0\nA,3,1\n", LINES, "more phases"),
        ("id,phases,households\nS,3,0\n", LINES, "header"),
    ],
)
def test_parse_errors(buses, lines, match):
    with pytest.raises(NetworkError, match=match):
        parse_network(buses, lines, "S", VoltageLevel(4.16))


def synthetic_tree_tables(n):
    rng = np.random.default_rng(n)
    buses = ["bus_id,phases,households", "SRC,3,0"]
    lines = [HEADER]
    ids = ["SRC"]
    for i in range(1, n):
        b = f"N{i:03d}"
        buses.append(f"{b},3,{int(rng.integers(0, 9))}")
        lines.append(f"L{i:03d},{ids[int(rng.integers(0, i))]},{b},3,OH,0.1,0.3,0.6,300")
        ids.append(b)
    return "\n".join(buses) + "\n", "\n".join(lines) + "\n"


def test_parse_241_bus_tree():
    bus_text, line_text = synthetic_tree_tables(241)
    net = parse_network(bus_text, line_text, "SRC", VoltageLevel(4.16))
    assert len(net.buses) == 241 and len(net.lines) == 240
    assert len(validate_radial(net).order) == 241


def _net(edges, extra_buses=()):
    names = sorted({b for e in edges for b in e} | set(extra_buses) | {"S"})
    buses = {b: Bus(b) for b in names}
    lines = {f"L{i}": LineSegment(f"L{i}", a, b) for i, (a, b) in enumerate(edges)}
    return Network("S", VoltageLevel(4.16), buses, lines)


def test_chain_order():
    assert validate_radial(_net([("S", "A"), ("A", "B")])).order == ("S", "A", "B")


def test_children_in_ascending_id_order():
    topo = validate_radial(_net([("S", "C"), ("S", "A"), ("A", "B"), ("S", "B2")]))
    assert topo.order == ("S", "A", "B2", "C", "B")


def test_reversed_line_direction_is_accepted():
    topo = validate_radial(_net([("A", "S"), ("B", "A")]))
    assert topo.order == ("S", "A", "B")


def test_triangle_not_radial():
    with pytest.raises(NetworkError, match="not radial"):
        validate_radial(_net([("S", "A"), ("A", "B"), ("B", "S")]))


def test_parallel_lines_not_radial():
    with pytest.raises(NetworkError, match="not radial"):
        validate_radial(_net([("S", "A"), ("A", "S")]))


def test_isolated_bus():
    with pytest.raises(NetworkError, match="unreachable bus C"):
        validate_radial(_net([("S", "A")], extra_buses=["C"]))


@given(st.integers(2, 40), st.integers(0, 2**31), st.booleans())
@settings(max_examples=60, deadline=None)
def test_radial_iff_tree(n, seed, add_edge):
    rng = np.random.default_rng(seed)
    name = lambda k: "S" if k == 0 else f"B{k}"
    edges = [(name(int(rng.integers(0, i))), name(i)) for i in range(1, n)]
    if add_edge and n >= 3:
        i, j = sorted(rng.choice(np.arange(1, n), size=2, replace=False))
        edges.append((f"B{i}", f"B{j}") if rng.random() < 0.5 else ("S", f"B{j}"))
        with pytest.raises(NetworkError):
            validate_radial(_net(edges))
    else:
        topo = validate_radial(_net(edges))
        assert len(topo.order) == n
        pos = {b: k for k, b in enumerate(topo.order)}
        for b, line_id in topo.parent_line.items():
            line = _net(edges).lines[line_id]
            parent = line.from_bus if line.to_bus == b else line.to_bus
            assert pos[parent] < pos[b]


@given(st.integers(2, 30), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_serialize_round_trip(n, seed):
    net, _, _ = random_radial(np.random.default_rng(seed), n)
    bus_text, line_text = serialize_network(net)
    again = parse_network(bus_text, line_text, net.source_bus, net.voltage)
    assert again == net


def test_rebase_identity_and_change(feeder):
    assert rebase_voltage(feeder, VoltageLevel(4.16)) == feeder
    up = rebase_voltage(feeder, 13.8)
    assert up.voltage == VoltageLevel(13.8)
    for f in fields(Network):
        if f.name != "voltage":
            assert getattr(up, f.name) == getattr(feeder, f.name)


@pytest.mark.parametrize("kv", [0.0, -4.16])
def test_rebase_rejects_non_positive(feeder, kv):
    with pytest.raises(ValueError):
        rebase_voltage(feeder, kv)


def test_bundled_feeder_shape(feeder):
    assert len(feeder.buses) == 241
    assert len(feeder.lines) == 240
    assert feeder.total_households == 1120
    amps = {ln.rated_ampacity for ln in feeder.lines.values()}
    assert min(amps) >= 242 and max(amps) <= 357
    validate_radial(feeder)
