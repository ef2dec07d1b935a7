"""Forward/backward sweep power flow for radial feeders with constant-power loads.

The feeder is represented by a balanced per-phase equivalent. Voltages are
line-to-neutral phasors in volts. Currents ``J`` are the sum over a line's
conductors, so a line with ``n`` phases and per-conductor impedance ``Z``
drops ``Z * J / n`` volts and dissipates ``Z * |J|^2 / n``.
"""

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from evgrid.grid import VoltageLevel, validate_radial

SQRT3 = math.sqrt(3.0)
COLLAPSE_PU = 0.5


@dataclass(frozen=True)
class SolverSettings:
    """``tolerance`` bounds the power residual in kW; ``voltage_tolerance`` the
    per-unit voltage change between successive sweeps."""

    base_kva: float = 1000.0
    tolerance: float = 1e-6 * 1000.0
    voltage_tolerance: float = 1e-10
    max_iterations: int = 100
    source_pu: float = 1.0

    def __post_init__(self):
        if not self.tolerance > 0 or not self.voltage_tolerance > 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.source_pu > 0:
            raise ValueError("source voltage must be positive")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class PowerFlowSolution:
    voltages: dict
    v_base: float
    line_s: dict
    line_loss: dict
    i_actual: dict
    i_rated: dict
    source_s: complex
    converged: bool
    iterations: int
    max_mismatch: float
    collapsed: bool = False
    message: str = ""
    load_s: dict = field(default_factory=dict)

    def v_pu(self, bus):
        return abs(self.voltages[bus]) / self.v_base

    def angle(self, bus):
        return cmath.phase(self.voltages[bus])

    @property
    def s_kva(self):
        return {k: abs(v) for k, v in self.line_s.items()}

    @property
    def total_loss(self):
        return sum(self.line_loss.values(), 0j)

    @property
    def total_load(self):
        return sum(self.load_s.values(), 0j)


def line_current(s_kva, voltage, phase_count):
    """Per-phase current in amperes for apparent power ``s_kva`` at the nominal voltage.

    Three-phase lines use the line-to-line voltage, single-phase lines the
    line-to-neutral voltage, and two-phase lines split S over two
    line-to-neutral conductors.
    """
    v_ll = voltage.v_ll_kv if isinstance(voltage, VoltageLevel) else float(voltage)
    if not v_ll > 0:
        raise ValueError(f"voltage must be positive, got {v_ll}")
    if s_kva < 0:
        raise ValueError("apparent power must be non-negative")
    v_ln = v_ll / SQRT3
    if phase_count == 3:
        return s_kva / (SQRT3 * v_ll)
    if phase_count == 1:
        return s_kva / v_ln
    if phase_count == 2:
        return s_kva / (2.0 * v_ln)
    raise ValueError(f"phase_count must be 1, 2 or 3, got {phase_count}")


def _load_va(network, snapshot):
    loads = {}
    for b in network.buses:
        if b == network.source_bus:
            loads[b] = 0j
            continue
        p = snapshot.p_kw.get(b, 0.0)
        q = snapshot.q_kvar.get(b, 0.0)
        loads[b] = complex(p, q) * 1000.0
    for b in snapshot.p_kw:
        if b not in network.buses:
            raise ValueError(f"snapshot has load at unknown bus {b}")
    return loads


def _backward(topo, network, voltages, loads):
    """Line currents (total over conductors) from constant-power injections."""
    acc = {b: (loads[b] / voltages[b]).conjugate() for b in topo.order}
    currents = {}
    for b in reversed(topo.order[1:]):
        line = network.lines[topo.parent_line[b]]
        currents[line.id] = acc[b]
        acc[_parent(line, b)] += acc[b]
    return currents


def _parent(line, bus):
    return line.from_bus if line.to_bus == bus else line.to_bus


def _finish(network, topo, voltages, loads, converged, iterations, collapsed, message):
    currents = _backward(topo, network, voltages, loads) if not collapsed else {}
    line_s, line_loss, i_actual, i_rated = {}, {}, {}, {}
    mismatch = 0.0
    for b in topo.order[1:]:
        line = network.lines[topo.parent_line[b]]
        j = currents.get(line.id, 0j)
        n = line.phase_count
        z_eff = line.impedance / n
        v_send = voltages[_parent(line, b)]
        line_s[line.id] = v_send * j.conjugate() / 1000.0
        line_loss[line.id] = z_eff * abs(j) ** 2 / 1000.0
        kvl = (v_send - voltages[b] - z_eff * j) * j.conjugate() / 1000.0
        mismatch = max(mismatch, abs(kvl))
        i_actual[line.id] = line_current(abs(line_s[line.id]), network.voltage, n)
        i_rated[line.id] = line.rated_ampacity
    head = sum((currents.get(topo.parent_line[c], 0j) for c in topo.children[network.source_bus]), 0j)
    source_s = voltages[network.source_bus] * head.conjugate() / 1000.0
    if math.isnan(mismatch):
        converged = False
    return PowerFlowSolution(
        voltages=voltages,
        v_base=network.voltage.v_ln_volts,
        line_s=line_s,
        line_loss=line_loss,
        i_actual=i_actual,
        i_rated=i_rated,
        source_s=source_s,
        converged=converged,
        iterations=iterations,
        max_mismatch=mismatch,
        collapsed=collapsed,
        message=message,
        load_s={b: s / 1000.0 for b, s in loads.items()},
    )


def solve(network, snapshot, settings=None):
    """Iterate backward current sweeps and forward voltage sweeps to convergence.

    Non-convergence and voltage collapse are reported through
    ``converged``/``collapsed`` on the returned solution, never raised.
    """
    settings = settings or SolverSettings()
    topo = validate_radial(network)
    loads = _load_va(network, snapshot)
    v_base = network.voltage.v_ln_volts
    v_src = complex(settings.source_pu * v_base, 0.0)
    voltages = {b: v_src for b in topo.order}

    steps = []
    for b in topo.order[1:]:
        line = network.lines[topo.parent_line[b]]
        steps.append((b, _parent(line, b), line.id, line.impedance / line.phase_count))

    converged = collapsed = False
    message = ""
    iterations = 0
    for iterations in range(1, settings.max_iterations + 1):
        currents = _backward(topo, network, voltages, loads)
        new = {network.source_bus: v_src}
        for b, parent, line_id, z_eff in steps:
            new[b] = new[parent] - z_eff * currents[line_id]
        dv = max(abs(new[b] - voltages[b]) for b in topo.order) / v_base
        voltages = new
        low = min(abs(v) for v in voltages.values()) / v_base
        if not low >= COLLAPSE_PU:
            collapsed = True
            message = f"voltage collapse: minimum {low:.3f} p.u. at iteration {iterations}"
            break
        if dv < settings.voltage_tolerance:
            converged = True
            break
    else:
        message = f"no convergence in {settings.max_iterations} iterations (last change {dv:.3e} p.u.)"

    sol = _finish(network, topo, voltages, loads, converged, iterations, collapsed, message)
    if converged and sol.max_mismatch > settings.tolerance:
        return _finish(
            network, topo, voltages, loads, False, iterations, False,
            f"power residual {sol.max_mismatch:.3e} kW above tolerance",
        )
    return sol


def reference_solve(network, snapshot, settings=None, max_iterations=2000, tol=1e-14):
    """Dense nodal-admittance fixed point; a test oracle for small networks.

    Buses joined by zero-impedance lines are merged before the admittance
    matrix is built.
    """
    settings = settings or SolverSettings()
    topo = validate_radial(network)
    loads = _load_va(network, snapshot)
    v_base = network.voltage.v_ln_volts
    v_src = complex(settings.source_pu * v_base, 0.0)

    group = {b: b for b in network.buses}

    def find(b):
        while group[b] != b:
            b = group[b]
        return b

    for line in network.lines.values():
        if line.impedance == 0:
            ra, rb = find(line.from_bus), find(line.to_bus)
            if ra != rb:
                if rb == find(network.source_bus):
                    ra, rb = rb, ra
                group[rb] = ra
    slack = find(network.source_bus)
    nodes = sorted({find(b) for b in network.buses} - {slack})
    index = {b: i for i, b in enumerate(nodes)}
    n = len(nodes)

    voltages = {b: v_src for b in network.buses}
    if n == 0:
        return _finish(network, topo, voltages, loads, True, 0, False, "")

    y = np.zeros((n, n), dtype=complex)
    y_src = np.zeros(n, dtype=complex)
    for line in network.lines.values():
        if line.impedance == 0:
            continue
        adm = line.phase_count / line.impedance
        a, b = find(line.from_bus), find(line.to_bus)
        for u, w in ((a, b), (b, a)):
            if u == slack:
                continue
            y[index[u], index[u]] += adm
            if w == slack:
                y_src[index[u]] -= adm
            else:
                y[index[u], index[w]] -= adm
    s = np.zeros(n, dtype=complex)
    for b, val in loads.items():
        root = find(b)
        if root != slack:
            s[index[root]] += val

    v = np.full(n, v_src, dtype=complex)
    rhs_src = y_src * v_src
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        inj = np.conj(s / v)
        new = np.linalg.solve(y, -inj - rhs_src)
        change = np.max(np.abs(new - v)) / v_base
        v = new
        if np.min(np.abs(v)) / v_base < COLLAPSE_PU:
            break
        if change < tol:
            converged = True
            break
    for b in network.buses:
        root = find(b)
        voltages[b] = v_src if root == slack else complex(v[index[root]])
    return _finish(network, topo, voltages, loads, converged, it, False, "")


def two_bus_voltage(v_source, s_load, z_eff):
    """Closed-form receiving-end voltage magnitude of a source-line-load circuit.

    All quantities in consistent units (volts, volt-amperes, ohms); the
    high-voltage root of the bi-quadratic is returned.
    """
    p, q = s_load.real, s_load.imag
    r, x = z_eff.real, z_eff.imag
    b = 2.0 * (p * r + q * x) - abs(v_source) ** 2
    c = (p * p + q * q) * (r * r + x * x)
    disc = b * b - 4.0 * c
    if disc < 0:
        raise SolverError("no real solution: load beyond transfer limit")
    u = (-b + math.sqrt(disc)) / 2.0
    return math.sqrt(u)
