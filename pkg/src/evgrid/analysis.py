"""Line loading, ampacity violations, adoption thresholds and scenario sweeps."""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from evgrid.grid import VoltageLevel, rebase_voltage
from evgrid.loads import LoadSnapshot, format_timestamp, select_hour
from evgrid.powerflow import SolverError, solve
from evgrid.rng import MT19937, scenario_seed
from evgrid.scenario import (
    Allocation,
    allocate_evs,
    apply_ev_load,
    extend_allocation,
    nested_allocations,
    normalize_mode,
)


def loading_ratio(i_actual, i_rated):
    if not i_rated > 0:
        raise ValueError(f"rated current must be positive, got {i_rated}")
    if i_actual < 0:
        raise ValueError("actual current must be non-negative")
    return i_actual / i_rated


def violation_percent(i_actual, i_rated):
    """Overload beyond the rating in percent; negative when within rating."""
    return (loading_ratio(i_actual, i_rated) - 1.0) * 100.0


@dataclass(frozen=True)
class LineLoading:
    line_id: str
    i_actual: float
    i_rated: float
    loading: float
    violation_pct: float = None

    @property
    def violated(self):
        return self.loading > 1.0


def _stats(values):
    if not values:
        return {"min": 0.0, "max": 0.0, "avg": 0.0}
    return {"min": min(values), "max": max(values), "avg": math.fsum(values) / len(values)}


@dataclass(frozen=True)
class LoadingReport:
    """Per-line loading for one scenario plus table-style aggregates.

    ``stats`` covers every line (loading in percent); ``violations`` covers
    only the lines loaded above their rating. With no violating line the
    violation extrema are reported as 0.
    """

    scenario: dict
    lines: tuple
    stats: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)

    @property
    def violated_lines(self):
        return frozenset(ln.line_id for ln in self.lines if ln.violated)

    def to_dict(self):
        return {"scenario": self.scenario, "stats": self.stats, "violations": self.violations}


def line_loadings(solution):
    out = []
    for line_id in sorted(solution.i_actual):
        i_act, i_rat = solution.i_actual[line_id], solution.i_rated[line_id]
        ratio = loading_ratio(i_act, i_rat)
        vp = violation_percent(i_act, i_rat) if ratio > 1.0 else None
        out.append(LineLoading(line_id, i_act, i_rat, ratio, vp))
    return tuple(out)


def build_report(solution, network, scenario=None):
    if not solution.converged:
        raise SolverError(f"refusing to report a non-converged solution: {solution.message}")
    missing = set(network.lines) - set(solution.i_actual)
    if missing:
        raise ValueError(f"solution lacks lines {sorted(missing)[:3]}")
    lines = line_loadings(solution)
    loading_pct = [ln.loading * 100.0 for ln in lines]
    viol = [ln.violation_pct for ln in lines if ln.violated]
    violations = {"count": len(viol), **_stats(viol)}
    return LoadingReport(dict(scenario or {}), lines, _stats(loading_pct), violations)


@dataclass(frozen=True)
class ThresholdResult:
    voltage_kv: float
    charger_kw: float
    min_violating_rate: int = None

    def to_dict(self):
        rate = self.min_violating_rate
        return {
            "voltage_kv": self.voltage_kv,
            "charger_kw": self.charger_kw,
            "min_violating_rate_pct": rate,
            "label": f"{rate}%" if rate is not None else "none up to 100%",
        }


def count_violations(network, snapshot, settings=None):
    sol = solve(network, snapshot, settings)
    if not sol.converged:
        raise SolverError(sol.message)
    return sum(1 for ln in line_loadings(sol) if ln.violated)


def find_threshold(network, base_snapshot, charger, seed, voltage=None, mode="maintain_pf", settings=None):
    """Smallest integer adoption percentage with at least one ampacity violation.

    Rates are scanned upward in 1% steps with nested allocations drawn from
    one generator, so each step only adds EVs to the previous one.
    """
    if voltage is not None:
        network = rebase_voltage(network, voltage)
    households = network.households()
    gen = MT19937(seed)
    alloc = Allocation(0.0, {b: 0 for b in households}, households)
    result = None
    for pct in range(0, 101):
        alloc = extend_allocation(alloc, pct / 100.0, gen)
        snap = apply_ev_load(base_snapshot, alloc, charger, mode)
        try:
            n = count_violations(network, snap, settings)
        except SolverError as exc:
            raise SolverError(f"solver failed at {pct}% adoption: {exc}") from None
        if n > 0:
            result = pct
            break
    return ThresholdResult(network.voltage.v_ll_kv, charger.power_kw, result)


@dataclass(frozen=True)
class ScenarioResult:
    key: tuple
    scenario: dict
    report: LoadingReport = None
    error: str = None
    solution: object = None

    @property
    def ok(self):
        return self.report is not None

    def to_dict(self):
        if self.ok:
            return self.report.to_dict()
        return {"scenario": self.scenario, "failed": self.error}


def _run_one(task):
    key, scenario, network, snapshot, alloc, charger, mode, settings, keep = task
    try:
        snap = apply_ev_load(snapshot, alloc, charger, mode)
        sol = solve(network, snap, settings)
        report = build_report(sol, network, scenario)
    except (SolverError, ValueError) as exc:
        return ScenarioResult(key, scenario, error=str(exc))
    return ScenarioResult(key, scenario, report, solution=sol if keep else None)


def rate_allocations(households, rates, seed, nested=True):
    """Allocation per rate; nested draws share one stream, independent ones get derived seeds."""
    if nested:
        return nested_allocations(households, rates, seed)
    out = {}
    for k, rate in enumerate(sorted(set(rates))):
        out[rate] = allocate_evs(households, rate, MT19937(scenario_seed(seed, k)))
    return out


def sweep(
    network,
    snapshots,
    rates,
    chargers,
    voltages,
    hours=("peak",),
    seed=0,
    mode="maintain_pf",
    settings=None,
    nested=True,
    workers=1,
    keep_solutions=False,
):
    """Evaluate every (voltage, charger, hour, rate) combination.

    The allocation for a rate depends only on the seed and the rate grid, so
    it is shared by all voltages, chargers and hours. A failing scenario is
    recorded and the sweep carries on. Results are sorted by scenario key.
    """
    if not (rates and chargers and voltages and hours):
        raise ValueError("sweep grids must be non-empty")
    mode = normalize_mode(mode)
    if isinstance(snapshots, LoadSnapshot):
        snapshots = [snapshots]
    base = {h: select_hour(snapshots, h) for h in hours}
    allocs = rate_allocations(network.households(), rates, seed, nested)

    tasks = []
    for vi, v in enumerate(voltages):
        net_v = rebase_voltage(network, v if isinstance(v, VoltageLevel) else VoltageLevel(float(v)))
        for ci, charger in enumerate(chargers):
            for hi, h in enumerate(hours):
                for rate in sorted(allocs):
                    scenario = {
                        "voltage_kv": net_v.voltage.v_ll_kv,
                        "charger_kw": charger.power_kw,
                        "rate_pct": round(rate * 100.0, 6),
                        "hour": str(h),
                        "timestamp": format_timestamp(base[h].hour),
                        "seed": seed,
                        "mode": mode,
                        "nested": nested,
                        "ev_count": allocs[rate].total,
                    }
                    key = (vi, ci, hi, rate)
                    tasks.append((key, scenario, net_v, base[h], allocs[rate], charger, mode, settings, keep_solutions))

    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=4))
    else:
        results = [_run_one(t) for t in tasks]
    return sorted(results, key=lambda r: r.key)
