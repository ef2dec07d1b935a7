"""EV charger allocation across buses and EV load injection."""

import bisect
import itertools
from dataclasses import dataclass, field, replace

from evgrid.loads import q_from_pf, round_half_up
from evgrid.rng import MT19937

LEVELS = ("L1", "L2", "DCFC")
MODES = ("maintain_pf", "unity_pf")


@dataclass(frozen=True)
class ChargerSpec:
    power_kw: float
    level: str = "L2"

    def __post_init__(self):
        if not self.power_kw > 0:
            raise ValueError(f"charger power must be positive, got {self.power_kw}")
        if self.level not in LEVELS:
            raise ValueError(f"unknown charger level {self.level!r}")


@dataclass(frozen=True)
class Allocation:
    """EV count per bus at a given adoption rate.

    ``households`` is kept alongside the counts because it bounds every
    later extension of the allocation.
    """

    rate: float
    ev_count: dict = field(default_factory=dict)
    households: dict = field(default_factory=dict)

    @property
    def total(self):
        return sum(self.ev_count.values())


def ev_total(rate, total_households):
    # rounded to 9 places first so that e.g. 0.35 * 20 counts as exactly 7
    return round_half_up(round(rate * total_households, 9))


def normalize_mode(mode):
    mode = mode.replace("-", "_")
    if mode not in MODES:
        raise ValueError(f"unknown reactive mode {mode!r}")
    return mode


def _draw(ev_count, households, n, gen):
    """Place n EVs one at a time, weight = remaining capacity of each bus."""
    buses = sorted(households, key=str)
    remaining = [households[b] - ev_count[b] for b in buses]
    for _ in range(n):
        cumulative = list(itertools.accumulate(remaining))
        u = gen.next_f64() * cumulative[-1]
        i = bisect.bisect_right(cumulative, u)
        remaining[i] -= 1
        ev_count[buses[i]] += 1


def allocate_evs(households, rate, gen):
    """Allocate round(rate * H) EVs across buses with a per-bus household cap."""
    base = Allocation(0.0, {b: 0 for b in households}, dict(households))
    return extend_allocation(base, rate, gen)


def extend_allocation(base, new_rate, gen):
    """Keep ``base`` and draw only the EVs needed to reach ``new_rate``."""
    if not 0 <= new_rate <= 1:
        raise ValueError(f"rate must lie in [0, 1], got {new_rate}")
    if new_rate < base.rate:
        raise ValueError(f"cannot shrink allocation from {base.rate} to {new_rate}")
    total_h = sum(base.households.values())
    extra = ev_total(new_rate, total_h) - ev_total(base.rate, total_h)
    counts = dict(base.ev_count)
    if extra > 0:
        _draw(counts, base.households, extra, gen)
    return Allocation(new_rate, counts, base.households)


def nested_allocations(households, rates, seed):
    """Allocations for ascending rates drawn from one generator, each a superset of the last."""
    gen = MT19937(seed)
    alloc = Allocation(0.0, {b: 0 for b in households}, dict(households))
    out = {}
    for rate in sorted(set(rates)):
        alloc = extend_allocation(alloc, rate, gen)
        out[rate] = alloc
    return out


def apply_ev_load(snapshot, alloc, charger, mode="maintain_pf"):
    """Snapshot with each EV adding the charger power for a one-hour interval."""
    mode = normalize_mode(mode)
    unknown = [b for b, n in alloc.ev_count.items() if n and b not in snapshot.p_kw]
    if unknown:
        raise ValueError(f"allocation references unknown bus {unknown[0]}")
    p = dict(snapshot.p_kw)
    q = dict(snapshot.q_kvar)
    for b, n in alloc.ev_count.items():
        if n <= 0:
            continue
        p[b] = p[b] + n * charger.power_kw
        if mode == "maintain_pf":
            q[b] = q_from_pf(p[b], snapshot.pf[b])
    return replace(snapshot, p_kw=p, q_kvar=q)


def write_allocation(alloc, header):
    """``allocation.csv`` text; ``header`` is a JSON string written as the first comment line."""
    lines = [f"# {header}", "bus_id,ev_count"]
    lines += [f"{b},{alloc.ev_count[b]}" for b in sorted(alloc.ev_count, key=str)]
    return "\n".join(lines) + "\n"
