"""Command-line entry point: ``evgrid ingest|run|sweep|threshold``.

Exit codes: 0 success, 1 usage error, 2 input error, 3 every scenario failed.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from evgrid.analysis import find_threshold, rate_allocations, sweep
from evgrid.grid import NetworkError, VoltageLevel, load_network_dir, rebase_voltage
from evgrid.loads import (
    IngestError,
    derive_nodal_pq,
    estimate_households,
    format_timestamp,
    parse_hour_selector,
    per_household_average,
    read_loads,
    read_meters,
    select_hour,
    write_loads,
)
from evgrid.powerflow import SolverError, SolverSettings
from evgrid.rng import MT19937
from evgrid.scenario import ChargerSpec, normalize_mode, write_allocation

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_ALL_FAILED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    network_dir: str = None
    loads: str = None
    voltage_kv: list = field(default_factory=lambda: [4.16])
    rates_pct: list = field(default_factory=lambda: [0, 20, 40, 60, 80, 100])
    charger_kw: list = field(default_factory=lambda: [10.0])
    seed: int = 0
    hour: list = field(default_factory=lambda: ["peak"])
    ev_reactive_mode: str = "maintain_pf"
    solver: dict = field(default_factory=dict)
    out: str = "results"
    source_bus: str = None
    nested: bool = True
    workers: int = 1

    def digest(self):
        """SHA-256 of every setting that affects results (not ``out``/``workers``)."""
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def settings(self):
        return SolverSettings(**self.solver)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _as_list(value):
    return value if isinstance(value, list) else [value]


def build_parser():
    parser = _Parser(prog="evgrid", description="EV charging impact on radial distribution feeders")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ing = sub.add_parser("ingest", help="derive nodal P/Q loads and household counts from meters")
    ing.add_argument("meters", help="meters.csv (bus_id,timestamp,kwh)")
    ing.add_argument("--households-total", type=int, required=True)
    ing.add_argument("--seed", type=int, default=0)
    ing.add_argument("--out", default=".")

    for name, text in (
        ("run", "allocate, inject, solve and report for each rate"),
        ("sweep", "grid of rates x chargers x voltages x hours"),
        ("threshold", "smallest adoption rate causing a violation"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
        p.add_argument("--network-dir")
        p.add_argument("--source-bus")
        p.add_argument("--loads")
        p.add_argument("--voltage-kv", type=float, nargs="+")
        p.add_argument("--rates", type=float, nargs="+", dest="rates_pct", help="adoption rates in percent")
        p.add_argument("--charger-kw", type=float, nargs="+")
        p.add_argument("--seed", type=int)
        p.add_argument("--hour", nargs="+", help="peak, offpeak or an hour index")
        p.add_argument("--ev-q-mode", dest="ev_reactive_mode", choices=["maintain-pf", "unity-pf"])
        p.add_argument("--independent", action="store_const", const=False, dest="nested",
                       help="draw each rate independently instead of nesting allocations")
        p.add_argument("--max-iterations", type=int)
        p.add_argument("--tolerance", type=float, help="power residual tolerance in kW")
        p.add_argument("--workers", type=int)
        p.add_argument("--out")
    return parser


def resolve_config(args):
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(data) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = RunConfig(**data)
    for key in ("network_dir", "loads", "voltage_kv", "rates_pct", "charger_kw", "seed", "hour",
                "ev_reactive_mode", "out", "source_bus", "nested", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    solver = dict(cfg.solver)
    if args.max_iterations is not None:
        solver["max_iterations"] = args.max_iterations
    if args.tolerance is not None:
        solver["tolerance"] = args.tolerance
    cfg.solver = solver

    cfg.voltage_kv = [float(v) for v in _as_list(cfg.voltage_kv)]
    cfg.rates_pct = [float(r) for r in _as_list(cfg.rates_pct)]
    cfg.charger_kw = [float(c) for c in _as_list(cfg.charger_kw)]
    cfg.hour = [str(h) for h in _as_list(cfg.hour)]
    try:
        cfg.ev_reactive_mode = normalize_mode(cfg.ev_reactive_mode)
        cfg.settings()
        for h in cfg.hour:
            parse_hour_selector(h)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if not 0 <= cfg.seed < 2**32:
        raise UsageError("seed must be a 32-bit unsigned integer")
    if any(not 0 <= r <= 100 for r in cfg.rates_pct):
        raise UsageError("rates must lie in [0, 100]")
    if any(not c > 0 for c in cfg.charger_kw) or any(not v > 0 for v in cfg.voltage_kv):
        raise UsageError("charger power and voltage must be positive")
    if not cfg.network_dir or not cfg.loads:
        raise UsageError("--network-dir and --loads are required")
    for path in (Path(cfg.network_dir) / "buses.csv", Path(cfg.network_dir) / "lines.csv", Path(cfg.loads)):
        if not path.is_file():
            raise InputError(f"missing input file {path}")
    return cfg


def _load_inputs(cfg):
    try:
        network = load_network_dir(cfg.network_dir, VoltageLevel(cfg.voltage_kv[0]), cfg.source_bus)
        snapshots = read_loads(Path(cfg.loads).read_text(encoding="utf-8"))
    except (NetworkError, IngestError) as exc:
        raise InputError(str(exc)) from None
    if not snapshots:
        raise InputError(f"{cfg.loads}: no load rows")
    for snap in snapshots:
        missing = [b for b, bus in network.buses.items() if bus.households > 0 and b not in snap.p_kw]
        if missing:
            raise InputError(f"loads for {format_timestamp(snap.hour)} lack bus {missing[0]}")
        extra = [b for b in snap.p_kw if b not in network.buses]
        if extra:
            raise InputError(f"loads reference unknown bus {extra[0]}")
    return network, snapshots


def _fmt(x):
    return repr(float(x))


def _rate_tag(pct):
    return f"r{pct:g}".replace(".", "p")


def _csv(header_line, columns, rows):
    out = io.StringIO()
    out.write(f"# {header_line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return out.getvalue()


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_all(out_dir, files):
    out_dir = Path(out_dir)
    for rel, text in sorted(files.items()):
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _provenance(cfg, digest):
    return {"config_sha256": digest, "seed": cfg.seed, "config": asdict(cfg) | {"out": None, "workers": None}}


def cmd_ingest(args):
    try:
        text = Path(args.meters).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(str(exc)) from None
    if args.households_total <= 0:
        raise UsageError("--households-total must be positive")
    try:
        series = read_meters(text)
        snapshots = derive_nodal_pq(series, MT19937(args.seed))
    except IngestError as exc:
        raise InputError(str(exc)) from None
    if not snapshots:
        raise InputError("no meter rows")
    energy = {s.bus_id: math.fsum(s.energy) for s in series}
    counts = estimate_households(energy, args.households_total)
    total = math.fsum(energy.values())
    avg, hourly = per_household_average(total, args.households_total, hours=len(snapshots))
    peak = select_hour(snapshots, "peak")
    off = select_hour(snapshots, "offpeak")

    src = {"meters": Path(args.meters).name, "households_total": args.households_total, "seed": args.seed}
    digest = hashlib.sha256(json.dumps(src, sort_keys=True).encode()).hexdigest()
    header = f"config_sha256={digest} seed={args.seed}"
    _write_all(args.out, {
        "loads.csv": write_loads(snapshots, header=header),
        "households.csv": _csv(header, ["bus_id", "households"], [[b, counts[b]] for b in sorted(counts)]),
    })
    print(f"total energy: {total:,.0f} kWh over {len(snapshots)} hours")
    print(f"average per household: {avg:,.0f} kWh")
    print(f"average hourly consumption per household: {hourly:.2f} kWh")
    print(f"estimated households: {sum(counts.values())}")
    print(f"peak hour: {format_timestamp(peak.hour)}")
    print(f"off-peak hour: {format_timestamp(off.hour)}")
    return EXIT_OK


def _flows_rows(sol):
    rows = []
    for line_id in sorted(sol.i_actual):
        rows.append([line_id, _fmt(abs(sol.line_s[line_id])), _fmt(sol.i_actual[line_id]),
                     _fmt(sol.i_rated[line_id])])
    return rows


def _bus_rows(sol):
    return [[b, _fmt(sol.v_pu(b)), _fmt(sol.angle(b))] for b in sorted(sol.voltages)]


def _scenario_results(cfg, network, snapshots, keep=False):
    return sweep(
        network, snapshots,
        rates=[r / 100.0 for r in cfg.rates_pct],
        chargers=[ChargerSpec(c) for c in cfg.charger_kw],
        voltages=[VoltageLevel(v) for v in cfg.voltage_kv],
        hours=[parse_hour_selector(h) for h in cfg.hour],
        seed=cfg.seed, mode=cfg.ev_reactive_mode, settings=cfg.settings(),
        nested=cfg.nested, workers=cfg.workers, keep_solutions=keep,
    )


def cmd_run(cfg):
    if len(cfg.voltage_kv) > 1 or len(cfg.charger_kw) > 1 or len(cfg.hour) > 1:
        raise UsageError("run takes a single voltage, charger power and hour; use sweep for grids")
    network, snapshots = _load_inputs(cfg)
    digest = cfg.digest()
    header = f"config_sha256={digest} seed={cfg.seed}"
    results = _scenario_results(cfg, network, snapshots, keep=True)
    allocs = rate_allocations(network.households(), [r / 100.0 for r in cfg.rates_pct], cfg.seed, cfg.nested)

    files = {}
    violated = []
    for res in results:
        pct = res.scenario["rate_pct"]
        tag = _rate_tag(pct)
        alloc_header = json.dumps({
            "rate": pct / 100.0, "seed": cfg.seed, "charger_kw": cfg.charger_kw[0],
            "mode": cfg.ev_reactive_mode, "config_sha256": digest,
        }, sort_keys=True)
        files[f"allocations/allocation_{tag}.csv"] = write_allocation(allocs[res.key[3]], alloc_header)
        if not res.ok:
            continue
        files[f"flows/flows_{tag}.csv"] = _csv(
            header, ["line_id", "s_kva", "i_actual_a", "i_rated_a"], _flows_rows(res.solution))
        files[f"voltages/buses_{tag}.csv"] = _csv(header, ["bus_id", "v_pu", "angle_rad"], _bus_rows(res.solution))
        violated += [[f"{pct:g}", line_id] for line_id in sorted(res.report.violated_lines)]
    files["violations_by_rate.csv"] = _csv(header, ["rate_pct", "line_id"], violated)
    files["summary.json"] = _json(_provenance(cfg, digest) | {"scenarios": [r.to_dict() for r in results]})
    _write_all(cfg.out, files)
    for res in results:
        print(_summary_line(res))
    return EXIT_ALL_FAILED if not any(r.ok for r in results) else EXIT_OK


def _summary_line(res):
    s = res.scenario
    head = f"{s['voltage_kv']:g} kV  {s['charger_kw']:g} kW  {s['hour']:>7}  {s['rate_pct']:>5g}%"
    if not res.ok:
        return f"{head}  FAILED: {res.error}"
    st, vi = res.report.stats, res.report.violations
    return (f"{head}  loading min {st['min']:.2f}% max {st['max']:.1f}% avg {st['avg']:.1f}%"
            f"  violations {vi['count']}")


def cmd_sweep(cfg):
    network, snapshots = _load_inputs(cfg)
    digest = cfg.digest()
    header = f"config_sha256={digest} seed={cfg.seed}"
    results = _scenario_results(cfg, network, snapshots)

    max_rows, count_rows = [], []
    for res in results:
        if not res.ok:
            continue
        s = res.scenario
        key = [f"{s['voltage_kv']:g}", f"{s['charger_kw']:g}", s["hour"], f"{s['rate_pct']:g}"]
        max_rows.append(key + [_fmt(res.report.stats["max"]), _fmt(res.report.stats["avg"])])
        count_rows.append(key + [res.report.violations["count"]])
    cols = ["voltage_kv", "charger_kw", "hour", "rate_pct"]
    _write_all(cfg.out, {
        "summary.json": _json(_provenance(cfg, digest) | {"scenarios": [r.to_dict() for r in results]}),
        "plot_max_loading.csv": _csv(header, cols + ["max_loading_pct", "avg_loading_pct"], max_rows),
        "plot_violation_count.csv": _csv(header, cols + ["violation_count"], count_rows),
    })
    for res in results:
        print(_summary_line(res))
    return EXIT_ALL_FAILED if not any(r.ok for r in results) else EXIT_OK


def cmd_threshold(cfg):
    network, snapshots = _load_inputs(cfg)
    digest = cfg.digest()
    out, failures = [], 0
    for h in cfg.hour:
        base = select_hour(snapshots, parse_hour_selector(h))
        for v in cfg.voltage_kv:
            for c in cfg.charger_kw:
                entry = {"hour": h, "timestamp": format_timestamp(base.hour)}
                try:
                    res = find_threshold(rebase_voltage(network, v), base, ChargerSpec(c), cfg.seed,
                                         mode=cfg.ev_reactive_mode, settings=cfg.settings())
                    entry |= res.to_dict()
                except SolverError as exc:
                    failures += 1
                    entry |= {"voltage_kv": v, "charger_kw": c, "failed": str(exc)}
                out.append(entry)
                print(f"{v:g} kV  {c:g} kW  {h:>7}  threshold: {entry.get('label', entry.get('failed'))}")
    _write_all(cfg.out, {"threshold.json": _json(_provenance(cfg, digest) | {"thresholds": out})})
    return EXIT_ALL_FAILED if failures == len(out) else EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "ingest":
            return cmd_ingest(args)
        cfg = resolve_config(args)
        return {"run": cmd_run, "sweep": cmd_sweep, "threshold": cmd_threshold}[args.command](cfg)
    except UsageError as exc:
        print(f"evgrid: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"evgrid: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
