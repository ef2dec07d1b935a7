"""Impact of residential EV charging on radial distribution feeders."""

from evgrid.analysis import build_report, find_threshold, loading_ratio, sweep, violation_percent
from evgrid.grid import Network, VoltageLevel, parse_network, rebase_voltage, validate_radial
from evgrid.loads import derive_nodal_pq, estimate_households, select_hour
from evgrid.powerflow import SolverSettings, line_current, reference_solve, solve
from evgrid.rng import MT19937
from evgrid.scenario import ChargerSpec, allocate_evs, apply_ev_load, extend_allocation

__version__ = "0.1.0"

from pathlib import Path as _Path

FEEDER240 = _Path(__file__).parent / "data" / "feeder240"
