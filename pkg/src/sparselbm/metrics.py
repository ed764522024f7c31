"""Benchmark protocol and derived performance figures.

Performance is quoted three ways:

* P_LUPS  - lattice-node updates per second, counting non-solid nodes only;
* B_node  - minimal bytes moved per node update, 2 * q * s_d (one read and
  one write of all q distributions at s_d bytes each);
* P_B     - implied bandwidth B_node * P_LUPS, and its fraction U_B of a
  configured peak bandwidth B_peak.

The sparse computational efficiency eta_P is the P_LUPS ratio of a
sparse-geometry run to a dense-geometry run at equal layout and size; it
deliberately ignores that the sparse run touches fewer nodes.
"""

import csv
import logging
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .geometry import build_porous_random, build_porous_regular
from .kernel import Simulation
from .lattice import Q, FlowParams
from .layouts import LayoutKind

log = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "case", "layout", "scalar_bytes", "q", "node_count", "active_node_count",
    "steps", "wall_seconds", "p_lups", "b_node_bytes", "p_b_bytes_per_s",
    "b_peak_bytes_per_s", "u_b", "eta_p", "porosity", "placement",
    "timer_warning",
]


@dataclass
class PerfReport:
    """One benchmark run with its derived figures."""

    case: str
    layout: str
    scalar_bytes: int
    node_count: int
    active_node_count: int
    steps: int
    wall_seconds: float
    b_peak_bytes_per_s: float
    p_lups: float = 0.0
    b_node_bytes: int = 0
    p_b_bytes_per_s: float = 0.0
    u_b: float = 0.0
    q: int = Q
    eta_p: float | None = None
    porosity: float | None = None
    placement: str | None = None
    timer_warning: bool = False

    @classmethod
    def from_primaries(cls, case, layout, scalar_bytes, node_count,
                       active_node_count, steps, wall_seconds,
                       b_peak_bytes_per_s, **extra):
        if wall_seconds <= 0:
            raise ValueError(f"wall_seconds must be positive, got {wall_seconds}")
        if b_peak_bytes_per_s <= 0:
            raise ValueError("b_peak_bytes_per_s must be positive")
        report = cls(case=case, layout=str(layout), scalar_bytes=int(scalar_bytes),
                     node_count=int(node_count),
                     active_node_count=int(active_node_count), steps=int(steps),
                     wall_seconds=float(wall_seconds),
                     b_peak_bytes_per_s=float(b_peak_bytes_per_s), **extra)
        report.p_lups = report.active_node_count * report.steps / report.wall_seconds
        report.b_node_bytes = 2 * report.q * report.scalar_bytes
        report.p_b_bytes_per_s = report.b_node_bytes * report.p_lups
        report.u_b = report.p_b_bytes_per_s / report.b_peak_bytes_per_s
        return report

    def consistent(self):
        """True when every derived figure matches its primaries exactly."""
        return (self.p_lups == self.active_node_count * self.steps / self.wall_seconds
                and self.b_node_bytes == 2 * self.q * self.scalar_bytes
                and self.p_b_bytes_per_s == self.b_node_bytes * self.p_lups
                and self.u_b == self.p_b_bytes_per_s / self.b_peak_bytes_per_s)

    def as_record(self):
        rec = asdict(self)
        return {k: rec[k] for k in REPORT_COLUMNS}


def benchmark(simulation, warmup_steps=100, timed_steps=1000,
              b_peak_bytes_per_s=547.68e9, clock=time.perf_counter,
              case=None, **extra):
    """Time `timed_steps` kernel steps after `warmup_steps` untimed ones.

    The defaults mirror the usual protocol of 100 warm-up and 1000 timed
    calls.  `clock` is injectable for tests.  Sets timer_warning when the
    clock resolution exceeds 1% of the measured interval.
    """
    if warmup_steps < 0 or timed_steps < 1:
        raise ValueError("need warmup_steps >= 0 and timed_steps >= 1")
    if not simulation.initialized:
        raise ValueError("simulation must be initialized before benchmarking")
    for _ in range(warmup_steps):
        simulation.step()
    t0 = clock()
    for _ in range(timed_steps):
        simulation.step()
    elapsed = clock() - t0

    n_x, n_y = simulation.geometry.dims
    report = PerfReport.from_primaries(
        case=case or simulation.geometry.provenance.case,
        layout=simulation.layout.value,
        scalar_bytes=simulation.dtype.itemsize,
        node_count=n_x * n_y,
        active_node_count=simulation.active_node_count,
        steps=timed_steps,
        wall_seconds=elapsed,
        b_peak_bytes_per_s=b_peak_bytes_per_s,
        porosity=simulation.geometry.porosity,
        **extra)
    try:
        resolution = time.get_clock_info("perf_counter").resolution
    except (ValueError, AttributeError):
        resolution = 0.0
    if resolution > 0.01 * elapsed:
        report.timer_warning = True
        log.warning("timer resolution %.3g s exceeds 1%% of the %.3g s "
                    "measurement", resolution, elapsed)
    return report


def sparse_efficiency(perf_sparse, perf_dense):
    """Eq. of sparse efficiency: P_LUPS(sparse) / P_LUPS(dense) at equal
    layout and geometry size."""
    if perf_sparse.layout != perf_dense.layout:
        raise ValueError(f"layout mismatch: {perf_sparse.layout} vs "
                         f"{perf_dense.layout}")
    if perf_sparse.node_count != perf_dense.node_count:
        raise ValueError(f"geometry size mismatch: {perf_sparse.node_count} vs "
                         f"{perf_dense.node_count}")
    if perf_dense.p_lups <= 0:
        raise ValueError("dense reference performance must be positive")
    return perf_sparse.p_lups / perf_dense.p_lups


@dataclass
class SweepConfig:
    """Desk-scale defaults for porosity sweeps; raise for paper-scale runs."""

    n: int = 1024
    warmup_steps: int = 100
    timed_steps: int = 1000
    b_peak_bytes_per_s: float = 547.68e9
    nu: float = 0.5
    seed: int = 0
    scalar: str = "float32"


def porosity_sweep(layouts, porosities, placements=("regular", "random"),
                   config=None):
    """One PerfReport per (layout, placement, porosity) cell plus a dense
    (porosity 1.0) reference per layout, with eta_P filled in.

    Regular placements below porosity 0.3 are skipped (overlapping circles
    would swallow the walls); the skip is logged, not an error.
    """
    cfg = config or SweepConfig()
    porosities = list(porosities)
    if any(not 0.1 <= p <= 1.0 for p in porosities):
        raise ValueError(f"porosities must lie in [0.1, 1.0]: {porosities}")
    params = FlowParams.from_viscosity(U=0.1, L=cfg.n - 1, nu=cfg.nu)

    def run(geom, placement, eta_ref=None):
        sim = Simulation(geom, params, layout=kind, scalar=cfg.scalar)
        sim.initialize(rho0=1.008)
        rep = benchmark(sim, cfg.warmup_steps, cfg.timed_steps,
                        cfg.b_peak_bytes_per_s, placement=placement)
        if eta_ref is not None:
            rep.eta_p = sparse_efficiency(rep, eta_ref)
        return rep

    reports = []
    for layout in layouts:
        kind = layout if isinstance(layout, LayoutKind) else LayoutKind.parse(layout)
        dense_ref = run(build_porous_regular(cfg.n, 1.0), "dense")
        dense_ref.eta_p = 1.0
        reports.append(dense_ref)
        for placement in placements:
            for phi in porosities:
                if phi == 1.0:
                    continue
                if placement == "regular" and phi < 0.3:
                    log.info("skipping regular placement at porosity %.2f "
                             "(supported range starts at 0.3)", phi)
                    continue
                if placement == "regular":
                    geom = build_porous_regular(cfg.n, phi)
                else:
                    geom = build_porous_random(cfg.n, phi, cfg.seed)
                reports.append(run(geom, placement, eta_ref=dense_ref))
    return reports


def write_report_csv(reports, path, config_hash=None):
    """Flat-record CSV with the documented REPORT_COLUMNS ordering."""
    with open(path, "w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash {config_hash}\n")
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for rep in reports:
            writer.writerow(rep.as_record())
