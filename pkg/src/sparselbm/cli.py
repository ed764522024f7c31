"""Command-line runner: configuration, case orchestration, artifact output.

Four modes: `simulate` writes field snapshots (CSV plus a PNG of the
velocity magnitude), `validate` compares a finished run against the
reference thresholds, `bench` emits a performance report, and `sweep`
produces the porosity/layout benchmark table.

Configuration comes from an optional flat key-value file (`key value` per
line, `#` comments) overridden by command-line flags of the same names.
The effective configuration is echoed to `<output_dir>/config.txt`; its
SHA-256 hash is embedded in every artifact.  Timestamps appear only in the
sidecar `run.log`, so identical configurations reproduce identical
simulation artifacts byte for byte (bench/sweep reports contain measured
wall times and are exempt).

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 numeric divergence, 4 I/O error.
"""

import argparse
import csv
import hashlib
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import metrics, validation
from .geometry import (GeometryError, PressureInlet, VelocityInlet,
                       add_cylinder, build_cavity, build_channel,
                       build_porous_random, build_porous_regular,
                       save_geometry)
from .kernel import DivergenceError, Simulation, max_worker_count, set_worker_count
from .lattice import FlowParams
from .layouts import LayoutKind
from .metrics import SweepConfig, benchmark, porosity_sweep, write_report_csv

log = logging.getLogger(__name__)

CASES = ("cavity", "chan_v", "chan_p", "cylinder_circle", "cylinder_square",
         "porous_regular", "porous_random")
MODES = ("simulate", "bench", "validate", "sweep")
DESK_SCALE_LIMIT = 1024 * 1024

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4

# validation thresholds checked by `validate` mode
CAVITY_MAX_ABS_DEV = 0.03
CAVITY_MAX_MSE = 5e-4
CHANNEL_MAX_RESIDUAL = 1e-3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Effective run settings; exactly one of Re/nu must be given."""

    case: str = ""
    mode: str = "simulate"
    n_x: int = 0
    n_y: int = 0
    Re: float | None = None
    nu: float | None = None
    U: float = 0.1
    layout: str = "dense"
    scalar: str = "f64"
    steps: int = 0
    save_every: int = 0
    phi_target: float | None = None
    seed: int = 0
    B_peak: float = 547.68e9
    output_dir: str = ""
    workers: int = 0
    warmup_steps: int = 100
    timed_steps: int = 1000
    inlet_rho: float = 1.016
    outlet_rho: float = 1.0
    check_divergence: int = 0
    log_scale: int = 0
    allow_paper_scale: int = 0
    sweep_porosities: str = "0.1,0.4,0.7,1.0"
    sweep_layouts: str = "dense,tile,bitmask_node,pointer_tile"

    def validate(self):
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}, got {self.case!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_x <= 0 or self.n_y <= 0:
            raise ConfigError("n_x and n_y are required and must be positive")
        if (self.Re is None) == (self.nu is None):
            raise ConfigError("exactly one of Re / nu must be given")
        if self.scalar not in ("f32", "f64"):
            raise ConfigError(f"scalar must be f32 or f64, got {self.scalar!r}")
        LayoutKind.parse(self.layout)
        if not self.output_dir:
            raise ConfigError("output_dir is required")
        if self.mode in ("simulate", "validate") and self.steps <= 0:
            raise ConfigError(f"{self.mode} mode needs steps > 0")
        if self.case.startswith("porous") and self.phi_target is None:
            raise ConfigError("porous cases need phi_target")
        if self.case.startswith("porous") and self.n_x != self.n_y:
            raise ConfigError("porous cases use square domains (n_x == n_y)")
        if (self.n_x * self.n_y > DESK_SCALE_LIMIT
                and not self.allow_paper_scale):
            raise ConfigError(
                f"{self.n_x}x{self.n_y} exceeds the desk-scale limit; pass "
                f"allow_paper_scale 1 to run it anyway")

    # -- derived quantities ------------------------------------------------

    def characteristic_length(self):
        return self.n_x - 1 if self.case.startswith("porous") else self.n_y - 1

    def flow_params(self):
        L = self.characteristic_length()
        if self.nu is not None:
            return FlowParams.from_viscosity(U=self.U, L=L, nu=self.nu)
        return FlowParams.from_reynolds(U=self.U, L=L, Re=self.Re)

    def dtype(self):
        return np.float32 if self.scalar == "f32" else np.float64

    def initial_density(self):
        if self.case == "chan_p" or self.case.startswith("porous"):
            return (self.inlet_rho + self.outlet_rho) / 2.0
        return 1.0

    # -- round-trippable text form ------------------------------------------

    def to_text(self):
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} {value!r}" if isinstance(value, float)
                         else f"{f.name} {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}


def _coerce(name, raw):
    kinds = RunConfig.field_types()
    if name not in kinds:
        raise ConfigError(f"unknown configuration key {name!r}")
    kind = kinds[name]
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float) or "float" in str(kind):
            return float(raw)
        return str(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name!r}: {raw!r}") from exc


def parse_config(config_file=None, flag_items=()):
    """Merge defaults, file entries and flag overrides into a RunConfig."""
    values = {}
    if config_file:
        path = Path(config_file)
        if not path.exists():
            raise ConfigError(f"config file not found: {config_file}")
        for no, line in enumerate(path.read_text().splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(
                    f"{config_file}:{no}: expected 'key value', got {line!r}")
            values[parts[0]] = _coerce(parts[0], parts[1])
    for name, raw in flag_items:
        values[name] = _coerce(name, raw) if isinstance(raw, str) else raw
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def build_case_geometry(cfg):
    """Construct the geometry for the configured case."""
    if cfg.case == "cavity":
        return build_cavity(cfg.n_x, cfg.n_y, cfg.U)
    if cfg.case == "chan_v":
        return build_channel(cfg.n_x, cfg.n_y, VelocityInlet((cfg.U, 0.0)),
                             outlet_rho=cfg.outlet_rho)
    if cfg.case == "chan_p":
        return build_channel(cfg.n_x, cfg.n_y, PressureInlet(cfg.inlet_rho),
                             outlet_rho=cfg.outlet_rho)
    if cfg.case in ("cylinder_circle", "cylinder_square"):
        geom = build_channel(cfg.n_x, cfg.n_y, VelocityInlet((cfg.U, 0.0)),
                             outlet_rho=cfg.outlet_rho)
        shape = "circle" if cfg.case == "cylinder_circle" else "square"
        # diameter half the channel height, two heights downstream of the inlet
        return add_cylinder(geom, shape, cfg.n_y // 2,
                            (2 * cfg.n_y, cfg.n_y // 2))
    if cfg.case == "porous_regular":
        return build_porous_regular(cfg.n_x, cfg.phi_target)
    return build_porous_random(cfg.n_x, cfg.phi_target, cfg.seed)


def make_simulation(cfg, geometry=None):
    geom = geometry if geometry is not None else build_case_geometry(cfg)
    sim = Simulation(geom, cfg.flow_params(), layout=cfg.layout,
                     scalar=cfg.dtype())
    sim.initialize(rho0=cfg.initial_density())
    return sim


# ---------------------------------------------------------------------------
# artifact writers


def write_snapshot_csv(path, sim, config_hash):
    desc = sim.geometry.descriptors
    n_x, n_y = sim.geometry.dims
    rho, vx, vy = sim.macroscopic_fields()
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash {config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "node_type", "rho", "v_x", "v_y"])
        for y in range(n_y):
            for x in range(n_x):
                writer.writerow([x, y, int(desc.type_tag[y, x]),
                                 repr(rho[y, x]), repr(vx[y, x]),
                                 repr(vy[y, x])])


def write_speed_png(path, sim, config_hash, log_scale=False):
    """|v| rendered through the fixed viridis colormap; row y = n_y - 1 on
    top.  Log scale floors at 1e-6 of the characteristic velocity."""
    from matplotlib import colormaps
    from PIL import Image
    from PIL.PngImagePlugin import PngInfo

    rho, vx, vy = sim.macroscopic_fields()
    speed = np.hypot(vx, vy)
    if log_scale:
        floor = 1e-6 * max(sim.params.U, 1e-30)
        speed = np.log10(np.maximum(speed, floor) / floor)
    top = speed.max()
    normed = speed / top if top > 0 else speed
    lut = (np.asarray(colormaps["viridis"].colors) * 255).astype(np.uint8)
    idx = np.clip((normed * 255).astype(np.int64), 0, 255)
    img = Image.fromarray(lut[idx][::-1], mode="RGB")
    meta = PngInfo()
    meta.add_text("config_hash", config_hash)
    img.save(path, pnginfo=meta)


def _write_records_csv(path, records, config_hash):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash {config_hash}\n")
        writer = csv.writer(fh)
        keys = list(records[0])
        writer.writerow(keys)
        for rec in records:
            writer.writerow([rec[k] for k in keys])


# ---------------------------------------------------------------------------
# modes


def _run_simulate(cfg, sim, out, config_hash):
    def snapshot(step, fields, pre):
        stem = out / f"snapshot_{step:08d}"
        write_snapshot_csv(stem.with_suffix(".csv"), sim, config_hash)
        write_speed_png(stem.with_suffix(".png"), sim, config_hash,
                        log_scale=bool(cfg.log_scale))

    observers = [(cfg.save_every, snapshot)] if cfg.save_every > 0 else []
    # check_divergence: 0 off, 1 default cadence (every 10^4 steps), else cadence
    cadence = None
    if cfg.check_divergence:
        cadence = 10_000 if cfg.check_divergence == 1 else cfg.check_divergence
    sim.run(cfg.steps, observers=observers, check_divergence_every=cadence)
    if not observers:
        write_snapshot_csv(out / "snapshot_final.csv", sim, config_hash)
        write_speed_png(out / "snapshot_final.png", sim, config_hash,
                        log_scale=bool(cfg.log_scale))
    return EXIT_OK


def _run_validate(cfg, sim, out, config_hash):
    if cfg.case == "cavity":
        sim.run(cfg.steps)
        profiles = validation.centerline_profiles(sim)
        Re = round(sim.params.Re)
        cmp = validation.compare_to_ghia(profiles, Re)
        ok = (cmp.max_abs_err <= CAVITY_MAX_ABS_DEV
              and cmp.mse <= CAVITY_MAX_MSE)
        record = {"case": cfg.case, "Re": Re, "mse": cmp.mse,
                  "max_abs_err": cmp.max_abs_err,
                  "max_abs_err_location": cmp.max_abs_err_location,
                  "max_rel_err": cmp.max_rel_err,
                  "mse_threshold": CAVITY_MAX_MSE,
                  "max_abs_threshold": CAVITY_MAX_ABS_DEV, "passed": ok}
    elif cfg.case in ("chan_v", "chan_p"):
        sim.run(cfg.steps)
        R = cfg.n_y / 2.0
        x_probe = min(int(round(15 * R)), cfg.n_x - 2)
        rho, vx, vy = sim.macroscopic_fields()
        fit = validation.poiseuille_fit(vx[:, x_probe])
        ok = fit.residual <= CHANNEL_MAX_RESIDUAL
        record = {"case": cfg.case, "x_probe": x_probe, "v_max": fit.v_max,
                  "center": fit.center, "residual": fit.residual,
                  "residual_threshold": CHANNEL_MAX_RESIDUAL, "passed": ok}
    elif cfg.case in ("cylinder_circle", "cylinder_square"):
        probe_x = 2 * cfg.n_y + cfg.n_y // 4 + cfg.n_y // 2
        probe_y = cfg.n_y // 2
        stride = 10
        series = []

        def probe(step, fields, pre):
            series.append(fields[2][probe_y, probe_x])

        sim.run(cfg.steps, observers=[(stride, probe)])
        wake = validation.classify_wake(np.array(series), u_ref=cfg.U,
                                        sample_stride=stride)
        ok = True
        record = {"case": cfg.case, "probe_x": probe_x, "probe_y": probe_y,
                  "regime": wake.kind, "peak_to_peak": wake.peak_to_peak,
                  "period_steps": wake.period, "passed": ok}
    else:
        raise ConfigError(f"validate mode does not cover case {cfg.case!r}")

    _write_records_csv(out / "validation.csv", [record], config_hash)
    log.info("validation record: %s", record)
    return EXIT_OK if ok else EXIT_VALIDATION_FAILED


def _run_bench(cfg, sim, out, config_hash):
    report = benchmark(sim, warmup_steps=cfg.warmup_steps,
                       timed_steps=cfg.timed_steps,
                       b_peak_bytes_per_s=cfg.B_peak)
    write_report_csv([report], out / "perf_report.csv", config_hash)
    log.info("benchmark: %.3g LUPS, %.3g GB/s, U_B %.3f",
             report.p_lups, report.p_b_bytes_per_s / 1e9, report.u_b)
    return EXIT_OK


def _run_sweep(cfg, out, config_hash):
    porosities = [float(p) for p in cfg.sweep_porosities.split(",") if p]
    layouts = [p.strip() for p in cfg.sweep_layouts.split(",") if p.strip()]
    sweep_cfg = SweepConfig(n=cfg.n_x, warmup_steps=cfg.warmup_steps,
                            timed_steps=cfg.timed_steps,
                            b_peak_bytes_per_s=cfg.B_peak,
                            nu=cfg.nu if cfg.nu is not None else 0.5,
                            seed=cfg.seed,
                            scalar="float32" if cfg.scalar == "f32"
                            else "float64")
    reports = porosity_sweep(layouts, porosities, config=sweep_cfg)
    write_report_csv(reports, out / "sweep_report.csv", config_hash)
    return EXIT_OK


def execute(config):
    """Run one configured job; returns the process exit code."""
    try:
        config.validate()
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)

        handler = logging.FileHandler(out / "run.log")
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s "
                                               "%(name)s: %(message)s"))
        root = logging.getLogger("sparselbm")
        root.addHandler(handler)
        root.setLevel(logging.INFO)
        try:
            config_text = config.to_text()
            # the hash skips output_dir so runs into different directories
            # with identical parameters produce identical artifacts
            hashed = "\n".join(line for line in config_text.splitlines()
                               if not line.startswith("output_dir "))
            config_hash = hashlib.sha256(hashed.encode()).hexdigest()
            (out / "config.txt").write_text(config_text)
            if config.n_x * config.n_y > DESK_SCALE_LIMIT:
                log.warning("paper-scale geometry %dx%d: expect a long run",
                            config.n_x, config.n_y)
            if config.workers > 0:
                set_worker_count(min(config.workers, max_worker_count()))

            if config.mode == "sweep":
                return _run_sweep(config, out, config_hash)
            geom = build_case_geometry(config)
            save_geometry(geom, out / "geometry.slbmgeo")
            sim = make_simulation(config, geometry=geom)
            if config.mode == "simulate":
                return _run_simulate(config, sim, out, config_hash)
            if config.mode == "bench":
                return _run_bench(config, sim, out, config_hash)
            return _run_validate(config, sim, out, config_hash)
        finally:
            root.removeHandler(handler)
            handler.close()
    except (ConfigError, GeometryError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="sparselbm",
        description="D2Q9 lattice-Boltzmann runner with swappable layouts")
    parser.add_argument("--config", help="flat key-value configuration file")
    for f in fields(RunConfig):
        parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name,
                            default=None, metavar="V")
    args = parser.parse_args(argv)
    flag_items = [(f.name, getattr(args, f.name)) for f in fields(RunConfig)
                  if getattr(args, f.name) is not None]
    try:
        cfg = parse_config(args.config, flag_items)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
