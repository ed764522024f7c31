"""Quantitative checks against canonical references: cavity centerline
profiles (Ghia et al. 1982), the parabolic channel profile, and
steady/unsteady wake classification behind a cylinder.
"""

import importlib.resources
from dataclasses import dataclass

import numpy as np

from .layouts import NodeType

#: published reference samples widely regarded as transcription outliers,
#: as (line, coordinate) pairs per Reynolds number
KNOWN_OUTLIERS = {3200: (("u", 0.4531),)}


@dataclass(frozen=True)
class GhiaReferenceTable:
    """Centerline reference profiles keyed by Reynolds number.

    `vertical[Re]` holds (y, v_x) along the vertical centerline and
    `horizontal[Re]` holds (x, v_y) along the horizontal one; coordinates
    are normalized to [0, 1] and velocities by the lid speed.
    """

    vertical: dict
    horizontal: dict

    @property
    def reynolds_numbers(self):
        return sorted(self.vertical)


def load_ghia_reference(path=None):
    """Parse the shipped (or a caller-supplied) reference table and validate
    its structure: monotone coordinates and wall/lid endpoint values."""
    if path is None:
        res = importlib.resources.files("sparselbm").joinpath(
            "data/ghia1982_reference.txt")
        text = res.read_text()
    else:
        with open(path) as fh:
            text = fh.read()

    vertical, horizontal = {}, {}
    current_re, current_line = None, None
    rows = {"u": [], "v": []}

    def flush():
        if current_re is None:
            return
        for key, target in (("u", vertical), ("v", horizontal)):
            data = np.array(rows[key])
            if data.size == 0:
                raise ValueError(f"Re={current_re}: missing {key} block")
            coords, values = data[:, 0], data[:, 1]
            if not np.all(np.diff(coords) > 0):
                raise ValueError(f"Re={current_re}: non-monotone {key} coordinates")
            if coords[0] != 0.0 or coords[-1] != 1.0:
                raise ValueError(f"Re={current_re}: {key} must span [0, 1]")
            if key == "u":
                if values[0] != 0.0 or values[-1] != 1.0:
                    raise ValueError(
                        f"Re={current_re}: lid line must run from 0 to 1")
            elif values[0] != 0.0 or values[-1] != 0.0:
                raise ValueError(f"Re={current_re}: v endpoints must be 0")
            target[current_re] = (coords, values)
        rows["u"], rows["v"] = [], []

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if tok[0] == "Re":
            flush()
            current_re = int(tok[1])
            current_line = None
        elif tok[0] in ("u", "v") and len(tok) == 1:
            current_line = tok[0]
        else:
            if current_re is None or current_line is None:
                raise ValueError(f"data row outside a profile block: {line!r}")
            if len(tok) != 2:
                raise ValueError(f"profile rows need 2 columns: {line!r}")
            rows[current_line].append((float(tok[0]), float(tok[1])))
    flush()
    if not vertical:
        raise ValueError("reference file holds no Re blocks")
    return GhiaReferenceTable(vertical=vertical, horizontal=horizontal)


@dataclass
class CenterlineProfiles:
    """Normalized cavity centerline profiles: (coordinate, velocity) pairs."""

    y: np.ndarray
    vx: np.ndarray
    x: np.ndarray
    vy: np.ndarray


def centerline_profiles(simulation):
    """v_x along the vertical centerline and v_y along the horizontal one,
    normalized by the lid speed and the domain extent.  Cavity runs only."""
    if simulation.geometry.provenance.case != "cavity":
        raise ValueError("centerline profiles are defined for the cavity case; "
                         f"got {simulation.geometry.provenance.case!r}")
    n_x, n_y = simulation.geometry.dims
    U = simulation.params.U
    if U == 0:
        scale = 1.0
    else:
        scale = 1.0 / U
    rho, vx, vy = simulation.macroscopic_fields()
    return CenterlineProfiles(
        y=np.arange(n_y) / (n_y - 1),
        vx=vx[:, n_x // 2] * scale,
        x=np.arange(n_x) / (n_x - 1),
        vy=vy[n_y // 2, :] * scale,
    )


@dataclass
class ProfileComparison:
    """Aggregate error figures over both centerline profiles."""

    mse: float
    max_abs_err: float
    max_abs_err_location: tuple
    max_rel_err: float
    max_rel_err_location: tuple
    n_samples: int


def compare_to_ghia(profiles, Re, reference=None, exclude=()):
    """Errors of simulated profiles against the reference samples for one
    Reynolds number.  The simulated profile is linearly interpolated at the
    reference coordinates.  `exclude` lists (line, coordinate) pairs to drop,
    e.g. KNOWN_OUTLIERS[3200]."""
    table = reference if reference is not None else load_ghia_reference()
    if Re not in table.vertical:
        raise ValueError(f"no reference data for Re={Re}; available: "
                         f"{table.reynolds_numbers}")
    excluded = {(line, round(float(c), 6)) for line, c in exclude}

    sq_sum, n = 0.0, 0
    max_abs, abs_loc = -1.0, None
    max_rel, rel_loc = -1.0, None
    for line, (ref_c, ref_v), sim_c, sim_v in (
            ("u", table.vertical[Re], profiles.y, profiles.vx),
            ("v", table.horizontal[Re], profiles.x, profiles.vy)):
        interp = np.interp(ref_c, sim_c, sim_v)
        for c, rv, sv in zip(ref_c, ref_v, interp):
            if (line, round(float(c), 6)) in excluded:
                continue
            err = abs(sv - rv)
            sq_sum += err * err
            n += 1
            if err > max_abs:
                max_abs, abs_loc = err, (line, float(c))
            if abs(rv) > 1e-6 and err / abs(rv) > max_rel:
                max_rel, rel_loc = err / abs(rv), (line, float(c))
    return ProfileComparison(mse=sq_sum / n, max_abs_err=max_abs,
                             max_abs_err_location=abs_loc,
                             max_rel_err=max_rel, max_rel_err_location=rel_loc,
                             n_samples=n)


@dataclass
class PoiseuilleFit:
    """Least-squares parabola through a cross-channel velocity profile."""

    v_max: float
    center: float
    residual: float


def poiseuille_fit(cross_profile, coords=None):
    """Fit v(r) = v_max (1 - (r/R)^2) as a free quadratic; returns the vertex
    value, vertex position and 1 - R^2 of the regression.

    A non-concave or constant profile comes back with residual 1.0.
    """
    v = np.asarray(cross_profile, dtype=np.float64)
    if v.ndim != 1 or v.size < 5:
        raise ValueError("need a 1-D profile with at least 5 samples")
    y = (np.arange(v.size, dtype=np.float64) if coords is None
         else np.asarray(coords, dtype=np.float64))
    if y.shape != v.shape:
        raise ValueError("coords must match the profile length")

    # quadratic least squares v = a y^2 + b y + c
    a, b, c = np.polyfit(y, v, 2)
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    flat = ss_tot <= (1e-12 * max(1.0, float(np.abs(v).max()))) ** 2 * v.size
    if a >= 0.0 or flat:
        return PoiseuilleFit(v_max=float(v.max()), center=float(y[np.argmax(v)]),
                             residual=1.0)
    fitted = a * y * y + b * y + c
    ss_res = float(np.sum((v - fitted) ** 2))
    center = -b / (2.0 * a)
    v_max = c - b * b / (4.0 * a)
    return PoiseuilleFit(v_max=float(v_max), center=float(center),
                         residual=max(0.0, ss_res / ss_tot))


def total_mass(simulation):
    """Sum of all distribution values over non-solid nodes (f64 accumulation)."""
    desc = simulation.geometry.descriptors
    ns_y, ns_x = np.nonzero(desc.type_tag != NodeType.SOLID)
    slots = simulation.field.slot_of[ns_y, ns_x]
    pre = simulation.field.pre
    return float(pre[:, slots].astype(np.float64).sum())


@dataclass
class WakeClassification:
    kind: str  # "steady" | "oscillatory"
    peak_to_peak: float
    period: float | None = None

    @property
    def steady(self):
        return self.kind == "steady"


def classify_wake(probe_series, u_ref, transient_fraction=0.5,
                  sample_stride=1, amplitude_threshold=1e-3,
                  min_post_steps=10_000):
    """Steady/oscillatory classification of a v_y probe series.

    The first `transient_fraction` of the series is dropped; the remainder
    must span at least `min_post_steps` time steps.  The wake counts as
    steady when the post-transient peak-to-peak amplitude stays below
    `amplitude_threshold * u_ref`; otherwise the period is estimated from
    the spacing of upward zero crossings of the de-meaned signal.  Adding a
    constant offset to the series never changes the outcome.
    """
    series = np.asarray(probe_series, dtype=np.float64)
    if series.ndim != 1:
        raise ValueError("probe series must be 1-D")
    cut = int(len(series) * transient_fraction)
    tail = series[cut:]
    if (len(tail) - 1) * sample_stride < min_post_steps:
        raise ValueError(
            f"series too short: {(len(tail) - 1) * sample_stride} steps after "
            f"the transient cut, need {min_post_steps}")

    p2p = float(tail.max() - tail.min())
    if p2p < amplitude_threshold * abs(u_ref):
        return WakeClassification(kind="steady", peak_to_peak=p2p)

    s = tail - tail.mean()
    up = np.nonzero((s[:-1] < 0.0) & (s[1:] >= 0.0))[0]
    period = None
    if len(up) >= 2:
        # sub-sample crossing positions by linear interpolation
        t = up + s[up] / (s[up] - s[up + 1])
        period = float(np.mean(np.diff(t)) * sample_stride)
    return WakeClassification(kind="oscillatory", peak_to_peak=p2p,
                              period=period)
