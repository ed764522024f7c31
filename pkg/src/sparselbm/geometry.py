"""Geometry construction for the five case families, porosity accounting,
and a text serialization format.

Conventions shared by all builders:

* Walls of the rectangular domain are wet boundary nodes (bounce-back,
  velocity or pressure type), never solid, so a plain cavity or channel has
  porosity 1.0.
* Obstacles are solid interiors wrapped in a one-node bounce-back ring; a
  solid node is never left directly adjacent to a plain fluid node.
* Corner ownership follows the priority velocity > pressure > bounce-back;
  in the cavity the lid owns its two corners.

Geometry files (see save_geometry) are line oriented:

    SLBMGEO 1
    nx <int>
    ny <int>
    case <token>
    seed <int or none>
    porosity <float>
    param <key> <value>          # zero or more provenance entries
    bc <idx> velocity <vx> <vy>  # boundary table, in index order
    bc <idx> pressure <rho>
    nodes
    <runlen> <type> <orient> <bcidx>   # row-major RLE from node (0, 0)
    end
"""

from dataclasses import dataclass, field

import numpy as np

from .layouts import (BoundaryValueTable, NodeDescriptorField, NodeType,
                      Orientation)

RANDOM_RADIUS_RANGE = (8, 256)
REGULAR_GRID = 8
POROSITY_TOLERANCE = 0.02


class GeometryError(ValueError):
    """Invalid build parameters or conflicting boundary assignments."""


class GeometryParseError(ValueError):
    """Malformed geometry file; carries the offending line number."""

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"{message}{where}")


@dataclass
class Provenance:
    case: str
    params: dict = field(default_factory=dict)
    seed: int | None = None


@dataclass
class Geometry:
    descriptors: NodeDescriptorField
    boundary_values: BoundaryValueTable
    porosity: float
    provenance: Provenance

    @property
    def dims(self):
        return self.descriptors.dims

    def refresh_porosity(self):
        self.porosity = porosity(self)
        return self.porosity

    def __eq__(self, other):
        if not isinstance(other, Geometry):
            return NotImplemented
        return (self.descriptors == other.descriptors
                and self.boundary_values == other.boundary_values
                and self.porosity == other.porosity
                and self.provenance == other.provenance)


def porosity(geometry):
    """Fraction of non-solid nodes, recomputed from the descriptors."""
    d = geometry.descriptors
    n_x, n_y = d.dims
    return d.non_solid_count() / (n_x * n_y)


def from_arrays(case, type_tag, boundary_values=None, bc_index=None,
                orientation=None, params=None, seed=None):
    """Assemble a Geometry from raw descriptor arrays (used by builders and
    by tests constructing ad-hoc domains)."""
    desc = NodeDescriptorField(type_tag, bc_index=bc_index, orientation=orientation)
    table = boundary_values if boundary_values is not None else BoundaryValueTable()
    _validate_bc_assignments(desc, table)
    geom = Geometry(descriptors=desc, boundary_values=table, porosity=0.0,
                    provenance=Provenance(case=case, params=dict(params or {}),
                                          seed=seed))
    geom.refresh_porosity()
    return geom


def _validate_bc_assignments(desc, table):
    tags = desc.type_tag
    is_bc = (tags == NodeType.VELOCITY_BC) | (tags == NodeType.PRESSURE_BC)
    if np.any(is_bc & (desc.bc_index < 0)):
        raise GeometryError("velocity/pressure node without a boundary value")
    if np.any(is_bc & (desc.orientation == Orientation.NONE)):
        raise GeometryError("velocity/pressure node without a wall orientation")
    idx = desc.bc_index[is_bc]
    if idx.size and int(idx.max()) >= len(table):
        raise GeometryError("bc_index points past the boundary value table")
    for tag, kind in ((NodeType.VELOCITY_BC, BoundaryValueTable.KIND_VELOCITY),
                      (NodeType.PRESSURE_BC, BoundaryValueTable.KIND_PRESSURE)):
        for i in np.unique(desc.bc_index[tags == tag]):
            if table.kind(int(i)) != kind:
                raise GeometryError(
                    f"boundary entry {i} has the wrong kind for {tag.name}")


def build_cavity(n_x, n_y, U_lid):
    """Square chamber driven by a moving top lid.

    The top row (corners included) imposes velocity (U_lid, 0); the other
    three walls are bounce-back.  The characteristic length n_y - 1 is
    recorded in the provenance.
    """
    if n_x < 8 or n_y < 8:
        raise GeometryError(f"cavity needs at least 8x8 nodes, got {n_x}x{n_y}")
    types = np.full((n_y, n_x), NodeType.FLUID, dtype=np.uint8)
    bc_index = np.full((n_y, n_x), -1, dtype=np.int32)
    orient = np.zeros((n_y, n_x), dtype=np.uint8)

    types[0, :] = NodeType.BOUNCE_BACK_WALL
    types[:, 0] = NodeType.BOUNCE_BACK_WALL
    types[:, n_x - 1] = NodeType.BOUNCE_BACK_WALL

    table = BoundaryValueTable()
    lid = table.add_velocity(U_lid, 0.0)
    types[n_y - 1, :] = NodeType.VELOCITY_BC
    bc_index[n_y - 1, :] = lid
    orient[n_y - 1, :] = Orientation.NORTH

    return from_arrays("cavity", types, table, bc_index, orient,
                       params={"U": repr(float(U_lid)), "L": str(n_y - 1)})


class VelocityInlet:
    def __init__(self, v):
        self.v = (float(v[0]), float(v[1]))


class PressureInlet:
    def __init__(self, rho):
        self.rho = float(rho)


def build_channel(n_x, n_y, inlet, outlet_rho=1.0):
    """Straight channel: inlet column on the left, constant-pressure outlet
    (rho = 1 by default) on the right, bounce-back top and bottom walls.

    Corner nodes of the inlet/outlet columns belong to the inlet/outlet
    (velocity/pressure beats bounce-back).
    """
    if not (n_x > n_y >= 8):
        raise GeometryError(
            f"channel needs n_x > n_y >= 8, got {n_x}x{n_y}")
    types = np.full((n_y, n_x), NodeType.FLUID, dtype=np.uint8)
    bc_index = np.full((n_y, n_x), -1, dtype=np.int32)
    orient = np.zeros((n_y, n_x), dtype=np.uint8)

    types[0, :] = NodeType.BOUNCE_BACK_WALL
    types[n_y - 1, :] = NodeType.BOUNCE_BACK_WALL

    table = BoundaryValueTable()
    if isinstance(inlet, VelocityInlet):
        inlet_idx = table.add_velocity(*inlet.v)
        inlet_type = NodeType.VELOCITY_BC
        case = "chan_v"
        params = {"inlet_v": repr(inlet.v)}
    elif isinstance(inlet, PressureInlet):
        inlet_idx = table.add_pressure(inlet.rho)
        inlet_type = NodeType.PRESSURE_BC
        case = "chan_p"
        params = {"inlet_rho": repr(inlet.rho)}
    else:
        raise GeometryError(f"inlet must be VelocityInlet or PressureInlet, "
                            f"got {type(inlet).__name__}")
    outlet_idx = table.add_pressure(outlet_rho)
    params["outlet_rho"] = repr(float(outlet_rho))

    types[:, 0] = inlet_type
    bc_index[:, 0] = inlet_idx
    orient[:, 0] = Orientation.WEST
    types[:, n_x - 1] = NodeType.PRESSURE_BC
    bc_index[:, n_x - 1] = outlet_idx
    orient[:, n_x - 1] = Orientation.EAST

    return from_arrays(case, types, table, bc_index, orient, params=params)


def add_cylinder(geometry, shape, size, center):
    """Plant a solid cylinder (circle or square cross-section) into a fluid
    region and wrap it in a bounce-back ring.

    `size` is the circle diameter or the square edge in nodes; the cylinder
    plus its ring must fall entirely on currently-fluid nodes.
    """
    if shape not in ("circle", "square"):
        raise GeometryError(f"shape must be 'circle' or 'square', got {shape!r}")
    if size < 1:
        raise GeometryError(f"cylinder size must be >= 1 node, got {size}")
    desc = geometry.descriptors
    n_x, n_y = desc.dims
    cx, cy = int(center[0]), int(center[1])

    ys, xs = np.mgrid[0:n_y, 0:n_x]
    if shape == "circle":
        # integer-exact membership: (x-cx)^2 + (y-cy)^2 <= (size/2)^2
        inside = 4 * ((xs - cx) ** 2 + (ys - cy) ** 2) <= size * size
    else:
        half_lo, half_hi = size // 2, (size - 1) // 2
        inside = ((xs >= cx - half_lo) & (xs <= cx + half_hi)
                  & (ys >= cy - half_lo) & (ys <= cy + half_hi))

    if not inside.any():
        raise GeometryError("cylinder covers no nodes")
    iy, ix = np.nonzero(inside)
    if ix.min() < 1 or ix.max() > n_x - 2 or iy.min() < 1 or iy.max() > n_y - 2:
        raise GeometryError("cylinder does not fit strictly inside the domain")

    ring = _dilate8(inside) & ~inside
    affected = inside | ring
    if np.any(desc.type_tag[affected] != NodeType.FLUID):
        raise GeometryError(
            "cylinder (including its bounce-back ring) must lie on fluid nodes")

    desc.type_tag[inside] = NodeType.SOLID
    desc.type_tag[ring] = NodeType.BOUNCE_BACK_WALL
    desc.recompute_neighbor_masks()
    geometry.refresh_porosity()
    geometry.provenance.params[f"cylinder_{shape}"] = \
        f"size={size} center=({cx},{cy})"
    return geometry


def _dilate8(mask):
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    out[1:, 1:] |= mask[:-1, :-1]
    out[1:, :-1] |= mask[:-1, 1:]
    out[:-1, 1:] |= mask[1:, :-1]
    out[:-1, :-1] |= mask[1:, 1:]
    return out


def _paint_disk(solid, cx, cy, r):
    """Set solid nodes of one clipped disk; interior region only.

    The radius may be fractional; membership stays exact because integer
    squared distances are compared against r^2.
    """
    n_y, n_x = solid.shape
    reach = int(np.ceil(r))
    x0, x1 = max(1, cx - reach), min(n_x - 2, cx + reach)
    y0, y1 = max(1, cy - reach), min(n_y - 2, cy + reach)
    if x0 > x1 or y0 > y1:
        return
    ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    solid[y0:y1 + 1, x0:x1 + 1] |= \
        (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r


def _porous_walls(n):
    """Type/bc/orientation grids for the porous shell: pressure inlet on the
    left (rho = 1.016), pressure outlet on the right (rho = 1.0), bounce-back
    top and bottom."""
    types = np.full((n, n), NodeType.FLUID, dtype=np.uint8)
    bc_index = np.full((n, n), -1, dtype=np.int32)
    orient = np.zeros((n, n), dtype=np.uint8)
    table = BoundaryValueTable()
    inlet = table.add_pressure(1.016)
    outlet = table.add_pressure(1.0)
    types[0, :] = NodeType.BOUNCE_BACK_WALL
    types[n - 1, :] = NodeType.BOUNCE_BACK_WALL
    types[:, 0] = NodeType.PRESSURE_BC
    bc_index[:, 0] = inlet
    orient[:, 0] = Orientation.WEST
    types[:, n - 1] = NodeType.PRESSURE_BC
    bc_index[:, n - 1] = outlet
    orient[:, n - 1] = Orientation.EAST
    return types, bc_index, orient, table


def _apply_solids(types, solid):
    """Solidify masked nodes (walls win over solids) and add the ring."""
    solid = solid.copy()
    solid[types != NodeType.FLUID] = False
    types[solid] = NodeType.SOLID
    ring = _dilate8(solid) & ~solid & (types == NodeType.FLUID)
    types[ring] = NodeType.BOUNCE_BACK_WALL


def _porosity_of(types):
    return np.count_nonzero(types != NodeType.SOLID) / types.size


def build_porous_regular(n, phi_target):
    """n x n porous domain filled with an 8 x 8 array of equal circles whose
    radius is chosen by bisection to hit the target porosity.

    Circle centers sit on a uniform grid with spacing n/8, offset n/16.
    """
    if not 0.3 <= phi_target <= 1.0:
        raise GeometryError(
            f"regular arrays cover porosity 0.3..1.0, got {phi_target}")
    if n < 8 * REGULAR_GRID:
        raise GeometryError(f"domain too small for an 8x8 circle array: {n}")

    spacing = n / REGULAR_GRID
    centers = [(int(round((i + 0.5) * spacing)), int(round((j + 0.5) * spacing)))
               for j in range(REGULAR_GRID) for i in range(REGULAR_GRID)]

    def achieved(radius):
        types, bc_index, orient, table = _porous_walls(n)
        if radius > 0:
            solid = np.zeros((n, n), dtype=bool)
            for cx, cy in centers:
                _paint_disk(solid, cx, cy, radius)
            _apply_solids(types, solid)
        return _porosity_of(types), (types, bc_index, orient, table)

    lo, hi = 0.0, spacing
    phi_lo, grids_lo = achieved(lo)
    best_err, radius, grids = abs(phi_lo - phi_target), lo, grids_lo
    if best_err > POROSITY_TOLERANCE:
        phi_hi, grids_hi = achieved(hi)
        if phi_hi > phi_target + POROSITY_TOLERANCE:
            raise GeometryError(
                f"target porosity {phi_target} unreachable (minimum about "
                f"{phi_hi:.3f} on a {n}x{n} grid)")
        if abs(phi_hi - phi_target) < best_err:
            best_err, radius, grids = abs(phi_hi - phi_target), hi, grids_hi
        for _ in range(60):
            if best_err <= POROSITY_TOLERANCE:
                break
            mid = 0.5 * (lo + hi)
            phi_mid, grids_mid = achieved(mid)
            if abs(phi_mid - phi_target) < best_err:
                best_err, radius, grids = abs(phi_mid - phi_target), mid, grids_mid
            if phi_mid > phi_target:
                lo = mid
            else:
                hi = mid
        if best_err > POROSITY_TOLERANCE:
            raise GeometryError(
                f"bisection cannot reach porosity {phi_target} within "
                f"{POROSITY_TOLERANCE} on a {n}x{n} grid")

    types, bc_index, orient, table = grids
    return from_arrays("porous_regular", types, table, bc_index, orient,
                       params={"phi_target": repr(float(phi_target)),
                               "radius": repr(float(radius))})


def build_porous_random(n, phi_target, seed):
    """n x n porous domain filled with randomly placed circles (radii drawn
    uniformly from 8..256 nodes) until the porosity reaches the target band.

    Deterministic for a fixed seed; candidate circles that would overshoot
    the band are rejected, with the radius range shrinking after rejections.
    """
    if not 0.1 <= phi_target <= 1.0:
        raise GeometryError(
            f"random packings cover porosity 0.1..1.0, got {phi_target}")
    if n < 32:
        raise GeometryError(f"domain too small for random circles: {n}")

    rng = np.random.default_rng(seed)
    r_lo, r_hi = RANDOM_RADIUS_RANGE
    types, bc_index, orient, table = _porous_walls(n)
    solid = np.zeros((n, n), dtype=bool)
    base_types = types.copy()

    def phi_with(mask):
        t = base_types.copy()
        _apply_solids(t, mask)
        return _porosity_of(t)

    phi = phi_with(solid)
    attempts = 0
    cap = r_hi
    while phi > phi_target + POROSITY_TOLERANCE and attempts < 10_000:
        attempts += 1
        r = int(rng.integers(r_lo, cap + 1))
        cx = int(rng.integers(1, n - 1))
        cy = int(rng.integers(1, n - 1))
        trial = solid.copy()
        _paint_disk(trial, cx, cy, r)
        phi_trial = phi_with(trial)
        if phi_trial < phi_target - POROSITY_TOLERANCE:
            cap = max(r_lo, r // 2)
            continue
        solid = trial
        phi = phi_trial

    _apply_solids(types, solid)
    return from_arrays("porous_random", types, table, bc_index, orient,
                       params={"phi_target": repr(float(phi_target))},
                       seed=int(seed))


# ---------------------------------------------------------------------------
# serialization


def save_geometry(geometry, path):
    """Write the documented text format; see the module docstring."""
    desc = geometry.descriptors
    n_x, n_y = desc.dims
    lines = ["SLBMGEO 1", f"nx {n_x}", f"ny {n_y}",
             f"case {geometry.provenance.case}",
             f"seed {geometry.provenance.seed if geometry.provenance.seed is not None else 'none'}",
             f"porosity {geometry.porosity!r}"]
    for key in sorted(geometry.provenance.params):
        lines.append(f"param {key} {geometry.provenance.params[key]}")
    table = geometry.boundary_values
    for i in range(len(table)):
        if table.kind(i) == BoundaryValueTable.KIND_VELOCITY:
            vx, vy = table.velocity(i)
            lines.append(f"bc {i} velocity {float(vx)!r} {float(vy)!r}")
        else:
            lines.append(f"bc {i} pressure {float(table.pressure(i))!r}")
    lines.append("nodes")
    flat = np.stack([desc.type_tag.ravel().astype(np.int64),
                     desc.orientation.ravel().astype(np.int64),
                     desc.bc_index.ravel().astype(np.int64)], axis=1)
    start = 0
    for end in range(1, flat.shape[0] + 1):
        if end == flat.shape[0] or not np.array_equal(flat[end], flat[start]):
            t, o, b = flat[start]
            lines.append(f"{end - start} {t} {o} {b}")
            start = end
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_geometry(path):
    """Parse a geometry file back into a Geometry (see save_geometry)."""
    with open(path) as fh:
        raw = fh.readlines()

    def parse_error(msg, no):
        raise GeometryParseError(msg, line_no=no)

    if not raw or raw[0].split() != ["SLBMGEO", "1"]:
        parse_error("missing SLBMGEO 1 magic header", 1)

    header = {"param": {}, "bc": []}
    body_start = None
    for no, line in enumerate(raw[1:], start=2):
        tok = line.split()
        if not tok or tok[0].startswith("#"):
            continue
        if tok[0] == "nodes":
            body_start = no
            break
        if tok[0] == "param":
            if len(tok) < 3:
                parse_error("param needs a key and a value", no)
            header["param"][tok[1]] = " ".join(tok[2:])
        elif tok[0] == "bc":
            header["bc"].append((no, tok[1:]))
        elif tok[0] in ("nx", "ny", "case", "seed", "porosity"):
            if len(tok) != 2:
                parse_error(f"{tok[0]} needs exactly one value", no)
            header[tok[0]] = tok[1]
        else:
            parse_error(f"unknown header key {tok[0]!r}", no)
    if body_start is None:
        parse_error("missing nodes section", len(raw))
    for key in ("nx", "ny", "case", "seed", "porosity"):
        if key not in header:
            parse_error(f"missing header key {key!r}", body_start)

    try:
        n_x, n_y = int(header["nx"]), int(header["ny"])
        stored_phi = float(header["porosity"])
        seed = None if header["seed"] == "none" else int(header["seed"])
    except ValueError:
        parse_error("malformed numeric header value", body_start)
    if n_x <= 0 or n_y <= 0:
        parse_error("dims must be positive", body_start)

    table = BoundaryValueTable()
    for no, tok in header["bc"]:
        try:
            idx = int(tok[0])
            if tok[1] == "velocity" and len(tok) == 4:
                got = table.add_velocity(float(tok[2]), float(tok[3]))
            elif tok[1] == "pressure" and len(tok) == 3:
                got = table.add_pressure(float(tok[2]))
            else:
                parse_error("malformed bc entry", no)
        except (ValueError, IndexError):
            parse_error("malformed bc entry", no)
        if got != idx:
            parse_error(f"bc entries out of order (expected index {got})", no)

    total = n_x * n_y
    flat = np.zeros((total, 3), dtype=np.int64)
    filled = 0
    closed = False
    for no, line in enumerate(raw[body_start:], start=body_start + 1):
        tok = line.split()
        if not tok or tok[0].startswith("#"):
            continue
        if tok[0] == "end":
            closed = True
            break
        if len(tok) != 4:
            parse_error("node run must be '<len> <type> <orient> <bcidx>'", no)
        try:
            count, t, o, b = (int(v) for v in tok)
        except ValueError:
            parse_error("malformed node run", no)
        if count <= 0 or filled + count > total:
            parse_error("node runs exceed nx*ny nodes", no)
        if not 0 <= t <= 4 or not 0 <= o <= 4:
            parse_error(f"node type/orientation out of range: {t}/{o}", no)
        flat[filled:filled + count] = (t, o, b)
        filled += count
    if not closed:
        parse_error("truncated file: missing 'end'", len(raw))
    if filled != total:
        parse_error(f"node payload covers {filled} of {total} nodes", len(raw))

    types = flat[:, 0].astype(np.uint8).reshape(n_y, n_x)
    orient = flat[:, 1].astype(np.uint8).reshape(n_y, n_x)
    bc_index = flat[:, 2].astype(np.int32).reshape(n_y, n_x)
    try:
        geom = from_arrays(header["case"], types, table, bc_index, orient,
                           params=header["param"], seed=seed)
    except GeometryError as exc:
        raise GeometryParseError(f"inconsistent geometry payload: {exc}") from exc
    if abs(geom.porosity - stored_phi) > 1e-12:
        raise GeometryParseError(
            f"stored porosity {stored_phi} does not match recomputed "
            f"{geom.porosity}")
    return geom
