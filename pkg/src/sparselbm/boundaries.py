"""Boundary closures applied during the gather phase.

Three kinds, matching the node types: link-wise bounce-back (walls and
obstacle surfaces), Zou-He constant velocity, and Zou-He constant pressure.
The Zou-He closures reconstruct the distributions entering through an
axis-aligned wall so that the node's moments equal the imposed (rho, v)
pair; that moment identity is the contract every transcription here is
tested against.

West-wall velocity closure (unknowns f1, f5, f8):

    rho = (f0 + f2 + f4 + 2 (f3 + f6 + f7)) / (1 - u_x)
    f1  = f3 + (2/3) rho u_x
    f5  = f7 - (f2 - f4)/2 + (1/6) rho u_x + (1/2) rho u_y
    f8  = f6 + (f2 - f4)/2 + (1/6) rho u_x - (1/2) rho u_y

The other walls follow by symmetry.  Pressure closures solve the
wall-normal velocity from the imposed density first (tangential velocity
is taken as zero) and then apply the velocity closure.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .lattice import OPP, node_ops
from .layouts import BoundaryValueTable, NodeType, Orientation


@dataclass(frozen=True)
class BcOutcome:
    """Post-closure distributions plus the (rho, v) pair the closure enforces."""

    f: np.ndarray
    rho: float
    velocity: np.ndarray


def bounce_back_gather(f_pre_at_node, missing_direction):
    """Gather-time reflection: the value streaming in from a solid or
    out-of-domain upstream node in direction i is the node's own previous
    value in the opposite direction."""
    i = int(missing_direction)
    if not 1 <= i <= 8:
        raise ValueError(f"direction must be a moving direction 1..8, got {i}")
    f = np.asarray(f_pre_at_node, dtype=np.float64)
    if f.shape != (9,):
        raise ValueError(f"expected 9 distribution values, got shape {f.shape}")
    return float(f[OPP[i]])


def zou_he_velocity(f_known, wall_orientation, u_wall):
    """Reconstruct unknown distributions at a straight wall with imposed
    velocity.  Slots of unknown directions in `f_known` are ignored."""
    orient = _parse_orientation(wall_orientation)
    f = np.asarray(f_known, dtype=np.float64).copy()
    if f.shape != (9,):
        raise ValueError(f"expected 9 distribution values, got shape {f.shape}")
    u = np.asarray(u_wall, dtype=np.float64)
    if u[0] * u[0] + u[1] * u[1] >= 1.0:
        raise ValueError(f"wall velocity magnitude must stay below 1, got {u}")
    _check_normal_velocity(orient, u)
    ops = bc_ops(np.float64)
    out = np.array(ops.zou_he_velocity9(*f, int(orient), u[0], u[1]))
    rho, vx, vy = node_ops(np.float64).moments9(*out)
    return BcOutcome(f=out, rho=rho, velocity=np.array([u[0], u[1]]))


def zou_he_pressure(f_known, wall_orientation, rho_wall):
    """Reconstruct unknown distributions at a straight wall with imposed
    density; the wall-normal velocity follows from rho_wall, the tangential
    component is zero."""
    orient = _parse_orientation(wall_orientation)
    if not np.isfinite(rho_wall) or rho_wall <= 0:
        raise ValueError(f"imposed density must be positive, got {rho_wall}")
    f = np.asarray(f_known, dtype=np.float64).copy()
    if f.shape != (9,):
        raise ValueError(f"expected 9 distribution values, got shape {f.shape}")
    ops = bc_ops(np.float64)
    out = np.array(ops.zou_he_pressure9(*f, int(orient), float(rho_wall)))
    rho, vx, vy = node_ops(np.float64).moments9(*out)
    return BcOutcome(f=out, rho=float(rho_wall), velocity=np.array([vx, vy]))


def resolve_boundary(node_descriptor, gathered_f, boundary_values):
    """Apply a node's closure to its gathered distributions.

    Fluid and bounce-back nodes pass through unchanged (their reflections
    already happened while gathering); velocity and pressure nodes get the
    Zou-He reconstruction for the node's stored wall orientation.
    """
    f = np.asarray(gathered_f, dtype=np.float64)
    tag = node_descriptor.type_tag
    if tag in (NodeType.FLUID, NodeType.BOUNCE_BACK_WALL):
        return f.copy()
    if tag == NodeType.SOLID:
        raise ValueError("solid nodes are never resolved")
    if node_descriptor.bc_index < 0:
        raise ValueError("boundary node has no boundary-value entry")
    if node_descriptor.orientation == Orientation.NONE:
        raise ValueError("boundary node has no wall orientation")
    if tag == NodeType.VELOCITY_BC:
        u = boundary_values.velocity(node_descriptor.bc_index)
        return zou_he_velocity(f, node_descriptor.orientation, u).f
    if tag == NodeType.PRESSURE_BC:
        rho = boundary_values.pressure(node_descriptor.bc_index)
        return zou_he_pressure(f, node_descriptor.orientation, rho).f
    raise ValueError(f"unknown node type {tag}")


def _parse_orientation(wall_orientation):
    if isinstance(wall_orientation, Orientation):
        if wall_orientation == Orientation.NONE:
            raise ValueError("wall orientation must name a side")
        return wall_orientation
    key = str(wall_orientation).strip().upper()
    table = {"N": Orientation.NORTH, "NORTH": Orientation.NORTH,
             "S": Orientation.SOUTH, "SOUTH": Orientation.SOUTH,
             "E": Orientation.EAST, "EAST": Orientation.EAST,
             "W": Orientation.WEST, "WEST": Orientation.WEST}
    if key not in table:
        raise ValueError(f"unknown wall orientation {wall_orientation!r}")
    return table[key]


def _check_normal_velocity(orient, u):
    # the closure divides by (1 -+ u_normal); reject the singular settings
    normal = {Orientation.WEST: 1.0 - u[0], Orientation.EAST: 1.0 + u[0],
              Orientation.SOUTH: 1.0 - u[1], Orientation.NORTH: 1.0 + u[1]}[orient]
    if normal == 0.0:
        raise ValueError(
            f"imposed normal velocity makes the {orient.name} closure singular")


def bc_ops(dtype):
    """Compiled Zou-He closures specialized to a scalar type.

    Orientation is passed as the integer value of :class:`Orientation`.
    """
    return _bc_ops(np.dtype(dtype).name)


@lru_cache(maxsize=None)
def _bc_ops(dtype_name):
    dt = np.dtype(dtype_name).type
    c23 = dt(2.0 / 3.0)
    c16 = dt(1.0 / 6.0)
    c05 = dt(0.5)
    one = dt(1.0)
    two = dt(2.0)
    zero = dt(0.0)
    N = int(Orientation.NORTH)
    S = int(Orientation.SOUTH)
    E = int(Orientation.EAST)
    W = int(Orientation.WEST)

    @njit(inline="always", cache=True)
    def zou_he_velocity9(f0, f1, f2, f3, f4, f5, f6, f7, f8, orient, ux, uy):
        if orient == W:
            rho = (f0 + f2 + f4 + two * (f3 + f6 + f7)) / (one - ux)
            f1 = f3 + c23 * rho * ux
            f5 = f7 - c05 * (f2 - f4) + c16 * rho * ux + c05 * rho * uy
            f8 = f6 + c05 * (f2 - f4) + c16 * rho * ux - c05 * rho * uy
        elif orient == E:
            rho = (f0 + f2 + f4 + two * (f1 + f5 + f8)) / (one + ux)
            f3 = f1 - c23 * rho * ux
            f7 = f5 + c05 * (f2 - f4) - c16 * rho * ux - c05 * rho * uy
            f6 = f8 - c05 * (f2 - f4) - c16 * rho * ux + c05 * rho * uy
        elif orient == N:
            rho = (f0 + f1 + f3 + two * (f2 + f5 + f6)) / (one + uy)
            f4 = f2 - c23 * rho * uy
            f7 = f5 + c05 * (f1 - f3) - c05 * rho * ux - c16 * rho * uy
            f8 = f6 - c05 * (f1 - f3) + c05 * rho * ux - c16 * rho * uy
        else:  # south
            rho = (f0 + f1 + f3 + two * (f4 + f7 + f8)) / (one - uy)
            f2 = f4 + c23 * rho * uy
            f5 = f7 - c05 * (f1 - f3) + c05 * rho * ux + c16 * rho * uy
            f6 = f8 + c05 * (f1 - f3) - c05 * rho * ux + c16 * rho * uy
        return f0, f1, f2, f3, f4, f5, f6, f7, f8

    @njit(inline="always", cache=True)
    def zou_he_pressure9(f0, f1, f2, f3, f4, f5, f6, f7, f8, orient, rho_wall):
        if orient == W:
            ux = one - (f0 + f2 + f4 + two * (f3 + f6 + f7)) / rho_wall
            uy = zero
        elif orient == E:
            ux = (f0 + f2 + f4 + two * (f1 + f5 + f8)) / rho_wall - one
            uy = zero
        elif orient == N:
            ux = zero
            uy = (f0 + f1 + f3 + two * (f2 + f5 + f6)) / rho_wall - one
        else:  # south
            ux = zero
            uy = one - (f0 + f1 + f3 + two * (f4 + f7 + f8)) / rho_wall
        return zou_he_velocity9(f0, f1, f2, f3, f4, f5, f6, f7, f8, orient, ux, uy)

    class _Ops:
        pass

    ops = _Ops()
    ops.dtype = np.dtype(dtype_name)
    ops.zou_he_velocity9 = zou_he_velocity9
    ops.zou_he_pressure9 = zou_he_pressure9
    return ops
