import numpy as np
import pytest

import sparselbm as slb


def canonical_state(sim, which="pre"):
    """Node-major (9, n_y, n_x) copy of a simulation buffer; unallocated or
    solid slots read as stored (zero)."""
    n_x, n_y = sim.geometry.dims
    buf = sim.field.pre if which == "pre" else sim.field.post
    out = np.zeros((9, n_y, n_x), dtype=sim.dtype)
    slots = sim.field.slot_of
    ok = slots >= 0
    for i in range(9):
        out[i][ok] = buf[i][slots[ok]]
    return out


def random_mixed_geometry(seed, n_x=16, n_y=16, solid_fraction=0.12):
    """Small domain exercising every boundary kind: velocity inlet (west),
    pressure outlet (east), moving lid (north), bounce-back floor (south),
    random solid blobs with bounce-back rings inside."""
    rng = np.random.default_rng(seed)
    types = np.full((n_y, n_x), slb.NodeType.FLUID, dtype=np.uint8)
    bc_index = np.full((n_y, n_x), -1, dtype=np.int32)
    orient = np.zeros((n_y, n_x), dtype=np.uint8)
    table = slb.BoundaryValueTable()

    inlet = table.add_velocity(0.04, 0.01)
    lid = table.add_velocity(0.03, 0.0)
    outlet = table.add_pressure(1.002)

    types[0, :] = slb.NodeType.BOUNCE_BACK_WALL
    types[n_y - 1, :] = slb.NodeType.VELOCITY_BC
    bc_index[n_y - 1, :] = lid
    orient[n_y - 1, :] = slb.Orientation.NORTH
    types[:, 0] = slb.NodeType.VELOCITY_BC
    bc_index[:, 0] = inlet
    orient[:, 0] = slb.Orientation.WEST
    types[:, n_x - 1] = slb.NodeType.PRESSURE_BC
    bc_index[:, n_x - 1] = outlet
    orient[:, n_x - 1] = slb.Orientation.EAST
    # corner ownership: velocity beats pressure beats bounce-back
    types[n_y - 1, 0] = slb.NodeType.VELOCITY_BC
    bc_index[n_y - 1, 0] = lid
    orient[n_y - 1, 0] = slb.Orientation.NORTH

    solid = np.zeros((n_y, n_x), dtype=bool)
    interior = rng.random((n_y - 4, n_x - 4)) < solid_fraction
    solid[2:-2, 2:-2] = interior
    types[solid] = slb.NodeType.SOLID
    ring = np.zeros_like(solid)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            shifted = np.zeros_like(solid)
            ys = slice(max(0, dy), n_y + min(0, dy))
            yo = slice(max(0, -dy), n_y + min(0, -dy))
            xs = slice(max(0, dx), n_x + min(0, dx))
            xo = slice(max(0, -dx), n_x + min(0, -dx))
            shifted[ys, xs] = solid[yo, xo]
            ring |= shifted
    ring &= ~solid & (types == slb.NodeType.FLUID)
    types[ring] = slb.NodeType.BOUNCE_BACK_WALL

    return slb.from_arrays(f"random_mixed_{seed}", types, table, bc_index,
                           orient, seed=seed)


def oracle_inputs(geometry):
    """Pull the arrays the reference implementation wants from a Geometry."""
    desc = geometry.descriptors
    kinds, vel, rho = geometry.boundary_values.as_arrays(np.float64)
    return (desc.type_tag.astype(np.int64), desc.orientation.astype(np.int64),
            [tuple(v) for v in vel], list(rho),
            desc.bc_index.astype(np.int64))


@pytest.fixture
def mixed_geometry():
    return random_mixed_geometry(seed=1)


@pytest.fixture(scope="session")
def ghia_table():
    return slb.load_ghia_reference()
