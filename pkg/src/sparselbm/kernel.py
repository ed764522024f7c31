"""Fused pull-scheme stream-collide solver.

One time step, for every visited node x:

1. gather nine upstream values f'_i = f_pre_i(x - c_i); where the upstream
   node is solid or outside the domain (neighbor-mask bit clear) the value
   reflects from the node's own opposite direction (link-wise bounce-back);
2. velocity/pressure nodes reconstruct the distributions entering through
   the wall with the Zou-He closure for their stored orientation;
3. density and velocity follow from the gathered values, BGK relaxation is
   applied, and the nine results are written to the node's own post slots.

Writes stay node-local, so any partition of the visited nodes over workers
gives bitwise-identical results; the buffer swap afterwards is a parity
flip.  Boundary nodes undergo collision after their closure, like every
other non-solid node.
"""

import time
from functools import lru_cache

import numpy as np
import numba
from numba import njit, prange

from . import boundaries, lattice
from .layouts import LayoutKind, NodeType, active_nodes, allocate

#: node-type codes baked into the kernel
_SOLID = int(NodeType.SOLID)
_VELOCITY = int(NodeType.VELOCITY_BC)
_PRESSURE = int(NodeType.PRESSURE_BC)


class DivergenceError(RuntimeError):
    """A non-finite distribution value appeared during stepping."""

    def __init__(self, step, node, direction):
        self.step = step
        self.node = node
        self.direction = direction
        super().__init__(
            f"non-finite distribution at node {node}, direction {direction}, "
            f"after step {step}")


def set_worker_count(n):
    """Cap the number of kernel workers (numba threads)."""
    numba.set_num_threads(int(n))


def max_worker_count():
    return numba.config.NUMBA_NUM_THREADS


def step_kernel(dtype):
    """The compiled fused kernel for a scalar type."""
    return _step_kernel(np.dtype(dtype).name)


@lru_cache(maxsize=None)
def _step_kernel(dtype_name):
    dt = np.dtype(dtype_name).type
    ops = lattice.node_ops(dtype_name)
    bc = boundaries.bc_ops(dtype_name)
    feq9 = ops.feq9
    moments9 = ops.moments9
    collide9 = ops.collide9
    zou_he_velocity9 = bc.zou_he_velocity9
    zou_he_pressure9 = bc.zou_he_pressure9

    @njit(parallel=True, cache=True)
    def step(pre, post, slot_of, types, masks, orient, bc_index,
             bc_vel, bc_rho, omega, vis_x, vis_y, vis_s):
        for k in prange(vis_x.size):
            x = vis_x[k]
            y = vis_y[k]
            t = types[y, x]
            if t == _SOLID:
                continue
            s = vis_s[k]
            m = masks[y, x]

            f0 = pre[0, s]
            if m & 0x04:
                f1 = pre[1, slot_of[y, x - 1]]
            else:
                f1 = pre[3, s]
            if m & 0x08:
                f2 = pre[2, slot_of[y - 1, x]]
            else:
                f2 = pre[4, s]
            if m & 0x01:
                f3 = pre[3, slot_of[y, x + 1]]
            else:
                f3 = pre[1, s]
            if m & 0x02:
                f4 = pre[4, slot_of[y + 1, x]]
            else:
                f4 = pre[2, s]
            if m & 0x40:
                f5 = pre[5, slot_of[y - 1, x - 1]]
            else:
                f5 = pre[7, s]
            if m & 0x80:
                f6 = pre[6, slot_of[y - 1, x + 1]]
            else:
                f6 = pre[8, s]
            if m & 0x10:
                f7 = pre[7, slot_of[y + 1, x + 1]]
            else:
                f7 = pre[5, s]
            if m & 0x20:
                f8 = pre[8, slot_of[y + 1, x - 1]]
            else:
                f8 = pre[6, s]

            if t == _VELOCITY:
                b = bc_index[y, x]
                f0, f1, f2, f3, f4, f5, f6, f7, f8 = zou_he_velocity9(
                    f0, f1, f2, f3, f4, f5, f6, f7, f8,
                    orient[y, x], bc_vel[b, 0], bc_vel[b, 1])
            elif t == _PRESSURE:
                b = bc_index[y, x]
                f0, f1, f2, f3, f4, f5, f6, f7, f8 = zou_he_pressure9(
                    f0, f1, f2, f3, f4, f5, f6, f7, f8,
                    orient[y, x], bc_rho[b])

            rho, vx, vy = moments9(f0, f1, f2, f3, f4, f5, f6, f7, f8)
            f0, f1, f2, f3, f4, f5, f6, f7, f8 = collide9(
                f0, f1, f2, f3, f4, f5, f6, f7, f8, rho, vx, vy, omega)

            post[0, s] = f0
            post[1, s] = f1
            post[2, s] = f2
            post[3, s] = f3
            post[4, s] = f4
            post[5, s] = f5
            post[6, s] = f6
            post[7, s] = f7
            post[8, s] = f8

    return step


@njit(cache=True)
def _first_nonfinite(pre, vis_s):
    for i in range(9):
        for k in range(vis_s.size):
            if not np.isfinite(pre[i, vis_s[k]]):
                return i, k
    return -1, -1


class Simulation:
    """Geometry + layout-backed PDF field + flow parameters, ready to step."""

    def __init__(self, geometry, params, layout=LayoutKind.DENSE,
                 scalar=np.float64):
        self.geometry = geometry
        self.params = params
        self.layout = (layout if isinstance(layout, LayoutKind)
                       else LayoutKind.parse(layout))
        self.dtype = np.dtype(scalar)
        desc = geometry.descriptors
        self.field = allocate(desc.dims, self.layout, self.dtype, desc.type_tag)
        xs, ys = active_nodes(desc.type_tag, self.layout)
        self._vis_x, self._vis_y = xs, ys
        self._vis_s = self.field.slot_of[ys, xs].astype(np.int32)
        if np.any(self._vis_s < 0):
            raise RuntimeError("visit list includes unallocated storage")
        kinds, vel, rho = geometry.boundary_values.as_arrays(self.dtype)
        self._bc_vel, self._bc_rho = vel, rho
        self._omega = self.dtype.type(params.omega)
        self._kernel = step_kernel(self.dtype)
        self.step_count = 0
        self.visited_nodes_total = 0
        self.initialized = False

    @property
    def visits_per_step(self):
        """Nodes the kernel touches each step (instrumentation counter)."""
        return int(self._vis_x.size)

    @property
    def active_node_count(self):
        """Non-solid nodes; the unit LUPS figures are computed over."""
        return self.geometry.descriptors.non_solid_count()

    def initialize(self, rho0=1.0, v0=(0.0, 0.0)):
        """Set every non-solid node's pre-buffer to equilibrium(rho0, v0).

        rho0 may be a scalar or an (n_y, n_x) array; v0 a pair of scalars or
        of (n_y, n_x) arrays.  Velocity-boundary nodes start at their imposed
        velocity and pressure-boundary nodes at their imposed density, so a
        fresh cavity already shows its moving lid.  The post buffer is
        zeroed and the step counter reset.
        """
        desc = self.geometry.descriptors
        n_x, n_y = desc.dims
        rho = np.broadcast_to(np.asarray(rho0, dtype=np.float64),
                              (n_y, n_x)).copy()
        vx = np.broadcast_to(np.asarray(v0[0], dtype=np.float64),
                             (n_y, n_x)).copy()
        vy = np.broadcast_to(np.asarray(v0[1], dtype=np.float64),
                             (n_y, n_x)).copy()

        table = self.geometry.boundary_values
        tags = desc.type_tag
        for idx in range(len(table)):
            sel_v = (tags == NodeType.VELOCITY_BC) & (desc.bc_index == idx)
            sel_p = (tags == NodeType.PRESSURE_BC) & (desc.bc_index == idx)
            if table.kind(idx) == table.KIND_VELOCITY and sel_v.any():
                ux, uy = table.velocity(idx)
                vx[sel_v], vy[sel_v] = ux, uy
            elif table.kind(idx) == table.KIND_PRESSURE and sel_p.any():
                rho[sel_p] = table.pressure(idx)

        vv = vx * vx + vy * vy
        planes = np.empty((9, n_y, n_x))
        for i in range(9):
            cv = lattice.CX[i] * vx + lattice.CY[i] * vy
            planes[i] = lattice.W[i] * rho * (1.0 + 3.0 * cv
                                              + 4.5 * cv * cv - 1.5 * vv)

        self.field._buffers[:] = 0
        pre = self.field.pre
        ns_y, ns_x = np.nonzero(tags != NodeType.SOLID)
        slots = self.field.slot_of[ns_y, ns_x]
        if np.any(slots < 0):
            raise RuntimeError("non-solid node without allocated storage")
        for i in range(9):
            pre[i, slots] = planes[i, ns_y, ns_x].astype(self.dtype)
        self.step_count = 0
        self.visited_nodes_total = 0
        self.initialized = True
        self.field.frozen = True

    def step(self):
        if not self.initialized:
            raise RuntimeError("initialize() must run before stepping")
        f = self.field
        self._kernel(f.pre, f.post, f.slot_of,
                     self.geometry.descriptors.type_tag,
                     self.geometry.descriptors.neighbor_mask,
                     self.geometry.descriptors.orientation,
                     self.geometry.descriptors.bc_index,
                     self._bc_vel, self._bc_rho, self._omega,
                     self._vis_x, self._vis_y, self._vis_s)
        f.swap_buffers()
        self.step_count += 1
        self.visited_nodes_total += self.visits_per_step

    def run(self, n_steps, observers=(), check_divergence_every=None):
        """Advance n_steps, firing each (every_k, callback) observer at steps
        divisible by k with (step index, macroscopic fields, pre buffer)."""
        if n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {n_steps}")
        for _ in range(n_steps):
            self.step()
            fields = None
            for every_k, callback in observers:
                if self.step_count % every_k == 0:
                    if fields is None:
                        fields = self.macroscopic_fields()
                        view = self.field.pre.view()
                        view.setflags(write=False)
                    try:
                        callback(self.step_count, fields, view)
                    except Exception as exc:
                        raise RuntimeError(
                            f"observer failed at step {self.step_count}"
                        ) from exc
            if (check_divergence_every
                    and self.step_count % check_divergence_every == 0):
                self.check_finite()

    def check_finite(self):
        """Raise DivergenceError if the pre buffer holds a non-finite value."""
        i, k = _first_nonfinite(self.field.pre, self._vis_s)
        if i >= 0:
            node = (int(self._vis_x[k]), int(self._vis_y[k]))
            raise DivergenceError(self.step_count, node, i)

    def macroscopic_fields(self):
        """Per-node (rho, v_x, v_y) arrays of shape (n_y, n_x); solid nodes
        report rho = 0 and zero velocity."""
        desc = self.geometry.descriptors
        n_x, n_y = desc.dims
        rho = np.zeros((n_y, n_x))
        vx = np.zeros((n_y, n_x))
        vy = np.zeros((n_y, n_x))
        ns_y, ns_x = np.nonzero(desc.type_tag != NodeType.SOLID)
        slots = self.field.slot_of[ns_y, ns_x]
        pre = self.field.pre
        f = pre[:, slots].astype(np.float64)
        # same opposite-pair grouping as the kernel: exact at rest
        r = f[0] + ((f[1] + f[3]) + (f[2] + f[4])) + ((f[5] + f[7]) + (f[6] + f[8]))
        d1 = f[5] - f[7]
        d2 = f[8] - f[6]
        mx = (f[1] - f[3]) + (d1 + d2)
        my = (f[2] - f[4]) + (d1 - d2)
        nz = r != 0.0
        ux = np.zeros_like(r)
        uy = np.zeros_like(r)
        ux[nz] = mx[nz] / r[nz]
        uy[nz] = my[nz] / r[nz]
        rho[ns_y, ns_x] = r
        vx[ns_y, ns_x] = ux
        vy[ns_y, ns_x] = uy
        return rho, vx, vy
