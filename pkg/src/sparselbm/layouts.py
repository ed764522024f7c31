"""Layout-parameterized storage for distribution functions and node
descriptors.

Four physical arrangements share one logical interface: every layout maps a
node (x, y) to a storage slot, and the PDFs live in two structure-of-arrays
buffers of shape (9, plane_stride) so that all f_i for a fixed direction i
are contiguous.  The layouts differ only in the slot map and in which nodes
the solver kernel visits:

* dense         - slot = y * n_x + x; kernel visits every node.
* tile          - nodes grouped in 16x16 tiles, tiles row-major; kernel
                  visits every node.  Edge tiles are padded with slots that
                  behave like solid nodes.
* bitmask_node  - dense placement, but the kernel visits only non-solid
                  nodes (one validity bit per node).
* pointer_tile  - 16x16 tiles allocated lazily; a tile whose in-domain
                  nodes are all solid gets no storage and is never visited.

Buffer swap is a parity flip; no data moves.
"""

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .lattice import CX, CY

log = logging.getLogger(__name__)

TILE_EDGE = 16
TILE_NODES = TILE_EDGE * TILE_EDGE
CACHE_LINE_BYTES = 64


class LayoutKind(enum.Enum):
    DENSE = "dense"
    TILE = "tile"
    BITMASK_NODE = "bitmask_node"
    POINTER_TILE = "pointer_tile"

    @classmethod
    def parse(cls, name):
        key = str(name).strip().lower().replace("-", "_")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown layout {name!r}; expected one of "
                         f"{[k.value for k in cls]}")


class NodeType(enum.IntEnum):
    SOLID = 0
    FLUID = 1
    BOUNCE_BACK_WALL = 2
    VELOCITY_BC = 3
    PRESSURE_BC = 4


class Orientation(enum.IntEnum):
    """Wall side a boundary node faces, for Zou-He closures."""

    NONE = 0
    NORTH = 1
    SOUTH = 2
    EAST = 3
    WEST = 4


class BoundaryValueTable:
    """Registered imposed values referenced by node bc_index.

    Each entry is either an imposed velocity 2-vector or an imposed density.
    """

    KIND_VELOCITY = 0
    KIND_PRESSURE = 1

    def __init__(self):
        self._kinds = []
        self._vel = []
        self._rho = []

    def add_velocity(self, vx, vy):
        self._kinds.append(self.KIND_VELOCITY)
        self._vel.append((float(vx), float(vy)))
        self._rho.append(0.0)
        return len(self._kinds) - 1

    def add_pressure(self, rho):
        if rho <= 0:
            raise ValueError(f"imposed density must be positive, got {rho}")
        self._kinds.append(self.KIND_PRESSURE)
        self._vel.append((0.0, 0.0))
        self._rho.append(float(rho))
        return len(self._kinds) - 1

    def kind(self, idx):
        return self._kinds[idx]

    def velocity(self, idx):
        if self._kinds[idx] != self.KIND_VELOCITY:
            raise ValueError(f"entry {idx} is not a velocity entry")
        return np.array(self._vel[idx])

    def pressure(self, idx):
        if self._kinds[idx] != self.KIND_PRESSURE:
            raise ValueError(f"entry {idx} is not a pressure entry")
        return self._rho[idx]

    def as_arrays(self, dtype=np.float64):
        """Flat arrays for kernels: (kinds u8, velocities (n,2), densities (n,))."""
        n = len(self._kinds)
        kinds = np.array(self._kinds, dtype=np.uint8)
        vel = np.zeros((max(n, 1), 2), dtype=dtype)
        rho = np.zeros(max(n, 1), dtype=dtype)
        for i in range(n):
            vel[i] = self._vel[i]
            rho[i] = self._rho[i]
        return kinds, vel, rho

    def __len__(self):
        return len(self._kinds)

    def __eq__(self, other):
        if not isinstance(other, BoundaryValueTable):
            return NotImplemented
        return (self._kinds == other._kinds and self._vel == other._vel
                and self._rho == other._rho)


@dataclass
class NodeDescriptor:
    """Per-node record handed to boundary dispatch."""

    type_tag: NodeType
    neighbor_mask: int
    bc_index: int
    orientation: Orientation


class NodeDescriptorField:
    """Per-node type tags, neighbor-presence bitmasks and boundary indices.

    neighbor_mask bit (i - 1) is set iff the neighbor in direction i
    (i = 1..8) lies inside the domain and is not solid.  Masks of solid
    nodes are kept at zero.
    """

    def __init__(self, type_tag, bc_index=None, orientation=None):
        type_tag = np.asarray(type_tag, dtype=np.uint8)
        if type_tag.ndim != 2:
            raise ValueError("type_tag must be a 2-D (n_y, n_x) array")
        n_y, n_x = type_tag.shape
        self.type_tag = type_tag
        self.bc_index = (np.full((n_y, n_x), -1, dtype=np.int32)
                         if bc_index is None else
                         np.asarray(bc_index, dtype=np.int32).reshape(n_y, n_x))
        self.orientation = (np.zeros((n_y, n_x), dtype=np.uint8)
                            if orientation is None else
                            np.asarray(orientation, dtype=np.uint8).reshape(n_y, n_x))
        self.neighbor_mask = np.zeros((n_y, n_x), dtype=np.uint8)
        self.recompute_neighbor_masks()

    @property
    def dims(self):
        n_y, n_x = self.type_tag.shape
        return (n_x, n_y)

    def recompute_neighbor_masks(self):
        """Rebuild all masks from the type grid (call after editing types)."""
        n_y, n_x = self.type_tag.shape
        nonsolid = self.type_tag != NodeType.SOLID
        mask = np.zeros((n_y, n_x), dtype=np.uint8)
        for i in range(1, 9):
            dx, dy = int(CX[i]), int(CY[i])
            present = np.zeros((n_y, n_x), dtype=bool)
            ys = slice(max(0, -dy), n_y - max(0, dy))
            xs = slice(max(0, -dx), n_x - max(0, dx))
            ys_n = slice(max(0, dy), n_y - max(0, -dy))
            xs_n = slice(max(0, dx), n_x - max(0, -dx))
            present[ys, xs] = nonsolid[ys_n, xs_n]
            mask |= (present << (i - 1)).astype(np.uint8)
        mask[~nonsolid] = 0
        self.neighbor_mask = mask

    def descriptor(self, x, y):
        self._check_bounds(x, y)
        return NodeDescriptor(
            type_tag=NodeType(int(self.type_tag[y, x])),
            neighbor_mask=int(self.neighbor_mask[y, x]),
            bc_index=int(self.bc_index[y, x]),
            orientation=Orientation(int(self.orientation[y, x])),
        )

    def non_solid_count(self):
        return int(np.count_nonzero(self.type_tag != NodeType.SOLID))

    def count(self, node_type):
        return int(np.count_nonzero(self.type_tag == node_type))

    def neighbor_mask_is_symmetric(self):
        """Exhaustive check of the mask symmetry invariant."""
        n_y, n_x = self.type_tag.shape
        for y in range(n_y):
            for x in range(n_x):
                if self.type_tag[y, x] == NodeType.SOLID:
                    continue
                m = int(self.neighbor_mask[y, x])
                for i in range(1, 9):
                    xn, yn = x + int(CX[i]), y + int(CY[i])
                    bit = bool(m & (1 << (i - 1)))
                    inside = 0 <= xn < n_x and 0 <= yn < n_y
                    if not bit:
                        if inside and self.type_tag[yn, xn] != NodeType.SOLID:
                            return False
                        continue
                    if not inside or self.type_tag[yn, xn] == NodeType.SOLID:
                        return False
                    opp_bit = 1 << (int([0, 3, 4, 1, 2, 7, 8, 5, 6][i]) - 1)
                    if not (int(self.neighbor_mask[yn, xn]) & opp_bit):
                        return False
        return True

    def copy(self):
        out = NodeDescriptorField.__new__(NodeDescriptorField)
        out.type_tag = self.type_tag.copy()
        out.bc_index = self.bc_index.copy()
        out.orientation = self.orientation.copy()
        out.neighbor_mask = self.neighbor_mask.copy()
        return out

    def __eq__(self, other):
        if not isinstance(other, NodeDescriptorField):
            return NotImplemented
        return (np.array_equal(self.type_tag, other.type_tag)
                and np.array_equal(self.bc_index, other.bc_index)
                and np.array_equal(self.orientation, other.orientation)
                and np.array_equal(self.neighbor_mask, other.neighbor_mask))

    def _check_bounds(self, x, y):
        n_y, n_x = self.type_tag.shape
        if not (0 <= x < n_x and 0 <= y < n_y):
            raise ValueError(f"node ({x}, {y}) outside domain {n_x}x{n_y}")


def _tile_grid(n_x, n_y):
    return (-(-n_x // TILE_EDGE), -(-n_y // TILE_EDGE))


def _tile_slot_map(n_x, n_y):
    """Slot map for the fully allocated tile layout."""
    tiles_x, tiles_y = _tile_grid(n_x, n_y)
    ys, xs = np.mgrid[0:n_y, 0:n_x]
    tile_idx = (ys // TILE_EDGE) * tiles_x + (xs // TILE_EDGE)
    intra = (ys % TILE_EDGE) * TILE_EDGE + (xs % TILE_EDGE)
    return (tile_idx * TILE_NODES + intra).astype(np.int32), tiles_x * tiles_y


def _nonsolid_tiles(node_types):
    """Boolean (tiles_y, tiles_x) grid: tile contains >= 1 non-solid node."""
    n_y, n_x = node_types.shape
    tiles_x, tiles_y = _tile_grid(n_x, n_y)
    padded = np.zeros((tiles_y * TILE_EDGE, tiles_x * TILE_EDGE), dtype=bool)
    padded[:n_y, :n_x] = node_types != NodeType.SOLID
    return padded.reshape(tiles_y, TILE_EDGE, tiles_x, TILE_EDGE).any(axis=(1, 3))


class PdfField:
    """Double-buffered D2Q9 distribution storage behind a layout.

    Use :func:`allocate` to construct.  `pre` and `post` expose the two
    (9, plane_stride) buffers; `swap_buffers` flips their roles in O(1).
    """

    def __init__(self, dims, layout, dtype, slot_of, n_slots, tile_rank=None):
        n_x, n_y = dims
        self.dims = (int(n_x), int(n_y))
        self.layout = layout
        self.dtype = np.dtype(dtype)
        self.slot_of = slot_of
        self.n_slots = int(n_slots)
        self.parity = 0
        self.frozen = False
        self._tile_rank = tile_rank
        self._alloc_buffers()

    def _alloc_buffers(self):
        per_line = CACHE_LINE_BYTES // self.dtype.itemsize
        self.plane_stride = -(-max(self.n_slots, 1) // per_line) * per_line
        self._buffers = np.zeros((2, 9, self.plane_stride), dtype=self.dtype)

    @property
    def pre(self):
        return self._buffers[self.parity]

    @property
    def post(self):
        return self._buffers[1 - self.parity]

    @property
    def payload_bytes(self):
        """Logical allocated payload: both buffers, 9 planes, one slot per node."""
        return self.n_slots * 9 * 2 * self.dtype.itemsize

    def swap_buffers(self):
        self.parity ^= 1

    def read(self, x, y, i, which="pre"):
        s = self._slot_checked(x, y, i)
        if s < 0:
            return self.dtype.type(0.0)
        buf = self.pre if which == "pre" else self.post
        return buf[i, s]

    def write(self, x, y, i, which, value):
        s = self._slot_checked(x, y, i)
        if s < 0:
            if self.frozen:
                raise RuntimeError(
                    f"write to unallocated tile at ({x}, {y}) after stepping began")
            s = self._allocate_tile_for(x, y)
        buf = self.pre if which == "pre" else self.post
        buf[i, s] = value

    def _slot_checked(self, x, y, i):
        n_x, n_y = self.dims
        if not (0 <= x < n_x and 0 <= y < n_y):
            raise ValueError(f"node ({x}, {y}) outside domain {n_x}x{n_y}")
        if not 0 <= i <= 8:
            raise ValueError(f"direction index out of range: {i}")
        return int(self.slot_of[y, x])

    def _allocate_tile_for(self, x, y):
        """Demand-allocate the enclosing pointer tile (initialization only)."""
        n_x, n_y = self.dims
        tx, ty = x // TILE_EDGE, y // TILE_EDGE
        rank = self.n_slots // TILE_NODES
        self._tile_rank[ty, tx] = rank
        old, old_slots = self._buffers, self.n_slots
        self.n_slots += TILE_NODES
        self._alloc_buffers()
        self._buffers[:, :, :old_slots] = old[:, :, :old_slots]
        y0, x0 = ty * TILE_EDGE, tx * TILE_EDGE
        for yy in range(y0, min(y0 + TILE_EDGE, n_y)):
            for xx in range(x0, min(x0 + TILE_EDGE, n_x)):
                intra = (yy - y0) * TILE_EDGE + (xx - x0)
                self.slot_of[yy, xx] = rank * TILE_NODES + intra
        return int(self.slot_of[y, x])

    @property
    def allocated_tiles(self):
        if self._tile_rank is None:
            n_x, n_y = self.dims
            tiles_x, tiles_y = _tile_grid(n_x, n_y)
            return tiles_x * tiles_y
        return int(np.count_nonzero(self._tile_rank >= 0))


def allocate(dims, layout, scalar, node_types):
    """Build a zero-initialized PdfField for the given layout.

    `node_types` is the (n_y, n_x) type grid; pointer tiles covering only
    solid nodes receive no storage.
    """
    n_x, n_y = dims
    if n_x <= 0 or n_y <= 0:
        raise ValueError(f"dims must be positive, got {dims}")
    node_types = np.asarray(node_types, dtype=np.uint8)
    if node_types.shape != (n_y, n_x):
        raise ValueError(
            f"node_types shape {node_types.shape} does not match dims {dims}")
    layout = LayoutKind.parse(layout) if not isinstance(layout, LayoutKind) else layout
    dtype = np.dtype(scalar)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"scalar must be float32 or float64, got {scalar}")

    if layout in (LayoutKind.DENSE, LayoutKind.BITMASK_NODE):
        slot_of = (np.arange(n_x * n_y, dtype=np.int32).reshape(n_y, n_x))
        return PdfField(dims, layout, dtype, slot_of, n_x * n_y)

    if layout is LayoutKind.TILE:
        slot_of, n_tiles = _tile_slot_map(n_x, n_y)
        return PdfField(dims, layout, dtype, slot_of, n_tiles * TILE_NODES)

    # pointer_tile: rank allocated tiles row-major, skip all-solid tiles
    keep = _nonsolid_tiles(node_types)
    tiles_y, tiles_x = keep.shape
    tile_rank = np.full((tiles_y, tiles_x), -1, dtype=np.int32)
    tile_rank[keep] = np.arange(int(keep.sum()), dtype=np.int32)
    full_map, _ = _tile_slot_map(n_x, n_y)
    tile_of_node = full_map // TILE_NODES
    intra = full_map % TILE_NODES
    rank_of_node = tile_rank.reshape(-1)[tile_of_node]
    slot_of = np.where(rank_of_node >= 0,
                       rank_of_node * TILE_NODES + intra, -1).astype(np.int32)
    return PdfField(dims, layout, dtype, slot_of, int(keep.sum()) * TILE_NODES,
                    tile_rank=tile_rank)


def active_nodes(node_types, layout):
    """Coordinates the kernel visits for this layout, as (xs, ys) arrays.

    dense/tile visit everything (the kernel skips solid nodes internally),
    bitmask_node visits exactly the non-solid nodes, pointer_tile visits the
    in-domain nodes of allocated tiles.
    """
    node_types = np.asarray(node_types, dtype=np.uint8)
    n_y, n_x = node_types.shape
    layout = LayoutKind.parse(layout) if not isinstance(layout, LayoutKind) else layout

    if layout is LayoutKind.DENSE:
        ys, xs = np.mgrid[0:n_y, 0:n_x]
        return xs.ravel().astype(np.int32), ys.ravel().astype(np.int32)

    if layout is LayoutKind.BITMASK_NODE:
        ys, xs = np.nonzero(node_types != NodeType.SOLID)
        return xs.astype(np.int32), ys.astype(np.int32)

    # tile orderings: tiles row-major, nodes row-major inside each tile
    slot_map, _ = _tile_slot_map(n_x, n_y)
    if layout is LayoutKind.TILE:
        order = np.argsort(slot_map.ravel(), kind="stable")
        ys, xs = np.divmod(order, n_x)
        return xs.astype(np.int32), ys.astype(np.int32)

    keep = _nonsolid_tiles(node_types)
    tile_of_node = (slot_map // TILE_NODES).ravel()
    sel = keep.ravel()[tile_of_node]
    flat = np.nonzero(sel)[0]
    order = flat[np.argsort(slot_map.ravel()[flat], kind="stable")]
    ys, xs = np.divmod(order, n_x)
    return xs.astype(np.int32), ys.astype(np.int32)


# ---------------------------------------------------------------------------
# copy micro-benchmark


@njit(parallel=True, cache=True)
def _copy_dense(src, dst):
    for i in prange(src.size):
        dst[i] = src[i]


@njit(parallel=True, cache=True)
def _copy_masked(src, dst, mask):
    for i in prange(src.size):
        if mask[i]:
            dst[i] = src[i]


@njit(parallel=True, cache=True)
def _copy_chunked(src, dst):
    n_chunks = src.size // TILE_NODES
    for c in prange(n_chunks):
        base = c * TILE_NODES
        for j in range(TILE_NODES):
            dst[base + j] = src[base + j]


@njit(parallel=True, cache=True)
def _copy_pointer(src, dst, chunk_base):
    for c in prange(chunk_base.size):
        base = chunk_base[c]
        for j in range(TILE_NODES):
            dst[base + j] = src[base + j]


def copy_bandwidth_bench(layout, block_bytes, repetitions=100, warmup=5):
    """Measure achieved copy bandwidth (bytes/s) for one layout.

    Copies a flat f64 block once per repetition after `warmup` untimed
    calls; reports 2 * bytes * repetitions / elapsed (read + write).
    """
    if block_bytes < 64 * 1024:
        raise ValueError(f"block_bytes must be at least 64 KiB, got {block_bytes}")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    layout = LayoutKind.parse(layout) if not isinstance(layout, LayoutKind) else layout
    n = (block_bytes // 8 // TILE_NODES) * TILE_NODES
    try:
        src = np.arange(n, dtype=np.float64)
        dst = np.zeros(n, dtype=np.float64)
    except MemoryError as exc:
        raise MemoryError(f"cannot allocate 2 x {n * 8} byte blocks") from exc

    if layout is LayoutKind.DENSE:
        run = lambda: _copy_dense(src, dst)
    elif layout is LayoutKind.BITMASK_NODE:
        mask = np.ones(n, dtype=np.bool_)
        run = lambda: _copy_masked(src, dst, mask)
    elif layout is LayoutKind.TILE:
        run = lambda: _copy_chunked(src, dst)
    else:
        chunk_base = (np.arange(n // TILE_NODES, dtype=np.int64) * TILE_NODES)
        run = lambda: _copy_pointer(src, dst, chunk_base)

    for _ in range(warmup):
        run()
    t0 = time.perf_counter()
    for _ in range(repetitions):
        run()
    elapsed = time.perf_counter() - t0
    if not np.array_equal(src, dst):
        raise RuntimeError("copy benchmark produced a corrupted destination")
    return 2.0 * n * 8 * repetitions / elapsed


def copy_bandwidth_survey(block_bytes, repetitions=20):
    """Bandwidth per layout plus a logged (never asserted) ordering check."""
    results = {k: copy_bandwidth_bench(k, block_bytes, repetitions)
               for k in LayoutKind}
    dense = results[LayoutKind.DENSE]
    bitmask = results[LayoutKind.BITMASK_NODE]
    pointer = results[LayoutKind.POINTER_TILE]
    if not dense >= bitmask >= pointer:
        log.info("copy-bandwidth ordering dense >= bitmask >= pointer not "
                 "observed on this host: %s",
                 {k.value: f"{v / 1e9:.2f} GB/s" for k, v in results.items()})
    return results
