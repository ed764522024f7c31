"""D2Q9 lattice mathematics: moments, equilibrium, BGK relaxation, parameter
conversions.

Direction numbering (index 0 is the rest direction):

    6   2   5
      \\ | /
    3 - 0 - 1
      / | \\
    7   4   8

Everything in this module is pure math over per-node values; storage and
geometry live elsewhere.  Lattice spacing and time step are both 1, so
velocities are per-step displacements.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numba import njit

Q = 9
D = 2

# Microscopic velocities, one integer 2-vector per direction.
CX = np.array([0, 1, 0, -1, 0, 1, -1, -1, 1], dtype=np.int8)
CY = np.array([0, 0, 1, 0, -1, 1, 1, -1, -1], dtype=np.int8)

# Quadrature weights: 4/9 rest, 1/9 axis, 1/36 diagonal.
W_EXACT = (
    Fraction(4, 9),
    Fraction(1, 9), Fraction(1, 9), Fraction(1, 9), Fraction(1, 9),
    Fraction(1, 36), Fraction(1, 36), Fraction(1, 36), Fraction(1, 36),
)
W = np.array([float(w) for w in W_EXACT], dtype=np.float64)

# OPP[i] is the direction with the reversed velocity vector.
OPP = np.array([0, 3, 4, 1, 2, 7, 8, 5, 6], dtype=np.int8)


@dataclass(frozen=True)
class LatticeModel:
    """D2Q9 lattice constants bundled for introspection."""

    d: int = D
    q: int = Q
    dx: float = 1.0
    dt: float = 1.0

    @property
    def velocities(self):
        return np.stack([CX, CY], axis=1).astype(np.int64)

    @property
    def weights(self):
        return W.copy()

    @property
    def weights_exact(self):
        return W_EXACT

    @property
    def opposite(self):
        return OPP.copy()


D2Q9 = LatticeModel()


@dataclass(frozen=True)
class FlowParams:
    """Characteristic flow numbers in lattice units.

    The stored values always satisfy Re = U * L / nu and
    omega = 1 / (3 nu + 1/2).
    """

    U: float
    L: float
    Re: float
    nu: float
    omega: float

    def __post_init__(self):
        if not all(np.isfinite([self.U, self.L, self.Re, self.nu, self.omega])):
            raise ValueError("flow parameters must be finite")
        if abs(self.Re - self.U * self.L / self.nu) > 1e-12 * abs(self.Re):
            raise ValueError(
                f"inconsistent parameters: Re={self.Re} but U*L/nu="
                f"{self.U * self.L / self.nu}"
            )
        expected = omega_from_viscosity(self.nu)
        if abs(self.omega - expected) > 1e-12 * expected:
            raise ValueError(f"omega={self.omega} does not match nu={self.nu}")
        if not 0.0 < self.omega < 2.0:
            raise ValueError(f"omega must lie in (0, 2), got {self.omega}")

    @classmethod
    def from_reynolds(cls, U, L, Re):
        nu = viscosity_from_reynolds(U, L, Re)
        return cls(U=U, L=L, Re=Re, nu=nu, omega=omega_from_viscosity(nu))

    @classmethod
    def from_viscosity(cls, U, L, nu):
        if nu <= 0:
            raise ValueError(f"viscosity must be positive, got {nu}")
        if U <= 0 or L <= 0:
            raise ValueError("U and L must be positive")
        return cls(U=U, L=L, Re=U * L / nu, nu=nu, omega=omega_from_viscosity(nu))


def omega_from_viscosity(nu):
    """Collision frequency for a given kinematic viscosity: 1/(3 nu + 1/2)."""
    if not np.isfinite(nu) or nu <= 0:
        raise ValueError(f"viscosity must be positive and finite, got {nu}")
    return 1.0 / (3.0 * nu + 0.5)


def viscosity_from_reynolds(U, L, Re):
    """Viscosity that realizes Reynolds number Re at velocity U and length L."""
    for name, val in (("U", U), ("L", L), ("Re", Re)):
        if not np.isfinite(val) or val <= 0:
            raise ValueError(f"{name} must be positive and finite, got {val}")
    return U * L / Re


def opposite_direction(i):
    """Index of the direction whose velocity is the negation of direction i."""
    if not 0 <= i <= 8:
        raise ValueError(f"direction index out of range: {i}")
    return int(OPP[i])


def equilibrium(rho, v):
    """Local equilibrium distributions for density rho and velocity v.

    f_i = w_i * rho * (1 + 3 c_i.v + 4.5 (c_i.v)^2 - 1.5 v.v)
    """
    v = np.asarray(v, dtype=np.float64)
    if not (np.isfinite(rho) and np.all(np.isfinite(v))):
        raise ValueError("equilibrium inputs must be finite")
    if v[0] * v[0] + v[1] * v[1] >= 1.0:
        raise ValueError(f"velocity magnitude must stay below 1, got {v}")
    ops = node_ops(np.float64)
    return np.array(ops.feq9(float(rho), float(v[0]), float(v[1])))


def moments(f):
    """Density and velocity of a 9-vector of distributions.

    rho = sum_i f_i, v = sum_i c_i f_i / rho; v = 0 when rho = 0 so that
    untouched (zeroed) solid-node storage stays harmless.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (9,):
        raise ValueError(f"expected 9 distribution values, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("distribution values must be finite")
    ops = node_ops(np.float64)
    rho, vx, vy = ops.moments9(*f)
    return rho, np.array([vx, vy])


def bgk_collide(f, rho, v, omega):
    """Single-relaxation-time collision: f - omega * (f - f_eq(rho, v))."""
    f = np.asarray(f, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise ValueError("distribution values must be finite")
    v = np.asarray(v, dtype=np.float64)
    ops = node_ops(np.float64)
    out = ops.collide9(*f, float(rho), float(v[0]), float(v[1]), float(omega))
    return np.array(out)


def node_ops(dtype):
    """Compiled per-node math specialized to a scalar type (f32 or f64).

    Constants are baked in at the requested precision so the f32 variant
    really computes in 32-bit arithmetic.  The equilibrium is expanded with
    precomputed numeric constants:

        one_m = 1 - 1.5 (vx^2 + vy^2);  t_i = 3 c_i.v
        f_i   = w_i rho (one_m + t_i + 0.5 t_i^2)
    """
    return _node_ops(np.dtype(dtype).name)


@lru_cache(maxsize=None)
def _node_ops(dtype_name):
    dt = np.dtype(dtype_name).type
    w0 = dt(4.0 / 9.0)
    wa = dt(1.0 / 9.0)
    wd = dt(1.0 / 36.0)
    c05 = dt(0.5)
    c15 = dt(1.5)
    c3 = dt(3.0)
    zero = dt(0.0)
    one = dt(1.0)

    @njit(inline="always", cache=True)
    def feq9(rho, vx, vy):
        one_m = one - c15 * (vx * vx + vy * vy)
        tx = c3 * vx
        ty = c3 * vy
        tp = tx + ty
        tm = tx - ty
        e0 = w0 * rho * one_m
        e1 = wa * rho * (one_m + tx + c05 * tx * tx)
        e2 = wa * rho * (one_m + ty + c05 * ty * ty)
        e3 = wa * rho * (one_m - tx + c05 * tx * tx)
        e4 = wa * rho * (one_m - ty + c05 * ty * ty)
        e5 = wd * rho * (one_m + tp + c05 * tp * tp)
        e6 = wd * rho * (one_m - tm + c05 * tm * tm)
        e7 = wd * rho * (one_m - tp + c05 * tp * tp)
        e8 = wd * rho * (one_m + tm + c05 * tm * tm)
        return e0, e1, e2, e3, e4, e5, e6, e7, e8

    @njit(inline="always", cache=True)
    def moments9(f0, f1, f2, f3, f4, f5, f6, f7, f8):
        # opposite-pair grouping keeps the rest state an exact fixed point:
        # summing equal weights pairwise cancels without rounding
        rho = f0 + ((f1 + f3) + (f2 + f4)) + ((f5 + f7) + (f6 + f8))
        if rho == zero:
            return zero, zero, zero
        d1 = f5 - f7
        d2 = f8 - f6
        vx = ((f1 - f3) + (d1 + d2)) / rho
        vy = ((f2 - f4) + (d1 - d2)) / rho
        return rho, vx, vy

    @njit(inline="always", cache=True)
    def collide9(f0, f1, f2, f3, f4, f5, f6, f7, f8, rho, vx, vy, om):
        e0, e1, e2, e3, e4, e5, e6, e7, e8 = feq9(rho, vx, vy)
        return (
            f0 - om * (f0 - e0),
            f1 - om * (f1 - e1),
            f2 - om * (f2 - e2),
            f3 - om * (f3 - e3),
            f4 - om * (f4 - e4),
            f5 - om * (f5 - e5),
            f6 - om * (f6 - e6),
            f7 - om * (f7 - e7),
            f8 - om * (f8 - e8),
        )

    class _Ops:
        pass

    ops = _Ops()
    ops.dtype = np.dtype(dtype_name)
    ops.feq9 = feq9
    ops.moments9 = moments9
    ops.collide9 = collide9
    return ops
