"""Bilayer honeycomb tight-binding model.

Everything is expressed in the sublattice basis ``(a, b~, a~, b)``: the
first two components are the dimer sites coupled by ``gamma1``, the last two
carry the low-energy (massless) modes.  Momenta are triples
``(k0, kx, ky)`` with ``k0`` a Matsubara frequency.

The inverse propagator is fixed as ``A(k) = -i k0 - H0(k)`` where ``H0`` is
the positive-entry hopping matrix returned by :func:`h0_matrix`.  With this
choice ``A^{-1} = -(i k0 + H0)^{-1}``.

All array-valued functions broadcast over leading axes and return matrices
in the trailing two axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError

SQRT3 = math.sqrt(3.0)

# lattice generators, nearest-neighbour vectors and dual generators
L1 = np.array([1.5, SQRT3 / 2])
L2 = np.array([1.5, -SQRT3 / 2])
DELTAS = np.array([[1.0, 0.0], [-0.5, SQRT3 / 2], [-0.5, -SQRT3 / 2]])
G1 = np.array([2 * math.pi / 3, 2 * math.pi / SQRT3])
G2 = np.array([2 * math.pi / 3, -2 * math.pi / SQRT3])

SIGMA0 = np.eye(2, dtype=complex)
SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)

# blockwise Pauli matrices acting on both 2x2 blocks at once
CHIRAL = np.diag([1.0, -1.0, 1.0, -1.0]).astype(complex)
SWAP = np.kron(np.eye(2), SIGMA1)

# rotation by 2pi/3, i.e. exp(-i (2pi/3) sigma2) acting on (kx, ky)
ROTATION = np.array([[-0.5, -SQRT3 / 2], [SQRT3 / 2, -0.5]])

TRANSFORMS = (
    "U1",
    "rotation",
    "conjugation",
    "v-reflect",
    "h-reflect",
    "parity",
    "time-inversion",
)


@dataclass(frozen=True)
class HoppingParams:
    """Hopping strengths in units of the intralayer hopping."""

    epsilon: float = 0.1
    gamma3_ratio: float = 0.33
    gamma1_ratio: float = 1.0

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        g = self.coupling
        if not 0 < g < 2:
            raise DomainError(f"gamma1*gamma3 must lie in (0, 2), got {g}")

    @property
    def gamma0(self) -> float:
        return 1.0

    @property
    def gamma1(self) -> float:
        return self.gamma1_ratio * self.epsilon

    @property
    def gamma3(self) -> float:
        return self.gamma3_ratio * self.epsilon

    @property
    def coupling(self) -> float:
        """The product gamma1*gamma3 that controls trigonal warping."""
        return self.gamma1 * self.gamma3


def zone_coordinates(kx, ky):
    """Coordinates of k in the dual basis (G1, G2)."""
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    a = (L1[0] * kx + L1[1] * ky) / (2 * math.pi)
    b = (L2[0] * kx + L2[1] * ky) / (2 * math.pi)
    return a, b


def reduce_to_zone(kx, ky):
    """Representative of k in the fundamental parallelogram [0,1)G1 + [0,1)G2."""
    a, b = zone_coordinates(kx, ky)
    a = a - np.floor(a)
    b = b - np.floor(b)
    # floor can leave exactly 1.0 after rounding of tiny negatives
    a = np.where(a >= 1.0, 0.0, a)
    b = np.where(b >= 1.0, 0.0, b)
    return a * G1[0] + b * G2[0], a * G1[1] + b * G2[1]


def nearest_image(dx, dy):
    """Shortest representative of the displacement (dx, dy) modulo the dual lattice."""
    a, b = zone_coordinates(dx, dy)
    a = a - np.round(a)
    b = b - np.round(b)
    best_x = a * G1[0] + b * G2[0]
    best_y = a * G1[1] + b * G2[1]
    best = best_x**2 + best_y**2
    for sa, sb in ((1, 0), (0, 1), (1, 1), (-1, 0), (0, -1), (-1, -1), (1, -1), (-1, 1)):
        cx = best_x + sa * G1[0] + sb * G2[0]
        cy = best_y + sa * G1[1] + sb * G2[1]
        d = cx**2 + cy**2
        better = d < best - 1e-15
        best_x = np.where(better, cx, best_x)
        best_y = np.where(better, cy, best_y)
        best = np.where(better, d, best)
    return best_x, best_y


@dataclass(frozen=True)
class Momentum3:
    k0: float
    kx: float
    ky: float

    def reduced(self) -> "Momentum3":
        kx, ky = reduce_to_zone(self.kx, self.ky)
        return Momentum3(self.k0, float(kx), float(ky))

    @property
    def spatial(self) -> np.ndarray:
        return np.array([self.kx, self.ky])

    def __add__(self, other: "Momentum3") -> "Momentum3":
        return Momentum3(self.k0 + other.k0, self.kx + other.kx, self.ky + other.ky)

    def __sub__(self, other: "Momentum3") -> "Momentum3":
        return Momentum3(self.k0 - other.k0, self.kx - other.kx, self.ky - other.ky)


def omega(kx, ky):
    """Structure factor 1 + 2 exp(-3i kx/2) cos(sqrt3 ky/2)."""
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    return 1.0 + 2.0 * np.exp(-1.5j * kx) * np.cos(0.5 * SQRT3 * ky)


def h0_matrix(kx, ky, p: HoppingParams) -> np.ndarray:
    """Hermitian hopping matrix H0(k) with shape (..., 4, 4)."""
    om = omega(kx, ky)
    warp = p.gamma3 * om * np.exp(3j * np.asarray(kx, dtype=float))
    h = np.zeros(om.shape + (4, 4), dtype=complex)
    h[..., 0, 1] = p.gamma1
    h[..., 1, 0] = p.gamma1
    h[..., 0, 3] = np.conj(om)
    h[..., 3, 0] = om
    h[..., 1, 2] = om
    h[..., 2, 1] = np.conj(om)
    h[..., 2, 3] = warp
    h[..., 3, 2] = np.conj(warp)
    return h


def inverse_propagator(k0, kx, ky, p: HoppingParams) -> np.ndarray:
    """A(k) = -i k0 - H0(k), shape (..., 4, 4)."""
    k0 = np.asarray(k0, dtype=float)
    h = h0_matrix(kx, ky, p)
    shape = np.broadcast_shapes(k0.shape, h.shape[:-2])
    a = -np.broadcast_to(h, shape + (4, 4)).copy()
    diag = -1j * np.broadcast_to(k0, shape)
    for i in range(4):
        a[..., i, i] += diag
    return a


def propagator(k0, kx, ky, p: HoppingParams) -> np.ndarray:
    """A(k)^{-1}, computed with a batched dense solve."""
    return np.linalg.inv(inverse_propagator(k0, kx, ky, p))


def inverse_propagator_at(k: Momentum3, p: HoppingParams) -> np.ndarray:
    return inverse_propagator(k.k0, k.kx, k.ky, p)


def warping_determinant(kx, ky, p: HoppingParams):
    """|Omega^2 - g1 g3 Omega* exp(-3i kx)|^2, the closed form of det H0."""
    om = omega(kx, ky)
    d = om**2 - p.coupling * np.conj(om) * np.exp(-3j * np.asarray(kx, dtype=float))
    return np.abs(d) ** 2


def twist(kx, ky) -> np.ndarray:
    """Diagonal phase exp(-i (l2.k) sigma3) acting on the (a~, b) block."""
    phase = L2[0] * np.asarray(kx, dtype=float) + L2[1] * np.asarray(ky, dtype=float)
    t = np.zeros(np.shape(phase) + (2, 2), dtype=complex)
    t[..., 0, 0] = np.exp(-1j * phase)
    t[..., 1, 1] = np.exp(1j * phase)
    return t


def rotate(kx, ky, power: int = 1):
    """Apply the 2pi/3 rotation ``power`` times to (kx, ky)."""
    r = np.linalg.matrix_power(ROTATION, power % 3)
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    return r[0, 0] * kx + r[0, 1] * ky, r[1, 0] * kx + r[1, 1] * ky


def twist_frame(kx, ky) -> np.ndarray:
    """Block-diagonal diag(1, 1, twist(k)) as a (..., 4, 4) array."""
    t = twist(kx, ky)
    d = np.zeros(t.shape[:-2] + (4, 4), dtype=complex)
    d[..., 0, 0] = 1.0
    d[..., 1, 1] = 1.0
    d[..., 2:, 2:] = t
    return d


# -- Jacobi eigenvalues ------------------------------------------------------


def jacobi_eigvalsh(h: np.ndarray, tol: float = 1e-15, max_sweeps: int = 50) -> np.ndarray:
    """Eigenvalues of a small Hermitian matrix by cyclic complex Jacobi rotations."""
    a = np.array(h, dtype=complex)
    n = a.shape[0]
    scale = np.sqrt(np.sum(np.abs(a) ** 2))
    if scale == 0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(abs(a[i, j]) ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * scale:
            break
        for i in range(n - 1):
            for j in range(i + 1, n):
                r = abs(a[i, j])
                if r <= 1e-300:
                    continue
                phase = a[i, j] / r
                tau = (a[j, j].real - a[i, i].real) / (2 * r)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1 + tau * tau))
                c = 1 / math.sqrt(1 + t * t)
                s = t * c
                # unitary acting on the (i, j) plane: phase fix then real rotation
                u = np.eye(n, dtype=complex)
                u[i, i] = c
                u[i, j] = s
                u[j, i] = -s * np.conj(phase)
                u[j, j] = c * np.conj(phase)
                a = u.conj().T @ a @ u
    return np.sort(np.real(np.diag(a)))


def op_norm(m: np.ndarray) -> float:
    """Spectral norm: sqrt of the top eigenvalue of M^dagger M."""
    m = np.asarray(m, dtype=complex)
    ev = jacobi_eigvalsh(m.conj().T @ m)
    return math.sqrt(max(ev[-1], 0.0))


def band_eigenvalues(kx: float, ky: float, p: HoppingParams) -> np.ndarray:
    """Ascending eigenvalues of H0(k)."""
    return jacobi_eigvalsh(h0_matrix(kx, ky, p))


# -- symmetries --------------------------------------------------------------

MatrixField = Callable[[float, float, float], np.ndarray]


def symmetry_residual(k: Momentum3, transform: str, p: HoppingParams,
                      field: MatrixField | None = None) -> float:
    """Max-norm residual of the matrix identity expressing ``transform`` on A.

    ``field`` replaces the inverse propagator by any callable
    ``(k0, kx, ky) -> 4x4``; this is how a deliberately broken model is probed.
    """
    if field is None:
        def field(k0, kx, ky):
            return inverse_propagator(k0, kx, ky, p)

    k0, kx, ky = k.k0, k.kx, k.ky
    a = np.asarray(field(k0, kx, ky))
    if transform == "U1":
        theta = 0.731
        other = np.exp(-1j * theta) * a * np.exp(1j * theta)
    elif transform == "rotation":
        # A(k) = D_k^dagger A(T^{-1} k) D_k with D_k = diag(1, 1, twist(k))
        rx, ry = rotate(kx, ky, -1)
        d = twist_frame(kx, ky)
        other = d.conj().T @ np.asarray(field(k0, float(rx), float(ry))) @ d
    elif transform == "conjugation":
        other = np.conj(np.asarray(field(-k0, -kx, -ky)))
    elif transform == "v-reflect":
        other = np.asarray(field(k0, kx, -ky))
    elif transform == "h-reflect":
        other = SWAP @ np.asarray(field(k0, -kx, ky)) @ SWAP
    elif transform == "parity":
        other = np.asarray(field(k0, -kx, -ky)).T
    elif transform == "time-inversion":
        other = -CHIRAL @ np.asarray(field(-k0, kx, ky)) @ CHIRAL
    else:
        raise ValueError(f"unknown transform {transform!r}; expected one of {TRANSFORMS}")
    return float(np.max(np.abs(other - a)))
