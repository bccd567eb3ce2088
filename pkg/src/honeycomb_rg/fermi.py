"""Fermi points of the bilayer model.

The free Fermi points are the zeros of

    F(k) = Omega(k)^2 - G Omega*(k) e^{-3i kx},     G = gamma1 gamma3,

which come in two valleys ``omega = +/-1`` of four points each: a central
point ``j = 0`` and three satellites.  This module provides the closed
forms, an independent numerical root finder, a simple symmetric
self-energy model and the Newton scheme that moves the satellite ``j = 1``
along ``ky`` under that self-energy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, JacobianTooSmall, NonConvergence
from .model import (
    G1,
    G2,
    SQRT3,
    HoppingParams,
    inverse_propagator,
    nearest_image,
    omega,
    reduce_to_zone,
    rotate,
)


@dataclass(frozen=True)
class FermiPoint:
    omega: int
    j: int
    kx: float
    ky: float
    shift: float = 0.0

    @property
    def k(self) -> np.ndarray:
        return np.array([self.kx, self.ky])


def warping_function(kx, ky, G: float):
    """F(k) = Omega^2 - G Omega* e^{-3i kx}; its zeros are the Fermi points."""
    om = omega(kx, ky)
    return om**2 - G * np.conj(om) * np.exp(-3j * np.asarray(kx, dtype=float))


def _warping_gradient(kx, ky, G: float):
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    e = np.exp(-1.5j * kx)
    cos = np.cos(0.5 * SQRT3 * ky)
    om = 1.0 + 2.0 * e * cos
    dx = -3j * e * cos
    dy = -SQRT3 * e * np.sin(0.5 * SQRT3 * ky)
    phase = np.exp(-3j * kx)
    fx = 2 * om * dx - G * np.conj(dx) * phase + 3j * G * np.conj(om) * phase
    fy = 2 * om * dy - G * np.conj(dy) * phase
    return fx, fy


def fermi_points_closed_form(G: float) -> list[FermiPoint]:
    """The eight zeros of F, ordered by valley (+ then -) and index j."""
    if not 0 < G < 2:
        raise DomainError(f"coupling G must lie in (0, 2), got {G}")
    x0 = 2 * math.pi / 3
    y0 = 2 * math.pi / (3 * SQRT3)
    y1 = (2 / SQRT3) * math.acos((1 - G) / 2)
    y23 = (2 / SQRT3) * math.acos(math.sqrt(1 + G) / 2)
    dx23 = (2 / 3) * math.acos(math.sqrt(1 + G) * (2 - G) / 2)
    points = []
    for w in (1, -1):
        points.append(FermiPoint(w, 0, x0, w * y0))
        points.append(FermiPoint(w, 1, x0, w * y1))
        points.append(FermiPoint(w, 2, x0 + dx23, w * y23))
        points.append(FermiPoint(w, 3, x0 - dx23, w * y23))
    return points


def fermi_point(G: float, w: int, j: int) -> FermiPoint:
    for pt in fermi_points_closed_form(G):
        if pt.omega == w and pt.j == j:
            return pt
    raise DomainError(f"no Fermi point with omega={w}, j={j}")


def torus_distance(k1, k2) -> float:
    dx, dy = nearest_image(k1[0] - k2[0], k1[1] - k2[1])
    return float(np.hypot(dx, dy))


def _newton_polish(kx, ky, G: float, max_iter: int):
    """Vectorized damped Newton on the real 2x2 system Re F = Im F = 0."""
    kx = np.array(kx, dtype=float)
    ky = np.array(ky, dtype=float)
    res = np.abs(warping_function(kx, ky, G))
    for _ in range(max_iter):
        f = warping_function(kx, ky, G)
        fx, fy = _warping_gradient(kx, ky, G)
        j11, j12, j21, j22 = fx.real, fy.real, fx.imag, fy.imag
        det = j11 * j22 - j12 * j21
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        sx = -(j22 * f.real - j12 * f.imag) / det
        sy = -(-j21 * f.real + j11 * f.imag) / det
        # cap the step so far-off starts cannot jump across the zone
        size = np.hypot(sx, sy)
        cap = np.minimum(1.0, 0.5 / np.maximum(size, 1e-300))
        sx, sy = sx * cap, sy * cap
        step = np.ones_like(kx)
        for _ in range(30):
            nx, ny = kx + step * sx, ky + step * sy
            nres = np.abs(warping_function(nx, ny, G))
            bad = nres > res
            if not np.any(bad):
                break
            step = np.where(bad, 0.5 * step, step)
        kx, ky, res = nx, ny, nres
    return kx, ky, res


def fermi_points_root_find(p: HoppingParams, grid_n: int = 64, tol: float = 1e-12,
                           max_iter: int = 100) -> list[np.ndarray]:
    """Locate all zeros of F on the torus without using the closed forms.

    Every node of a ``grid_n`` x ``grid_n`` mesh of the fundamental cell
    seeds a damped Newton iteration.  Each local minimum of |F| on the mesh is
    a candidate region; a candidate that no seed polishes to a zero within
    two mesh cells raises ``NonConvergence``.
    """
    if grid_n < 64:
        raise DomainError("grid_n must be at least 64")
    G = p.coupling
    s = (np.arange(grid_n) + 0.5) / grid_n
    a, b = np.meshgrid(s, s, indexing="ij")
    kx = a * G1[0] + b * G2[0]
    ky = a * G1[1] + b * G2[1]
    mag = np.abs(warping_function(kx, ky, G))

    fx, fy, res = _newton_polish(kx.ravel(), ky.ravel(), G, max_iter)
    good = res <= tol
    roots: list[np.ndarray] = []
    for x, y in zip(*reduce_to_zone(fx[good], fy[good])):
        cand = np.array([x, y])
        if all(torus_distance(cand, r) > 1e-6 for r in roots):
            roots.append(cand)

    # every mesh local minimum must have a root nearby
    cell = float(np.hypot(*(G1 / grid_n))) + float(np.hypot(*(G2 / grid_n)))
    is_min = np.ones_like(mag, dtype=bool)
    for da in (-1, 0, 1):
        for db in (-1, 0, 1):
            if da or db:
                is_min &= mag <= np.roll(np.roll(mag, da, 0), db, 1)
    for x, y in zip(kx[is_min], ky[is_min]):
        if not any(torus_distance((x, y), r) <= 2 * cell for r in roots):
            raise NonConvergence(f"mesh minimum near ({x:.4f}, {y:.4f}) did not polish to a zero")
    roots.sort(key=lambda r: (round(r[0], 9), round(r[1], 9)))
    return roots


# -- self-energy model and the shifted satellite ----------------------------

SELF_ENERGY_KINDS = ("zero", "constant-sigma1", "linear")


@dataclass(frozen=True)
class SelfEnergyModel:
    """Symmetric toy self-energy W^(h)(k) = weight(h) * base(k).

    ``zero``
        W = 0.
    ``constant-sigma1``
        ``-magnitude`` times sigma1 on the massive (a, b~) block, i.e. a
        shift of the interlayer hopping.
    ``linear``
        Multiplicative renormalization of each term of A:
        ``k0`` on the massive and massless blocks by ``coeffs[0]`` and
        ``coeffs[3]``, gamma1 by ``coeffs[1]``, gamma3 by ``coeffs[2]`` and
        the intralayer hopping by ``coeffs[4]``; each scaled by ``magnitude``.

    All three kinds keep every lattice symmetry of the free model.  The
    model is supported on ``scales`` with ``weight(h) = 2**(decay*h)``.
    """

    kind: str = "zero"
    magnitude: float = 0.0
    coeffs: tuple[float, float, float, float, float] = (1.0, 1.0, 1.0, 1.0, 1.0)
    scales: tuple[int, ...] = (0,)
    decay: float = 0.0
    params: HoppingParams = field(default_factory=HoppingParams)

    def __post_init__(self) -> None:
        if self.kind not in SELF_ENERGY_KINDS:
            raise DomainError(f"unknown self-energy kind {self.kind!r}")

    def weight(self, h: int) -> float:
        return 2.0 ** (self.decay * h) if h in self.scales else 0.0

    def cumulative_weight(self, h: int) -> float:
        return sum(2.0 ** (self.decay * s) for s in self.scales if s >= h)

    def base(self, k0, kx, ky) -> np.ndarray:
        p = self.params
        k0 = np.asarray(k0, dtype=float)
        shape = np.broadcast_shapes(k0.shape, np.shape(kx), np.shape(ky))
        out = np.zeros(shape + (4, 4), dtype=complex)
        u = self.magnitude
        if self.kind == "zero" or u == 0:
            return out
        if self.kind == "constant-sigma1":
            out[..., 0, 1] = -u
            out[..., 1, 0] = -u
            return out
        zt, mt, nt, z, n = self.coeffs
        om = omega(kx, ky)
        warp = p.gamma3 * om * np.exp(3j * np.asarray(kx, dtype=float))
        dg1 = u * mt * p.gamma1
        dom = u * n * om
        dwarp = u * nt * warp
        out[..., 0, 1] = out[..., 1, 0] = -dg1
        out[..., 0, 3] = -np.conj(dom)
        out[..., 3, 0] = -dom
        out[..., 1, 2] = -dom
        out[..., 2, 1] = -np.conj(dom)
        out[..., 2, 3] = -dwarp
        out[..., 3, 2] = -np.conj(dwarp)
        for i, c in ((0, zt), (1, zt), (2, z), (3, z)):
            out[..., i, i] = -1j * k0 * u * c
        return out

    def at_scale(self, h: int, k0, kx, ky) -> np.ndarray:
        return self.weight(h) * self.base(k0, kx, ky)

    def dressed(self, h: int, k0, kx, ky) -> np.ndarray:
        """A + sum of W^(h') over h' >= h."""
        a = inverse_propagator(k0, kx, ky, self.params)
        return a + self.cumulative_weight(h) * self.base(k0, kx, ky)


def shift_function(model: SelfEnergyModel, h: int, w: int = 1, j: int = 1) -> Callable[[float], complex]:
    """Delta -> A(b,a)^2 - A(b~,a) A(b,a~) of the dressed matrix at the shifted point."""
    pt = fermi_point(model.params.coupling, w, j)

    def d_hat(delta: float) -> complex:
        a = model.dressed(h, 0.0, pt.kx, pt.ky + w * delta)
        return complex(a[3, 0] ** 2 - a[1, 0] * a[3, 2])

    return d_hat


def fermi_shift_newton(model: SelfEnergyModel, h: int, p: HoppingParams | None = None,
                       tol: float = 1e-12, w: int = 1, max_iter: int = 50,
                       history: list | None = None) -> float:
    """Shift Delta of the j = 1 satellite along ky solving D(Delta) = 0.

    ``history``, if given, receives |D| after every iterate.
    """
    if p is not None and p != model.params:
        model = SelfEnergyModel(model.kind, model.magnitude, model.coeffs, model.scales, model.decay, p)
    G = model.params.coupling
    d_hat = shift_function(model, h, w)

    def real_part(delta: float) -> float:
        return d_hat(delta).real

    def slope(delta: float) -> float:
        step = 1e-6
        return (real_part(delta + step) - real_part(delta - step)) / (2 * step)

    delta = 0.0
    r = real_part(delta)
    if history is not None:
        history.append(abs(r))
    if abs(r) <= tol:
        return delta
    y = slope(delta)
    if abs(y) < G:
        raise JacobianTooSmall(f"|Y| = {abs(y):.3e} below gamma1*gamma3 = {G:.3e}")
    for _ in range(max_iter):
        y = slope(delta)
        if y == 0:
            raise JacobianTooSmall("vanishing derivative during Newton iteration")
        step = -r / y
        new = delta + step
        nr = real_part(new)
        if abs(nr) > abs(r):
            new = delta + 0.5 * step
            nr = real_part(new)
        delta, r = new, nr
        if history is not None:
            history.append(abs(r))
        if abs(r) <= tol:
            return delta
    raise NonConvergence(f"Newton shift did not reach tol={tol} in {max_iter} iterations")


def fermi_shift_bisection(model: SelfEnergyModel, h: int, bracket: float, w: int = 1,
                          tol: float = 1e-15) -> float:
    """Reference root of Re D on [-bracket, bracket] by bisection."""
    d_hat = shift_function(model, h, w)
    lo, hi = -bracket, bracket
    flo = d_hat(lo).real
    if flo * d_hat(hi).real > 0:
        raise NonConvergence("bracket does not straddle a sign change")
    while hi - lo > tol * max(1.0, bracket):
        mid = 0.5 * (lo + hi)
        fm = d_hat(mid).real
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def shifted_satellites(G: float, delta: float, w: int = 1) -> list[FermiPoint]:
    """Shifted j = 1 point and its two rotated copies j = 2, 3."""
    p1 = fermi_point(G, w, 1)
    q = np.array([p1.kx, p1.ky + w * delta])
    out = [FermiPoint(w, 1, q[0], q[1], delta)]
    targets = {j: fermi_point(G, w, j) for j in (2, 3)}
    for power in (1, 2):
        rx, ry = rotate(q[0], q[1], power)
        # the rotation fixes the valley centre modulo the dual lattice
        best = None
        for j, t in targets.items():
            dx, dy = nearest_image(rx - t.kx, ry - t.ky)
            dist = math.hypot(dx, dy)
            if best is None or dist < best[0]:
                best = (dist, j, t.kx + float(dx), t.ky + float(dy))
        out.append(FermiPoint(w, best[1], best[2], best[3], delta))
    out.sort(key=lambda f: f.j)
    return out
