"""Scale decomposition of the propagator.

Momentum space is sliced into dyadic shells with a smooth bump ``chi0``.
In the ultraviolet the shells only see ``|k0|``; below ``hbar0`` they are
centred on the valley points and measured in the norm of the regime the
scale belongs to (I, II, then III around each of the four Fermi points).
The two intermediate scales glue neighbouring regimes together.

Scale bookkeeping: every scale ``h`` of :meth:`ScaleTable.scales` has a
cumulative cutoff ``F(h)`` and a single-scale cutoff ``f_h = F(h) - F(h⁻)``
where ``h⁻`` is the next scale down.  The lowest scale ``h_beta`` keeps the
whole remainder ``f = F(h_beta)``, so ``sum_h f_h = chi0(2^-M |k0|)``
holds for every real ``k0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegime, UnresolvedScale
from .fermi import SelfEnergyModel, fermi_point
from .model import (DELTAS, G1, G2, L1, L2, SQRT3, HoppingParams, Momentum3, h0_matrix, inverse_propagator,
                    nearest_image, rotate)
from .regimes import RegimeConstants, _rotation_power, x1, xi

GNORM = float(np.hypot(*G1))


def chi0(rho):
    """Smooth bump: 1 on [0, 1/3], 0 on [2/3, inf), monotone in between."""
    rho = np.asarray(rho, dtype=float)
    t = 3.0 * (2.0 / 3.0 - rho)

    def s(u):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)

    a, b = s(t), s(1.0 - t)
    out = a / (a + b)
    return out if out.ndim else float(out)


# -- scale table -------------------------------------------------------------


@dataclass(frozen=True)
class ScaleTable:
    hbar0: int
    h1: int
    hbar1: int
    h2: int
    hbar2: int
    hbeta: int
    M: int

    def scales(self) -> list[int]:
        """All scales from M down to h_beta in integration order."""
        return (
            list(range(self.M, self.hbar0, -1))
            + list(range(self.hbar0, self.h1, -1))
            + [self.h1]
            + list(range(self.hbar1, self.h2, -1))
            + [self.h2]
            + list(range(self.hbar2, self.hbeta - 1, -1))
        )

    def below(self, h: int) -> int | None:
        if h == self.hbeta:
            return None
        if h == self.h1:
            return self.hbar1
        if h == self.h2:
            return self.hbar2
        return h - 1

    def regime_of(self, h: int) -> str:
        if h > self.hbar0:
            return "UV"
        if h > self.h1:
            return "I"
        if h == self.h1:
            return "Int-I-II"
        if h > self.h2:
            return "II"
        if h == self.h2:
            return "Int-II-III"
        return "III"

    def interior(self, regime: str) -> list[int]:
        """Scales whose single-scale cutoff lies entirely inside ``regime``."""
        return [h for h in self.scales() if self.regime_of(h) == regime and h != self.hbeta]


def _floor_log2(x: float) -> int:
    return math.floor(math.log2(x))


def _ceil_log2(x: float) -> int:
    return math.ceil(math.log2(x))


def scale_thresholds(p: HoppingParams, rc: RegimeConstants, beta: float, M: int) -> ScaleTable:
    eps = p.epsilon
    t = ScaleTable(
        hbar0=_floor_log2(rc.kappa0_bar),
        h1=_ceil_log2(rc.kappa1 * eps),
        hbar1=_floor_log2(rc.kappa1_bar * eps),
        h2=_ceil_log2(rc.kappa2 * eps**3),
        hbar2=_floor_log2(rc.kappa2_bar * eps**3),
        hbeta=_floor_log2(math.pi / beta),
        M=M,
    )
    checks = (
        (t.M > t.hbar0, "M > hbar0"),
        (t.hbar0 >= t.h1, "hbar0 >= h1"),
        (t.h1 > t.hbar1, "h1 > hbar1"),
        (t.hbar1 >= t.h2, "hbar1 >= h2"),
        (t.h2 > t.hbar2, "h2 > hbar2"),
        (t.hbar2 >= t.hbeta, "hbar2 >= hbeta"),
    )
    for ok, name in checks:
        if not ok:
            raise EmptyRegime(f"scale ordering violated: {name} fails for {t}")
    return t


@dataclass(frozen=True)
class LatticeSpec:
    L: int
    beta: float
    M: int

    def __post_init__(self) -> None:
        if self.L < 2 or self.L & (self.L - 1):
            raise ValueError(f"L must be a power of two, got {self.L}")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


def default_beta(hbeta: int) -> float:
    return 2.0 ** (abs(hbeta) + 2) * math.pi


# -- cutoff functions ---------------------------------------------------------


class Cutoffs:
    """Cumulative and single-scale cutoffs for fixed parameters.

    ``points`` optionally overrides the Fermi points used in the third
    regime: a mapping ``(omega, j) -> (kx, ky)``.
    """

    def __init__(self, table: ScaleTable, p: HoppingParams, points: dict | None = None):
        self.table = table
        self.p = p
        G = p.coupling
        self.points = {(w, j): fermi_point(G, w, j).k for w in (1, -1) for j in range(4)}
        if points:
            self.points.update({key: np.asarray(v, dtype=float) for key, v in points.items()})

    def _disp(self, kx, ky, w: int, j: int):
        c = self.points[(w, j)]
        return nearest_image(np.asarray(kx) - c[0], np.asarray(ky) - c[1])

    def norm(self, regime: str, k0, kx, ky, w: int, j: int = 0):
        """Regime norm of k measured from the (w, j) Fermi point."""
        p = self.p
        dx, dy = self._disp(kx, ky, w, j)
        k0 = np.asarray(k0, dtype=float)
        if regime == "I":
            return np.sqrt(k0**2 + np.abs(xi(dx, dy, w)) ** 2)
        if regime == "II":
            return np.sqrt(k0**2 + np.abs(xi(dx, dy, w)) ** 4 / p.gamma1**2)
        if j == 0:
            return np.sqrt(k0**2 + p.gamma3**2 * np.abs(xi(dx, dy, w)) ** 2)
        qx, qy = rotate(dx, dy, _rotation_power(w, j))
        return np.sqrt(k0**2 + p.gamma3**2 * np.abs(x1(qx, qy, w)) ** 2)

    def cumulative(self, h: int, k0, kx, ky, w: int | None = None, j: int | None = None):
        """F(h); restricted to one valley (and one Fermi point) when given."""
        t = self.table
        regime = t.regime_of(h)
        scale = 2.0 ** (-h)
        if regime == "UV":
            return chi0(scale * np.abs(np.asarray(k0, dtype=float)))
        valleys = (1, -1) if w is None else (w,)
        total = 0.0
        for ww in valleys:
            if regime in ("I", "Int-I-II"):
                total = total + chi0(scale * self.norm("I", k0, kx, ky, ww))
            elif regime in ("II", "Int-II-III"):
                total = total + chi0(scale * self.norm("II", k0, kx, ky, ww))
            else:
                for jj in range(4) if j is None else (j,):
                    total = total + chi0(scale * self.norm("III", k0, kx, ky, ww, jj))
        return total

    def single(self, h: int, k0, kx, ky, w: int | None = None, j: int | None = None):
        """f_h on one scale.  Restricting to (w, j) below the UV gives f_{h,w,j}."""
        lower = self.table.below(h)
        top = self.cumulative(h, k0, kx, ky, w, j)
        if lower is None:
            return top
        return top - self.cumulative(lower, k0, kx, ky, w, j)


def cutoff_f(k: Momentum3, h: int, table: ScaleTable, p: HoppingParams, points: dict | None = None) -> float:
    return float(Cutoffs(table, p, points).single(h, k.k0, k.kx, k.ky))


def partition_residual(k: Momentum3, table: ScaleTable, p: HoppingParams, points: dict | None = None) -> float:
    c = Cutoffs(table, p, points)
    total = sum(c.single(h, k.k0, k.kx, k.ky) for h in table.scales())
    return float(abs(total - chi0(2.0 ** (-table.M) * abs(k.k0))))


# -- dressed single-scale propagators ----------------------------------------


def dressed_inverse(model: SelfEnergyModel | None, h: int, cut: Cutoffs, k0, kx, ky,
                    w: int | None = None, j: int | None = None) -> np.ndarray:
    """A + F(h) W^(h) + sum of W^(h') over the scales above h."""
    p = cut.p
    a = inverse_propagator(k0, kx, ky, p)
    if model is None or model.kind == "zero" or model.magnitude == 0:
        return a
    base = model.base(k0, kx, ky)
    above = sum(model.weight(s) for s in cut.table.scales() if s > h)
    f = np.asarray(cut.cumulative(h, k0, kx, ky, w, j))[..., None, None]
    return a + (f * model.weight(h) + above) * base


def single_scale_propagator(h: int, cut: Cutoffs, k0, kx, ky, model: SelfEnergyModel | None = None,
                            w: int | None = None, j: int | None = None) -> np.ndarray:
    a = dressed_inverse(model, h, cut, k0, kx, ky, w, j)
    f = np.broadcast_to(cut.single(h, k0, kx, ky, w, j), a.shape[:-2])
    out = np.zeros(a.shape, dtype=complex)
    nz = f != 0
    if np.any(nz):
        out[nz] = f[nz][..., None, None] * np.linalg.inv(a[nz])
    return out


# -- Schwinger recursion -----------------------------------------------------


def schwinger_recursion(model: SelfEnergyModel | None, k: Momentum3, table: ScaleTable, p: HoppingParams,
                        points: dict | None = None) -> np.ndarray:
    """Two-point function at k from the scale-by-scale recursion.

    Starting at the top scale with ``q = 1, s = 0, G = 0``, each step down to
    scale h uses the single-scale propagator one scale above and the
    self-energy on scale h:

        G+ <- G+ + q+ g,   G- <- G- + g q-,
        s  <- s + q+ g q- - G+ W G-,
        q+ <- q+ - G+ W,   q- <- q- - W G-.

    A last step with zero self-energy integrates the bottom remainder.
    """
    cut = Cutoffs(table, p, points)
    scales = table.scales()
    props = [single_scale_propagator(h, cut, k.k0, k.kx, k.ky, model) for h in scales]
    zero = np.zeros((4, 4), dtype=complex)
    selfs = [model.at_scale(h, k.k0, k.kx, k.ky) if model is not None else zero for h in scales[1:]]
    return recursion_from_blocks(props, selfs)


def recursion_from_blocks(props, selfs) -> np.ndarray:
    """Run the recursion on explicit single-scale propagators (top first).

    ``selfs[i]`` is the self-energy applied between ``props[i]`` and
    ``props[i + 1]``.
    """
    if len(selfs) != len(props) - 1:
        raise ValueError("need one self-energy between each pair of scales")
    n = np.shape(props[0])[0]
    eye = np.eye(n, dtype=complex)
    qp, qm = eye.copy(), eye.copy()
    gp = np.zeros((n, n), dtype=complex)
    gm = np.zeros((n, n), dtype=complex)
    s = np.zeros((n, n), dtype=complex)
    for i, g in enumerate(props):
        gp = gp + qp @ g
        gm = gm + g @ qm
        s = s + qp @ g @ qm
        if i == len(selfs):
            break
        w = selfs[i]
        s = s - gp @ w @ gm
        qp = qp - gp @ w
        qm = qm - w @ gm
    return s


def two_mode_recursion(g1, g2, X) -> np.ndarray:
    """Recursion for two scale fields coupled by ``psi^+ X psi^-`` on their sum.

    Integrating the upper field induces ``W = (1 + X g1)^-1 X`` on the lower
    one, whose propagator is then dressed to ``(g2^-1 + W)^-1``.
    """
    g1, g2, X = (np.asarray(a, dtype=complex) for a in (g1, g2, X))
    eye = np.eye(len(g1))
    W = np.linalg.solve(eye + X @ g1, X)
    g2d = np.linalg.inv(np.linalg.inv(g2) + W)
    return recursion_from_blocks([g1, g2d], [W])


def schwinger_two_scale(model: SelfEnergyModel, k: Momentum3, table: ScaleTable, p: HoppingParams,
                        h: int | None = None) -> np.ndarray:
    """Closed form of the recursion for k supported on two adjacent scales.

    Valid once the recursion has passed two scales below the highest scale
    ``hk`` on which k has support; ``h`` (default: the bottom scale) is the
    scale down to which self-energies are summed.
    """
    cut = Cutoffs(table, p)
    scales = table.scales()
    f = {s: float(cut.single(s, k.k0, k.kx, k.ky)) for s in scales}
    hk = max(s for s in scales if f[s] != 0)
    hm = table.below(hk)
    if h is None:
        h = table.hbeta
    g1 = single_scale_propagator(hk, cut, k.k0, k.kx, k.ky, model)
    g2 = single_scale_propagator(hm, cut, k.k0, k.kx, k.ky, model)
    base = model.base(k.k0, k.kx, k.ky)
    w1 = model.weight(hm) * base
    rest = sum(model.weight(s) for s in scales if h <= s < hm) * base
    eye = np.eye(4)
    left = g1 + g2 - g1 @ w1 @ g2
    right = g1 + g2 - g2 @ w1 @ g1
    return g1 - g1 @ w1 @ g1 + (eye - g1 @ w1) @ g2 @ (eye - w1 @ g1) - left @ rest @ right


# -- configuration space -----------------------------------------------------


def _pow2_at_least(n: float) -> int:
    return 1 << max(0, math.ceil(math.log2(max(n, 1.0))))


@dataclass(frozen=True)
class ScaleWindow:
    regime: str
    center: tuple[float, float] | None
    radius: float          # spatial support radius of k' (Euclidean)
    spacing_norm: float    # change of the regime norm between neighbouring lattice momenta


def _window(h: int, cut: Cutoffs, L: int, w: int, j: int) -> ScaleWindow:
    p = cut.p
    regime = cut.table.regime_of(h)
    top = (2.0 / 3.0) * 2.0**h
    dk = GNORM / L
    if regime == "UV":
        return ScaleWindow(regime, None, math.inf, 0.0)
    if regime in ("I", "Int-I-II"):
        c = cut.points[(w, 0)]
        return ScaleWindow(regime, (c[0], c[1]), top / 1.5, 1.5 * dk)
    if regime in ("II", "Int-II-III"):
        c = cut.points[(w, 0)]
        r = math.sqrt(p.gamma1 * top) / 1.5
        return ScaleWindow(regime, (c[0], c[1]), r, 2 * 1.5 * r * 1.5 * dk / p.gamma1)
    c = cut.points[(w, j)]
    stretch = 1.0 if j == 0 else 3.0
    return ScaleWindow(regime, (c[0], c[1]), top / (1.5 * p.gamma3), p.gamma3 * 1.5 * stretch * dk)


def single_scale_xspace(h: int, spec: LatticeSpec, p: HoppingParams, table: ScaleTable,
                        w: int = 1, j: int = 0, model: SelfEnergyModel | None = None,
                        oversample: int = 2):
    """g_{h,w,j}(x) on a space-time grid.

    Returns ``(g, x0, xs, weight)``: ``g`` has shape (4, 4, N0, Lc, Lc) and
    samples the propagator at times ``x0`` and at sites
    ``x = stride (y1 l1 + y2 l2)``; ``weight`` converts a plain sum over the
    grid into the space-time integral (time step times sites per sample).

    Only lattice momenta in a box around the scale's support are summed, and
    only every ``stride``-th site along each axis is sampled; for an
    envelope that varies on scales much larger than the lattice spacing
    this reproduces the full lattice sum.
    """
    cut = Cutoffs(table, p)
    win = _window(h, cut, spec.L, w, j)
    step0 = 2 * math.pi / spec.beta
    if step0 > 2.0**h / 8:
        raise UnresolvedScale(f"frequency spacing {step0:.3e} exceeds 2^h/8 = {2.0**h / 8:.3e}")
    if win.regime != "UV" and win.spacing_norm > 2.0**h / 8:
        raise UnresolvedScale(
            f"momentum spacing {win.spacing_norm:.3e} in the {win.regime} norm exceeds 2^h/8 = {2.0**h / 8:.3e}"
        )

    # Matsubara window
    n0_max = math.ceil((2.0 / 3.0) * 2.0**h / step0)
    n0 = np.arange(-n0_max - 1, n0_max + 1)
    k0 = step0 * (n0 + 0.5)
    N0 = _pow2_at_least(oversample * len(n0))

    L = spec.L
    if win.regime == "UV":
        Lc, stride = L, 1
        n = np.arange(L)
        cx, cy = 0.0, 0.0
    else:
        half = math.ceil(win.radius * SQRT3 * L / (2 * math.pi)) + 1
        Lc = min(L, _pow2_at_least(oversample * (2 * half + 1)))
        stride = L // Lc
        n = np.arange(-half, half + 1) if Lc > 2 * half + 1 else np.arange(-(Lc // 2), Lc // 2)
        cx, cy = win.center
    n1, n2 = np.meshgrid(n, n, indexing="ij")
    kpx = (n1 * G1[0] + n2 * G2[0]) / L
    kpy = (n1 * G1[1] + n2 * G2[1]) / L
    K0 = k0[:, None, None]
    KX = (cx + kpx)[None]
    KY = (cy + kpy)[None]
    restrict_w = None if win.regime == "UV" else w
    restrict_j = j if win.regime == "III" else None
    ghat = single_scale_propagator(h, cut, K0, KX, KY, model, restrict_w, restrict_j)

    # scatter into FFT grids; the antiperiodic half-integer shift becomes a phase
    grid = np.zeros((N0, Lc, Lc, 4, 4), dtype=complex)
    i0 = np.mod(n0, N0)
    i1 = np.mod(n1, Lc)
    i2 = np.mod(n2, Lc)
    np.add.at(grid, (i0[:, None, None], i1[None], i2[None]), ghat)
    # g(x0, x) = (1/(beta L^2)) sum_k e^{-i k0 x0 - i k'.x} ghat(k)
    g = np.fft.fftn(np.ascontiguousarray(np.moveaxis(grid, (3, 4), (0, 1))), axes=(2, 3, 4))
    jj = np.arange(N0)
    x0 = spec.beta * jj / N0
    g *= np.exp(-1j * 0.5 * step0 * x0)[:, None, None]
    g /= spec.beta * L * L
    x0 = np.where(jj < N0 // 2, x0, x0 - spec.beta)
    y = np.arange(Lc)
    y = np.where(y < Lc // 2, y, y - Lc) * stride
    y1, y2 = np.meshgrid(y, y, indexing="ij")
    xs = np.stack([y1 * L1[0] + y2 * L2[0], y1 * L1[1] + y2 * L2[1]], axis=-1)
    weight = (spec.beta / N0) * stride * stride
    return g, x0, xs, weight



def resolving_spec(h: int, p: HoppingParams, table: ScaleTable, w: int = 1, j: int = 0,
                   min_L: int = 8, max_L: int = 1 << 16) -> LatticeSpec:
    """Smallest lattice (and a matching beta) on which scale h is resolved.

    Both L and beta grow like 2^-h, so the discretisation looks the same on
    every scale.
    """
    beta = 16 * math.pi * 2.0 ** (-h)
    cut = Cutoffs(table, p)
    L = min_L
    while _window(h, cut, L, w, j).spacing_norm > 2.0**h / 8:
        L *= 2
        if L > max_L:
            raise UnresolvedScale(f"scale {h} needs L > {max_L}")
    return LatticeSpec(L, beta, table.M)


def xspace_l1_norms(h: int, moments, spec: LatticeSpec, p: HoppingParams,
                    rc: RegimeConstants = RegimeConstants(), w: int = 1, j: int = 0,
                    model: SelfEnergyModel | None = None, table: ScaleTable | None = None) -> dict:
    """:func:`xspace_l1_norm` for several ``(m0, mk)`` pairs from one Fourier sum."""
    if table is None:
        table = scale_thresholds(p, rc, spec.beta, spec.M)
    g, x0, xs, weight = single_scale_xspace(h, spec, p, table, w, j, model)
    absg = np.abs(g)
    dist = np.hypot(xs[..., 0], xs[..., 1])
    out = {}
    for m0, mk in moments:
        moment = (np.abs(x0) ** m0)[:, None, None] * (dist**mk)[None]
        out[(m0, mk)] = float(np.max(weight * np.einsum("tab,ijtab->ij", moment, absg)))
    return out


def xspace_l1_norm(h: int, m0: int, mk: int, spec: LatticeSpec, p: HoppingParams,
                   rc: RegimeConstants = RegimeConstants(), w: int = 1, j: int = 0,
                   model: SelfEnergyModel | None = None, table: ScaleTable | None = None) -> float:
    """max over entries of  int dx |x0|^m0 |x|^mk |g_h(x)|."""
    return xspace_l1_norms(h, [(m0, mk)], spec, p, rc, w, j, model, table)[(m0, mk)]


# -- ultraviolet improvements ------------------------------------------------


def _matsubara(beta: float, kmax: float) -> np.ndarray:
    step = 2 * math.pi / beta
    n = math.ceil(kmax / step) + 1
    return step * (np.arange(-n, n) + 0.5)


def _uv_table(p: HoppingParams, M: int) -> ScaleTable:
    # ultraviolet cutoffs only see scales above hbar0, so any beta deep
    # enough to keep the infrared end of the table ordered will do
    return scale_thresholds(p, RegimeConstants(), default_beta(-60), M)


def uv_tadpole_sum(h: int, kx: float, ky: float, spec: LatticeSpec, p: HoppingParams,
                   table: ScaleTable | None = None, odd_only: bool = False,
                   absolute: bool = False):
    """(1/beta) sum over Matsubara k0 of g_h(k0, k) on an ultraviolet scale.

    ``absolute=True`` instead returns (1/beta) sum of the operator norms,
    the size the sum would have without cancellations.  ``odd_only`` keeps
    only the part of g_h odd in k0.
    """
    if table is None:
        table = _uv_table(p, spec.M)
    cut = Cutoffs(table, p)
    k0 = _matsubara(spec.beta, (2.0 / 3.0) * 2.0**h)
    g = single_scale_propagator(h, cut, k0, kx, ky)
    if odd_only:
        gm = single_scale_propagator(h, cut, -k0, kx, ky)
        g = 0.5 * (g - gm)
    if absolute:
        return float(np.sum(np.linalg.norm(g, ord=2, axis=(1, 2)))) / spec.beta
    return g.sum(axis=0) / spec.beta


# sublattice offsets in the plane, basis order (a, b~, a~, b)
OFFSETS = np.array([[0.0, 0.0], [0.0, 0.0], -DELTAS[0], DELTAS[0]])


def exp_potential(r):
    """v(r) = exp(-|r|) with v(0) = 0."""
    r = np.asarray(r, dtype=float)
    return np.where(r > 1e-12, np.exp(-r), 0.0)


def _lattice_sites(L: int):
    y = np.arange(L)
    y = np.where(y < L // 2, y, y - L)
    y1, y2 = np.meshgrid(y, y, indexing="ij")
    return y1 * L1[0] + y2 * L2[0], y1 * L1[1] + y2 * L2[1]


def equal_time_propagator(h: int, spec: LatticeSpec, p: HoppingParams, table: ScaleTable) -> np.ndarray:
    """g_h(x0 = 0, x) for every site of the L x L torus, shape (L, L, 4, 4)."""
    cut = Cutoffs(table, p)
    L = spec.L
    n = np.arange(L)
    n1, n2 = np.meshgrid(n, n, indexing="ij")
    kx = (n1 * G1[0] + n2 * G2[0]) / L
    ky = (n1 * G1[1] + n2 * G2[1]) / L
    k0 = _matsubara(spec.beta, (2.0 / 3.0) * 2.0**h)
    f = np.asarray(cut.single(h, k0, 0.0, 0.0))
    keep = f != 0
    k0, f = k0[keep], f[keep]
    # sum over k0 through the spectral decomposition of H0(k)
    hk = h0_matrix(kx, ky, p)
    evals, vecs = np.linalg.eigh(hk)
    # A^{-1} = -(i k0 + H)^{-1}
    s = -(f[None, None, None, :] / (1j * k0[None, None, None, :] + evals[..., None])).sum(-1) / spec.beta
    ghat = np.einsum("xyan,xyn,xybn->xyab", vecs, s, vecs.conj())
    g = np.fft.fft2(ghat, axes=(0, 1)) / (L * L)
    return g


def uv_k2_field(h: int, U: float, spec: LatticeSpec, p: HoppingParams, table: ScaleTable | None = None,
                potential=exp_potential) -> np.ndarray:
    """In-plane part of the resummed two-field kernel on scale h, shape (L, L, 4, 4).

    The full kernel is this array times delta(x0).
    """
    if table is None:
        table = _uv_table(p, spec.M)
    L = spec.L
    sx, sy = _lattice_sites(L)
    # w_{a a'}(x) = v(x + d_a - d_a') on the torus
    wfield = np.zeros((L, L, 4, 4))
    for a in range(4):
        for b in range(4):
            dx, dy = OFFSETS[a] - OFFSETS[b]
            wfield[..., a, b] = potential(np.hypot(*_torus_vec(sx + dx, sy + dy, L)))
    out = np.zeros((L, L, 4, 4), dtype=complex)
    for hp in range(h + 1, spec.M + 1):
        g = equal_time_propagator(hp, spec, p, table)
        out += wfield * g
        diag0 = np.array([g[0, 0, a, a] for a in range(4)])
        for a in range(4):
            out[0, 0, a, a] -= np.sum(wfield[..., a, :].sum(axis=(0, 1)) * diag0)
    return 2 * U * out


def _torus_vec(x, y, L: int):
    """Shortest representative of (x, y) modulo L l1, L l2."""
    # coordinates in the (l1, l2) basis
    det = L1[0] * L2[1] - L1[1] * L2[0]
    c1 = (x * L2[1] - y * L2[0]) / det
    c2 = (L1[0] * y - L1[1] * x) / det
    c1 = c1 - L * np.round(c1 / L)
    c2 = c2 - L * np.round(c2 / L)
    return c1 * L1[0] + c2 * L2[0], c1 * L1[1] + c2 * L2[1]


def uv_k2_kernel(h: int, x: tuple[int, int], U: float, spec: LatticeSpec, p: HoppingParams,
                 table: ScaleTable | None = None, potential=exp_potential) -> np.ndarray:
    """Kernel value at the site x = x[0] l1 + x[1] l2 (equal times)."""
    field = uv_k2_field(h, U, spec, p, table, potential)
    return field[x[0] % spec.L, x[1] % spec.L]


def k2_l1_norm(h: int, U: float, spec: LatticeSpec, p: HoppingParams, table: ScaleTable | None = None) -> float:
    field = uv_k2_field(h, U, spec, p, table)
    return float(np.max(np.abs(field).sum(axis=(0, 1))))
