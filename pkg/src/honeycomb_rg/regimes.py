"""Regimes of the free propagator and their dominant parts.

Around each valley centre ``p0`` the propagator crosses over from a
conical (regime I) to a parabolic (regime II) and back to a conical
(regime III) behaviour, the last one around each of the four Fermi points
of the valley.  Two intermediate shells glue the regimes together.  Each
regime comes with its own norm of the displacement ``k' = k - p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RegimeEmpty, SamplingExhausted, UnsupportedLabel
from .fermi import FermiPoint, fermi_point
from .model import HoppingParams, Momentum3, inverse_propagator, nearest_image, op_norm, rotate, twist_frame

LABELS = ("UV", "I", "Int-I-II", "II", "Int-II-III", "III")


@dataclass(frozen=True)
class RegimeLabel:
    name: str
    j: int | None = None

    def __post_init__(self) -> None:
        if self.name not in LABELS:
            raise DomainError(f"unknown regime {self.name!r}")
        if (self.name == "III") != (self.j is not None):
            raise DomainError("the third regime, and only it, carries a Fermi point index")

    def __str__(self) -> str:
        return f"III({self.j})" if self.name == "III" else self.name

    @classmethod
    def parse(cls, text: str) -> "RegimeLabel":
        if text.startswith("III(") and text.endswith(")"):
            return cls("III", int(text[4:-1]))
        return cls(text)


@dataclass(frozen=True)
class RegimeConstants:
    kappa0_bar: float = 1 / 3
    kappa1: float = 2.0
    kappa1_bar: float = 0.5
    kappa2: float = 2.0
    kappa2_bar: float = 0.5

    def __post_init__(self) -> None:
        vals = (self.kappa0_bar, self.kappa1, self.kappa1_bar, self.kappa2, self.kappa2_bar)
        if min(vals) <= 0:
            raise DomainError("regime constants must be positive")

    def bounds(self, eps: float) -> dict[str, tuple[float, float]]:
        """Norm interval [lower, upper) of each regime, in that regime's own norm."""
        return {
            "UV": (self.kappa0_bar, math.inf),
            "I": (self.kappa1 * eps, self.kappa0_bar),
            "II": (self.kappa2 * eps**3, self.kappa1_bar * eps),
            "III": (0.0, self.kappa2_bar * eps**3),
        }

    def check(self, eps: float) -> None:
        for name, (lo, hi) in self.bounds(eps).items():
            if not lo < hi:
                raise DomainError(f"regime {name} is empty at epsilon={eps}")


def xi(kx, ky, w: int = 1):
    """(3/2)(i kx + omega ky): linearization of Omega at the valley centre."""
    return 1.5 * (1j * np.asarray(kx) + w * np.asarray(ky))


def x1(kx, ky, w: int = 1):
    """(3/2)(3i kx + omega ky): the anisotropic variable around the j = 1 satellite."""
    return 1.5 * (3j * np.asarray(kx) + w * np.asarray(ky))


def regime_norms(kprime: Momentum3, p: HoppingParams, w: int = 1) -> tuple[float, float, float]:
    z = abs(complex(xi(kprime.kx, kprime.ky, w)))
    k0 = kprime.k0
    return (
        math.sqrt(k0 * k0 + z * z),
        math.sqrt(k0 * k0 + z**4 / p.gamma1**2),
        math.sqrt(k0 * k0 + p.gamma3**2 * z * z),
    )


def _rotation_power(w: int, j: int) -> int:
    """Number of 2pi/3 rotations carrying the neighbourhood of p_j onto that of p_1."""
    if j in (0, 1):
        return 0
    return {(1, 2): 1, (1, 3): 2, (-1, 3): 1, (-1, 2): 2}[(w, j)]


def satellite_norm(kprime: Momentum3, p: HoppingParams, w: int, j: int) -> float:
    """Third-regime norm of a displacement from the Fermi point (w, j)."""
    if j == 0:
        return regime_norms(kprime, p, w)[2]
    qx, qy = rotate(kprime.kx, kprime.ky, _rotation_power(w, j))
    z = abs(complex(x1(qx, qy, w)))
    return math.sqrt(kprime.k0**2 + p.gamma3**2 * z * z)


def displacement(k: Momentum3, pt: FermiPoint) -> Momentum3:
    dx, dy = nearest_image(k.kx - pt.kx, k.ky - pt.ky)
    return Momentum3(k.k0, float(dx), float(dy))


def nearest_valley(k: Momentum3, p: HoppingParams) -> int:
    G = p.coupling
    best = None
    for w in (1, -1):
        n = regime_norms(displacement(k, fermi_point(G, w, 0)), p, w)[0]
        if best is None or n < best[0]:
            best = (n, w)
    return best[1]


def classify_regime(k: Momentum3, p: HoppingParams, rc: RegimeConstants = RegimeConstants()) -> RegimeLabel:
    eps = p.epsilon
    w = nearest_valley(k, p)
    G = p.coupling
    n1, n2, _ = regime_norms(displacement(k, fermi_point(G, w, 0)), p, w)
    if n1 >= rc.kappa0_bar:
        return RegimeLabel("UV")
    if n1 >= rc.kappa1 * eps:
        return RegimeLabel("I")
    if n2 >= rc.kappa1_bar * eps:
        return RegimeLabel("Int-I-II")
    if n2 >= rc.kappa2 * eps**3:
        return RegimeLabel("II")
    norms = [satellite_norm(displacement(k, fermi_point(G, w, j)), p, w, j) for j in range(4)]
    j = int(np.argmin(norms))
    if norms[j] < rc.kappa2_bar * eps**3:
        return RegimeLabel("III", j)
    return RegimeLabel("Int-II-III")


# -- dominant parts ----------------------------------------------------------


def _assemble(a_big: np.ndarray, a_small: np.ndarray, m: np.ndarray) -> np.ndarray:
    """[[1, M^dag], [0, 1]] diag(a_big, a_small) [[1, 0], [M, 1]]."""
    eye = np.eye(2, dtype=complex)
    zero = np.zeros((2, 2), dtype=complex)
    left = np.block([[eye, m.conj().T], [zero, eye]])
    right = np.block([[eye, zero], [m, eye]])
    return left @ np.block([[a_big, zero], [zero, a_small]]) @ right


def _massive(p: HoppingParams) -> np.ndarray:
    return -np.array([[0, 1], [1, 0]], dtype=complex) / p.gamma1


def dominant_from_displacement(kp: Momentum3, label: RegimeLabel, p: HoppingParams, w: int = 1) -> np.ndarray:
    """Dominant part of A^{-1} at p + k', with k' measured from the point fixed by ``label``."""
    k0 = kp.k0
    g1, g3 = p.gamma1, p.gamma3
    if label.name == "I":
        z = complex(xi(kp.kx, kp.ky, w))
        zc = z.conjugate()
        m = np.array(
            [[-1j * k0, 0, 0, zc], [0, -1j * k0, z, 0], [0, zc, -1j * k0, 0], [z, 0, 0, -1j * k0]],
            dtype=complex,
        )
        return -m / (k0 * k0 + abs(z) ** 2)
    if label.name == "II":
        z = complex(xi(kp.kx, kp.ky, w))
        zc = z.conjugate()
        small = g1 / (g1 * g1 * k0 * k0 + abs(z) ** 4) * np.array(
            [[1j * g1 * k0, zc * zc], [z * z, 1j * g1 * k0]]
        )
        m = -np.diag([zc, z]) / g1
        return _assemble(_massive(p), small, m)
    if label.name == "III" and label.j == 0:
        z = complex(xi(kp.kx, kp.ky, w))
        small = -1 / (k0 * k0 + g3 * g3 * abs(z) ** 2) * np.array(
            [[-1j * k0, g3 * z], [g3 * z.conjugate(), -1j * k0]]
        )
        m = -np.diag([z.conjugate(), z]) / g1
        return _assemble(_massive(p), small, m)
    if label.name == "III" and label.j == 1:
        z1 = complex(xi(kp.kx, kp.ky, w))
        y = complex(x1(kp.kx, kp.ky, w))
        small = 1 / (k0 * k0 + g3 * g3 * abs(y) ** 2) * np.array(
            [[1j * k0, g3 * y.conjugate()], [g3 * y, 1j * k0]]
        )
        m = -g3 * np.eye(2) - np.diag([z1.conjugate(), z1]) / g1
        return _assemble(_massive(p), small, m)
    if label.name == "III" and label.j in (2, 3):
        # rotate onto the previous satellite and conjugate by the twist
        G = p.coupling
        nxt = label.j - w
        if nxt == 4:
            nxt = 1
        qx, qy = rotate(kp.kx, kp.ky, 1)
        base = fermi_point(G, w, nxt)
        d = twist_frame(float(qx) + base.kx, float(qy) + base.ky)
        inner = dominant_from_displacement(Momentum3(k0, float(qx), float(qy)), RegimeLabel("III", nxt), p, w)
        return d @ inner @ d.conj().T
    raise UnsupportedLabel(f"no dominant part for regime {label}")


def anchor_point(label: RegimeLabel, p: HoppingParams, w: int) -> FermiPoint:
    j = label.j if label.name == "III" else 0
    return fermi_point(p.coupling, w, j)


def dominant_propagator(k: Momentum3, label: RegimeLabel, p: HoppingParams, w: int | None = None) -> np.ndarray:
    if label.name in ("UV", "Int-I-II", "Int-II-III"):
        raise UnsupportedLabel(f"no dominant part for regime {label}")
    if w is None:
        w = nearest_valley(k, p)
    kp = displacement(k, anchor_point(label, p, w))
    return dominant_from_displacement(kp, label, p, w)


def rotated_inverse(kp: Momentum3, j: int, p: HoppingParams, w: int = 1) -> np.ndarray:
    """A^{-1}(p_j + k') rebuilt from the neighbourhood of p_{j - omega} by rotation."""
    G = p.coupling
    nxt = j - w
    if nxt == 4:
        nxt = 1
    qx, qy = rotate(kp.kx, kp.ky, 1)
    base = fermi_point(G, w, nxt)
    q = (kp.k0, float(qx) + base.kx, float(qy) + base.ky)
    d = twist_frame(q[1], q[2])
    return d @ np.linalg.inv(inverse_propagator(*q, p)) @ d.conj().T


# -- first-order Taylor model ------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    """A(p + k') ~ value + k0' d0 + kx' dx + ky' dy."""

    value: np.ndarray
    d0: np.ndarray
    dx: np.ndarray
    dy: np.ndarray

    def __call__(self, kp: Momentum3) -> np.ndarray:
        return self.value + kp.k0 * self.d0 + kp.kx * self.dx + kp.ky * self.dy


def local_part(pt: FermiPoint, p: HoppingParams, field=None, step: float = 1e-6) -> LinearModel:
    """Value and gradient of A (or of ``field(k0, kx, ky)``) at the Fermi point.

    Derivatives use central differences at steps h and h/2 combined by one
    Richardson step.
    """
    if field is None:
        def field(k0, kx, ky):
            return inverse_propagator(k0, kx, ky, p)

    base = np.array([0.0, pt.kx, pt.ky])
    value = np.asarray(field(*base), dtype=complex)

    def central(axis: int, hh: float) -> np.ndarray:
        e = np.zeros(3)
        e[axis] = hh
        return (np.asarray(field(*(base + e))) - np.asarray(field(*(base - e)))) / (2 * hh)

    grads = [(4 * central(i, step / 2) - central(i, step)) / 3 for i in range(3)]
    return LinearModel(value, *grads)


# -- error scans -------------------------------------------------------------

# sample directions: polar angle between the k0 axis and the spatial part of
# the regime norm, and azimuth of the spatial displacement
RAY_THETAS = tuple(i * math.pi / 8 for i in range(5))
RAY_PHIS = tuple(i * math.pi / 3 for i in range(6))
RAY_DIRECTIONS = tuple((t, f) for t in RAY_THETAS for f in RAY_PHIS)

SCANNABLE = ("I", "II", "III(0)", "III(1)")


def _norm_for(label: RegimeLabel, kp: Momentum3, p: HoppingParams, w: int) -> float:
    if label.name == "I":
        return regime_norms(kp, p, w)[0]
    if label.name == "II":
        return regime_norms(kp, p, w)[1]
    return satellite_norm(kp, p, w, label.j)


def point_on_ray(label: RegimeLabel, direction, rho: float, p: HoppingParams, w: int = 1) -> Momentum3:
    """Displacement of regime norm ``rho`` in the direction ``(theta, phi)``.

    The time component is ``rho cos(theta)``; the spatial displacement points
    along azimuth ``phi`` and carries the remaining ``rho sin(theta)`` of the
    norm.  Since every regime norm is a Euclidean combination of ``|k0|``
    and a spatial term, a fixed direction traces a self-similar ray.
    """
    theta, phi = direction
    k0 = rho * math.cos(theta)
    s = rho * math.sin(theta)
    ux, uy = math.cos(phi), math.sin(phi)
    if label.name == "I":
        t = s / abs(complex(xi(ux, uy, w)))
    elif label.name == "II":
        t = math.sqrt(p.gamma1 * s) / abs(complex(xi(ux, uy, w)))
    elif label.name == "III" and label.j == 0:
        t = s / (p.gamma3 * abs(complex(xi(ux, uy, w))))
    elif label.name == "III":
        qx, qy = rotate(ux, uy, _rotation_power(w, label.j))
        t = s / (p.gamma3 * abs(complex(x1(qx, qy, w))))
    else:
        raise UnsupportedLabel(f"no regime norm for {label}")
    return Momentum3(k0, t * ux, t * uy)


def relative_error(label: RegimeLabel, kp: Momentum3, p: HoppingParams, w: int = 1) -> float:
    pt = anchor_point(label, p, w)
    exact = np.linalg.inv(inverse_propagator(kp.k0, pt.kx + kp.kx, pt.ky + kp.ky, p))
    approx = dominant_from_displacement(kp, label, p, w)
    return op_norm(exact - approx) / op_norm(exact)


@dataclass(frozen=True)
class ErrorScan:
    rho: np.ndarray
    error: np.ndarray
    low_slope: float
    high_slope: float


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def approximation_error_scan(label: RegimeLabel | str, p: HoppingParams, rho_grid,
                             rc: RegimeConstants = RegimeConstants(), w: int = 1,
                             directions=RAY_DIRECTIONS, fit_points: int | None = None) -> ErrorScan:
    """Worst relative error over rays at each radius, with end-of-regime slopes.

    The two radii nearest each end of ``rho_grid`` are discarded; the low
    and high slopes are least-squares fits over the first and last
    ``fit_points`` of the remaining radii (default: half of them each).
    """
    if isinstance(label, str):
        label = RegimeLabel.parse(label)
    if str(label) not in SCANNABLE:
        raise UnsupportedLabel(f"error scans are defined for {SCANNABLE}, got {label}")
    rho = np.sort(np.asarray(rho_grid, dtype=float))
    lo, hi = rc.bounds(p.epsilon)[label.name]
    if rho[0] < lo or rho[-1] >= hi:
        raise RegimeEmpty(f"radii [{rho[0]:.3e}, {rho[-1]:.3e}] leave regime {label} = [{lo:.3e}, {hi:.3e})")
    if len(rho) < 5:
        raise RegimeEmpty("need at least five radii")
    err = np.array([
        max(relative_error(label, point_on_ray(label, d, r, p, w), p, w) for d in directions)
        for r in rho
    ])
    inner_r, inner_e = rho[2:-2], err[2:-2]
    n = len(inner_r) // 2 if fit_points is None else min(fit_points, len(inner_r))
    return ErrorScan(rho, err, _slope(inner_r[:n], inner_e[:n]), _slope(inner_r[-n:], inner_e[-n:]))


# -- lower bound in the second intermediate regime ---------------------------


def intermediate_constant(D: float, kappa_bar: float, alpha: float) -> float:
    return min(1.0, alpha * D * D / 12, alpha * (473 - 3 * math.sqrt(105)) * kappa_bar**2 / 288) * kappa_bar**2 / 4


def intermediate_case_constants(D: float, kappa_bar: float, alpha: float) -> tuple[float, float, float]:
    """The three per-case lower bounds whose minimum gives the constant above."""
    return (
        kappa_bar**2 / 4,
        alpha * D * D * kappa_bar**2 / 48,
        alpha * (3 * math.sqrt(105) - 1) ** 2 * kappa_bar**4 / 2304,
    )


def intermediate_form(k0, kx, ky, D: float, eps_bar: float, alpha: float):
    u = (1j * kx + ky) ** 2 - D * eps_bar**2 * (-1j * kx + ky)
    return eps_bar**2 * k0**2 + alpha * np.abs(u) ** 2


def intermediate_constraints(k0, kx, ky, D: float, eps_bar: float, kappa_bar: float):
    floor = kappa_bar * eps_bar**3
    c1 = ky > 0
    c2 = np.sqrt(k0**2 + eps_bar**2 * (kx**2 + ky**2)) > floor
    c3 = np.sqrt(k0**2 + eps_bar**2 * (9 * kx**2 + (ky - D * eps_bar**2) ** 2)) > floor
    return c1 & c2 & c3


@dataclass(frozen=True)
class BoundCheck:
    min_margin: float
    passed: bool
    constant: float
    case_constants: tuple[float, float, float]


def intermediate_bound_check(D: float, eps_bar: float, kappa_bar: float, alpha: float = 81 / 16,
                             n_samples: int = 100_000, seed: int = 0,
                             max_batches: int = 200) -> BoundCheck:
    """Sample the constrained region and return min l / (C eps_bar^8).

    Samples are drawn uniformly from a box with ``|k0| <= 4 eps_bar^3`` and
    ``|kx|, ky <= 4 D eps_bar^2``, which contains the region where ``l`` is
    comparable to ``eps_bar^8``, and filtered through the three constraints.
    """
    if min(D, eps_bar, kappa_bar, alpha) <= 0:
        raise DomainError("all parameters must be positive")
    rng = np.random.default_rng(seed)
    C = intermediate_constant(D, kappa_bar, alpha)
    s0 = 4 * eps_bar**3
    s1 = 4 * max(D, 1.0) * eps_bar**2
    batch = max(4 * n_samples, 1000)
    kept = 0
    worst = math.inf
    for _ in range(max_batches):
        k0 = rng.uniform(-s0, s0, batch)
        kx = rng.uniform(-s1, s1, batch)
        ky = rng.uniform(0.0, s1, batch)
        ok = intermediate_constraints(k0, kx, ky, D, eps_bar, kappa_bar)
        idx = np.flatnonzero(ok)[: n_samples - kept]
        if idx.size:
            vals = intermediate_form(k0[idx], kx[idx], ky[idx], D, eps_bar, alpha)
            worst = min(worst, float(np.min(vals)) / (C * eps_bar**8))
            kept += idx.size
        if kept >= n_samples:
            margin = worst
            return BoundCheck(margin, margin > 1, C, intermediate_case_constants(D, kappa_bar, alpha))
    raise SamplingExhausted(f"only {kept} of {n_samples} samples satisfied the constraints")
