"""Finite Grassmann algebra used as a brute-force oracle.

Generators are numbered ``0 .. n_gen-1``.  A Gaussian measure on ``n``
pairs integrates the first ``2n`` of them: generator ``i`` is ``psi^-_i``
and generator ``n + i`` is ``psi^+_i`` for ``i < n``, with

    <psi^-_i psi^+_j> = g[i, j].

Any generator beyond ``2n`` is external and survives the integration.
Monomials are stored as bitmasks; the coefficient of a mask refers to the
product of its generators in increasing order.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import SizeLimit
from .linalg4 import lu_det

MAX_GENERATORS = 16
MAX_TRUNCATED = 6


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _merge_sign(a: int, b: int) -> int:
    """Sign of reordering (sorted a)(sorted b) into sorted (a | b)."""
    swaps = 0
    bb = b
    while bb:
        low = bb & -bb
        swaps += _popcount(a & ~((low << 1) - 1))
        bb ^= low
    return -1 if swaps & 1 else 1


def _permutation_sign(seq: Sequence[int]) -> int:
    sign = 1
    seen = list(seq)
    for i in range(len(seen)):
        for j in range(i + 1, len(seen)):
            if seen[i] > seen[j]:
                sign = -sign
    return sign


@dataclass
class GrassmannPoly:
    n_gen: int
    terms: dict[int, complex] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_gen > MAX_GENERATORS:
            raise SizeLimit(f"{self.n_gen} generators exceed the cap of {MAX_GENERATORS}")

    # construction
    @classmethod
    def scalar(cls, n_gen: int, c: complex = 1.0) -> "GrassmannPoly":
        return cls(n_gen, {0: complex(c)} if c != 0 else {})

    @classmethod
    def generator(cls, n_gen: int, i: int) -> "GrassmannPoly":
        if not 0 <= i < n_gen:
            raise IndexError(f"generator {i} outside 0..{n_gen - 1}")
        return cls(n_gen, {1 << i: 1.0 + 0j})

    @classmethod
    def monomial(cls, n_gen: int, gens: Iterable[int], c: complex = 1.0) -> "GrassmannPoly":
        out = cls.scalar(n_gen, c)
        for i in gens:
            out = out * cls.generator(n_gen, i)
        return out

    # algebra
    def _coerce(self, other) -> "GrassmannPoly":
        if isinstance(other, GrassmannPoly):
            if other.n_gen != self.n_gen:
                raise ValueError("generator counts differ")
            return other
        return GrassmannPoly.scalar(self.n_gen, other)

    def __add__(self, other) -> "GrassmannPoly":
        other = self._coerce(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return GrassmannPoly(self.n_gen, {m: c for m, c in out.items() if c != 0})

    __radd__ = __add__

    def __neg__(self) -> "GrassmannPoly":
        return GrassmannPoly(self.n_gen, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "GrassmannPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "GrassmannPoly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "GrassmannPoly":
        other = self._coerce(other)
        out: dict[int, complex] = {}
        for a, ca in self.terms.items():
            for b, cb in other.terms.items():
                if a & b:
                    continue
                m = a | b
                out[m] = out.get(m, 0) + _merge_sign(a, b) * ca * cb
        return GrassmannPoly(self.n_gen, {m: c for m, c in out.items() if c != 0})

    def __rmul__(self, other) -> "GrassmannPoly":
        return self._coerce(other) * self

    def is_even(self) -> bool:
        return all(_popcount(m) % 2 == 0 for m in self.terms)

    def scalar_part(self) -> complex:
        return self.terms.get(0, 0j)

    def equals(self, other, tol: float = 0.0) -> bool:
        diff = self - self._coerce(other)
        return all(abs(c) <= tol for c in diff.terms.values())

    def exp(self) -> "GrassmannPoly":
        """exp of a polynomial without scalar part (the series terminates)."""
        if abs(self.scalar_part()) != 0:
            raise ValueError("exp is only defined here for nilpotent arguments")
        out = GrassmannPoly.scalar(self.n_gen)
        term = GrassmannPoly.scalar(self.n_gen)
        for k in range(1, self.n_gen + 1):
            term = term * self * (1.0 / k)
            if not term.terms:
                break
            out = out + term
        return out


@dataclass(frozen=True)
class GaussianSpec:
    g: np.ndarray
    n_gen: int | None = None

    @property
    def n(self) -> int:
        return int(np.shape(self.g)[0])

    @property
    def total(self) -> int:
        return 2 * self.n if self.n_gen is None else self.n_gen

    def minus(self, i: int) -> int:
        return i

    def plus(self, i: int) -> int:
        return self.n + i


def wick_moment(spec: GaussianSpec, monomial: Sequence[int]) -> complex:
    """Gaussian expectation of the ordered product of integrated generators."""
    n = spec.n
    gens = list(monomial)
    if len(set(gens)) != len(gens):
        return 0j
    if any(not 0 <= x < 2 * n for x in gens):
        raise ValueError("wick_moment only accepts integrated generators")
    minus = sorted(x for x in gens if x < n)
    plus = sorted(x - n for x in gens if x >= n)
    if len(minus) != len(plus):
        return 0j
    k = len(minus)
    if k == 0:
        return 1 + 0j
    sign = _permutation_sign(gens) * (-1) ** (k * (k - 1) // 2)
    g = np.asarray(spec.g, dtype=complex)
    return complex(sign * lu_det(g[np.ix_(minus, plus)]))


def _split(mask: int, n_int: int) -> tuple[int, int]:
    low = (1 << n_int) - 1
    return mask & ~low, mask & low


def expectation(spec: GaussianSpec, poly: GrassmannPoly) -> GrassmannPoly:
    """Integrate out the Gaussian generators, leaving a polynomial in the external ones."""
    n_int = 2 * spec.n
    out: dict[int, complex] = {}
    for mask, c in poly.terms.items():
        ext, inner = _split(mask, n_int)
        if _popcount(inner) % 2:
            continue
        gens = [i for i in range(n_int) if inner >> i & 1]
        value = wick_moment(spec, gens)
        if value == 0:
            continue
        # mask order is (inner)(ext); moving an even inner block is free
        out[ext] = out.get(ext, 0) + c * value
    return GrassmannPoly(poly.n_gen, {m: c for m, c in out.items() if c != 0})


def berezin_expectation(spec: GaussianSpec, poly: GrassmannPoly) -> GrassmannPoly:
    """Same as :func:`expectation`, by explicit Berezin integration.

    Builds ``exp(-sum psi^+_i (g^-1)_ij psi^-_j)``, multiplies, and reads
    off the coefficient of ``prod_i psi^-_i psi^+_i``, normalised by the
    integral of the exponential alone.  Needs an invertible ``g``.
    """
    n, n_gen = spec.n, poly.n_gen
    ginv = np.linalg.inv(np.asarray(spec.g, dtype=complex))
    action = GrassmannPoly(n_gen)
    for i in range(n):
        for j in range(n):
            if ginv[i, j] != 0:
                action = action + GrassmannPoly.monomial(n_gen, (spec.plus(i), spec.minus(j)), -ginv[i, j])
    weight = action.exp()
    top_gens = [x for i in range(n) for x in (spec.minus(i), spec.plus(i))]
    top = sum(1 << x for x in top_gens)
    top_sign = _permutation_sign(top_gens)

    def integrate(p: GrassmannPoly) -> dict[int, complex]:
        res: dict[int, complex] = {}
        for mask, c in p.terms.items():
            ext, inner = _split(mask, 2 * n)
            if inner != top:
                continue
            res[ext] = res.get(ext, 0) + c * top_sign
        return res

    norm = integrate(weight).get(0, 0j)
    num = integrate(weight * poly)
    return GrassmannPoly(n_gen, {m: c / norm for m, c in num.items() if c != 0})


def perturbed_two_point(spec: GaussianSpec, V: GrassmannPoly) -> np.ndarray:
    """S_ij = <psi^-_i psi^+_j e^{-V}> / <e^{-V}> for an even V without scalar part."""
    weight = (-1.0 * V).exp()
    z = expectation(spec, weight).scalar_part()
    n = spec.n
    out = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            pair = GrassmannPoly.monomial(V.n_gen, (spec.minus(i), spec.plus(j)))
            out[i, j] = expectation(spec, weight * pair).scalar_part() / z
    return out


def mode_sum_two_point(props: Sequence[np.ndarray], X: np.ndarray) -> np.ndarray:
    """Two-point function of psi = sum_m psi_m under a quadratic interaction.

    Each mode ``m`` is an independent Gaussian field with propagator
    ``props[m]``; the interaction is ``psi^+ X psi^-`` on the summed field.
    """
    props = [np.asarray(g, dtype=complex) for g in props]
    c = props[0].shape[0]
    n = c * len(props)
    g = np.zeros((n, n), dtype=complex)
    for m, gm in enumerate(props):
        g[m * c:(m + 1) * c, m * c:(m + 1) * c] = gm
    spec = GaussianSpec(g)
    V = GrassmannPoly(2 * n)
    for a in range(c):
        for b in range(c):
            if X[a, b] == 0:
                continue
            for ma in range(len(props)):
                for mb in range(len(props)):
                    V = V + GrassmannPoly.monomial(2 * n, (spec.plus(ma * c + a), spec.minus(mb * c + b)), X[a, b])
    S = perturbed_two_point(spec, V)
    return S.reshape(len(props), c, len(props), c).sum(axis=(0, 2))


# -- truncated expectations --------------------------------------------------


class _LambdaSeries:
    """Polynomials in nilpotent commuting parameters lambda_1..lambda_N."""

    def __init__(self, n_gen: int, coeffs: dict[int, GrassmannPoly]):
        self.n_gen = n_gen
        self.coeffs = coeffs

    def __mul__(self, other: "_LambdaSeries") -> "_LambdaSeries":
        out: dict[int, GrassmannPoly] = {}
        for s, a in self.coeffs.items():
            for t, b in other.coeffs.items():
                if s & t:
                    continue
                prod = a * b
                out[s | t] = out[s | t] + prod if s | t in out else prod
        return _LambdaSeries(self.n_gen, out)

    def scaled_add(self, other: "_LambdaSeries", c: float) -> "_LambdaSeries":
        out = dict(self.coeffs)
        for s, b in other.coeffs.items():
            out[s] = out[s] + b * c if s in out else b * c
        return _LambdaSeries(self.n_gen, out)


def truncated_expectation(spec: GaussianSpec, *polys: GrassmannPoly) -> GrassmannPoly:
    """Coefficient of lambda_1...lambda_N in log E[exp(sum_i lambda_i V_i)]."""
    N = len(polys)
    if N == 0:
        raise ValueError("at least one polynomial is required")
    if N > MAX_TRUNCATED:
        raise SizeLimit(f"N = {N} exceeds {MAX_TRUNCATED}")
    n_gen = polys[0].n_gen
    if any(not v.is_even() for v in polys):
        raise ValueError("truncated expectations need even (commuting) polynomials")
    # E[prod_{i in S} V_i] for every subset S
    moments: dict[int, GrassmannPoly] = {}
    for s in range(1, 1 << N):
        prod = GrassmannPoly.scalar(n_gen)
        for i in range(N):
            if s >> i & 1:
                prod = prod * polys[i]
        moments[s] = expectation(spec, prod)
    z0 = expectation(spec, GrassmannPoly.scalar(n_gen)).scalar_part()
    x = _LambdaSeries(n_gen, {s: m * (1.0 / z0) for s, m in moments.items()})
    # log(1 + x) with x nilpotent of order N + 1
    total = _LambdaSeries(n_gen, {})
    power = x
    for m in range(1, N + 1):
        total = total.scaled_add(power, (-1) ** (m + 1) / m)
        power = power * x
    full = (1 << N) - 1
    return total.coeffs.get(full, GrassmannPoly(n_gen))


def addition_residual(g1, g2, monomial: Sequence[int]) -> float:
    """|E_{g1+g2}[P] - E_{g1} E_{g2}[P(psi1 + psi2)]| for a monomial P."""
    g1 = np.asarray(g1, dtype=complex)
    g2 = np.asarray(g2, dtype=complex)
    n = g1.shape[0]
    lhs = wick_moment(GaussianSpec(g1 + g2), monomial)
    # two copies of the fields: psi1 on pairs 0..n-1, psi2 on pairs n..2n-1
    joint = GaussianSpec(np.block([[g1, np.zeros_like(g1)], [np.zeros_like(g2), g2]]))
    m = joint.n

    def copy(gen: int, which: int) -> int:
        i, is_plus = (gen - n, True) if gen >= n else (gen, False)
        pair = i + which * n
        return joint.plus(pair) if is_plus else joint.minus(pair)

    poly = GrassmannPoly.scalar(2 * m)
    for gen in monomial:
        poly = poly * (GrassmannPoly.generator(2 * m, copy(gen, 0)) + GrassmannPoly.generator(2 * m, copy(gen, 1)))
    rhs = expectation(joint, poly).scalar_part()
    return float(abs(lhs - rhs))


# -- Gram representation -----------------------------------------------------


@dataclass(frozen=True)
class GramFamily:
    """Vectors A_alpha(x), B_alpha(x) with g_{alpha alpha'}(x - x') = <A_alpha(x), B_alpha'(x')>.

    The inner product is ``<u, v> = sum conj(u) v`` over (momentum, column).
    """

    momenta: np.ndarray     # (K, 3)
    left: np.ndarray        # (K, 4, 4): U sqrt(S)
    right: np.ndarray       # (K, 4, 4): sqrt(S) V^dagger
    volume: float

    def _phase(self, x) -> np.ndarray:
        return np.exp(1j * self.momenta @ np.asarray(x, dtype=float))

    def A(self, x, alpha: int) -> np.ndarray:
        return np.conj(self._phase(x)[:, None] * self.left[:, alpha, :]).ravel() / math.sqrt(self.volume)

    def B(self, x, alpha: int) -> np.ndarray:
        return (np.conj(self._phase(x))[:, None] * self.right[:, :, alpha]).ravel() / math.sqrt(self.volume)

    def pair(self, x, alpha: int, y, beta: int) -> complex:
        return complex(np.vdot(self.A(x, alpha), self.B(y, beta)))

    def norm_bound(self) -> float:
        """(1/volume) sum_k ||g(k)||, which dominates every ||A||^2 and ||B||^2."""
        s = np.linalg.norm(self.left, axis=1) ** 2
        return float(np.sum(np.max(s, axis=1)) / self.volume)


def fourier_propagator(momenta, ghat, volume: float, x) -> np.ndarray:
    """g(x) = (1/volume) sum_k e^{i k.x} ghat(k)."""
    phase = np.exp(1j * np.asarray(momenta) @ np.asarray(x, dtype=float))
    return np.einsum("k,kab->ab", phase, ghat) / volume


def gram_decompose(momenta, ghat, volume: float) -> GramFamily:
    momenta = np.asarray(momenta, dtype=float)
    ghat = np.asarray(ghat, dtype=complex)
    if momenta.ndim != 2 or len(momenta) == 0:
        raise ValueError("momentum grid must be a non-empty (K, 3) array")
    u, s, vh = np.linalg.svd(ghat)
    root = np.sqrt(s)
    return GramFamily(momenta, u * root[:, None, :], root[:, :, None] * vh, float(volume))


def gram_hadamard_check(A: Sequence[np.ndarray], B: Sequence[np.ndarray]):
    """(|det M|, prod ||A_i|| ||B_i||, holds) for M_ij = <A_i, B_j>."""
    A = [np.asarray(a, dtype=complex) for a in A]
    B = [np.asarray(b, dtype=complex) for b in B]
    if len(A) != len(B):
        raise ValueError("families must have the same size")
    m = np.array([[np.vdot(a, b) for b in B] for a in A], dtype=complex)
    det = abs(lu_det(m)) if len(A) else 1.0
    bound = float(np.prod([np.linalg.norm(a) * np.linalg.norm(b) for a, b in zip(A, B)]))
    return float(det), bound, bool(det <= bound * (1 + 1e-12) + 1e-300)


# -- determinant expansion checks --------------------------------------------


@dataclass(frozen=True)
class BBFReport:
    s: int
    value: complex
    bound: float
    n_trees: int
    gram_constant: float
    holds: bool

    @property
    def margin(self) -> float:
        return math.inf if self.value == 0 else self.bound / abs(self.value)


def gram_constant(g) -> float:
    """max_i ||A_i|| * max_j ||B_j|| for the SVD Gram form of a matrix."""
    u, s, vh = np.linalg.svd(np.asarray(g, dtype=complex))
    a = np.sqrt(np.sum(np.abs(u) ** 2 * s[None, :], axis=1))
    b = np.sqrt(np.sum(np.abs(vh) ** 2 * s[:, None], axis=0))
    return float(np.max(a) * np.max(b))


def bbf_check(spec: GaussianSpec, *psets: Sequence[int]) -> BBFReport:
    """Check the determinant expansion of E^T(Psi_P1, ..., Psi_Ps).

    For one set the truncated expectation must be the signed Wick
    determinant.  For several sets, its modulus must not exceed
    ``sum_T prod_{l in T} |g_l| * c^(n - s + 1)`` with ``c`` the Gram
    constant of ``g`` and ``2n`` the number of fields.
    """
    from .trees import spanning_trees

    s = len(psets)
    n_int = 2 * spec.n
    if s == 0:
        raise ValueError("at least one field set is required")
    if s > MAX_TRUNCATED:
        raise SizeLimit(f"s = {s} exceeds {MAX_TRUNCATED}")
    polys = [GrassmannPoly.monomial(n_int, p) for p in psets]
    if s == 1:
        value = truncated_expectation(spec, *polys).scalar_part()
        det = wick_moment(spec, psets[0])
        return BBFReport(1, value, abs(det), 0, gram_constant(spec.g), bool(value == det))
    value = truncated_expectation(spec, *polys).scalar_part()
    g = np.asarray(spec.g, dtype=complex)
    n = spec.n

    def tag(x: int):
        return (x, 1) if x >= n else (x, -1)

    vertices = [[tag(x) for x in p] for p in psets]
    total_fields = sum(len(p) for p in psets)
    rest = total_fields // 2 - (s - 1)
    c = gram_constant(g)
    bound = 0.0
    count = 0
    for tree in spanning_trees(vertices):
        count += 1
        bound += float(np.prod([abs(g[m[0], p[0] - n]) for m, p in tree]))
    bound *= c ** max(rest, 0)
    holds = abs(value) <= bound * (1 + 1e-12) + 1e-15
    return BBFReport(s, value, bound, count, c, bool(holds))


def random_propagator(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    return scale * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / math.sqrt(2)


def all_monomials(n_pairs: int, max_pairs: int | None = None):
    """Every ordered-by-index balanced monomial on ``n_pairs`` pairs."""
    top = n_pairs if max_pairs is None else max_pairs
    for k in range(top + 1):
        for minus in itertools.combinations(range(n_pairs), k):
            for plus in itertools.combinations(range(n_pairs), k):
                yield list(minus) + [n_pairs + j for j in plus]
