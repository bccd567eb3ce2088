"""Closed-form 4x4 determinant, inverse and block factorization.

The special form is the matrix

    [[i x,  a*, 0,   b*],
     [a,   i x, b,   0 ],
     [0,   b*, i z,  c ],
     [b,   0,  c*,  i z]]

with complex ``a, b, c`` and real ``x, z``.  The inverse propagator of the
bilayer model has this shape with ``a = -gamma1``, ``b = -Omega``,
``c = -gamma3 Omega e^{3i kx}`` and ``x = z = -k0``.

A small partial-pivot LU and a Gauss-Jordan inverse live here as dense
references for the closed forms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularBlock, SingularMatrix
from .model import HoppingParams, omega


@dataclass(frozen=True)
class SpecialForm:
    a: complex
    b: complex
    c: complex
    x: float
    z: float

    def matrix(self) -> np.ndarray:
        a, b, c, x, z = self.a, self.b, self.c, self.x, self.z
        ac, bc, cc = np.conj(a), np.conj(b), np.conj(c)
        return np.array(
            [
                [1j * x, ac, 0, bc],
                [a, 1j * x, b, 0],
                [0, bc, 1j * z, c],
                [b, 0, cc, 1j * z],
            ],
            dtype=complex,
        )

    @classmethod
    def from_propagator(cls, k0: float, kx: float, ky: float, p: HoppingParams) -> "SpecialForm":
        om = complex(omega(kx, ky))
        warp = p.gamma3 * om * np.exp(3j * kx)
        return cls(a=-p.gamma1, b=-om, c=-warp, x=-k0, z=-k0)


def det4_special(s: SpecialForm) -> float:
    a, b, c, x, z = s.a, s.b, s.c, s.x, s.z
    ab2, bb2, cb2 = abs(a) ** 2, abs(b) ** 2, abs(c) ** 2
    cross = (np.conj(a) * b * b * c).real
    return float((bb2 + z * x) ** 2 + ab2 * z * z + cb2 * (x * x + ab2) - 2 * cross)


def det4_nokz(a: complex, b: complex, c: complex) -> float:
    """|b^2 - a c*|^2, the determinant of the special form at x = z = 0."""
    return float(abs(b * b - a * np.conj(c)) ** 2)


def _cofactors(a, b, c, x, z):
    ac, bc, cc = np.conj(a), np.conj(b), np.conj(c)
    w = bc * bc - ac * c
    return {
        "aa": -1j * z * abs(b) ** 2 - 1j * x * (z * z + abs(c) ** 2),
        "abt": z * z * ac - cc * w,
        "aat": 1j * z * ac * b + 1j * x * bc * cc,
        "ab": b * w + z * x * bc,
        "atb": -a * w + x * x * c,
        "atat": -1j * z * abs(a) ** 2 - 1j * x * (x * z + abs(b) ** 2),
    }


def inv4_special(s: SpecialForm) -> np.ndarray:
    """Inverse from the closed-form cofactors.

    Entries marked with a dagger are obtained by conjugating the cofactor
    evaluated at ``(-x, -z)``.
    """
    m = s.matrix()
    det = det4_special(s)
    norm = float(np.max(np.abs(m)))
    if abs(det) < 1e-14 * norm**4 or det == 0:
        raise SingularMatrix(f"determinant {det:.3e} below threshold for norm {norm:.3e}")
    g = _cofactors(s.a, s.b, s.c, s.x, s.z)
    gp = {key: np.conj(val) for key, val in _cofactors(s.a, s.b, s.c, -s.x, -s.z).items()}
    out = np.array(
        [
            [g["aa"], g["abt"], g["aat"], g["ab"]],
            [gp["abt"], g["aa"], gp["ab"], gp["aat"]],
            [gp["aat"], g["ab"], g["atat"], g["atb"]],
            [gp["ab"], g["aat"], gp["atb"], g["atat"]],
        ],
        dtype=complex,
    )
    return out / det


# -- dense references --------------------------------------------------------


def lu_det(m: np.ndarray) -> complex:
    """Determinant by Gaussian elimination with partial pivoting."""
    a = np.array(m, dtype=complex)
    n = a.shape[0]
    det = 1.0 + 0j
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if a[piv, col] == 0:
            return 0j
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            det = -det
        det *= a[col, col]
        factors = a[col + 1:, col] / a[col, col]
        a[col + 1:, col:] -= np.outer(factors, a[col, col:])
    return det


def gauss_jordan_inverse(m: np.ndarray) -> np.ndarray:
    a = np.array(m, dtype=complex)
    n = a.shape[0]
    aug = np.hstack([a, np.eye(n, dtype=complex)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[piv, col] == 0:
            raise SingularMatrix("zero pivot in Gauss-Jordan elimination")
        aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def _inv2(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def block_diagonalize(b: np.ndarray):
    """Factor B = L D U with unit block-triangular L, U and block-diagonal D.

    The upper-left 2x2 block (the massive dimer components) must be
    invertible.  D holds that block and its Schur complement
    ``B_ff - B_fx B_xx^{-1} B_xf``, whose inverse is the lower-right block of
    ``B^{-1}``.
    """
    b = np.asarray(b, dtype=complex)
    bxx, bxf = b[:2, :2], b[:2, 2:]
    bfx, bff = b[2:, :2], b[2:, 2:]
    det = bxx[0, 0] * bxx[1, 1] - bxx[0, 1] * bxx[1, 0]
    scale = float(np.max(np.abs(bxx)))
    if abs(det) <= 1e-14 * scale**2 or det == 0:
        raise SingularBlock(f"massive block determinant {abs(det):.3e} too small")
    ixx = _inv2(bxx)
    eye2 = np.eye(2, dtype=complex)
    zero = np.zeros((2, 2), dtype=complex)
    lower = np.block([[eye2, zero], [bfx @ ixx, eye2]])
    upper = np.block([[eye2, ixx @ bxf], [zero, eye2]])
    diag = np.block([[bxx, zero], [zero, bff - bfx @ ixx @ bxf]])
    return lower, diag, upper
