import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from honeycomb_rg.errors import DomainError
from honeycomb_rg.fermi import fermi_point, fermi_points_root_find, torus_distance
from honeycomb_rg.linalg4 import SpecialForm, det4_special, lu_det
from honeycomb_rg.model import (CHIRAL, TRANSFORMS, HoppingParams, Momentum3, band_eigenvalues, h0_matrix,
                                inverse_propagator, nearest_image, omega, reduce_to_zone, symmetry_residual,
                                warping_determinant)

P = HoppingParams(0.1)
K = (2 * math.pi / 3, 2 * math.pi / (3 * math.sqrt(3)))
coord = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)
freq = st.floats(-3.0, 3.0, allow_nan=False)


def test_omega_special_values():
    assert omega(0.0, 0.0) == pytest.approx(3.0)
    assert abs(omega(*K)) < 1e-15
    p1 = fermi_point(P.coupling, 1, 1)
    assert complex(omega(p1.kx, p1.ky)) == pytest.approx(P.coupling, abs=1e-15)


def test_params_validation():
    with pytest.raises(DomainError):
        HoppingParams(0.0)
    with pytest.raises(DomainError):
        HoppingParams(2.0, gamma3_ratio=1.0)


@given(coord, coord)
def test_h0_hermitian_and_chiral(kx, ky):
    h = h0_matrix(kx, ky, P)
    assert np.allclose(h, h.conj().T, atol=1e-15)
    assert np.allclose(CHIRAL @ h + h @ CHIRAL, 0, atol=1e-15)
    e = band_eigenvalues(kx, ky, P)
    assert np.allclose(np.sort(e), np.sort(-e), atol=1e-12)
    assert np.allclose(e, np.linalg.eigvalsh(h), atol=1e-12)


def test_eigenvalues_at_valley():
    assert np.allclose(band_eigenvalues(*K, P), [-P.gamma1, 0, 0, P.gamma1], atol=1e-14)


@given(coord, coord)
def test_determinant_identity(kx, ky):
    ref = warping_determinant(kx, ky, P)
    got = lu_det(h0_matrix(kx, ky, P)).real
    assert abs(got - ref) <= 1e-12 * max(ref, 1e-3)


def test_inverse_propagator_shape_and_valley_zero():
    a = inverse_propagator(1.0, 0.0, 0.0, P)
    assert np.allclose(a, -1j * np.eye(4) - h0_matrix(0.0, 0.0, P))
    assert abs(lu_det(inverse_propagator(0.0, *K, P))) < 1e-14


@given(freq, coord, coord)
def test_special_form_matches_propagator(k0, kx, ky):
    s = SpecialForm.from_propagator(k0, kx, ky, P)
    a = inverse_propagator(k0, kx, ky, P)
    assert np.allclose(s.matrix(), a, atol=1e-15)
    ref = lu_det(a).real
    assert abs(det4_special(s) - ref) <= 1e-12 * max(abs(ref), 1.0)


@pytest.mark.parametrize("transform", TRANSFORMS)
@given(freq, coord, coord)
def test_symmetries(transform, k0, kx, ky):
    assert symmetry_residual(Momentum3(k0, kx, ky), transform, P) <= 1e-12


def test_broken_model_violates_rotation():
    def field(k0, kx, ky):
        a = inverse_propagator(k0, kx, ky, P).copy()
        a[2, 3] += 1e-3
        a[3, 2] += 1e-3
        return a

    assert symmetry_residual(Momentum3(0.3, 0.4, 0.7), "rotation", P, field) > 1e-6


@given(coord, coord)
def test_zone_reduction_is_idempotent_and_periodic(kx, ky):
    rx, ry = reduce_to_zone(kx, ky)
    rx2, ry2 = reduce_to_zone(rx, ry)
    assert np.allclose([rx, ry], [rx2, ry2], atol=1e-12)
    dx, dy = nearest_image(kx - rx, ky - ry)
    assert math.hypot(dx, dy) < 1e-9


def test_bands_touch_zero_only_at_fermi_points():
    # along Gamma -> K the two middle bands reach zero only at the end point
    ts = np.linspace(0, 1, 100)
    mid = [abs(band_eigenvalues(t * K[0], t * K[1], P)[1]) for t in ts]
    assert min(mid[:-1]) > 1e-3
    assert mid[-1] < 1e-12
    roots = fermi_points_root_find(P)
    assert min(torus_distance(K, r) for r in roots) < 1e-10
