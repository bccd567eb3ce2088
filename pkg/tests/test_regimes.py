import math

import numpy as np
import pytest

from honeycomb_rg.errors import RegimeEmpty, UnsupportedLabel
from honeycomb_rg.fermi import fermi_point
from honeycomb_rg.model import HoppingParams, Momentum3, inverse_propagator
from honeycomb_rg.regimes import (RegimeConstants, RegimeLabel, approximation_error_scan, classify_regime,
                                  dominant_propagator, intermediate_bound_check, intermediate_case_constants,
                                  intermediate_constant, local_part, regime_norms)

P = HoppingParams(0.1)
RC = RegimeConstants()


def test_regime_norms():
    assert regime_norms(Momentum3(0, 0, 0), P) == (0, 0, 0)
    assert regime_norms(Momentum3(-0.2, 0, 0), P) == pytest.approx((0.2, 0.2, 0.2))
    u = 0.01
    n1, n2, n3 = regime_norms(Momentum3(0, u, 0), P)
    assert (n1, n2, n3) == pytest.approx((1.5 * u, 2.25 * u * u / P.gamma1, 1.5 * P.gamma3 * u))


def _at(pt, kx, ky=0.0, k0=0.0):
    return Momentum3(k0, pt.kx + kx, pt.ky + ky)


def test_classification():
    eps = P.epsilon
    p0 = fermi_point(P.coupling, 1, 0)
    assert classify_regime(_at(p0, 0, k0=10 * RC.kappa0_bar), P) == RegimeLabel("UV")
    assert classify_regime(_at(p0, 0, k0=0.25), P) == RegimeLabel("I")
    mid = math.sqrt(RC.kappa2 * eps**3 * RC.kappa1_bar * eps)
    assert classify_regime(_at(p0, 0, k0=mid), P) == RegimeLabel("II")
    p1 = fermi_point(P.coupling, 1, 1)
    assert classify_regime(_at(p1, 0, k0=RC.kappa2_bar * eps**3 / 2), P) == RegimeLabel("III", 1)
    q = fermi_point(P.coupling, -1, 3)
    assert classify_regime(_at(q, 0, k0=1e-6), P) == RegimeLabel("III", 3)


def test_dominant_regime_one_on_frequency_axis():
    p0 = fermi_point(P.coupling, 1, 0)
    t = 0.25
    d = dominant_propagator(_at(p0, 0, k0=t), RegimeLabel("I"), P)
    assert np.allclose(d, (1j / t) * np.eye(4))


def test_dominant_rejects_intermediate():
    with pytest.raises(UnsupportedLabel):
        dominant_propagator(Momentum3(0, 0, 0), RegimeLabel("Int-I-II"), P)


@pytest.mark.parametrize("label,j", [("II", 0), ("III", 0), ("III", 1), ("III", 2), ("III", 3)])
def test_dominant_close_to_exact_inside_regime(label, j):
    eps = P.epsilon
    pt = fermi_point(P.coupling, 1, j)
    k0 = {"II": math.sqrt(RC.kappa2 * eps**3 * RC.kappa1_bar * eps), "III": 1e-2 * eps**3}[label]
    k = _at(pt, 0.3 * k0, 0.2 * k0, k0)
    lab = RegimeLabel(label, j if label == "III" else None)
    exact = np.linalg.inv(inverse_propagator(k.k0, k.kx, k.ky, P))
    err = np.linalg.norm(exact - dominant_propagator(k, lab, P, 1), 2) / np.linalg.norm(exact, 2)
    assert err < 0.2


def test_local_part_structure():
    for w in (1, -1):
        pt = fermi_point(P.coupling, w, 0)
        lm = local_part(pt, P)
        assert np.allclose(lm.d0, -1j * np.eye(4), atol=1e-8)
        assert abs(lm.value[0, 2]) < 1e-12 and abs(lm.dx[0, 2]) < 1e-8
        assert np.allclose(lm.value[:2, :2], -P.gamma1 * np.array([[0, 1], [1, 0]]), atol=1e-12)


def test_local_part_remainder_is_quadratic():
    pt = fermi_point(P.coupling, 1, 0)
    lm = local_part(pt, P)
    ts = np.geomspace(1e-4, 1e-2, 8)
    d = np.array([0.3, -0.5, 0.8])
    r = [np.abs(inverse_propagator(*(np.array([0, pt.kx, pt.ky]) + t * d), P) - lm(Momentum3(*(t * d)))).max()
         for t in ts]
    assert np.polyfit(np.log(ts), np.log(r), 1)[0] == pytest.approx(2.0, abs=0.1)


def test_scan_rejects_radii_outside_regime():
    with pytest.raises(RegimeEmpty):
        approximation_error_scan("I", P, np.geomspace(0.01, 0.3, 8))
    with pytest.raises(UnsupportedLabel):
        approximation_error_scan("UV", P, np.geomspace(0.5, 1, 8))


def test_regime_three_central_slope():
    hi = RC.bounds(P.epsilon)["III"][1]
    s = approximation_error_scan("III(0)", P, np.geomspace(hi * 1e-3, hi * 0.999, 12))
    assert s.low_slope == pytest.approx(1.0, abs=0.15)
    assert s.high_slope == pytest.approx(1.0, abs=0.15)


def test_small_epsilon_regime_slopes():
    p = HoppingParams(0.005)
    b = RC.bounds(p.epsilon)
    lo, hi = b["I"]
    s1 = approximation_error_scan("I", p, np.geomspace(lo * 1.0001, hi * 0.9999, 28))
    assert s1.low_slope == pytest.approx(-1.0, abs=0.15)
    lo, hi = b["II"]
    s2 = approximation_error_scan("II", p, np.geomspace(lo * 1.0001, hi * 0.9999, 28))
    assert s2.low_slope == pytest.approx(-0.5, abs=0.15)
    assert s2.high_slope == pytest.approx(0.5, abs=0.15)


def test_regime_one_high_end_local_slope():
    p = HoppingParams(0.002)
    lo, hi = RC.bounds(p.epsilon)["I"]
    s = approximation_error_scan("I", p, np.geomspace(lo * 1.0001, hi * 0.9999, 28), fit_points=4)
    assert s.high_slope == pytest.approx(1.0, abs=0.15)


def test_intermediate_constant_below_case_bounds():
    for kb in (0.5, 1.0):
        c = intermediate_constant(1.0, kb, 81 / 16)
        assert all(c <= x + 1e-15 for x in intermediate_case_constants(1.0, kb, 81 / 16))


def test_intermediate_bound_sampling():
    r = intermediate_bound_check(1.0, 0.05, 1.0, n_samples=5000, seed=3)
    assert r.passed and r.min_margin > 1
