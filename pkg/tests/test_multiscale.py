import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from honeycomb_rg.errors import EmptyRegime, UnresolvedScale
from honeycomb_rg.fermi import SelfEnergyModel
from honeycomb_rg.grassmann import mode_sum_two_point, random_propagator
from honeycomb_rg.model import L1, L2, HoppingParams, Momentum3, inverse_propagator, propagator
from honeycomb_rg.multiscale import (OFFSETS, Cutoffs, LatticeSpec, chi0, default_beta, exp_potential,
                                     k2_l1_norm, partition_residual, recursion_from_blocks, resolving_spec,
                                     scale_thresholds, schwinger_recursion, schwinger_two_scale,
                                     two_mode_recursion, uv_k2_field,
                                     uv_tadpole_sum, xspace_l1_norms)
from honeycomb_rg.regimes import RegimeConstants

P = HoppingParams(0.1)
RC = RegimeConstants()
TABLE = scale_thresholds(P, RC, default_beta(-20), 12)
CUT = Cutoffs(TABLE, P)
LINEAR = (0.3, 1.0, 0.5, 0.2, 1.7)


def test_chi0_plateaus():
    assert chi0(0.2) == 1.0
    assert chi0(0.9) == 0.0
    assert 0 < chi0(0.5) < 1


@given(st.floats(0, 1), st.floats(0, 1))
def test_chi0_monotone(a, b):
    lo, hi = sorted((a, b))
    assert chi0(lo) >= chi0(hi)


def test_scale_thresholds():
    assert (TABLE.h1, TABLE.h2, TABLE.hbar0, TABLE.hbar1, TABLE.hbar2) == (-2, -8, -2, -5, -11)
    assert scale_thresholds(P, RC, 2.0**14 * math.pi, 12).hbeta == -14
    with pytest.raises(EmptyRegime):
        scale_thresholds(HoppingParams(0.3), RC, default_beta(-30), 12)
    t = scale_thresholds(HoppingParams(0.3), RegimeConstants(kappa1=0.5), default_beta(-30), 12)
    assert (t.hbar0, t.h1, t.hbar1, t.h2, t.hbar2) == (-2, -2, -3, -4, -7)


def test_scales_are_ordered_and_labelled():
    s = TABLE.scales()
    assert s[0] == TABLE.M and s[-1] == TABLE.hbeta
    assert all(a > b for a, b in zip(s, s[1:]))
    assert [TABLE.regime_of(h) for h in (5, -1, -2, -6, -8, -15)] == [
        "UV", "UV", "Int-I-II", "II", "Int-II-III", "III"]
    # at eps = 0.1 the first regime has no interior scale; it does at eps = 0.005
    assert TABLE.interior("I") == []
    small = scale_thresholds(HoppingParams(0.005), RC, default_beta(-30), 12)
    assert small.interior("I") == [-2, -3, -4, -5]


def test_top_scale_vanishes_at_small_frequency():
    assert CUT.single(TABLE.M, 1e-6, 0.3, 0.2) == 0.0


@given(st.integers(-5, -3), st.floats(1 / 3, 2 / 3), st.floats(0, 2 * math.pi))
def test_neighbouring_cutoffs_telescope(h, s, phi):
    # regime-I norm between 2^h/3 and 2^(h+1)/3 from the + valley
    p = HoppingParams(0.005)
    cut = Cutoffs(scale_thresholds(p, RC, default_beta(-30), 12), p)
    c = cut.points[(1, 0)]
    rho = 2.0**h * s
    k0, r = rho * math.cos(phi), rho * math.sin(phi) / 1.5
    kx, ky = c[0] + r, c[1]
    total = cut.single(h, k0, kx, ky, 1) + cut.single(h + 1, k0, kx, ky, 1)
    assert total == pytest.approx(1.0, abs=1e-12)


momenta = st.builds(Momentum3, st.floats(-1, 1).map(lambda x: x * abs(x) ** 3),
                    st.floats(-4, 4), st.floats(-4, 4))


@given(momenta)
def test_partition_of_unity(k):
    assert partition_residual(k, TABLE, P) <= 1e-12


@given(st.integers(0, 7), st.floats(-6, -1), st.integers(0, 10_000))
def test_partition_near_fermi_points(idx, logs, seed):
    rng = np.random.default_rng(seed)
    c = CUT.points[((1, -1)[idx // 4], idx % 4)]
    s = 10.0**logs
    k = Momentum3(rng.normal() * s, c[0] + rng.normal() * s, c[1] + rng.normal() * s)
    assert partition_residual(k, TABLE, P) <= 1e-12


@given(momenta)
def test_zero_model_recursion_telescopes(k):
    ref = chi0(2.0**-TABLE.M * abs(k.k0)) * propagator(k.k0, k.kx, k.ky, P)
    assert np.abs(schwinger_recursion(None, k, TABLE, P) - ref).max() <= 1e-10 * max(1.0, np.abs(ref).max())


@given(st.integers(0, 10_000))
def test_zero_model_recursion_is_order_independent(seed):
    rng = np.random.default_rng(seed)
    props = [random_propagator(rng, 4) for _ in range(5)]
    zero = [np.zeros((4, 4))] * 4
    a = recursion_from_blocks(props, zero)
    b = recursion_from_blocks([props[i] for i in rng.permutation(5)], zero)
    assert np.allclose(a, b, atol=1e-12)
    assert np.allclose(a, sum(props), atol=1e-12)


def test_two_scale_closed_form():
    model = SelfEnergyModel("linear", 0.05, LINEAR, scales=tuple(TABLE.scales()), decay=0.5, params=P)
    c = CUT.points[(1, 0)]
    for k0 in (0.003, 0.01, 0.02):
        k = Momentum3(k0, c[0], c[1])
        assert np.abs(schwinger_recursion(model, k, TABLE, P) - schwinger_two_scale(model, k, TABLE, P)).max() < 1e-10


def test_two_mode_recursion_matches_grassmann():
    rng = np.random.default_rng(7)
    g1, g2 = random_propagator(rng, 3), random_propagator(rng, 3)
    X = 0.2 * random_propagator(rng, 3)
    assert np.abs(two_mode_recursion(g1, g2, X) - mode_sum_two_point([g1, g2], X)).max() < 1e-10


def test_unresolved_scale():
    with pytest.raises(UnresolvedScale):
        p = HoppingParams(0.005)
        table = scale_thresholds(p, RC, default_beta(-30), 12)
        xspace_l1_norms(-3, [(0, 0)], LatticeSpec(16, 64.0, 12), p, RC, table=table)


def _ratios(hs, p, table, moments, j=0, model=None, rc=RC):
    vals = {m: [] for m in moments}
    for h in hs:
        spec = resolving_spec(h, p, table, 1, j)
        out = xspace_l1_norms(h, moments, spec, p, rc, 1, j, model, table)
        for m in moments:
            vals[m].append(out[m])
    return {m: [v[i] / v[i + 1] for i in range(len(v) - 1)] for m, v in vals.items()}, vals


def test_uv_norm_ratio():
    vals = []
    for h in (2, 3, 4):
        spec = LatticeSpec(16, 16 * math.pi * 2.0**-h, 12)
        vals.append(xspace_l1_norms(h, [(0, 0)], spec, P, RC, table=TABLE)[(0, 0)])
    for a, b in zip(vals, vals[1:]):
        assert a / b == pytest.approx(2.0, rel=0.3)


def test_regime_two_gradient_factor():
    he = math.log2(P.epsilon)
    _, vals = _ratios([-7, -6, -5], P, TABLE, [(0, 0), (0, 1)])
    extra = [vals[(0, 1)][i] / vals[(0, 0)][i] / 2 ** (-(h + he) / 2) for i, h in enumerate([-7, -6, -5])]
    assert max(extra) / min(extra) < 1.3


def test_dressed_propagator_keeps_scaling():
    p = HoppingParams(0.005)
    table = scale_thresholds(p, RC, default_beta(-30), 12)
    model = SelfEnergyModel("linear", 1e-2, LINEAR, scales=tuple(table.scales()), params=p)
    hs = [-5, -4, -3]
    bare, _ = _ratios(hs, p, table, [(0, 0), (1, 0)])
    dressed, _ = _ratios(hs, p, table, [(0, 0), (1, 0)], model=model)
    for m in bare:
        for a, b in zip(bare[m], dressed[m]):
            assert b == pytest.approx(a, rel=0.5)


def test_tadpole_odd_part_cancels():
    spec = LatticeSpec(16, 64.0, 12)
    assert np.abs(uv_tadpole_sum(6, 0.0, 0.0, spec, P, TABLE, odd_only=True)).max() <= 1e-12


def test_tadpole_cancellation_constant_is_order_one():
    spec = LatticeSpec(16, 64.0, 12)
    r = np.linalg.norm(uv_tadpole_sum(6, 0.0, 0.0, spec, P, TABLE), 2) / uv_tadpole_sum(
        6, 0.0, 0.0, spec, P, TABLE, absolute=True)
    assert r * 2**6 < 20


def _direct_equal_time(h, spec, x):
    """g_h(0, x) from explicit lattice and Matsubara sums with dense inverses."""
    L = spec.L
    G1 = np.array([2 * math.pi / 3, 2 * math.pi / math.sqrt(3)])
    G2 = np.array([2 * math.pi / 3, -2 * math.pi / math.sqrt(3)])
    step = 2 * math.pi / spec.beta
    n0 = np.arange(-int(2.0**h / step) - 2, int(2.0**h / step) + 2)
    k0 = step * (n0 + 0.5)
    f = np.array([CUT.single(h, q, 0.0, 0.0) for q in k0])
    k0, f = k0[f != 0], f[f != 0]
    pos = x[0] * L1 + x[1] * L2
    out = np.zeros((4, 4), dtype=complex)
    for n1 in range(L):
        for n2 in range(L):
            k = (n1 * G1 + n2 * G2) / L
            ghat = sum(fi * np.linalg.inv(inverse_propagator(q, k[0], k[1], P)) for q, fi in zip(k0, f))
            out += np.exp(-1j * k @ pos) * ghat
    return out / (spec.beta * L * L)


def test_k2_single_term_matches_direct_convolution():
    spec = LatticeSpec(8, 64.0, 6)
    table = scale_thresholds(P, RC, default_beta(-30), spec.M)
    h, U = spec.M - 1, 0.3
    field = uv_k2_field(h, U, spec, P, table)
    for x in ((1, 0), (0, 2), (1, -1)):
        g = _direct_equal_time(spec.M, spec, x)
        pos = x[0] * L1 + x[1] * L2
        w = np.array([[exp_potential(np.hypot(*(pos + OFFSETS[a] - OFFSETS[b]))) for b in range(4)]
                      for a in range(4)])
        assert np.abs(field[x[0] % 8, x[1] % 8] - 2 * U * w * g).max() < 1e-12


def test_k2_vanishes_without_coupling():
    spec = LatticeSpec(8, 64.0, 6)
    assert np.abs(uv_k2_field(0, 0.0, spec, P)).max() == 0.0


def test_k2_bounded_by_coupling_and_saturates_in_cutoff():
    spec = LatticeSpec(16, 64.0, 12)
    norms = [k2_l1_norm(h, 0.01, spec, P, TABLE) for h in (0, 2, 4)]
    assert max(norms) < 0.01
    assert norms[0] >= norms[1] >= norms[2]
    by_m = []
    for M in (8, 10, 12):
        s = LatticeSpec(16, 64.0, M)
        by_m.append(k2_l1_norm(0, 0.01, s, P, scale_thresholds(P, RC, default_beta(-30), M)))
    assert max(by_m) / min(by_m) < 1.05
