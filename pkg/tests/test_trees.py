import itertools

import pytest
from hypothesis import given, strategies as st

from honeycomb_rg.errors import SizeLimit
from honeycomb_rg.trees import (
    FieldLabels,
    GNTree,
    Node,
    PowerCountingConstants,
    count_trees_dp,
    endpoint_sets,
    enumerate_labels,
    enumerate_trees,
    enumerate_unlabeled,
    label_weight,
    power_counting_sum,
    scaling_dimension,
    spanning_trees,
    validate_labels,
)


@pytest.mark.parametrize("mode", ["standard", "contracted"])
@pytest.mark.parametrize("N", [1, 2, 3, 4, 5])
def test_enumeration_matches_dp(N, mode):
    for h, top in [(-3, -1), (-4, 0), (-2, 2)]:
        trees = list(enumerate_trees(N, h, top, mode))
        assert len(trees) == count_trees_dp(N, h, top, mode)
        assert len({t.encode() for t in trees}) == len(trees)


def test_enumeration_is_deterministic():
    a = [t.encode() for t in enumerate_trees(3, -3, 0)]
    b = [t.encode() for t in enumerate_trees(3, -3, 0)]
    assert a == b


def test_unlabeled_counts():
    counts = [sum(1 for _ in enumerate_unlabeled(N)) for N in range(1, 8)]
    # little Schroeder numbers
    assert counts == [1, 1, 3, 11, 45, 197, 903]
    assert all(c <= 4**N for N, c in enumerate(counts, start=1))


def test_size_limits():
    with pytest.raises(SizeLimit):
        list(enumerate_trees(8, -3, 0))
    with pytest.raises(SizeLimit):
        list(enumerate_trees(2, -10, 0))
    with pytest.raises(SizeLimit):
        list(enumerate_unlabeled(8))
    with pytest.raises(SizeLimit):
        list(spanning_trees([(1, 2)] * 7))


def _single_endpoint_tree(leaf_kind="irrelevant"):
    # v0 on scale h+1 with one irrelevant endpoint directly above
    return GNTree(-1, 0, Node(0, (Node(1, (), leaf_kind),)))


def test_single_endpoint_labels():
    tree = _single_endpoint_tree()
    labels = list(enumerate_labels(tree, (2,), ell0=2, q=2))
    # balanced subsets of {1,2,3,4}: empty, 4 singletons pairs, the full set
    sizes = sorted(len(lab.first()) for lab in labels)
    assert sizes == [0, 2, 2, 2, 2, 4]
    assert all(not validate_labels(tree, lab, 2, 2) for lab in labels)


def test_local_leaf_with_ell0_equal_q_has_no_labels():
    tree = GNTree(-2, 0, Node(-1, (Node(0, (), "local"), Node(0, (), "local"))))
    assert list(enumerate_labels(tree, (2, 2), ell0=2, q=2)) == []


def _brute_force_labels(tree, sizes, ell0, q):
    isets = endpoint_sets(sizes)
    inner = tree.inner()
    # leaves in preorder own consecutive field blocks
    offsets, start = {}, 0

    def walk(path, node):
        nonlocal start
        first = start
        if node.is_leaf:
            start += 1
        for i, c in enumerate(node.children):
            walk(path + (i,), c)
        offsets[path] = (first, start)

    walk((), tree.first)

    options = []
    for path, _ in inner:
        a, b = offsets[path]
        f = [x for block in isets[a:b] for x in block]
        options.append([c for r in range(len(f) + 1) for c in itertools.combinations(f, r)])
    count = 0
    for choice in itertools.product(*options):
        lab = FieldLabels({path: pv for (path, _), pv in zip(inner, choice)}, isets, tuple(sizes))
        if not validate_labels(tree, lab, ell0, q):
            count += 1
    return count


@pytest.mark.parametrize("sizes", [(1, 1), (2, 1), (1, 2)])
def test_label_count_matches_brute_force(sizes):
    checked = 0
    for tree in enumerate_trees(2, -3, -1):
        n_fields = sum(2 * sizes[0] + 2 * sizes[1] for _ in tree.inner())
        if 2**n_fields > 1e6:
            continue
        got = list(enumerate_labels(tree, sizes, ell0=2, q=1))
        assert len(got) == _brute_force_labels(tree, sizes, 2, 1)
        for lab in got:
            assert validate_labels(tree, lab, 2, 1) == []
        checked += 1
    assert checked > 0


def test_label_weight_count_matches_enumeration():
    for regime in ["I", "II"]:
        for tree in enumerate_trees(2, -3, -1):
            for sizes in [(2, 2), (2, 3), (3, 2)]:
                for two_l in [2, 4]:
                    a = label_weight(tree, sizes, regime, two_l, True, "count")
                    b = label_weight(tree, sizes, regime, two_l, True, "enumerate")
                    assert a == pytest.approx(b, rel=1e-12, abs=0)


def _spanning_oracle(psets):
    sign = lambda f: 1 if f % 2 else -1
    lines = [
        (i, j, fm, fp)
        for i, a in enumerate(psets)
        for j, b in enumerate(psets)
        if i != j
        for fm in a
        if sign(fm) < 0
        for fp in b
        if sign(fp) > 0
    ]
    s = len(psets)
    out = set()
    for combo in itertools.combinations(lines, s - 1):
        used = [f for _, _, fm, fp in combo for f in (fm, fp)]
        if len(set(used)) != len(used):
            continue
        comp = list(range(s))
        for i, j, _, _ in combo:
            a, b = comp[i], comp[j]
            comp = [a if c == b else c for c in comp]
        if len(set(comp)) == 1:
            out.add(tuple(sorted((fm, fp) for _, _, fm, fp in combo)))
    return out


@pytest.mark.parametrize(
    "psets",
    [[(1, 2), (3, 4)], [(1, 2), (3, 4), (5, 6)], [(1, 2, 3, 4), (5, 6)], [(1, 2), (3, 4, 5, 6), (7, 8)]],
)
def test_spanning_trees_against_oracle(psets):
    got = list(spanning_trees(psets))
    assert len(got) == len(set(got))
    assert set(got) == _spanning_oracle(psets)


def test_scaling_dimensions():
    assert scaling_dimension(2, "I") == (1, "relevant")
    assert scaling_dimension(4, "I") == (-1, "irrelevant")
    assert scaling_dimension(4, "II") == (0, "marginal")
    assert scaling_dimension(6, "II") == (-1, "irrelevant")
    with pytest.raises(ValueError):
        scaling_dimension(3, "I")


def test_power_counting_vanishes_at_zero_coupling():
    r = power_counting_sum(1, -4, "I", U=0.0, n_max=2, top=-1)
    assert r.total == 0.0


@pytest.mark.parametrize("h", [-3, -4, -5, -6])
def test_regime_one_two_point_slope(h):
    # one endpoint, fixed top: halving the scale divides the bound by 4
    a = power_counting_sum(1, h, "I", U=1e-3, n_max=1, top=-1, l_max=2).total
    b = power_counting_sum(1, h - 1, "I", U=1e-3, n_max=1, top=-1, l_max=2).total
    assert a / b == pytest.approx(4.0, rel=1e-12)


@given(st.integers(-5, -2), st.sampled_from(["I", "II", "III"]), st.integers(1, 2))
def test_fixed_span_sum_scales_with_prefactor(h, regime, l):
    a = power_counting_sum(l, h, regime, U=1e-3, n_max=2, top=h + 3)
    b = power_counting_sum(l, h - 1, regime, U=1e-3, n_max=2, top=h + 2)
    assert a.total / a.prefactor == pytest.approx(b.total / b.prefactor, rel=1e-12)


def test_regime_one_orders_decrease():
    r = power_counting_sum(1, -6, "I", U=1e-3, n_max=3, top=-1)
    assert r.converges()
    assert max(r.ratios) < 0.2


def test_regime_two_orders_are_both_quadratic_in_coupling():
    # N=1 needs an irrelevant endpoint (l >= 3, weight U^2) while N=2 gets U^2 from
    # two local l=2 endpoints, so no small coupling makes N=2 smaller than N=1
    a = power_counting_sum(2, -6, "II", U=1e-3, n_max=2, top=-1, l_max=3).by_order
    b = power_counting_sum(2, -6, "II", U=2e-3, n_max=2, top=-1, l_max=3).by_order
    assert b[0] / a[0] == pytest.approx(4.0, rel=1e-6)
    assert b[1] / a[1] == pytest.approx(4.0, rel=1e-2)


def test_constants_enter_multiplicatively():
    base = power_counting_sum(1, -4, "I", U=1e-3, n_max=1, top=-1).total
    scaled = power_counting_sum(1, -4, "I", PowerCountingConstants(C1=3.0), U=1e-3, n_max=1, top=-1).total
    assert scaled == pytest.approx(3 * base, rel=1e-12)
