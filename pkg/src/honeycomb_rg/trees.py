"""Gallavotti-Nicolo trees, external field labels and the power-counting bound.

A tree on scale ``h`` has a root on scale ``h`` and a first node ``v0`` on
scale ``h + 1``; children of a node on scale ``h'`` sit on ``h' + 1``.  Nodes
live on scales up to ``top`` (the highest scale of the regime) and leaves
up to ``top + 1``.  In the standard mode a leaf below ``top + 1`` is local,
and a leaf on ``top + 1`` is local or irrelevant; local leaves need a
sibling.  In the contracted mode leaves carry no kind and every non-leaf
node other than ``v0`` must have at least two leaves below it.

Field indices follow the usual convention: odd integers are ``psi^+``,
even integers ``psi^-``; endpoint ``i`` owns a consecutive block of
``2 l_i`` indices.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence

from .errors import SizeLimit

MAX_LEAVES = 7
MAX_SPAN = 8
MAX_LABEL_SIZE = 8
MAX_VERTICES = 6

MODES = ("standard", "contracted")
LOCAL, IRRELEVANT, ENDPOINT = "local", "irrelevant", "endpoint"


@dataclass(frozen=True)
class Node:
    scale: int
    children: tuple["Node", ...] = ()
    kind: str | None = None   # leaf kind, None for inner nodes

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def leaves(self) -> list["Node"]:
        if self.is_leaf:
            return [self]
        return [leaf for c in self.children for leaf in c.leaves()]

    def encode(self) -> tuple:
        if self.is_leaf:
            return (self.scale, self.kind)
        return (self.scale, tuple(c.encode() for c in self.children))


@dataclass(frozen=True)
class GNTree:
    h: int
    top: int
    first: Node
    mode: str = "standard"

    @property
    def n_leaves(self) -> int:
        return len(self.first.leaves())

    def leaves(self) -> list[Node]:
        return self.first.leaves()

    def inner(self) -> list[tuple[tuple[int, ...], Node]]:
        """Non-leaf nodes with their child-index paths from v0, preorder."""
        out = []

        def walk(path, node):
            if node.is_leaf:
                return
            out.append((path, node))
            for i, c in enumerate(node.children):
                walk(path + (i,), c)

        walk((), self.first)
        return out

    def encode(self) -> tuple:
        return (self.h, self.top, self.mode, self.first.encode())


def _check_sizes(N: int, span: int) -> None:
    if N > MAX_LEAVES:
        raise SizeLimit(f"N = {N} exceeds {MAX_LEAVES}")
    if span > MAX_SPAN:
        raise SizeLimit(f"scale span {span} exceeds {MAX_SPAN}")


def _compositions(n: int, parts: int) -> Iterator[tuple[int, ...]]:
    for cuts in itertools.combinations(range(1, n), parts - 1):
        bounds = (0,) + cuts + (n,)
        yield tuple(bounds[i + 1] - bounds[i] for i in range(parts))


def enumerate_trees(N: int, h: int, top: int, mode: str = "standard") -> Iterator[GNTree]:
    """Every tree with N leaves on scale h, in canonical (lexicographic) order."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    span = top - h
    _check_sizes(N, span)
    if N < 1 or span < 1:
        return
    contracted = mode == "contracted"

    @lru_cache(maxsize=None)
    def subtrees(scale: int, n: int, sibling: bool, is_first: bool) -> tuple[Node, ...]:
        out: list[Node] = []
        if n == 1 and not is_first and scale <= top + 1:
            if contracted:
                out.append(Node(scale, (), ENDPOINT))
            else:
                if sibling:
                    out.append(Node(scale, (), LOCAL))
                if scale == top + 1:
                    out.append(Node(scale, (), IRRELEVANT))
        if scale <= top and (not contracted or is_first or n >= 2):
            for parts in range(1, n + 1):
                for comp in _compositions(n, parts):
                    options = [subtrees(scale + 1, m, parts > 1, False) for m in comp]
                    for combo in itertools.product(*options):
                        out.append(Node(scale, tuple(combo)))
        out.sort(key=lambda node: repr(node.encode()))
        return tuple(out)

    for first in subtrees(h + 1, N, False, True):
        yield GNTree(h, top, first, mode)


def count_trees_dp(N: int, h: int, top: int, mode: str = "standard") -> int:
    """Tree count by dynamic programming over multisets of child sizes.

    Independent of :func:`enumerate_trees`: each node's children are
    counted as a multiset of subtree sizes times the number of distinct
    orderings of that multiset.
    """
    contracted = mode == "contracted"

    @lru_cache(maxsize=None)
    def count(scale: int, n: int, sibling: bool, is_first: bool) -> int:
        total = 0
        if n == 1 and not is_first and scale <= top + 1:
            if contracted:
                total += 1
            else:
                total += int(sibling) + int(scale == top + 1)
        if scale <= top and (not contracted or is_first or n >= 2):
            for parts in _partitions(n):
                k = len(parts)
                ways = math.factorial(k)
                for m in set(parts):
                    ways //= math.factorial(parts.count(m))
                prod = 1
                for m in parts:
                    prod *= count(scale + 1, m, k > 1, False)
                total += ways * prod
        return total

    return count(h + 1, N, False, True)


def _partitions(n: int, largest: int | None = None) -> list[tuple[int, ...]]:
    largest = n if largest is None else largest
    if n == 0:
        return [()]
    out = []
    for first in range(min(n, largest), 0, -1):
        for rest in _partitions(n - first, first):
            out.append((first,) + rest)
    return out


# -- unlabeled trees -----------------------------------------------------------


def enumerate_unlabeled(N: int) -> Iterator[tuple]:
    """Ordered rooted trees with N leaves whose inner nodes all branch.

    A leaf is ``()``; an inner node is the tuple of its children.
    """
    if N > MAX_LEAVES:
        raise SizeLimit(f"N = {N} exceeds {MAX_LEAVES}")

    @lru_cache(maxsize=None)
    def build(n: int) -> tuple:
        if n == 1:
            return ((),)
        out = []
        for parts in range(2, n + 1):
            for comp in _compositions(n, parts):
                for combo in itertools.product(*(build(m) for m in comp)):
                    out.append(tuple(combo))
        return tuple(out)

    yield from build(N)


# -- external field labels -------------------------------------------------------


@dataclass(frozen=True)
class FieldLabels:
    """P_v for every inner node (keyed by child-index path) and the endpoint sets."""

    sets: dict[tuple[int, ...], tuple[int, ...]]
    endpoint_sets: tuple[tuple[int, ...], ...]
    sizes: tuple[int, ...]

    def first(self) -> tuple[int, ...]:
        return self.sets[()]


def _balanced(s: Sequence[int]) -> bool:
    odd = sum(1 for i in s if i % 2)
    return 2 * odd == len(s)


def _leaf_allowed(kind: str, l: int, ell0: int, q: int) -> bool:
    if l < q:
        return False
    if kind == LOCAL:
        return l < ell0
    if kind == IRRELEVANT:
        return l >= ell0
    return True


def endpoint_sets(sizes: Sequence[int]) -> tuple[tuple[int, ...], ...]:
    out, start = [], 1
    for l in sizes:
        out.append(tuple(range(start, start + 2 * l)))
        start += 2 * l
    return tuple(out)


def enumerate_labels(tree: GNTree, sizes: Sequence[int], ell0: int, q: int = 2,
                     require_above: int | None = None) -> Iterator[FieldLabels]:
    """Every admissible label assignment for ``tree`` with endpoint sizes ``l_v``.

    ``require_above`` restricts to the beta-function labels: nodes other
    than v0 reached from the root through single-child nodes must carry
    more than ``require_above`` fields.
    """
    leaves = tree.leaves()
    if len(sizes) != len(leaves):
        raise ValueError("one size per endpoint is required")
    if sum(sizes) > MAX_LABEL_SIZE:
        raise SizeLimit(f"sum of endpoint sizes {sum(sizes)} exceeds {MAX_LABEL_SIZE}")
    if not all(_leaf_allowed(leaf.kind, l, ell0, q) for leaf, l in zip(leaves, sizes)):
        return
    isets = endpoint_sets(sizes)
    chain = _single_child_chain(tree)

    def walk(path, node, leaf_iter) -> Iterator[tuple[tuple[int, ...], dict]]:
        """Yield (P of this node, assignments in its subtree)."""
        if node.is_leaf:
            yield next(leaf_iter), {}
            return
        # materialise the leaf sets of each child
        child_options = []
        for i, c in enumerate(node.children):
            n = len(c.leaves())
            block = [next(leaf_iter) for _ in range(n)]
            child_options.append(list(walk(path + (i,), c, iter(block))))
        for combo in itertools.product(*child_options):
            union = tuple(x for p, _ in combo for x in p)
            merged: dict = {}
            for _, sub in combo:
                merged.update(sub)
            for r in range(len(union) + 1):
                for pv in itertools.combinations(union, r):
                    if not _balanced(pv):
                        continue
                    if len(node.children) > 1 and any(pv == p for p, _ in combo):
                        continue
                    if path != () and len(pv) < 2 * ell0:
                        continue
                    if require_above is not None and path in chain and len(pv) <= require_above:
                        continue
                    out = dict(merged)
                    out[path] = pv
                    yield pv, out

    for _, sets in walk((), tree.first, iter(isets)):
        yield FieldLabels(sets, isets, tuple(sizes))


def _single_child_chain(tree: GNTree) -> set[tuple[int, ...]]:
    """Paths of inner nodes v != v0 reached from v0 through single-child nodes."""
    out = set()
    node, path = tree.first, ()
    while len(node.children) == 1 and not node.children[0].is_leaf:
        path = path + (0,)
        node = node.children[0]
        out.add(path)
    return out


def validate_labels(tree: GNTree, labels: FieldLabels, ell0: int, q: int = 2) -> list[str]:
    """Independent re-check of the admissibility rules; returns the violations."""
    problems = []
    leaves = tree.leaves()
    for leaf, l in zip(leaves, labels.sizes):
        if not _leaf_allowed(leaf.kind, l, ell0, q):
            problems.append(f"endpoint size {l} not allowed for a {leaf.kind} leaf")
    # identical leaves may be one shared object, so index them by traversal order
    leaf_sets: dict[tuple[int, ...], tuple[int, ...]] = {}
    counter = iter(labels.endpoint_sets)

    def collect(path, node):
        if node.is_leaf:
            leaf_sets[path] = next(counter)
        for i, c in enumerate(node.children):
            collect(path + (i,), c)

    collect((), tree.first)

    def pset(path, node):
        return leaf_sets[path] if node.is_leaf else labels.sets[path]

    for path, node in tree.inner():
        pv = labels.sets[path]
        child_sets = [pset(path + (i,), c) for i, c in enumerate(node.children)]
        union = [x for s in child_sets for x in s]
        if list(pv) != [x for x in union if x in set(pv)]:
            problems.append(f"{path}: not an ordered subset of its children")
        if not _balanced(pv):
            problems.append(f"{path}: unbalanced")
        if len(child_sets) > 1 and any(tuple(pv) == tuple(s) for s in child_sets):
            problems.append(f"{path}: equals a child's set at a branching node")
        if path != () and len(pv) < 2 * ell0:
            problems.append(f"{path}: fewer than 2*ell0 fields")
    return problems


# -- spanning trees --------------------------------------------------------------


def _default_sign(f) -> int:
    if isinstance(f, tuple):
        return f[1]
    return 1 if f % 2 else -1


def spanning_trees(psets: Sequence[Sequence], sign: Callable | None = None) -> Iterator[tuple]:
    """Line sets connecting all vertices into a tree.

    A line joins a ``psi^-`` field of one vertex to a ``psi^+`` field of
    another; no field is used twice.  Lines are yielded as
    ``(minus_field, plus_field)`` pairs, trees as sorted tuples of lines.
    """
    sign = sign or _default_sign
    s = len(psets)
    if s > MAX_VERTICES:
        raise SizeLimit(f"{s} vertices exceed {MAX_VERTICES}")
    if s <= 1:
        yield ()
        return
    lines = []
    for i, a in enumerate(psets):
        for j, b in enumerate(psets):
            if i == j:
                continue
            for fm in a:
                if sign(fm) >= 0:
                    continue
                for fp in b:
                    if sign(fp) > 0:
                        lines.append((i, j, fm, fp))

    def find(parent, x):
        while parent[x] != x:
            x = parent[x]
        return x

    def extend(start, chosen, used, parent):
        if len(chosen) == s - 1:
            yield tuple(sorted((fm, fp) for _, _, fm, fp in chosen))
            return
        for idx in range(start, len(lines)):
            i, j, fm, fp = lines[idx]
            if fm in used or fp in used:
                continue
            ri, rj = find(parent, i), find(parent, j)
            if ri == rj:
                continue
            new_parent = list(parent)
            new_parent[ri] = rj
            yield from extend(idx + 1, chosen + [lines[idx]], used | {fm, fp}, new_parent)

    yield from extend(0, [], frozenset(), list(range(s)))


# -- scaling and power counting ----------------------------------------------------


@dataclass(frozen=True)
class RegimeExponents:
    name: str
    c_k: float
    c_g: float
    ell0: int
    q: int
    d: tuple[float, float, float]

    def __post_init__(self) -> None:
        if self.name != "UV" and not self.ell0 > self.c_k / (self.c_k - self.c_g):
            raise ValueError(f"ell0 = {self.ell0} must exceed c_k/(c_k - c_g) in regime {self.name}")


REGIMES = {
    "UV": RegimeExponents("UV", 1, 1, 1, 1, (1.0, 0.0, 0.0)),
    "I": RegimeExponents("I", 3, 1, 2, 2, (1.0, 1.0, 1.0)),
    "II": RegimeExponents("II", 2, 1, 3, 2, (1.0, 0.5, 0.5)),
    "III": RegimeExponents("III", 3, 1, 2, 2, (1.0, 1.0, 1.0)),
}


def _regime(regime) -> RegimeExponents:
    return REGIMES[regime] if isinstance(regime, str) else regime


def scaling_dimension(pv_size: int, regime) -> tuple[float, str]:
    r = _regime(regime)
    if pv_size < 2 or pv_size % 2:
        raise ValueError("pv_size must be even and at least 2")
    value = r.c_k - (r.c_k - r.c_g) * pv_size / 2
    cls = "relevant" if value > 0 else "marginal" if value == 0 else "irrelevant"
    return value, cls


@dataclass(frozen=True)
class PowerCountingConstants:
    C1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0
    Cg: float = 1.0
    CG: float = 1.0
    kernel: dict = field(default_factory=dict)  # 2l -> constant, default 1

    def kernel_constant(self, two_l: int) -> float:
        return self.kernel.get(two_l, 1.0)


@dataclass(frozen=True)
class PowerCountingResult:
    total: float
    by_order: tuple[float, ...]
    prefactor: float

    @property
    def ratios(self) -> tuple[float, ...]:
        b = self.by_order
        return tuple(b[i + 1] / b[i] if b[i] else math.inf for i in range(len(b) - 1))

    def converges(self) -> bool:
        return all(r < 1 for r in self.ratios)


def _label_weight_count(tree: GNTree, sizes: Sequence[int], r: RegimeExponents, two_l: int,
                        require_above: int | None) -> float:
    """Sum over admissible labels with |P_v0| = 2l of prod_v 2^{D(P_v)}.

    Labels enter only through set sizes, so subsets are counted rather
    than listed: a balanced subset of size 2k of a balanced union of 2m
    fields can be chosen in C(m, k)^2 ways.
    """
    leaves = tree.leaves()
    if not all(_leaf_allowed(leaf.kind, l, r.ell0, r.q) for leaf, l in zip(leaves, sizes)):
        return 0.0
    chain = _single_child_chain(tree)
    leaf_sizes = iter(2 * l for l in sizes)

    def dist(path, node) -> dict[int, float]:
        """size of P_v -> weighted number of assignments in the subtree."""
        if node.is_leaf:
            return {next(leaf_sizes): 1.0}
        children = [dist(path + (i,), c) for i, c in enumerate(node.children)]
        out: dict[int, float] = {}
        branching = len(children) > 1
        for combo in itertools.product(*(c.items() for c in children)):
            union = sum(size for size, _ in combo)
            weight = math.prod(w for _, w in combo)
            m = union // 2
            for k in range(m + 1):
                size = 2 * k
                if path != () and size < 2 * r.ell0:
                    continue
                if require_above is not None and path in chain and size <= require_above:
                    continue
                if path == () and size != two_l:
                    continue
                ways = math.comb(m, k) ** 2
                if branching:
                    ways -= sum(1 for s, _ in combo if s == size)
                if ways <= 0:
                    continue
                factor = 2.0 ** (r.c_k - (r.c_k - r.c_g) * size / 2)
                out[size] = out.get(size, 0.0) + weight * ways * factor
        return out

    return dist((), tree.first).get(two_l, 0.0)


def _label_weight_enumerated(tree: GNTree, sizes: Sequence[int], r: RegimeExponents, two_l: int,
                             require_above: int | None) -> float:
    total = 0.0
    for labels in enumerate_labels(tree, sizes, r.ell0, r.q, require_above):
        if len(labels.first()) != two_l:
            continue
        total += math.prod(2.0 ** (r.c_k - (r.c_k - r.c_g) * len(p) / 2) for p in labels.sets.values())
    return total


def label_weight(tree: GNTree, sizes: Sequence[int], regime, two_l: int, beta_labels: bool = True,
                 method: str = "count") -> float:
    r = _regime(regime)
    require = two_l if beta_labels else None
    if method == "enumerate":
        return _label_weight_enumerated(tree, sizes, r, two_l, require)
    return _label_weight_count(tree, sizes, r, two_l, require)


def power_counting_sum(l: int, h: int, regime, constants: PowerCountingConstants = PowerCountingConstants(),
                       U: float = 1e-3, n_max: int = 3, top: int = 0, l_max: int = 4,
                       m: tuple[int, int, int] = (0, 0, 0), method: str = "count") -> PowerCountingResult:
    """Right side of the power-counting bound for the beta function, truncated.

    Sums trees with up to ``n_max`` endpoints between scale ``h`` and
    ``top``, endpoint sizes ``l_v <= l_max`` and beta-function labels with
    ``|P_v0| = 2l``.
    """
    r = _regime(regime)
    if n_max > 6:
        raise SizeLimit(f"n_max = {n_max} exceeds 6")
    _check_sizes(n_max, top - h)
    c = constants
    prefactor = (
        2.0 ** (h * (r.c_k - (r.c_k - r.c_g) * l))
        * 2.0 ** (-h * sum(di * mi for di, mi in zip(r.d, m)))
        * (c.C3 / c.CG) ** l
    )
    orders = []
    for N in range(1, n_max + 1):
        order = 0.0
        size_choices = [s for s in itertools.product(range(r.q, l_max + 1), repeat=N) if sum(s) <= MAX_LABEL_SIZE]
        for tree in enumerate_trees(N, h, top):
            for sizes in size_choices:
                w = label_weight(tree, sizes, r, 2 * l, True, method)
                if w == 0:
                    continue
                ends = math.prod(
                    (c.C2 * c.CG) ** lv * c.kernel_constant(2 * lv) * abs(U) ** max(1, lv - 1) for lv in sizes
                )
                order += w * ends
        orders.append(prefactor * c.C1**N * (c.Cg / c.CG) ** (N - 1) * order)
    return PowerCountingResult(float(sum(orders)), tuple(orders), prefactor)


def convergence_threshold(l: int, h: int, regime, constants: PowerCountingConstants = PowerCountingConstants(),
                          n_max: int = 3, top: int = 0, l_max: int = 4, lo: float = 1e-8, hi: float = 1.0) -> float:
    """Largest |U| (by bisection in log U) at which successive orders still decrease."""
    def ok(u):
        return power_counting_sum(l, h, regime, constants, u, n_max, top, l_max).converges()

    if not ok(lo):
        return 0.0
    if ok(hi):
        return hi
    a, b = math.log(lo), math.log(hi)
    for _ in range(40):
        mid = 0.5 * (a + b)
        a, b = (mid, b) if ok(math.exp(mid)) else (a, mid)
    return math.exp(a)
