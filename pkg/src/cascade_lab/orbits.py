"""Join sets of leaf tuples and their orbit classes under root-fixing tree
automorphisms, with exact census counts and geometric series bounds.

The automorphism group of the complete m-ary tree that fixes the root acts on
ordered n-tuples of depth-k leaves. Because automorphisms preserve meets, the
matrix of pairwise meet depths is constant on every orbit; on a complete tree
it is also a complete invariant (a greedy branch matching maps any tuple onto
any other with the same matrix). The matrix is therefore used as the
canonical class form, and its completeness is validated against a brute-force
group oracle rather than assumed. Tuples are ordered: no row or column
permutation is ever applied, so equality of classes is equality of matrices.

A marked class carries one distinguished vertex of the spanned subtree; since
the group action on that vertex is determined by the action on the tuple, the
pair (mark level, set of entries below the mark) completes the invariant.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

from .errors import ResourceCapError
from .words import ROOT, TreeShape, Word, is_prefix, level_vertices, meet

DEFAULT_TUPLE_CAP = 2**20


# ---------------------------------------------------------------------------
# Leaf tuples and join sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LeafTuple:
    """Ordered tuple of depth-k leaves, optionally anchored below a vertex."""

    shape: TreeShape
    entries: tuple[Word, ...]
    anchor: Word = ROOT

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(tuple(e) for e in self.entries))
        object.__setattr__(self, "anchor", tuple(self.anchor))
        if not self.entries:
            raise ValueError("a leaf tuple needs at least one entry")
        self.shape.check_word(self.anchor)
        for e in self.entries:
            self.shape.check_word(e)
            if len(e) != self.shape.k:
                raise ValueError(f"entry {e} is not a depth-{self.shape.k} leaf")
            if not is_prefix(self.anchor, e):
                raise ValueError(f"entry {e} does not descend from anchor {self.anchor}")

    @property
    def n(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class MarkedLeafTuple:
    """A leaf tuple with one distinguished vertex of its spanned subtree."""

    base: LeafTuple
    mark: Word

    def __post_init__(self):
        object.__setattr__(self, "mark", tuple(self.mark))
        if not is_prefix(self.base.anchor, self.mark):
            raise ValueError(f"mark {self.mark} lies above the anchor")
        if not any(is_prefix(self.mark, e) for e in self.base.entries):
            raise ValueError(f"mark {self.mark} is not on the spanned subtree")


def top_join(J: LeafTuple) -> Word:
    """Deepest common ancestor of all entries."""
    common = J.entries[0]
    for e in J.entries[1:]:
        common = meet(common, e)
    return common


def join_set(J: LeafTuple) -> dict[Word, int]:
    """Multiset of join points: pairwise meets with branching multiplicity.

    A vertex where b subtrees of the spanned tree branch off counts b-1
    times, and a leaf repeated s times counts s-1 times; the total
    multiplicity is always n-1.
    """
    if J.n < 2:
        raise ValueError("join sets need at least two entries")
    counts: dict[Word, int] = {}

    def rec(entries: list[Word]) -> None:
        first = entries[0]
        t = min(len(meet(first, e)) for e in entries)
        top = first[:t]
        if t == J.shape.k:
            counts[top] = counts.get(top, 0) + len(entries) - 1
            return
        groups: dict[int, list[Word]] = {}
        for e in entries:
            groups.setdefault(e[t], []).append(e)
        counts[top] = counts.get(top, 0) + len(groups) - 1
        for g in groups.values():
            if len(g) >= 2:
                rec(g)

    rec(list(J.entries))
    return {v: c for v, c in counts.items() if c > 0}

def join_levels(J: LeafTuple) -> tuple[int, ...]:
    """Sorted depths of the join points, repeated by multiplicity."""
    out: list[int] = []
    for v, c in join_set(J).items():
        out.extend([len(v)] * c)
    return tuple(sorted(out))


def meet_with_spanned_tree(j: Word, J: LeafTuple) -> Word:
    """Deepest prefix of a leaf ``j`` that is a vertex of the spanned tree."""
    if len(j) != J.shape.k:
        raise ValueError(f"{j} is not a depth-{J.shape.k} leaf")
    if not is_prefix(J.anchor, j):
        raise ValueError(f"{j} does not descend from anchor {J.anchor}")
    depth = max(len(meet(j, e)) for e in J.entries)
    return j[:depth]


def spanned_tree_vertices(J: LeafTuple) -> list[Word]:
    """Vertices of the minimal subtree rooted at the anchor containing all
    entries, sorted by (depth, word)."""
    seen: set[Word] = set()
    for e in J.entries:
        for d in range(len(J.anchor), J.shape.k + 1):
            seen.add(e[:d])
    return sorted(seen, key=lambda v: (len(v), v))


# ---------------------------------------------------------------------------
# Canonical classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Block:
    """A nested block of a class structure with its trunk level range."""

    support: tuple[int, ...]
    lo: int
    hi: int


@dataclass(frozen=True)
class JoinClass:
    """Canonical orbit invariant: the matrix of pairwise meet depths."""

    shape: TreeShape
    matrix: tuple[tuple[int, ...], ...]
    anchor_depth: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "matrix", tuple(tuple(int(x) for x in row) for row in self.matrix)
        )
        n = len(self.matrix)
        k = self.shape.k
        if n == 0 or any(len(row) != n for row in self.matrix):
            raise ValueError("meet matrix must be square and nonempty")
        for r in range(n):
            if self.matrix[r][r] != k:
                raise ValueError("meet matrix diagonal must equal the depth k")
            for s in range(n):
                if self.matrix[r][s] != self.matrix[s][r]:
                    raise ValueError("meet matrix must be symmetric")
                if r != s and not self.anchor_depth <= self.matrix[r][s] <= k:
                    raise ValueError("meet depths must lie between anchor depth and k")
        for r in range(n):
            for s in range(n):
                for t in range(n):
                    if self.matrix[r][s] < min(self.matrix[r][t], self.matrix[t][s]):
                        raise ValueError("meet matrix violates the ultrametric inequality")
        # branching at any split vertex cannot exceed the tree arity
        # (groups of identical leaves join at depth k without branching)
        for _indices, depth, blocks in _splits(self.matrix, k):
            if depth < k and len(blocks) > self.shape.m:
                raise ValueError(
                    f"{len(blocks)} branches at depth {depth} exceed arity {self.shape.m}"
                )

    @property
    def n(self) -> int:
        return len(self.matrix)

    def join_levels(self) -> tuple[int, ...]:
        out: list[int] = []
        for _, depth, blocks in _splits(self.matrix, self.shape.k):
            out.extend([depth] * (len(blocks) - 1))
        return tuple(sorted(out))

    def blocks(self) -> tuple[_Block, ...]:
        """All nested blocks with the level ranges of their trunks."""
        return tuple(_blocks_of(self.matrix, self.shape.k, self.anchor_depth))


def _components(matrix, indices: tuple[int, ...], threshold: int) -> list[tuple[int, ...]]:
    """Connected components of `indices` under meet depth > threshold."""
    remaining = list(indices)
    comps = []
    while remaining:
        seed = remaining.pop(0)
        comp = [seed]
        frontier = [seed]
        while frontier:
            cur = frontier.pop()
            for other in remaining[:]:
                if matrix[cur][other] > threshold:
                    remaining.remove(other)
                    comp.append(other)
                    frontier.append(other)
        comps.append(tuple(sorted(comp)))
    return sorted(comps)


def _splits(matrix, k: int) -> Iterator[tuple[tuple[int, ...], int, list[tuple[int, ...]]]]:
    """All branch points of the hierarchy encoded by a meet matrix.

    Yields (indices, depth, blocks); a group of s identical entries appears as
    a branch point at depth k with s singleton blocks.
    """

    def rec(indices: tuple[int, ...]):
        if len(indices) == 1:
            return
        t = min(matrix[r][s] for r in indices for s in indices if r != s)
        if t == k:
            yield indices, k, [(r,) for r in indices]
            return
        blocks = _components(matrix, indices, t)
        yield indices, t, blocks
        for b in blocks:
            yield from rec(b)

    yield from rec(tuple(range(len(matrix))))


def _blocks_of(matrix, k: int, anchor_depth: int) -> list[_Block]:
    n = len(matrix)

    def top_depth(indices: tuple[int, ...]) -> int:
        if len(indices) == 1:
            return k
        return min(matrix[r][s] for r in indices for s in indices if r != s)

    out: list[_Block] = []

    def rec(indices: tuple[int, ...], lo: int) -> None:
        t = top_depth(indices)
        out.append(_Block(indices, lo, t))
        if t == k:
            return
        for b in _components(matrix, indices, t):
            rec(b, t + 1)

    rec(tuple(range(n)), anchor_depth)
    return out


@dataclass(frozen=True)
class MarkedJoinClass:
    """Class invariant for marked tuples: base matrix, mark level and the set
    of entries below the mark."""

    base: JoinClass
    mark_level: int
    mark_support: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "mark_support", frozenset(self.mark_support))
        if not self.mark_support:
            raise ValueError("mark support cannot be empty")
        support = tuple(sorted(self.mark_support))
        for block in self.base.blocks():
            if block.support == support and block.lo <= self.mark_level <= block.hi:
                return
        raise ValueError(
            f"(support={support}, level={self.mark_level}) is not on the spanned tree"
        )

    def sort_key(self):
        return (
            self.base.join_levels(),
            self.base.matrix,
            self.mark_level,
            tuple(sorted(self.mark_support)),
        )


def canonical_class(J: LeafTuple) -> JoinClass:
    """Meet-depth matrix of a tuple; equal matrices mean equal orbits."""
    n = J.n
    k = J.shape.k
    matrix = [[0] * n for _ in range(n)]
    for r in range(n):
        matrix[r][r] = k
        for s in range(r + 1, n):
            d = len(meet(J.entries[r], J.entries[s]))
            matrix[r][s] = matrix[s][r] = d
    return JoinClass(J.shape, tuple(tuple(row) for row in matrix), len(J.anchor))


def canonical_marked_class(M: MarkedLeafTuple) -> MarkedJoinClass:
    base = canonical_class(M.base)
    support = frozenset(
        r for r, e in enumerate(M.base.entries) if is_prefix(M.mark, e)
    )
    return MarkedJoinClass(base, len(M.mark), support)


# ---------------------------------------------------------------------------
# Canonical enumeration of classes
# ---------------------------------------------------------------------------


def _set_partitions(items: tuple[int, ...], max_blocks: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Partitions of ``items`` into 2..max_blocks blocks, each generated once
    with blocks ordered by first element."""

    def rec(rest: tuple[int, ...], blocks: tuple[tuple[int, ...], ...]):
        if not rest:
            if len(blocks) >= 2:
                yield blocks
            return
        head, tail = rest[0], rest[1:]
        for i in range(len(blocks)):
            updated = blocks[:i] + (blocks[i] + (head,),) + blocks[i + 1 :]
            yield from rec(tail, updated)
        if len(blocks) < max_blocks:
            yield from rec(tail, blocks + ((head,),))

    if len(items) < 2:
        return
    yield from rec(items[1:], ((items[0],),))


@dataclass(frozen=True)
class _ShapeNode:
    kind: str  # "split" | "equal" | "leaf"
    depth: int
    indices: tuple[int, ...]
    children: tuple["_ShapeNode", ...] = ()


def _structures(indices: tuple[int, ...], floor: int, m: int, k: int) -> Iterator[_ShapeNode]:
    if len(indices) == 1:
        yield _ShapeNode("leaf", k, indices)
        return
    yield _ShapeNode("equal", k, indices)
    for t in range(floor, k):
        for blocks in _set_partitions(indices, m):
            child_choices = [list(_structures(b, t + 1, m, k)) for b in blocks]
            for combo in itertools.product(*child_choices):
                yield _ShapeNode("split", t, indices, tuple(combo))


def _structure_entries(node: _ShapeNode, prefix: Word, k: int, out: dict[int, Word]) -> None:
    if node.kind == "split":
        v = prefix + (1,) * (node.depth - len(prefix))
        for j, child in enumerate(node.children):
            _structure_entries(child, v + (j + 1,), k, out)
    else:
        w = prefix + (1,) * (k - len(prefix))
        for r in node.indices:
            out[r] = w


def enumerate_classes(
    shape: TreeShape,
    n: int,
    *,
    method: str = "canonical",
    anchor: Word = ROOT,
    cap: int = DEFAULT_TUPLE_CAP,
) -> list[tuple[JoinClass, LeafTuple]]:
    """One representative per orbit class of ordered n-tuples of leaves.

    ``canonical`` enumerates class shapes directly (nested partitions with
    branch depths); ``brute`` materializes every tuple, guarded by ``cap``,
    and groups by canonical matrix. Both orders are deterministic and equal.
    """
    if n < 1:
        raise ValueError("tuple size must be >= 1")
    shape.check_word(anchor)
    if method == "canonical":
        out = []
        for node in _structures(tuple(range(n)), len(anchor), shape.m, shape.k):
            entries: dict[int, Word] = {}
            _structure_entries(node, anchor, shape.k, entries)
            rep = LeafTuple(shape, tuple(entries[r] for r in range(n)), anchor)
            out.append((canonical_class(rep), rep))
        out.sort(key=lambda item: (item[0].join_levels(), item[0].matrix))
        return out
    if method == "brute":
        leaves = [w for w in level_vertices(shape, shape.k) if is_prefix(anchor, w)]
        if len(leaves) ** n > cap:
            raise ResourceCapError(
                f"{len(leaves) ** n} raw tuples exceed the cap {cap}"
            )
        groups: dict[JoinClass, LeafTuple] = {}
        for combo in itertools.product(leaves, repeat=n):
            J = LeafTuple(shape, combo, anchor)
            cls = canonical_class(J)
            if cls not in groups:
                groups[cls] = J
        out = sorted(groups.items(), key=lambda item: (item[0].join_levels(), item[0].matrix))
        return out
    raise ValueError(f"unknown enumeration method {method!r}")


def enumerate_marked_classes(
    shape: TreeShape,
    n: int,
    *,
    anchor: Word = ROOT,
    cap: int = DEFAULT_TUPLE_CAP,
) -> list[tuple[MarkedJoinClass, MarkedLeafTuple]]:
    """One representative per marked class: every (block, trunk level) pair of
    every plain class."""
    out = []
    for cls, rep in enumerate_classes(shape, n, anchor=anchor, cap=cap):
        for block in cls.blocks():
            carrier = rep.entries[block.support[0]]
            for l0 in range(block.lo, block.hi + 1):
                marked = MarkedJoinClass(cls, l0, frozenset(block.support))
                out.append((marked, MarkedLeafTuple(rep, carrier[:l0])))
    out.sort(key=lambda item: item[0].sort_key())
    return out


# ---------------------------------------------------------------------------
# Brute-force group oracle
# ---------------------------------------------------------------------------


def automorphism_generators(shape: TreeShape, anchor: Word = ROOT) -> list[tuple[Word, tuple[int, ...]]]:
    """Child-transposition generators (vertex, permutation) of the group of
    rooted-tree automorphisms fixing the anchor pointwise."""
    gens = []
    for v in shape.internal_vertices():
        for i in range(1, shape.m):
            perm = list(range(1, shape.m + 1))
            perm[i - 1], perm[i] = perm[i], perm[i - 1]
            if is_prefix(v, anchor) and len(v) < len(anchor):
                # must not move the branch leading to the anchor
                moved = anchor[len(v)]
                if perm[moved - 1] != moved:
                    continue
            gens.append((v, tuple(perm)))
    return gens


def apply_generator(gen: tuple[Word, tuple[int, ...]], word: Word) -> Word:
    """Image of a word under a single-vertex child permutation."""
    v, perm = gen
    if len(word) <= len(v) or word[: len(v)] != v:
        return word
    i = len(v)
    return word[:i] + (perm[word[i] - 1],) + word[i + 1 :]


def orbit_partition(
    shape: TreeShape,
    n: int,
    *,
    marked: bool = False,
    anchor: Word = ROOT,
    cap: int = DEFAULT_TUPLE_CAP,
) -> list[frozenset]:
    """Orbits of (marked) ordered leaf tuples under the full automorphism
    group, computed by generator closure. The independent oracle for the
    canonical invariants."""
    leaves = [w for w in level_vertices(shape, shape.k) if is_prefix(anchor, w)]
    if len(leaves) ** n > cap:
        raise ResourceCapError(f"{len(leaves) ** n} raw tuples exceed the cap {cap}")
    gens = automorphism_generators(shape, anchor)

    if marked:
        items = []
        for combo in itertools.product(leaves, repeat=n):
            J = LeafTuple(shape, combo, anchor)
            for p in spanned_tree_vertices(J):
                items.append((combo, p))

        def image(item, gen):
            combo, p = item
            return (tuple(apply_generator(gen, w) for w in combo), apply_generator(gen, p))

    else:
        items = list(itertools.product(leaves, repeat=n))

        def image(item, gen):
            return tuple(apply_generator(gen, w) for w in item)

    unvisited = set(items)
    orbits = []
    while unvisited:
        seed = unvisited.pop()
        orbit = {seed}
        frontier = [seed]
        while frontier:
            cur = frontier.pop()
            for gen in gens:
                nxt = image(cur, gen)
                if nxt not in orbit:
                    orbit.add(nxt)
                    unvisited.discard(nxt)
                    frontier.append(nxt)
        orbits.append(frozenset(orbit))
    return orbits


def class_members(cls: JoinClass, rep: LeafTuple) -> list[LeafTuple]:
    """Every ordered tuple in the orbit of ``rep``, by generator closure."""
    gens = automorphism_generators(rep.shape, rep.anchor)
    orbit = {rep.entries}
    frontier = [rep.entries]
    while frontier:
        cur = frontier.pop()
        for gen in gens:
            nxt = tuple(apply_generator(gen, w) for w in cur)
            if nxt not in orbit:
                orbit.add(nxt)
                frontier.append(nxt)
    members = [LeafTuple(rep.shape, entries, rep.anchor) for entries in sorted(orbit)]
    for member in members:
        assert canonical_class(member) == cls
    return members


def marked_class_members(
    mcls: MarkedJoinClass, rep: MarkedLeafTuple
) -> list[MarkedLeafTuple]:
    """Every (tuple, mark) pair in the orbit of a marked representative."""
    gens = automorphism_generators(rep.base.shape, rep.base.anchor)
    orbit = {(rep.base.entries, rep.mark)}
    frontier = [(rep.base.entries, rep.mark)]
    while frontier:
        cur_entries, cur_mark = frontier.pop()
        for gen in gens:
            nxt = (
                tuple(apply_generator(gen, w) for w in cur_entries),
                apply_generator(gen, cur_mark),
            )
            if nxt not in orbit:
                orbit.add(nxt)
                frontier.append(nxt)
    out = []
    for entries, mark in sorted(orbit):
        member = MarkedLeafTuple(LeafTuple(rep.base.shape, entries, rep.base.anchor), mark)
        assert canonical_marked_class(member) == mcls
        out.append(member)
    return out


# ---------------------------------------------------------------------------
# Census counts and geometric bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CensusReport:
    """Exact class counts indexed by level multisets (and mark levels)."""

    shape: TreeShape
    n: int
    plain: dict[tuple[int, ...], int]
    marked: dict[tuple[tuple[int, ...], int], int]

    def geometric_sum(self, lam: float) -> float:
        return math.fsum(
            count * lam ** sum(levels) for levels, count in sorted(self.plain.items())
        )

    def marked_geometric_sum(self, lam: float, epsilon: float) -> float:
        return math.fsum(
            count * lam ** (sum(levels) + epsilon * l0)
            for (levels, l0), count in sorted(self.marked.items())
        )


def build_census(shape: TreeShape, n: int, *, cap: int = DEFAULT_TUPLE_CAP) -> CensusReport:
    """Count all plain and marked classes grouped by join levels (and mark level)."""
    plain: dict[tuple[int, ...], int] = {}
    marked: dict[tuple[tuple[int, ...], int], int] = {}
    for cls, _rep in enumerate_classes(shape, n, cap=cap):
        levels = cls.join_levels()
        plain[levels] = plain.get(levels, 0) + 1
        for block in cls.blocks():
            for l0 in range(block.lo, block.hi + 1):
                key = (levels, l0)
                marked[key] = marked.get(key, 0) + 1
    return CensusReport(shape, n, plain, marked)


def count_classes(shape: TreeShape, n: int, levels: Sequence[int], *, cap: int = DEFAULT_TUPLE_CAP) -> int:
    """Number of classes whose join level multiset equals ``levels``."""
    key = tuple(sorted(levels))
    if len(key) != n - 1:
        raise ValueError(f"expected {n - 1} levels, got {len(key)}")
    if any(not 0 <= l <= shape.k for l in key):
        raise ValueError(f"levels {key} outside 0..{shape.k}")
    return build_census(shape, n, cap=cap).plain.get(key, 0)


def count_marked_classes(
    shape: TreeShape, n: int, levels: Sequence[int], l: int, *, cap: int = DEFAULT_TUPLE_CAP
) -> int:
    """Number of marked classes with the given levels and mark level."""
    key = tuple(sorted(levels))
    if len(key) != n - 1:
        raise ValueError(f"expected {n - 1} levels, got {len(key)}")
    if not 0 <= l <= shape.k:
        raise ValueError(f"mark level {l} outside 0..{shape.k}")
    return build_census(shape, n, cap=cap).marked.get((key, l), 0)


@lru_cache(maxsize=None)
def partition_count(r: int, parts: int) -> int:
    """Number of ways to write r as a nondecreasing sum of ``parts``
    nonnegative integers (partitions of r into at most ``parts`` parts)."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if parts < 0:
        raise ValueError("parts must be nonnegative")
    if parts == 0:
        return 1 if r == 0 else 0
    if r == 0:
        return 1
    # at-most-parts recurrence: either fewer parts, or subtract 1 from all
    return partition_count(r, parts - 1) + (
        partition_count(r - parts, parts) if r >= parts else 0
    )


def _tail_majorant(lam: float, n: int, r0: int) -> float:
    """Rigorous bound on sum over r > r0 of (r+1)^(n-1) lam^r.

    Uses (r+1)^(n-1) <= A * lam^(-r/2) with A computed by a finite scan, so
    the tail is dominated by a geometric series with ratio sqrt(lam).
    """
    root = math.sqrt(lam)
    # (r+1)^(n-1) * root^r is unimodal in r; scan past its peak
    best = 0.0
    r = 0
    while True:
        val = (r + 1) ** (n - 1) * root**r
        best = max(best, val)
        if (r + 2) ** (n - 1) * root ** (r + 1) < val and r > 2 * (n + 2) / max(
            1e-9, -math.log(root)
        ):
            break
        r += 1
        if r > 10_000:
            break
    return best * root ** (r0 + 1) / (1.0 - root)


def census_sum_bound(lam: float, n: int, *, rel_tol: float = 1e-9) -> float:
    """k-independent upper bound for the plain census geometric sums:
    (n-1)! times the full series of partition counts against lam^r, summed as
    a truncation plus a rigorous tail majorant (so the result is always >=
    the true series value)."""
    if not 0 < lam < 1:
        raise ValueError(f"lambda must lie in (0,1), got {lam}")
    if n < 1:
        raise ValueError("n must be >= 1")
    fact = math.factorial(n - 1)
    partial = 0.0
    r = 0
    while True:
        partial += partition_count(r, n - 1) * lam**r
        tail = _tail_majorant(lam, n, r)
        if tail < rel_tol * partial:
            return fact * (partial + tail)
        r += 1


def marked_census_sum_bound(lam: float, epsilon: float, n: int, *, rel_tol: float = 1e-9) -> float:
    """k-independent upper bound for the marked census sums: n! times the
    partition series divided by (1 - lam^epsilon)."""
    if not 0 < lam < 1:
        raise ValueError(f"lambda must lie in (0,1), got {lam}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0,1), got {epsilon}")
    plain = census_sum_bound(lam, n, rel_tol=rel_tol) / math.factorial(n - 1)
    return math.factorial(n) * plain / (1.0 - lam**epsilon)
