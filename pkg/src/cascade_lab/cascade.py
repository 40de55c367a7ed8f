"""Cascade realizations, the total-mass martingale, and moment engines.

Three independent routes to the moments of the level-l total mass
``Z_l = sum over |i| = l of X_i mu(C_i)`` are provided:

* ``mc_moment`` -- Monte Carlo over realizations with a counter-based RNG
  contract (Philox keyed by (seed, vertex), trial index = stream position),
  so every draw is a pure function of (seed, vertex, trial) and results do
  not depend on traversal order or worker count.
* ``exact_moment_integer`` -- exact integer-order moments through the subtree
  recursion on relative masses, using only analytic weight moments.
* ``exact_moment_discrete`` -- exact enumeration of the full outcome space of
  finite-support models, valid for any positive moment order.

A fourth family of oracles conditions on a prefix outcome (an atom of the
level filtration) and evaluates conditional expectations of vertex masses and
windowed mass sums by outcome enumeration.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence, Union

import numpy as np
from numpy.random import Generator, Philox

from .errors import ResourceCapError, UnsupportedLawError
from .laws import WeightLaw, WeightModel
from .words import (
    BaseMeasure,
    Number,
    ROOT,
    TreeShape,
    Word,
    is_exact,
    level_vertices,
    pow_number,
)

DEFAULT_OUTCOME_CAP = 2**20
DEFAULT_VERTEX_CAP = 2**20

_MC_CHUNK = 4096  # fixed chunk of trials; must stay a multiple of 4


@dataclass(frozen=True)
class MomentOrder:
    """A moment order q > 1 split as q = n + eps, n integer, 0 <= eps < 1."""

    q: Number

    def __post_init__(self):
        if not float(self.q) > 1:
            raise ValueError(f"moment order must exceed 1, got {self.q}")

    @classmethod
    def of(cls, q: Union["MomentOrder", Number]) -> "MomentOrder":
        return q if isinstance(q, MomentOrder) else cls(q)

    @property
    def n(self) -> int:
        return int(math.floor(float(self.q)))

    @property
    def epsilon(self) -> Number:
        return self.q - self.n

    @property
    def is_integer(self) -> bool:
        return self.epsilon == 0


# ---------------------------------------------------------------------------
# RNG contract and realizations
# ---------------------------------------------------------------------------


class _VertexStreams:
    """Reader for the per-vertex Philox streams of one seed.

    One bit generator is reused across reads by resetting its state, which is
    byte-identical to constructing a fresh Philox per read but much cheaper.
    Philox advances in blocks of four 64-bit outputs and each double consumes
    one output, so the stream is entered at the enclosing block boundary and
    the remainder discarded. Not thread-safe; use one instance per worker.
    """

    def __init__(self, seed: int):
        self._seed = seed % 2**64
        self._bitgen = Philox(key=np.zeros(2, dtype=np.uint64))
        self._gen = Generator(self._bitgen)
        self._template = self._bitgen.state

    def uniforms(self, vertex_index: int, start: int, count: int) -> np.ndarray:
        block, rem = divmod(start, 4)
        state = self._template
        state["state"]["key"][0] = self._seed
        state["state"]["key"][1] = vertex_index
        state["state"]["counter"][:] = 0
        self._bitgen.state = state
        if block:
            self._bitgen.advance(block)
        u = self._gen.uniform(size=rem + count)
        return u[rem:] if rem else u


def _vertex_uniforms(seed: int, vertex_index: int, start: int, count: int) -> np.ndarray:
    """Uniforms [start, start+count) of the Philox stream keyed by (seed, vertex)."""
    return _VertexStreams(seed).uniforms(vertex_index, start, count)


def _level_rank(word: Word, m: int) -> int:
    rank = 0
    for s in word:
        rank = rank * m + (s - 1)
    return rank


@dataclass(frozen=True)
class CascadeRealization:
    """One sampled weight per nonroot vertex, stored per level in lex order."""

    shape: TreeShape
    levels: tuple[np.ndarray, ...]
    seed: int | None = None
    trial: int | None = None

    def weight(self, vertex: Word) -> float:
        if not 1 <= len(vertex) <= self.shape.k:
            raise ValueError(f"no weight at vertex {vertex}")
        self.shape.check_word(vertex)
        return float(self.levels[len(vertex) - 1][_level_rank(vertex, self.shape.m)])

    @classmethod
    def from_weights(cls, shape: TreeShape, weights: Mapping[Word, float]) -> "CascadeRealization":
        levels = []
        for l in range(1, shape.k + 1):
            arr = np.empty(shape.m**l)
            for v in level_vertices(shape, l):
                if v not in weights:
                    raise ValueError(f"missing weight for vertex {v}")
                value = float(weights[v])
                if value <= 0:
                    raise ValueError(f"weight at {v} must be strictly positive")
                arr[_level_rank(v, shape.m)] = value
            levels.append(arr)
        return cls(shape, tuple(levels))


def sample_realization(
    model: WeightModel, shape: TreeShape, seed: int, trial: int = 0
) -> CascadeRealization:
    """Draw one realization; a pure function of (model, shape, seed, trial)."""
    model.validate_for(shape)
    levels = []
    for l in range(1, shape.k + 1):
        arr = np.empty(shape.m**l)
        for v in level_vertices(shape, l):
            u = _vertex_uniforms(seed, shape.vertex_index(v), trial, 1)
            arr[_level_rank(v, shape.m)] = model.law_at(v).quantiles(u)[0]
        levels.append(arr)
    return CascadeRealization(shape, tuple(levels), seed=seed, trial=trial)


def path_product(real: CascadeRealization, word: Word) -> float:
    """Product of the weights along the prefixes of a nonroot word."""
    if not word:
        raise ValueError("path products start at depth 1")
    x = 1.0
    for l in range(1, len(word) + 1):
        x *= real.weight(word[:l])
    return x


def cascade_mass(real: CascadeRealization, mu: BaseMeasure, word: Word) -> float:
    """Realized cascade mass of the cylinder through ``word``."""
    return path_product(real, word) * float(mu.cylinder_mass(word))


def _mass_vector(mu: BaseMeasure, l: int) -> np.ndarray:
    return np.array(
        [float(mu.cylinder_mass(v)) for v in level_vertices(mu.shape, l)]
    )


def total_mass(real: CascadeRealization, mu: BaseMeasure, l: int) -> float:
    """Level-l total mass of the realization (the martingale variable)."""
    if not 1 <= l <= real.shape.k:
        raise ValueError(f"level {l} outside 1..{real.shape.k}")
    if mu.shape != real.shape:
        raise ValueError("measure and realization shapes differ")
    x = np.ones(1)
    for d in range(1, l + 1):
        x = np.repeat(x, real.shape.m) * real.levels[d - 1]
    return float(_mass_vector(mu, l) @ x)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        import os

        env = os.environ.get("CASCADE_LAB_THREADS")
        if env:
            threads = int(env)
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def _chunk_bounds(trials: int) -> list[tuple[int, int]]:
    return [(t0, min(t0 + _MC_CHUNK, trials)) for t0 in range(0, trials, _MC_CHUNK)]


def _mc_plan(model: WeightModel, mu: BaseMeasure, levels: Sequence[int]) -> list:
    """Per-level sampling plan: vertices grouped by law (for batched inverse
    CDF transforms) plus the level mass vectors, computed once per run."""
    shape = mu.shape
    plan = []
    wanted = set(levels)
    for d in range(1, max(levels) + 1):
        groups: dict[WeightLaw, list[tuple[int, int]]] = {}
        for v in level_vertices(shape, d):
            groups.setdefault(model.law_at(v), []).append(
                (_level_rank(v, shape.m), shape.vertex_index(v))
            )
        mass = _mass_vector(mu, d) if d in wanted else None
        plan.append((list(groups.items()), mass))
    return plan


def _chunk_mass_table(
    plan: list, m: int, level_cols: dict[int, int], seed: int, t0: int, t1: int
) -> np.ndarray:
    """Z values for trials [t0, t1): array of shape (t1-t0, #levels)."""
    nt = t1 - t0
    streams = _VertexStreams(seed)
    out = np.empty((nt, len(level_cols)))
    x = np.ones((1, nt))
    for d, (groups, mass) in enumerate(plan, start=1):
        w = np.empty((m**d, nt))
        for law, items in groups:
            u = np.empty((len(items), nt))
            for i, (_row, vidx) in enumerate(items):
                u[i] = streams.uniforms(vidx, t0, nt)
            w[[row for row, _ in items]] = law.quantiles(u)
        x = np.repeat(x, m, axis=0) * w
        if d in level_cols:
            out[:, level_cols[d]] = mass @ x
    return out


def _run_chunks(worker, bounds, threads):
    workers = min(_resolve_threads(threads), len(bounds))
    if workers == 1:
        return [worker(b) for b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, bounds))


def mc_mass_table(
    model: WeightModel,
    mu: BaseMeasure,
    levels: Sequence[int],
    trials: int,
    seed: int,
    threads: int | None = None,
) -> np.ndarray:
    """Per-trial level masses, shape (trials, len(levels)); deterministic per seed."""
    if trials < 1:
        raise ValueError("need at least one trial")
    levels = sorted(set(levels))
    model.validate_for(mu.shape)
    plan = _mc_plan(model, mu, levels)
    cols = {l: j for j, l in enumerate(levels)}
    parts = _run_chunks(
        lambda b: _chunk_mass_table(plan, mu.shape.m, cols, seed, b[0], b[1]),
        _chunk_bounds(trials),
        threads,
    )
    return np.concatenate(parts, axis=0)


def mc_moment(
    model: WeightModel,
    mu: BaseMeasure,
    q: Union[MomentOrder, Number],
    l: int,
    trials: int,
    seed: int,
    threads: int | None = None,
) -> tuple[float, float]:
    """Monte Carlo estimate of E(Z_l^q) with its standard error."""
    if trials < 2:
        raise ValueError("need at least two trials for a standard error")
    qf = float(q.q if isinstance(q, MomentOrder) else q)
    model.validate_for(mu.shape)
    plan = _mc_plan(model, mu, [l])

    def chunk_sums(b):
        z = _chunk_mass_table(plan, mu.shape.m, {l: 0}, seed, b[0], b[1])[:, 0]
        v = z**qf
        return float(np.sum(v)), float(np.sum(v * v))

    parts = _run_chunks(chunk_sums, _chunk_bounds(trials), threads)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / trials
    var = max((s2 - trials * mean * mean) / (trials - 1), 0.0)
    return mean, math.sqrt(var / trials)


# ---------------------------------------------------------------------------
# Exact engines
# ---------------------------------------------------------------------------


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All tuples of ``parts`` nonnegative integers summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _multinomial(total: int, parts: tuple[int, ...]) -> int:
    coeff = math.factorial(total)
    for p in parts:
        coeff //= math.factorial(p)
    return coeff


def exact_moment_integer(
    model: WeightModel,
    mu: BaseMeasure,
    n: int,
    l: int,
    *,
    cap: int = DEFAULT_VERTEX_CAP,
) -> Number:
    """E(Z_l^n) for integer n >= 1, exact for rational models and measures.

    Works through moments of the relative subtree masses: with
    A_v = sum over level-l descendants i of v of (X_i/X_v) mu(C_i)/mu(C_v),
    the recursion A_v = sum over children c of W_vc * rho_c * A_vc combines
    independent factors, so all moments of A_v up to order n follow from the
    multinomial expansion. Depth-homogeneous instances collapse to one moment
    vector per level; otherwise the whole subtree is walked (guarded by cap).
    """
    if not (isinstance(n, int) and n >= 1):
        raise ValueError(f"moment order must be an integer >= 1, got {n}")
    shape = mu.shape
    if not 1 <= l <= shape.k:
        raise ValueError(f"level {l} outside 1..{shape.k}")
    m = shape.m
    comps = {j: [(c, _multinomial(j, c)) for c in _compositions(j, m)] for j in range(n + 1)}

    def combine(ratios, child_laws, child_moms):
        out = [Fraction(1)] * (n + 1)
        wmoms = [[law.moment(j) for j in range(n + 1)] for law in child_laws]
        for j in range(n + 1):
            acc = Fraction(0)
            for parts, coeff in comps[j]:
                term = Fraction(coeff)
                for c, jc in enumerate(parts):
                    if jc == 0:
                        continue
                    term = term * (ratios[c] ** jc) * wmoms[c][jc] * child_moms[c][jc]
                acc = acc + term
            out[j] = acc
        return out

    if model.depth_homogeneous and mu.depth_homogeneous:
        moms = [Fraction(1)] * (n + 1)
        for d in range(l - 1, -1, -1):
            law = model.law_at((1,) * (d + 1))
            moms = combine(mu.depth_row(d), [law] * m, [moms] * m)
        return moms[n]

    if m**l > cap:
        raise ResourceCapError(
            f"per-vertex recursion needs {m**l} leaf vertices, cap is {cap}"
        )

    def walk(v: Word):
        if len(v) == l:
            return [Fraction(1)] * (n + 1)
        ratios = mu.splitting_at(v)
        children = [v + (c,) for c in range(1, m + 1)]
        return combine(
            ratios, [model.law_at(c) for c in children], [walk(c) for c in children]
        )

    return walk(ROOT)[n]


def outcome_count(model: WeightModel, shape: TreeShape, depth: int) -> int:
    """Size of the joint outcome space of all weights at depths 1..depth."""
    count = 1
    for v in shape.nonroot_vertices():
        if len(v) > depth:
            continue
        law = model.law_at(v)
        if not law.is_finite:
            raise UnsupportedLawError(f"law at {v} has no finite outcome space")
        count *= len(law.atoms())
    return count


def window_mass_distribution(
    model: WeightModel,
    mu: BaseMeasure,
    w: Word,
    l: int,
    *,
    cap: int = DEFAULT_OUTCOME_CAP,
) -> list[tuple[Number, Number]]:
    """Exact distribution of sum over level-l descendants v of w of (X_v/X_w) mu(C_v).

    Returned as (value, probability) pairs sorted by value. Multiplying values
    by a realized X_w gives the conditional law of the windowed mass sum given
    any prefix outcome at depth |w|.
    """
    shape = mu.shape
    if not len(w) <= l <= shape.k:
        raise ValueError(f"window level {l} outside {len(w)}..{shape.k}")
    size = 1
    for d in range(len(w) + 1, l + 1):
        for v in level_vertices(shape, d):
            if v[: len(w)] != w:
                continue
            law = model.law_at(v)
            if not law.is_finite:
                raise UnsupportedLawError(f"law at {v} has no finite outcome space")
            size *= len(law.atoms())
            if size > cap:
                raise ResourceCapError(
                    f"window outcome space exceeds cap {cap} below {w}"
                )

    def dist(v: Word) -> dict:
        if len(v) == l:
            return {mu.cylinder_mass(v): Fraction(1)}
        total: dict = {}
        parts = []
        for c in range(1, shape.m + 1):
            child = v + (c,)
            sub = dist(child)
            scaled: dict = {}
            for wv, wp in model.law_at(child).atoms():
                for value, prob in sub.items():
                    key = wv * value
                    scaled[key] = scaled.get(key, Fraction(0)) + wp * prob
            parts.append(scaled)
        total = parts[0]
        for nxt in parts[1:]:
            merged: dict = {}
            for v1, p1 in total.items():
                for v2, p2 in nxt.items():
                    key = v1 + v2
                    merged[key] = merged.get(key, Fraction(0)) + p1 * p2
            if len(merged) > cap:
                raise ResourceCapError(f"window distribution exceeds cap {cap}")
            total = merged
        return total

    return sorted(dist(w).items(), key=lambda item: float(item[0]))


def exact_moment_discrete(
    model: WeightModel,
    mu: BaseMeasure,
    q: Union[MomentOrder, Number],
    l: int,
    *,
    cap: int = DEFAULT_OUTCOME_CAP,
) -> Number:
    """E(Z_l^q) by exact outcome enumeration of a finite-support model.

    Probabilities and masses are exact; the final power is exact for integer
    q and double precision otherwise.
    """
    shape = mu.shape
    if not 1 <= l <= shape.k:
        raise ValueError(f"level {l} outside 1..{shape.k}")
    if isinstance(q, MomentOrder):
        q = q.q
    if not float(q) > 0:
        raise ValueError(f"moment order must be positive, got {q}")
    if outcome_count(model, shape, l) > cap:
        raise ResourceCapError(
            f"outcome space {outcome_count(model, shape, l)} exceeds cap {cap}"
        )
    dist = window_mass_distribution(model, mu, ROOT, l, cap=cap)
    exact_power = (is_exact(q) and Fraction(q).denominator == 1) or (
        isinstance(q, float) and q.is_integer()
    )
    if exact_power:
        return sum(prob * pow_number(value, q) for value, prob in dist)
    return math.fsum(float(prob) * pow_number(value, q) for value, prob in dist)


# ---------------------------------------------------------------------------
# Prefix conditioning oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrefixOutcome:
    """Fixed weight values for every vertex at depths 1..depth."""

    depth: int
    weights: Mapping[Word, Number]

    def weight(self, vertex: Word) -> Number:
        return self.weights[vertex]

    def path_value(self, vertex: Word) -> Number:
        """Product of fixed weights along a vertex at depth <= self.depth."""
        if len(vertex) > self.depth:
            raise ValueError(f"{vertex} is deeper than the fixed prefix")
        x: Number = Fraction(1)
        for j in range(1, len(vertex) + 1):
            x = x * self.weights[vertex[:j]]
        return x


def prefix_atoms(
    model: WeightModel,
    shape: TreeShape,
    depth: int,
    *,
    cap: int = DEFAULT_OUTCOME_CAP,
) -> Iterator[tuple[PrefixOutcome, Number]]:
    """All atoms of the level filtration at ``depth`` with their probabilities."""
    if not 0 <= depth <= shape.k:
        raise ValueError(f"depth {depth} outside 0..{shape.k}")
    if outcome_count(model, shape, depth) > cap:
        raise ResourceCapError(f"prefix atom space exceeds cap {cap}")
    vertices = [v for v in shape.nonroot_vertices() if len(v) <= depth]
    atom_lists = [model.law_at(v).atoms() for v in vertices]
    for combo in itertools.product(*atom_lists):
        weights = {v: value for v, (value, _) in zip(vertices, combo)}
        prob: Number = Fraction(1)
        for _, p in combo:
            prob = prob * p
        yield PrefixOutcome(depth, weights), prob


def conditional_mass_expectation(
    model: WeightModel,
    mu: BaseMeasure,
    prefix: PrefixOutcome,
    vertex: Word,
    q: Union[Number, None] = None,
) -> Number:
    """E(cascade mass of ``vertex`` ** q | prefix) by path-outcome enumeration.

    q defaults to 1. Only the weights on the path below the fixed prefix are
    random; their joint outcomes are enumerated explicitly.
    """
    if len(vertex) < 1:
        raise ValueError("conditional mass needs a nonroot vertex")
    d = min(prefix.depth, len(vertex))
    fixed = prefix.path_value(vertex[:d])
    free = [vertex[:j] for j in range(d + 1, len(vertex) + 1)]
    mass = mu.cylinder_mass(vertex)
    total: Number = Fraction(0)
    for combo in itertools.product(*[model.law_at(v).atoms() for v in free]):
        x = fixed
        prob: Number = Fraction(1)
        for value, p in combo:
            x = x * value
            prob = prob * p
        term = x * mass
        total = total + prob * (term if q is None else pow_number(term, q))
    return total


def conditional_window_expectation(
    model: WeightModel,
    mu: BaseMeasure,
    prefix: PrefixOutcome,
    w: Word,
    l: int,
    epsilon: Number = 1,
    *,
    cap: int = DEFAULT_OUTCOME_CAP,
) -> Number:
    """E((sum of level-l cascade masses below w) ** epsilon | prefix).

    Requires |w| <= prefix.depth <= l. The distribution of the random part of
    the window is enumerated exactly; the epsilon power is exact for integer
    epsilon and double precision otherwise.
    """
    shape = mu.shape
    if len(w) > prefix.depth:
        raise ValueError("prefix must fix at least the depth of the window root")
    if not prefix.depth <= l <= shape.k:
        raise ValueError(f"window level {l} outside {prefix.depth}..{shape.k}")
    # split the window at the prefix depth: below each depth-d ancestor the
    # relative mass distribution is independent of the prefix
    d = prefix.depth
    anchors = [v for v in level_vertices(shape, d) if v[: len(w)] == w]
    dist: dict = {Fraction(0): Fraction(1)}
    for anchor in anchors:
        x_a = prefix.path_value(anchor)
        sub = window_mass_distribution(model, mu, anchor, l, cap=cap)
        merged: dict = {}
        for base, p1 in dist.items():
            for value, p2 in sub:
                key = base + x_a * value
                merged[key] = merged.get(key, Fraction(0)) + p1 * p2
        if len(merged) > cap:
            raise ResourceCapError(f"window outcome space exceeds cap {cap}")
        dist = merged
    items = sorted(dist.items(), key=lambda item: float(item[0]))
    exact_power = (is_exact(epsilon) and Fraction(epsilon).denominator == 1) or (
        isinstance(epsilon, float) and float(epsilon).is_integer()
    )
    if exact_power:
        return sum(prob * pow_number(value, epsilon) for value, prob in items)
    return math.fsum(float(prob) * pow_number(value, epsilon) for value, prob in items)


# ---------------------------------------------------------------------------
# Level moment sums
# ---------------------------------------------------------------------------


def level_moment_sum(
    model: WeightModel,
    mu: BaseMeasure,
    q: Union[MomentOrder, Number],
    l: int,
    *,
    cap: int = DEFAULT_VERTEX_CAP,
) -> Number:
    """Sum over level-l vertices u of E((X_u mu(C_u))^q).

    Uses independence along paths: each vertex contributes
    mu(C_u)^q times the product of E(W^q) over its path. Depth-homogeneous
    instances factorize level by level; general instances walk the tree.
    """
    shape = mu.shape
    if isinstance(q, MomentOrder):
        q = q.q
    if not 0 <= l <= shape.k:
        raise ValueError(f"level {l} outside 0..{shape.k}")
    if l == 0:
        return Fraction(1)
    if model.depth_homogeneous and mu.depth_homogeneous:
        total: Number = Fraction(1)
        for d in range(1, l + 1):
            law = model.law_at((1,) * d)
            row = mu.depth_row(d - 1)
            total = total * law.moment(q) * sum(pow_number(p, q) for p in row)
        return total
    if shape.m**l > cap:
        raise ResourceCapError(f"level walk needs {shape.m**l} vertices, cap is {cap}")

    def walk(v: Word, acc: Number) -> Number:
        if len(v) == l:
            return acc
        row = mu.splitting_at(v)
        total: Number = Fraction(0)
        for c in range(1, shape.m + 1):
            child = v + (c,)
            branch = acc * pow_number(row[c - 1], q) * model.law_at(child).moment(q)
            total = total + walk(child, branch)
        return total

    return walk(ROOT, Fraction(1))
