"""Finite words over {1..m}, navigation in the complete m-ary tree, and
product-splitting base measures on its boundary cylinders.

Words are plain tuples of integers so that they are hashable value types with
the usual lexicographic order; the empty tuple is the root. A base measure is
represented by its per-vertex splitting ratios, which determine every cylinder
mass as a product along the path from the root. When all ratios are given as
``Fraction``/``int`` the measure is exact and every mass is a ``Fraction``;
float ratios switch the measure (and everything downstream) to double
precision.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Sequence, Union

Word = tuple[int, ...]
ROOT: Word = ()

Number = Union[int, Fraction, float]


def parse_number(value) -> Number:
    """Read a ratio from JSON data: int, float, or a string like '3/10'."""
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, (int, Fraction)):
        return value
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        return Fraction(value)
    raise ValueError(f"not a number: {value!r}")


def number_to_json(value: Number):
    """Encode a number for JSON, keeping rationals exact via 'p/q' strings."""
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else str(value)
    return float(value)


def is_exact(value: Number) -> bool:
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


def pow_number(value: Number, q) -> Number:
    """value**q, exact for integer exponents, double precision otherwise."""
    if isinstance(q, int) or (isinstance(q, Fraction) and q.denominator == 1):
        return value ** int(q)
    if isinstance(q, float) and q.is_integer():
        return value ** int(q)
    return float(value) ** float(q)


@dataclass(frozen=True)
class TreeShape:
    """Branching factor and depth of the complete m-ary tree."""

    m: int
    k: int

    def __post_init__(self):
        if not (isinstance(self.m, int) and self.m >= 2):
            raise ValueError(f"branching factor must be an integer >= 2, got {self.m}")
        if not (isinstance(self.k, int) and self.k >= 1):
            raise ValueError(f"depth must be an integer >= 1, got {self.k}")

    def check_word(self, word: Word) -> None:
        if len(word) > self.k:
            raise ValueError(f"word {word} longer than depth {self.k}")
        for s in word:
            if not 1 <= s <= self.m:
                raise ValueError(f"symbol {s} outside 1..{self.m} in {word}")

    def internal_vertices(self) -> Iterator[Word]:
        """All vertices of depth < k, root first, in lexicographic order."""
        for l in range(self.k):
            yield from level_vertices(self, l)

    def nonroot_vertices(self) -> Iterator[Word]:
        """All vertices of depth 1..k in level-major lexicographic order."""
        for l in range(1, self.k + 1):
            yield from level_vertices(self, l)

    def vertex_index(self, word: Word) -> int:
        """Canonical 0-based index of a nonroot vertex in level-major order."""
        l = len(word)
        if l == 0:
            raise ValueError("the root has no canonical nonroot index")
        offset = sum(self.m ** j for j in range(1, l))
        rank = 0
        for s in word:
            rank = rank * self.m + (s - 1)
        return offset + rank


def level_vertices(shape: TreeShape, l: int) -> list[Word]:
    """All m^l words of length l, lexicographically sorted."""
    if not 0 <= l <= shape.k:
        raise ValueError(f"level {l} outside 0..{shape.k}")
    return [tuple(w) for w in itertools.product(range(1, shape.m + 1), repeat=l)]


def curtail(word: Word, l: int) -> Word:
    """First l symbols of a word."""
    if not 0 <= l <= len(word):
        raise ValueError(f"cannot curtail length-{len(word)} word to {l} symbols")
    return word[:l]


def meet(a: Word, b: Word) -> Word:
    """Longest common prefix of two words."""
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return a[:n]


def is_prefix(a: Word, b: Word) -> bool:
    """True if a is a curtailment of b."""
    return len(a) <= len(b) and b[: len(a)] == a


def distance(a: Word, b: Word, m: int) -> float:
    """Ultrametric distance m^(-|a ∧ b|) between boundary points through a, b."""
    return float(m) ** (-len(meet(a, b)))


def word_to_str(word: Word) -> str:
    """Digit-string encoding used in serialized documents ('112' = (1,1,2))."""
    for s in word:
        if s > 9:
            raise ValueError(
                "digit-string encoding supports branching factors up to 9"
            )
    return "".join(str(s) for s in word)


def str_to_word(text: str) -> Word:
    return tuple(int(c) for c in text)


_SUM_TOL = Fraction(1, 10**12)


class BaseMeasure:
    """Probability measure on the tree boundary given by splitting ratios.

    Each internal vertex v carries a vector (p_1, ..., p_m) of nonnegative
    ratios summing to 1; the mass of the cylinder through a word is the
    product of the ratios picked along its path. Three constructors cover the
    supported layouts: ``uniform`` (every ratio 1/m), ``per_depth`` (one
    vector per level) and ``per_vertex`` (an explicit vector per internal
    vertex).
    """

    def __init__(self, shape: TreeShape, kind: str, rows=None, table=None):
        self.shape = shape
        self.kind = kind
        self._rows: tuple[tuple[Number, ...], ...] | None = None
        self._table: dict[Word, tuple[Number, ...]] | None = None
        if kind == "uniform":
            pass
        elif kind == "per_depth":
            rows = tuple(tuple(r) for r in rows)
            if len(rows) != shape.k:
                raise ValueError(
                    f"per-depth splitting needs {shape.k} rows, got {len(rows)}"
                )
            for row in rows:
                self._check_row(row)
            self._rows = rows
        elif kind == "per_vertex":
            table = {tuple(w): tuple(r) for w, r in table.items()}
            for v in shape.internal_vertices():
                if v not in table:
                    raise ValueError(f"missing splitting ratios at vertex {v}")
                self._check_row(table[v])
            extra = set(table) - set(shape.internal_vertices())
            if extra:
                raise ValueError(f"splitting given for non-internal vertices: {extra}")
            self._table = table
        else:
            raise ValueError(f"unknown splitting kind {kind!r}")

    def _check_row(self, row: Sequence[Number]) -> None:
        if len(row) != self.shape.m:
            raise ValueError(f"splitting row must have {self.shape.m} entries")
        if any(p < 0 for p in row):
            raise ValueError("splitting ratios must be nonnegative")
        total = sum(row)
        if all(is_exact(p) for p in row):
            if total != 1:
                raise ValueError(f"exact splitting ratios must sum to 1, got {total}")
        elif abs(total - 1) > float(_SUM_TOL):
            raise ValueError(f"splitting ratios must sum to 1 within 1e-12, got {total}")

    # -- constructors --------------------------------------------------------

    @classmethod
    def uniform(cls, shape: TreeShape) -> "BaseMeasure":
        return cls(shape, "uniform")

    @classmethod
    def per_depth(cls, shape: TreeShape, rows: Sequence[Sequence[Number]]) -> "BaseMeasure":
        return cls(shape, "per_depth", rows=rows)

    @classmethod
    def per_vertex(cls, shape: TreeShape, table: Mapping[Word, Sequence[Number]]) -> "BaseMeasure":
        return cls(shape, "per_vertex", table=table)

    # -- queries --------------------------------------------------------------

    def splitting_at(self, vertex: Word) -> tuple[Number, ...]:
        """Ratio vector at an internal vertex."""
        if len(vertex) >= self.shape.k:
            raise ValueError(f"{vertex} is not an internal vertex")
        if self.kind == "uniform":
            return (Fraction(1, self.shape.m),) * self.shape.m
        if self.kind == "per_depth":
            return self._rows[len(vertex)]
        return self._table[vertex]

    def cylinder_mass(self, word: Word) -> Number:
        """Mass of the cylinder through ``word``; 1 at the root."""
        self.shape.check_word(word)
        mass: Number = Fraction(1)
        for j, s in enumerate(word):
            mass = mass * self.splitting_at(word[:j])[s - 1]
        return mass

    @property
    def exact(self) -> bool:
        if self.kind == "uniform":
            return True
        rows = self._rows if self.kind == "per_depth" else self._table.values()
        return all(is_exact(p) for row in rows for p in row)

    @property
    def depth_homogeneous(self) -> bool:
        """True when all vertices at equal depth share one ratio vector."""
        return self.kind in ("uniform", "per_depth")

    def depth_row(self, depth: int) -> tuple[Number, ...]:
        """Ratio vector shared by all vertices at ``depth`` (depth-homogeneous only)."""
        if not self.depth_homogeneous:
            raise ValueError("measure is not depth-homogeneous")
        if self.kind == "uniform":
            return (Fraction(1, self.shape.m),) * self.shape.m
        return self._rows[depth]

    # -- serialization --------------------------------------------------------

    def to_json_dict(self) -> dict:
        doc: dict = {"shape": {"m": self.shape.m, "k": self.shape.k}}
        if self.kind == "uniform":
            doc["splitting"] = "uniform"
        elif self.kind == "per_depth":
            doc["splitting"] = {
                "per_depth": [[number_to_json(p) for p in row] for row in self._rows]
            }
        else:
            doc["splitting"] = {
                "per_vertex": {
                    word_to_str(v): [number_to_json(p) for p in row]
                    for v, row in sorted(self._table.items())
                }
            }
        return doc

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "BaseMeasure":
        shape = TreeShape(int(doc["shape"]["m"]), int(doc["shape"]["k"]))
        spl = doc["splitting"]
        if spl == "uniform":
            return cls.uniform(shape)
        if not isinstance(spl, Mapping) or len(spl) != 1:
            raise ValueError(f"malformed splitting spec: {spl!r}")
        if "per_depth" in spl:
            rows = [[parse_number(p) for p in row] for row in spl["per_depth"]]
            return cls.per_depth(shape, rows)
        if "per_vertex" in spl:
            table = {
                str_to_word(key): [parse_number(p) for p in row]
                for key, row in spl["per_vertex"].items()
            }
            return cls.per_vertex(shape, table)
        raise ValueError(f"malformed splitting spec: {spl!r}")

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BaseMeasure":
        return cls.from_json_dict(json.loads(text))

    def __eq__(self, other):
        return (
            isinstance(other, BaseMeasure)
            and self.to_json_dict() == other.to_json_dict()
        )

    def __repr__(self):
        return f"BaseMeasure({self.shape}, {self.kind!r})"
