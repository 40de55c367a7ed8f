"""Weight laws and weight models for multiplicative cascades.

Every law has strictly positive support and mean exactly 1: the finite-support
laws enforce this in exact rational arithmetic (or to 1e-12 when given float
parameters), and the lognormal law is parameterized with location -sigma^2/2
so its mean is 1 by construction. A weight model assigns a law to every
nonroot vertex of the tree, either one law everywhere, one per depth, or an
explicit per-vertex table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import UnsupportedLawError
from .words import (
    Number,
    TreeShape,
    Word,
    is_exact,
    number_to_json,
    parse_number,
    pow_number,
    str_to_word,
    word_to_str,
)

_MEAN_TOL = 1e-12


def _check_distribution(values: Sequence[Number], probs: Sequence[Number]) -> None:
    if len(values) != len(probs) or not values:
        raise ValueError("values and probs must be nonempty and equally long")
    if any(v <= 0 for v in values):
        raise ValueError("weight values must be strictly positive")
    if any(p < 0 for p in probs):
        raise ValueError("probabilities must be nonnegative")
    total = sum(probs)
    mean = sum(p * v for p, v in zip(probs, values))
    if all(is_exact(x) for x in (*values, *probs)):
        if total != 1:
            raise ValueError(f"probabilities must sum to 1, got {total}")
        if mean != 1:
            raise ValueError(f"law must have mean exactly 1, got {mean}")
    else:
        if abs(total - 1) > _MEAN_TOL:
            raise ValueError(f"probabilities must sum to 1 within 1e-12, got {total}")
        if abs(mean - 1) > _MEAN_TOL:
            raise ValueError(f"law must have mean 1 within 1e-12, got {mean}")


class WeightLaw:
    """Common interface: analytic moments, finite atoms, and inverse CDF."""

    is_finite = False

    def moment(self, q) -> Number:
        raise NotImplementedError

    def mean(self) -> Number:
        return self.moment(1)

    def atoms(self) -> tuple[tuple[Number, Number], ...]:
        """(value, probability) pairs; only for finite-support laws."""
        raise UnsupportedLawError(f"{type(self).__name__} has no finite atom list")

    def quantiles(self, u: np.ndarray) -> np.ndarray:
        """Inverse CDF, vectorized; consumes exactly one uniform per draw."""
        raise NotImplementedError

    def to_json_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantLaw(WeightLaw):
    """The degenerate law W = 1."""

    is_finite = True

    def moment(self, q) -> Number:
        return Fraction(1)

    def atoms(self):
        return ((Fraction(1), Fraction(1)),)

    def quantiles(self, u: np.ndarray) -> np.ndarray:
        return np.ones_like(u)

    def to_json_dict(self) -> dict:
        return {"type": "constant"}


class _FiniteLaw(WeightLaw):
    is_finite = True

    _values: tuple[Number, ...]
    _probs: tuple[Number, ...]

    def moment(self, q) -> Number:
        return sum(p * pow_number(v, q) for v, p in self.atoms())

    def atoms(self):
        return tuple(zip(self._values, self._probs))

    @cached_property
    def _quantile_table(self) -> tuple[np.ndarray, np.ndarray]:
        cdf = np.cumsum([float(p) for p in self._probs])
        cdf[-1] = 1.0
        return cdf, np.asarray([float(v) for v in self._values])

    def quantiles(self, u: np.ndarray) -> np.ndarray:
        cdf, values = self._quantile_table
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(values) - 1)
        return values[idx]


@dataclass(frozen=True)
class TwoPointLaw(_FiniteLaw):
    """W = a with probability p, b with probability 1 - p; pa + (1-p)b = 1."""

    a: Number
    b: Number
    p: Number

    def __post_init__(self):
        one = Fraction(1) if is_exact(self.p) else 1.0
        _check_distribution((self.a, self.b), (self.p, one - self.p))

    @property
    def _values(self):
        return (self.a, self.b)

    @property
    def _probs(self):
        one = Fraction(1) if is_exact(self.p) else 1.0
        return (self.p, one - self.p)

    def to_json_dict(self) -> dict:
        return {
            "type": "two_point",
            "a": number_to_json(self.a),
            "b": number_to_json(self.b),
            "p": number_to_json(self.p),
        }


@dataclass(frozen=True)
class DiscreteLaw(_FiniteLaw):
    """Finite-support law with explicit values and probabilities, mean 1."""

    values: tuple[Number, ...]
    probs: tuple[Number, ...]

    def __init__(self, values: Sequence[Number], probs: Sequence[Number]):
        object.__setattr__(self, "values", tuple(values))
        object.__setattr__(self, "probs", tuple(probs))
        _check_distribution(self.values, self.probs)

    @property
    def _values(self):
        return self.values

    @property
    def _probs(self):
        return self.probs

    def to_json_dict(self) -> dict:
        return {
            "type": "discrete",
            "values": [number_to_json(v) for v in self.values],
            "probs": [number_to_json(p) for p in self.probs],
        }


@dataclass(frozen=True)
class LognormalLaw(WeightLaw):
    """Lognormal with scale sigma and location -sigma^2/2, hence mean 1."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def mu_g(self) -> float:
        return -0.5 * self.sigma**2

    def moment(self, q) -> float:
        q = float(q)
        return math.exp(0.5 * self.sigma**2 * q * (q - 1.0))

    def quantiles(self, u: np.ndarray) -> np.ndarray:
        return np.exp(self.mu_g + self.sigma * ndtri(u))

    def to_json_dict(self) -> dict:
        return {"type": "lognormal", "sigma": float(self.sigma)}


def law_from_json_dict(doc: Mapping) -> WeightLaw:
    kind = doc.get("type")
    if kind == "constant":
        return ConstantLaw()
    if kind == "two_point":
        return TwoPointLaw(
            parse_number(doc["a"]), parse_number(doc["b"]), parse_number(doc["p"])
        )
    if kind == "discrete":
        return DiscreteLaw(
            [parse_number(v) for v in doc["values"]],
            [parse_number(p) for p in doc["probs"]],
        )
    if kind == "lognormal":
        return LognormalLaw(float(doc["sigma"]))
    raise ValueError(f"unknown law type {kind!r}")


class WeightModel:
    """Assignment of a weight law to every nonroot vertex of the tree."""

    def __init__(self, kind: str, laws=None, table=None):
        self.kind = kind
        if kind == "homogeneous":
            (self._law,) = laws
        elif kind == "per_depth":
            self._laws = tuple(laws)
            if not self._laws:
                raise ValueError("per-depth model needs at least one law")
        elif kind == "per_vertex":
            self._table = {tuple(w): law for w, law in table.items()}
            if not self._table:
                raise ValueError("per-vertex model needs a nonempty table")
        else:
            raise ValueError(f"unknown assignment kind {kind!r}")

    @classmethod
    def homogeneous(cls, law: WeightLaw) -> "WeightModel":
        return cls("homogeneous", laws=[law])

    @classmethod
    def per_depth(cls, laws: Sequence[WeightLaw]) -> "WeightModel":
        return cls("per_depth", laws=laws)

    @classmethod
    def per_vertex(cls, table: Mapping[Word, WeightLaw]) -> "WeightModel":
        return cls("per_vertex", table=table)

    def law_at(self, vertex: Word) -> WeightLaw:
        """Law of the weight attached to a nonroot vertex."""
        if not vertex:
            raise ValueError("the root carries no weight")
        if self.kind == "homogeneous":
            return self._law
        if self.kind == "per_depth":
            depth = len(vertex)
            if depth > len(self._laws):
                raise ValueError(f"no law configured for depth {depth}")
            return self._laws[depth - 1]
        law = self._table.get(vertex)
        if law is None:
            raise ValueError(f"no law configured for vertex {vertex}")
        return law

    def validate_for(self, shape: TreeShape) -> None:
        for v in shape.nonroot_vertices():
            self.law_at(v)

    @property
    def depth_homogeneous(self) -> bool:
        return self.kind in ("homogeneous", "per_depth")

    @property
    def depth_laws(self) -> tuple[WeightLaw, ...]:
        """The per-depth law list (single-element for homogeneous models)."""
        if self.kind == "homogeneous":
            return (self._law,)
        if self.kind == "per_depth":
            return self._laws
        raise ValueError("per-vertex models have no per-depth law list")

    def is_finite_for(self, shape: TreeShape) -> bool:
        return all(self.law_at(v).is_finite for v in shape.nonroot_vertices())

    def to_json_dict(self) -> dict:
        if self.kind == "homogeneous":
            return {"assignment": "homogeneous", "laws": [self._law.to_json_dict()]}
        if self.kind == "per_depth":
            return {
                "assignment": "per_depth",
                "laws": [law.to_json_dict() for law in self._laws],
            }
        return {
            "assignment": "per_vertex",
            "laws": {
                word_to_str(v): law.to_json_dict()
                for v, law in sorted(self._table.items())
            },
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "WeightModel":
        kind = doc.get("assignment")
        laws = doc.get("laws")
        if kind == "homogeneous":
            if not isinstance(laws, Sequence) or len(laws) != 1:
                raise ValueError("homogeneous assignment takes exactly one law")
            return cls.homogeneous(law_from_json_dict(laws[0]))
        if kind == "per_depth":
            if not isinstance(laws, Sequence):
                raise ValueError("per-depth assignment takes a list of laws")
            return cls.per_depth([law_from_json_dict(d) for d in laws])
        if kind == "per_vertex":
            if not isinstance(laws, Mapping):
                raise ValueError("per-vertex assignment takes a word -> law mapping")
            return cls.per_vertex(
                {str_to_word(key): law_from_json_dict(d) for key, d in laws.items()}
            )
        raise ValueError(f"unknown assignment kind {kind!r}")

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WeightModel":
        return cls.from_json_dict(json.loads(text))

    def __eq__(self, other):
        return (
            isinstance(other, WeightModel)
            and self.to_json_dict() == other.to_json_dict()
        )

    def __repr__(self):
        return f"WeightModel({self.kind!r})"
