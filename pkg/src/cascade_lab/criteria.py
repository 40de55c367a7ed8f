"""Criterion profiles, geometric envelopes, and verdict reports.

Every verifier compares an exactly-enumerated left-hand side against the
closed-form right-hand side of one of the estimates satisfied by cascade
martingales, and reports per-instance margins. In exact mode (rational
models and measures, integer exponents) margins are exact rationals and the
tolerance is zero; where fractional powers force doubles the tolerance is
1e-9 relative.

The asymptotic moment criterion itself is operationalized over a finite
range of levels: the trailing half of the profile must sit below 1 - delta
("satisfied"), above 1 + delta ("violated"), or the verdict is
"inconclusive". A fitted geometric envelope (c, lambda) then certifies
S_l <= c * lambda^((q-1) l) on every computed level by construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

from .cascade import (
    DEFAULT_OUTCOME_CAP,
    DEFAULT_VERTEX_CAP,
    MomentOrder,
    conditional_mass_expectation,
    conditional_window_expectation,
    exact_moment_discrete,
    exact_moment_integer,
    level_moment_sum,
    mc_moment,
    outcome_count,
    prefix_atoms,
)
from .errors import InconclusiveDataError, ResourceCapError, UnsupportedLawError, VerdictError
from .laws import WeightModel
from .orbits import (
    JoinClass,
    LeafTuple,
    MarkedJoinClass,
    MarkedLeafTuple,
    _components,
    build_census,
    census_sum_bound,
    class_members,
    marked_census_sum_bound,
    marked_class_members,
    meet_with_spanned_tree,
    spanned_tree_vertices,
)
from .words import (
    BaseMeasure,
    Number,
    TreeShape,
    Word,
    is_exact,
    level_vertices,
    pow_number,
    word_to_str,
)

REL_TOL = 1e-9


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    """One compared instance: an inequality (lhs <= rhs) or an equality."""

    check: str
    instance: str
    lhs: Number
    rhs: Number
    mode: str  # "exact" | "float"
    relation: str = "le"  # "le" | "eq"

    @property
    def margin(self) -> Number:
        return self.rhs - self.lhs

    @property
    def tolerance(self) -> float:
        if self.mode == "exact":
            return 0.0
        return REL_TOL * max(1.0, abs(float(self.lhs)), abs(float(self.rhs)))

    @property
    def passed(self) -> bool:
        if self.relation == "eq":
            return abs(float(self.margin)) <= self.tolerance
        return float(self.margin) >= -self.tolerance

    def perturbed(self, shift: float) -> "ReportRow":
        """Scale the right-hand side by (1 + shift); testing hook."""
        rhs = float(self.rhs) * (1.0 + shift)
        return ReportRow(self.check, self.instance, float(self.lhs), rhs, "float", self.relation)


@dataclass(frozen=True)
class VerificationReport:
    """Margins for one check over a family of instances."""

    check: str
    instance: str
    rows: tuple[ReportRow, ...]
    notes: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def perturbed(self, shift: float) -> "VerificationReport":
        return VerificationReport(
            self.check,
            self.instance,
            tuple(row.perturbed(shift) for row in self.rows),
            self.notes,
        )

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        worst = min((float(r.margin) for r in self.rows), default=float("nan"))
        return (
            f"{self.check}: {status} ({len(self.rows)} instances, "
            f"worst margin {worst:.3e}) [{self.instance}]"
        )


# ---------------------------------------------------------------------------
# Criterion profile and geometric envelope
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CriterionProfile:
    """Level moment sums S_l and their normalized roots s_l = S_l^(1/l)."""

    q: float
    levels: tuple[int, ...]
    S: tuple[Number, ...]
    s: tuple[float, ...]
    delta: float
    verdict: str  # "satisfied" | "violated" | "inconclusive"

    @property
    def trailing(self) -> tuple[float, ...]:
        half = self.levels[-1] // 2
        return tuple(v for l, v in zip(self.levels, self.s) if l > half)

    @property
    def trailing_max(self) -> float:
        return max(self.trailing)


def criterion_profile(
    model: WeightModel,
    mu: BaseMeasure,
    q: Union[MomentOrder, Number],
    k_max: int,
    *,
    delta: float = 0.01,
    cap: int = DEFAULT_VERTEX_CAP,
) -> CriterionProfile:
    """Exact per-level moment sums with a three-valued finite-range verdict."""
    if k_max < 1:
        raise ValueError("profile needs at least one level")
    order = MomentOrder.of(q)
    levels = tuple(range(1, k_max + 1))
    S = tuple(level_moment_sum(model, mu, order.q, l, cap=cap) for l in levels)
    if any(float(v) <= 0 for v in S):
        raise ValueError("level moment sums must be positive")
    s = tuple(float(v) ** (1.0 / l) for l, v in zip(levels, S))
    half = k_max // 2
    trailing = [v for l, v in zip(levels, s) if l > half]
    if max(trailing) <= 1.0 - delta:
        verdict = "satisfied"
    elif min(trailing) >= 1.0 + delta:
        verdict = "violated"
    else:
        verdict = "inconclusive"
    return CriterionProfile(float(order.q), levels, S, s, delta, verdict)


@dataclass(frozen=True)
class GeometricBound:
    """Envelope constants: S_l <= c * lambda^((q-1) l) on the fitted profile."""

    c: float
    lam: float

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise ValueError(f"lambda must lie in (0,1), got {self.lam}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")

    def envelope(self, q: float, l: int) -> float:
        return self.c * self.lam ** ((q - 1.0) * l)


def fit_geometric_bound(profile: CriterionProfile) -> GeometricBound:
    """Smallest trailing envelope: lambda from the trailing max of s_l (rounded
    up by 1e-6), c as the max ratio over all computed levels, so the envelope
    invariant holds on the profile by construction."""
    if profile.verdict != "satisfied":
        raise VerdictError(
            f"geometric envelope requires a satisfied profile, verdict is {profile.verdict!r}"
        )
    q = profile.q
    lam = profile.trailing_max ** (1.0 / (q - 1.0)) + 1e-6
    if not lam < 1.0:
        raise VerdictError(f"fitted lambda {lam} did not fall below 1")
    c = max(
        float(S) / lam ** ((q - 1.0) * l) for l, S in zip(profile.levels, profile.S)
    )
    bound = GeometricBound(c, lam)
    for l, S in zip(profile.levels, profile.S):
        if float(S) > bound.envelope(q, l) * (1.0 + 1e-12):
            raise VerdictError(f"fitted envelope fails at level {l}")
    return bound


# ---------------------------------------------------------------------------
# Conditional identities
# ---------------------------------------------------------------------------


def _describe(model: WeightModel, mu: BaseMeasure) -> str:
    return f"m={mu.shape.m},k={mu.shape.k},{model.kind},{mu.kind}"


def verify_mass_identity(
    model: WeightModel,
    mu: BaseMeasure,
    *,
    max_root_depth: int | None = None,
    cap: int = DEFAULT_OUTCOME_CAP,
) -> VerificationReport:
    """Conditional mass conservation: summing the conditional expectations of
    the level-l cylinder masses below w over any prefix atom at depth |w|
    returns the mass at w exactly."""
    shape = mu.shape
    top = shape.k if max_root_depth is None else max_root_depth
    rows = []
    for d in range(0, top + 1):
        atoms = list(prefix_atoms(model, shape, d, cap=cap))
        for w in level_vertices(shape, d):
            mass_w = mu.cylinder_mass(w)
            for a_idx, (atom, _prob) in enumerate(atoms):
                x_w = atom.path_value(w)
                for l in range(d, shape.k + 1):
                    lhs = sum(
                        conditional_mass_expectation(model, mu, atom, v)
                        for v in level_vertices(shape, l)
                        if v[:d] == w
                    ) if l > 0 else Fraction(1)
                    rhs = x_w * mass_w
                    exact = is_exact(lhs) and is_exact(rhs)
                    rows.append(
                        ReportRow(
                            "mass-identity",
                            f"w={word_to_str(w) or 'root'},l={l},atom={a_idx}",
                            lhs,
                            rhs,
                            "exact" if exact else "float",
                            relation="eq",
                        )
                    )
    return VerificationReport("mass-identity", _describe(model, mu), tuple(rows))


def verify_power_bound(
    model: WeightModel,
    mu: BaseMeasure,
    epsilon: Number,
    *,
    max_root_depth: int | None = None,
    cap: int = DEFAULT_OUTCOME_CAP,
) -> VerificationReport:
    """Concave-power conditional bound: for 0 <= eps <= 1 the conditional
    expectation of the eps-power of a windowed mass sum never exceeds the
    eps-power of the mass at the window root."""
    if not 0 <= float(epsilon) <= 1:
        raise ValueError(f"epsilon must lie in [0,1], got {epsilon}")
    shape = mu.shape
    top = shape.k if max_root_depth is None else max_root_depth
    int_eps = float(epsilon) in (0.0, 1.0)
    rows = []
    for d in range(0, top + 1):
        atoms = list(prefix_atoms(model, shape, d, cap=cap))
        for w in level_vertices(shape, d):
            mass_w = mu.cylinder_mass(w)
            for a_idx, (atom, _prob) in enumerate(atoms):
                y_w = atom.path_value(w) * mass_w
                for l in range(d, shape.k + 1):
                    lhs = conditional_window_expectation(
                        model, mu, atom, w, l, epsilon, cap=cap
                    )
                    rhs = pow_number(y_w, epsilon)
                    exact = int_eps and is_exact(lhs) and is_exact(rhs)
                    rows.append(
                        ReportRow(
                            "power-bound",
                            f"w={word_to_str(w) or 'root'},l={l},atom={a_idx},eps={epsilon}",
                            lhs,
                            rhs,
                            "exact" if exact else "float",
                        )
                    )
    return VerificationReport(
        "power-bound", f"{_describe(model, mu)},eps={epsilon}", tuple(rows)
    )


# ---------------------------------------------------------------------------
# Orbit-sum and class-sum bounds
# ---------------------------------------------------------------------------


def _leaf_mass_table(model, mu, *, cap):
    """All joint weight outcomes with per-leaf cascade masses.

    Returns (leaves, [(prob, {leaf: mass})...]); exact rationals throughout.
    """
    shape = mu.shape
    if outcome_count(model, shape, shape.k) > cap:
        raise ResourceCapError("joint outcome space exceeds the cap")
    vertices = list(shape.nonroot_vertices())
    atoms = [model.law_at(v).atoms() for v in vertices]
    leaves = level_vertices(shape, shape.k)
    table = []
    for combo in itertools.product(*atoms):
        weights = {v: value for v, (value, _) in zip(vertices, combo)}
        prob: Number = Fraction(1)
        for _, p in combo:
            prob = prob * p
        masses = {}
        for leaf in leaves:
            x: Number = Fraction(1)
            for j in range(1, len(leaf) + 1):
                x = x * weights[leaf[:j]]
            masses[leaf] = x * mu.cylinder_mass(leaf)
        table.append((prob, masses))
    return leaves, table


@dataclass(frozen=True)
class _Order:
    """Moment order split for the orbit/class verifiers, which also admit the
    degenerate q = 1 (single-entry classes with an empty level product)."""

    q: Number
    n: int
    epsilon: Number

    @property
    def is_integer(self) -> bool:
        return self.epsilon == 0

    @classmethod
    def of(cls, q) -> "_Order":
        if isinstance(q, MomentOrder):
            q = q.q
        if not float(q) >= 1:
            raise ValueError(f"moment order must be >= 1, got {q}")
        n = int(math.floor(float(q)))
        return cls(q, n, q - n)


def _rhs_level_product(model, mu, order, levels, mark_level=None):
    """Product over join levels of S_l^(1/(q-1)), times S_{l0}^(eps/(q-1)).

    Exact (rationals) when q = 2 with exact inputs; float otherwise.
    """
    q = order.q
    if float(q) == 2.0 and not isinstance(q, float):
        rhs: Number = Fraction(1)
        for l in levels:
            rhs = rhs * level_moment_sum(model, mu, q, l)
        return rhs, "exact"
    qf = float(q)
    rhs_f = 1.0
    for l in levels:
        rhs_f *= float(level_moment_sum(model, mu, qf, l)) ** (1.0 / (qf - 1.0))
    if mark_level is not None:
        eps = float(order.epsilon)
        rhs_f *= float(level_moment_sum(model, mu, qf, mark_level)) ** (
            eps / (qf - 1.0)
        )
    return rhs_f, "float"


def verify_orbit_bound(
    model: WeightModel,
    mu: BaseMeasure,
    q: Union[MomentOrder, Number],
    cls: Union[JoinClass, MarkedJoinClass],
    *,
    cap: int = DEFAULT_OUTCOME_CAP,
) -> VerificationReport:
    """Orbit-sum product bound: the sum over one orbit class of the expected
    products of leaf masses (carrying the fractional-power window term when
    q is non-integral) is dominated by the product of level moment sums over
    the class's join levels."""
    order = _Order.of(q)
    if order.is_integer and not isinstance(cls, JoinClass):
        raise ValueError("integer moment orders take a plain class")
    if not order.is_integer and not isinstance(cls, MarkedJoinClass):
        raise ValueError("fractional moment orders take a marked class")
    base = cls if isinstance(cls, JoinClass) else cls.base
    if base.n != max(order.n, 1):
        raise ValueError(
            f"class size {base.n} does not match the integer part of q={float(order.q)}"
        )
    shape = base.shape
    leaves, table = _leaf_mass_table(model, mu, cap=cap)

    if order.is_integer:
        rep = representative_of(base)
        members = class_members(base, rep)
        lhs: Number = Fraction(0)
        for prob, masses in table:
            total: Number = Fraction(0)
            for member in members:
                prod: Number = Fraction(1)
                for e in member.entries:
                    prod = prod * masses[e]
                total = total + prod
            lhs = lhs + prob * total
        rhs, rhs_mode = _rhs_level_product(model, mu, order, base.join_levels())
        mode = "exact" if rhs_mode == "exact" and is_exact(lhs) else "float"
        instance = f"levels={'-'.join(map(str, base.join_levels()))}"
    else:
        rep = marked_representative_of(cls)
        members = marked_class_members(cls, rep)
        eps = float(order.epsilon)
        member_windows = []
        for member in members:
            js = [
                j
                for j in leaves
                if meet_with_spanned_tree(j, member.base) == member.mark
            ]
            member_windows.append((member, js))
        lhs_f = 0.0
        for prob, masses in table:
            total = 0.0
            for member, js in member_windows:
                prod = 1.0
                for e in member.base.entries:
                    prod *= float(masses[e])
                window = float(sum(masses[j] for j in js))
                total += prod * window**eps
            lhs_f += float(prob) * total
        lhs = lhs_f
        rhs, _ = _rhs_level_product(
            model, mu, order, base.join_levels(), mark_level=cls.mark_level
        )
        mode = "float"
        instance = (
            f"levels={'-'.join(map(str, base.join_levels()))},"
            f"l0={cls.mark_level},support={sorted(cls.mark_support)}"
        )
    row = ReportRow("orbit-bound", f"q={float(order.q)},{instance}", lhs, rhs, mode)
    return VerificationReport("orbit-bound", _describe(model, mu), (row,))


def verify_class_bound(
    model: WeightModel,
    mu: BaseMeasure,
    q: Union[MomentOrder, Number],
    cls: JoinClass,
    *,
    cap: int = DEFAULT_OUTCOME_CAP,
) -> VerificationReport:
    """Class-sum bound: for integer q the plain orbit-sum bound; for
    fractional q the window term runs over all leaves and the right-hand side
    sums the mark factor over every vertex of the spanned subtree."""
    order = _Order.of(q)
    base = cls
    if base.n != max(order.n, 1):
        raise ValueError(
            f"class size {base.n} does not match the integer part of q={float(order.q)}"
        )
    shape = base.shape
    rep = representative_of(base)
    members = class_members(base, rep)
    leaves, table = _leaf_mass_table(model, mu, cap=cap)

    if order.is_integer:
        lhs: Number = Fraction(0)
        for prob, masses in table:
            total: Number = Fraction(0)
            for member in members:
                prod: Number = Fraction(1)
                for e in member.entries:
                    prod = prod * masses[e]
                total = total + prod
            lhs = lhs + prob * total
        rhs, rhs_mode = _rhs_level_product(model, mu, order, base.join_levels())
        mode = "exact" if rhs_mode == "exact" and is_exact(lhs) else "float"
    else:
        eps = float(order.epsilon)
        lhs_f = 0.0
        for prob, masses in table:
            window = float(sum(masses[j] for j in leaves)) ** eps
            total = 0.0
            for member in members:
                prod = 1.0
                for e in member.entries:
                    prod *= float(masses[e])
                total += prod
            lhs_f += float(prob) * total * window
        lhs = lhs_f
        qf = float(order.q)
        levels_part = 1.0
        for l in base.join_levels():
            levels_part *= float(level_moment_sum(model, mu, qf, l)) ** (
                1.0 / (qf - 1.0)
            )
        mark_part = math.fsum(
            float(level_moment_sum(model, mu, qf, len(p))) ** (eps / (qf - 1.0))
            for p in spanned_tree_vertices(rep)
        )
        rhs = levels_part * mark_part
        mode = "float"
    row = ReportRow(
        "class-bound",
        f"q={float(order.q)},levels={'-'.join(map(str, base.join_levels()))}",
        lhs,
        rhs,
        mode,
    )
    return VerificationReport("class-bound", _describe(model, mu), (row,))


def representative_of(cls: JoinClass) -> LeafTuple:
    """Deterministic representative tuple of a class, anchored at (1,...,1)."""
    shape = cls.shape
    k = shape.k
    anchor = (1,) * cls.anchor_depth
    entries: dict[int, Word] = {}

    def top_depth(indices):
        if len(indices) == 1:
            return k
        return min(cls.matrix[r][s] for r in indices for s in indices if r != s)

    def rec(indices, prefix):
        t = top_depth(indices)
        if t == k:
            w = prefix + (1,) * (k - len(prefix))
            for r in indices:
                entries[r] = w
            return
        v = prefix + (1,) * (t - len(prefix))
        for j, b in enumerate(_components(cls.matrix, indices, t)):
            rec(b, v + (j + 1,))

    rec(tuple(range(cls.n)), anchor)
    return LeafTuple(shape, tuple(entries[r] for r in range(cls.n)), anchor)


def marked_representative_of(mcls: MarkedJoinClass) -> MarkedLeafTuple:
    rep = representative_of(mcls.base)
    carrier = rep.entries[min(mcls.mark_support)]
    return MarkedLeafTuple(rep, carrier[: mcls.mark_level])


# ---------------------------------------------------------------------------
# Census bounds and the explicit moment cap
# ---------------------------------------------------------------------------


def verify_census_bounds(
    shape: TreeShape,
    n: int,
    lambdas: Sequence[float],
    epsilons: Sequence[float],
    *,
    cap: int = 2**22,
) -> VerificationReport:
    """Geometric census sums against their k-independent caps."""
    census = build_census(shape, n, cap=cap)
    rows = []
    for lam in lambdas:
        rows.append(
            ReportRow(
                "census-bound",
                f"n={n},lambda={lam}",
                census.geometric_sum(lam),
                census_sum_bound(lam, n),
                "float",
            )
        )
        for eps in epsilons:
            rows.append(
                ReportRow(
                    "census-bound",
                    f"n={n},lambda={lam},eps={eps},marked",
                    census.marked_geometric_sum(lam, eps),
                    marked_census_sum_bound(lam, eps, n),
                    "float",
                )
            )
    return VerificationReport(
        "census-bound", f"m={shape.m},k={shape.k},n={n}", tuple(rows)
    )


def moment_bound_report(
    model: WeightModel,
    mu: BaseMeasure,
    q: Union[MomentOrder, Number],
    k: int,
    *,
    counts: str = "auto",
    trials: int = 100_000,
    seed: int = 0,
    cap: int = DEFAULT_OUTCOME_CAP,
) -> VerificationReport:
    """Explicit moment cap chain: measured E(Z_k^q) <= B(q,k) <= cap.

    B multiplies the fitted envelope constant c^(n-1+eps) into the census
    geometric sum (exact counts when enumerable, otherwise the factorial
    fallback); the cap is the k-independent census series bound. The
    envelope constant convention (a single power of c) is recorded in the
    notes since the alternative c^((n-1+eps)/(q-1)) differs when c != 1.
    """
    order = MomentOrder.of(q)
    shape = mu.shape
    if not 1 <= k <= shape.k:
        raise ValueError(f"level {k} outside 1..{shape.k}")
    profile = criterion_profile(model, mu, order.q, k)
    bound = fit_geometric_bound(profile)
    n, eps = order.n, float(order.epsilon)
    lam, c = bound.lam, bound.c
    notes = [f"c={c!r}", f"lambda={lam!r}", "constant convention: c**(n-1+eps)"]

    use_exact = counts == "exact" or (counts == "auto" and n <= 4)
    level_shape = TreeShape(shape.m, k)
    if use_exact:
        census = build_census(level_shape, n)
        plain_sum = census.geometric_sum(lam)
        marked_sum = census.marked_geometric_sum(lam, eps) if eps else 0.0
        notes.append("counts: exact census")
    else:
        import itertools as _it

        combos = _it.combinations_with_replacement(range(k + 1), n - 1)
        plain_sum = math.factorial(n - 1) * math.fsum(
            lam ** sum(c_) for c_ in combos
        )
        if eps:
            combos = _it.combinations_with_replacement(range(k + 1), n - 1)
            marked_sum = math.factorial(n) * math.fsum(
                lam ** sum(c_) for c_ in combos
            ) * math.fsum(lam ** (eps * l) for l in range(k + 1))
        else:
            marked_sum = 0.0
        notes.append("counts: factorial fallback")

    if order.is_integer:
        explicit = c ** (n - 1) * plain_sum
        series_cap = c ** (n - 1) * census_sum_bound(lam, n)
    else:
        explicit = c ** (n - 1 + eps) * marked_sum
        series_cap = c ** (n - 1 + eps) * marked_census_sum_bound(lam, eps, n)

    if order.is_integer:
        measured = float(exact_moment_integer(model, mu, n, k))
        engine = "exact_integer"
    else:
        try:
            measured = float(exact_moment_discrete(model, mu, order.q, k, cap=cap))
            engine = "exact_discrete"
        except (ResourceCapError, UnsupportedLawError):
            est, stderr = mc_moment(model, mu, order.q, k, trials, seed)
            measured = est
            engine = f"mc(trials={trials},stderr={stderr:.3e})"
    notes.append(f"engine: {engine}")

    rows = (
        ReportRow(
            "moment-cap",
            f"q={float(order.q)},k={k},measured<=B",
            measured,
            explicit,
            "float",
        ),
        ReportRow(
            "moment-cap",
            f"q={float(order.q)},k={k},B<=cap",
            explicit,
            series_cap,
            "float",
        ),
    )
    return VerificationReport(
        "moment-cap", _describe(model, mu), rows, tuple(notes)
    )


# ---------------------------------------------------------------------------
# Boundedness / growth dichotomy
# ---------------------------------------------------------------------------


def necessity_check(
    model: WeightModel,
    mu: BaseMeasure,
    q: Union[MomentOrder, Number],
    k_max: int,
    *,
    delta: float = 0.01,
    window: tuple[int, int] | None = None,
    cap: int = DEFAULT_VERTEX_CAP,
) -> VerificationReport:
    """Boundedness/growth dichotomy of the moment sequence E(Z_k^q).

    If the running max of the moment sequence plateaus (relative increase
    below 1% over the trailing half), the profile must not be 'violated';
    if the profile sits above 1 + delta, the moments must grow at least
    geometrically with ratio (1 + delta/2)^(q-1) over the window. Raises
    when neither pattern is resolvable.
    """
    order = MomentOrder.of(q)
    if not order.is_integer:
        raise ValueError("the dichotomy check uses the exact integer engine; q must be integral")
    n = order.n
    if k_max < 4:
        raise ValueError("need at least four levels to resolve a pattern")
    profile = criterion_profile(model, mu, order.q, k_max, delta=delta, cap=cap)
    moments = [float(exact_moment_integer(model, mu, n, l, cap=cap)) for l in range(1, k_max + 1)]
    running = []
    best = 0.0
    for v in moments:
        best = max(best, v)
        running.append(best)
    mid = k_max // 2
    increase = (running[-1] - running[mid - 1]) / running[mid - 1]
    k0, k1 = window if window is not None else (mid, k_max)
    if not 1 <= k0 < k1 <= k_max:
        raise ValueError(f"window {k0, k1} outside 1..{k_max}")
    ratio = (moments[k1 - 1] / moments[k0 - 1]) ** (1.0 / (k1 - k0))

    rows: list[ReportRow]
    if increase < 0.01:
        # bounded pattern: the profile may not be violated
        rows = [
            ReportRow(
                "growth-check",
                f"q={float(order.q)},plateau:running-max-increase",
                increase,
                0.01,
                "float",
            ),
            ReportRow(
                "growth-check",
                f"q={float(order.q)},plateau:trailing-profile",
                profile.trailing_max,
                1.0 + delta,
                "float",
            ),
        ]
        notes = ("pattern: bounded", f"empirical ratio {ratio!r}")
    elif min(profile.trailing) >= 1.0 + delta:
        threshold = (1.0 + delta / 2.0) ** (float(order.q) - 1.0)
        rows = [
            ReportRow(
                "growth-check",
                f"q={float(order.q)},growth:ratio>=threshold",
                threshold,
                ratio,
                "float",
            )
        ]
        notes = ("pattern: diverging", f"empirical ratio {ratio!r}")
    else:
        raise InconclusiveDataError(
            f"neither plateau (increase {increase:.3%}) nor violated profile "
            f"(trailing min {min(profile.trailing):.6f}) is resolvable"
        )
    return VerificationReport(
        "growth-check", _describe(model, mu), tuple(rows), notes
    )
