"""Criterion profiles, envelopes, verifiers, and reports."""

import math
from fractions import Fraction as F

import pytest

from cascade_lab import (
    BaseMeasure,
    ConstantLaw,
    DiscreteLaw,
    InconclusiveDataError,
    TreeShape,
    TwoPointLaw,
    VerdictError,
    WeightModel,
    criterion_profile,
    enumerate_classes,
    enumerate_marked_classes,
    exact_moment_discrete,
    exact_moment_integer,
    fit_geometric_bound,
    level_moment_sum,
    moment_bound_report,
    necessity_check,
    verify_census_bounds,
    verify_class_bound,
    verify_mass_identity,
    verify_orbit_bound,
    verify_power_bound,
)
from cascade_lab.criteria import ReportRow

TWO_POINT = TwoPointLaw(F(1, 2), F(3, 2), F(1, 2))
GROWTH_LAW = TwoPointLaw(F(1, 2), F(17, 5), F(24, 29))  # E(W^2) = 11/5, so s = 1.1


class TestReportRows:
    def test_inequality_semantics(self):
        ok = ReportRow("c", "i", 1.0, 2.0, "float")
        assert ok.passed and ok.margin == 1.0
        tight = ReportRow("c", "i", 1.0, 1.0 - 1e-12, "float")
        assert tight.passed  # within relative tolerance
        bad = ReportRow("c", "i", 1.0, 0.9, "float")
        assert not bad.passed

    def test_equality_semantics(self):
        assert ReportRow("c", "i", F(1, 3), F(1, 3), "exact", relation="eq").passed
        assert not ReportRow("c", "i", F(1, 3), F(1, 2), "exact", relation="eq").passed
        # an equality row rejects slack in either direction
        assert not ReportRow("c", "i", 1.0, 1.1, "float", relation="eq").passed

    def test_exact_mode_has_zero_tolerance(self):
        row = ReportRow("c", "i", F(1), F(1) - F(1, 10**15), "exact")
        assert not row.passed

    def test_perturbation_hook(self):
        row = ReportRow("c", "i", F(1), F(1), "exact", relation="eq")
        assert row.passed and not row.perturbed(-0.01).passed


class TestCriterionProfile:
    def test_homogeneous_closed_form(self):
        shape = TreeShape(2, 8)
        mu = BaseMeasure.uniform(shape)
        model = WeightModel.homogeneous(TWO_POINT)
        for q in (2, 2.5, 3):
            prof = criterion_profile(model, mu, q, 8)
            m, law = 2, TWO_POINT
            expected = float(m ** (-float(q)) * 2 * law.moment(q))
            for s in prof.s:
                assert s == pytest.approx(expected, abs=1e-12)

    def test_constant_model(self):
        shape = TreeShape(2, 5)
        prof = criterion_profile(
            WeightModel.homogeneous(ConstantLaw()), BaseMeasure.uniform(shape), 2, 5
        )
        assert all(s == pytest.approx(0.5, abs=1e-15) for s in prof.s)
        assert prof.verdict == "satisfied"

    def test_per_depth_alternation_cross_checked(self):
        # s_l is the geometric mean of the per-depth factors
        laws = [TWO_POINT, DiscreteLaw([F(3, 4), F(5, 4)], [F(1, 2), F(1, 2)])]
        shape = TreeShape(2, 6)
        mu = BaseMeasure.uniform(shape)
        model = WeightModel.per_depth([laws[d % 2] for d in range(6)])
        prof = criterion_profile(model, mu, 2, 6)
        factors = [float(F(1, 2) * law.moment(2)) for law in laws]
        for l, s in zip(prof.levels, prof.s):
            prod = 1.0
            for d in range(l):
                prod *= factors[d % 2]
            assert s == pytest.approx(prod ** (1.0 / l), rel=1e-12)
        # enumeration cross-check at small levels via the per-vertex walk
        shape3 = TreeShape(2, 3)
        mu3 = BaseMeasure.uniform(shape3)
        pv = WeightModel.per_vertex(
            {v: laws[(len(v) - 1) % 2] for v in shape3.nonroot_vertices()}
        )
        for l in (1, 2, 3):
            assert level_moment_sum(pv, mu3, 2, l) == level_moment_sum(
                model, mu3, 2, l
            )

    def test_verdicts(self):
        shape = TreeShape(2, 6)
        mu = BaseMeasure.uniform(shape)
        assert criterion_profile(WeightModel.homogeneous(TWO_POINT), mu, 2, 6).verdict == "satisfied"
        assert criterion_profile(WeightModel.homogeneous(GROWTH_LAW), mu, 2, 6).verdict == "violated"
        # E(W^2) = 2 makes s_l = 1 exactly: inconclusive
        critical = TwoPointLaw(F(1, 2), F(3), F(4, 5))
        prof = criterion_profile(WeightModel.homogeneous(critical), mu, 2, 6)
        assert prof.verdict == "inconclusive"

    def test_root_split_permutation_invariance(self):
        shape = TreeShape(2, 4)
        rows = [[F(1, 3), F(2, 3)]] + [[F(1, 2), F(1, 2)]] * 3
        permuted = [[F(2, 3), F(1, 3)]] + [[F(1, 2), F(1, 2)]] * 3
        model = WeightModel.homogeneous(TWO_POINT)
        a = criterion_profile(model, BaseMeasure.per_depth(shape, rows), 2, 4)
        b = criterion_profile(model, BaseMeasure.per_depth(shape, permuted), 2, 4)
        assert a.S == b.S and a.s == b.s


class TestGeometricBound:
    def test_fit_formula(self):
        shape = TreeShape(2, 6)
        mu = BaseMeasure.uniform(shape)
        prof = criterion_profile(WeightModel.homogeneous(ConstantLaw()), mu, 2, 6)
        bound = fit_geometric_bound(prof)
        assert bound.lam == pytest.approx(0.500001, abs=1e-9)
        assert bound.c == pytest.approx(1.0, rel=1e-4)
        for l, S in zip(prof.levels, prof.S):
            assert float(S) <= bound.envelope(2, l) * (1 + 1e-12)

    def test_refuses_unsatisfied_profile(self):
        shape = TreeShape(2, 6)
        mu = BaseMeasure.uniform(shape)
        prof = criterion_profile(WeightModel.homogeneous(GROWTH_LAW), mu, 2, 6)
        with pytest.raises(VerdictError):
            fit_geometric_bound(prof)


class TestConditionalVerifiers:
    def test_mass_identity_small(self):
        shape = TreeShape(2, 2)
        mu = BaseMeasure.uniform(shape)
        report = verify_mass_identity(WeightModel.homogeneous(TWO_POINT), mu)
        assert report.passed
        assert all(r.mode == "exact" for r in report.rows)
        assert all(r.margin == 0 for r in report.rows)

    @pytest.mark.parametrize("eps", [0, 0.25, 0.5, 0.75, 1])
    def test_power_bound(self, eps):
        shape = TreeShape(2, 2)
        mu = BaseMeasure.uniform(shape)
        report = verify_power_bound(WeightModel.homogeneous(TWO_POINT), mu, eps)
        assert report.passed
        if eps in (0, 1):
            assert all(abs(float(r.margin)) < 1e-15 for r in report.rows)
        else:
            assert any(float(r.margin) > 1e-6 for r in report.rows)

    def test_perturbed_identity_fails(self):
        shape = TreeShape(2, 2)
        mu = BaseMeasure.uniform(shape)
        report = verify_mass_identity(WeightModel.homogeneous(TWO_POINT), mu)
        assert not report.perturbed(-0.01).passed


@pytest.fixture(scope="module")
def setting():
    shape = TreeShape(2, 2)
    return WeightModel.homogeneous(TWO_POINT), BaseMeasure.uniform(shape), shape


class TestOrbitAndClassBounds:

    def test_integer_orbit_bounds(self, setting):
        model, mu, shape = setting
        for q in (2, 3):
            for cls, _rep in enumerate_classes(shape, q):
                report = verify_orbit_bound(model, mu, q, cls)
                assert report.passed, (q, cls.join_levels())

    def test_q2_is_exact_mode(self, setting):
        model, mu, shape = setting
        cls, _ = enumerate_classes(shape, 2)[0]
        report = verify_orbit_bound(model, mu, 2, cls)
        assert report.rows[0].mode == "exact"

    def test_fractional_orbit_bounds(self, setting):
        model, mu, shape = setting
        for mcls, _rep in enumerate_marked_classes(shape, 2):
            report = verify_orbit_bound(model, mu, 2.5, mcls)
            assert report.passed

    def test_type_discipline(self, setting):
        model, mu, shape = setting
        cls, _ = enumerate_classes(shape, 2)[0]
        mcls, _ = enumerate_marked_classes(shape, 2)[0]
        with pytest.raises(ValueError):
            verify_orbit_bound(model, mu, 2, mcls)
        with pytest.raises(ValueError):
            verify_orbit_bound(model, mu, 2.5, cls)

    def test_class_bounds(self, setting):
        model, mu, shape = setting
        for q in (2, 2.5):
            for cls, _rep in enumerate_classes(shape, 2):
                report = verify_class_bound(model, mu, q, cls)
                assert report.passed

    def test_degenerate_single_entry(self, setting):
        model, mu, shape = setting
        cls, _ = enumerate_classes(shape, 1)[0]
        report = verify_orbit_bound(model, mu, 1, cls)
        (row,) = report.rows
        assert row.lhs == 1 and row.rhs == 1 and report.passed
        report = verify_class_bound(model, mu, 1, cls)
        assert report.rows[0].lhs == 1 and report.passed


class TestCensusAndMomentCap:
    def test_census_bounds_small(self):
        report = verify_census_bounds(TreeShape(2, 6), 2, [0.3, 0.6], [0.5])
        assert report.passed

    def test_moment_cap_chain_q2(self):
        shape = TreeShape(2, 6)
        mu = BaseMeasure.uniform(shape)
        model = WeightModel.homogeneous(TWO_POINT)
        for k in (2, 4, 6):
            report = moment_bound_report(model, mu, 2, k)
            assert report.passed
            measured, explicit = report.rows[0].lhs, report.rows[0].rhs
            assert float(exact_moment_integer(model, mu, 2, k)) == pytest.approx(measured)
            assert measured <= explicit

    def test_moment_cap_chain_fractional(self):
        shape = TreeShape(2, 3)
        mu = BaseMeasure.uniform(shape)
        model = WeightModel.homogeneous(TWO_POINT)
        report = moment_bound_report(model, mu, 2.5, 3)
        assert report.passed
        assert "exact_discrete" in " ".join(report.notes)

    def test_factorial_fallback_counts(self):
        shape = TreeShape(2, 4)
        mu = BaseMeasure.uniform(shape)
        model = WeightModel.homogeneous(TWO_POINT)
        exact = moment_bound_report(model, mu, 2, 4, counts="exact")
        fallback = moment_bound_report(model, mu, 2, 4, counts="factorial")
        assert exact.passed and fallback.passed
        # the factorial fallback can only be looser for n = 2
        assert float(fallback.rows[0].rhs) >= float(exact.rows[0].rhs) - 1e-12


class TestNecessity:
    def test_bounded_branch(self):
        shape = TreeShape(2, 40)
        mu = BaseMeasure.uniform(shape)
        report = necessity_check(WeightModel.homogeneous(TWO_POINT), mu, 2, 40)
        assert report.passed
        assert "pattern: bounded" in report.notes

    def test_growth_branch(self):
        shape = TreeShape(2, 60)
        mu = BaseMeasure.uniform(shape)
        report = necessity_check(
            WeightModel.homogeneous(GROWTH_LAW), mu, 2, 60, window=(20, 60)
        )
        assert report.passed
        assert "pattern: diverging" in report.notes
        ratio = float(report.rows[0].rhs)
        assert ratio >= 1.05

    def test_inconclusive_raises(self):
        # exactly critical law: E(W^2) = 2 makes s_l = 1, so the moments grow
        # without a plateau while the profile is never 'violated' at delta > 0
        critical = TwoPointLaw(F(1, 2), F(3), F(4, 5))
        assert critical.moment(2) == 2
        shape = TreeShape(2, 8)
        mu = BaseMeasure.uniform(shape)
        with pytest.raises(InconclusiveDataError):
            necessity_check(WeightModel.homogeneous(critical), mu, 2, 8)
