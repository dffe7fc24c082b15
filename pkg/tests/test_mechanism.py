import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_node_optimal_net, zero_net
from redistrib.errors import ContractViolation
from redistrib.mechanism import (
    Mechanism,
    TypeProfile,
    parse_profiles,
    payments,
    profiles_to_text,
    s_value,
    shift_to_feasible,
    sum_h,
    violations,
)

profile_values = st.lists(
    st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=2, max_size=7)


class TestTypeProfile:
    def test_sorts_on_construction(self):
        p = TypeProfile.of([0.9, 0.1, 0.5])
        assert p.values == (0.1, 0.5, 0.9)

    def test_rejects_out_of_range(self):
        with pytest.raises(ContractViolation):
            TypeProfile.of([0.5, 1.5])
        with pytest.raises(ContractViolation):
            TypeProfile.of([-0.2, 0.5])

    def test_clamps_epsilon_noise(self):
        p = TypeProfile.of([-1e-12, 1.0 + 1e-12])
        assert p.values == (0.0, 1.0)

    def test_others_stays_sorted(self):
        p = TypeProfile.of([0.2, 0.5, 0.9])
        assert p.others(1) == (0.2, 0.9)

    @given(profile_values)
    def test_always_sorted(self, vals):
        p = TypeProfile.of(vals)
        assert list(p.values) == sorted(p.values)


class TestSValue:
    def test_floor_at_one(self):
        assert s_value(TypeProfile.of([0, 0, 0])) == 1.0

    def test_sum_above_one(self):
        assert s_value(TypeProfile.of([1, 1, 1])) == 3.0

    def test_below_threshold(self):
        assert s_value(TypeProfile.of([0.2, 0.3, 0.4])) == 1.0

    @given(profile_values)
    def test_bounds(self, vals):
        p = TypeProfile.of(vals)
        s = s_value(p)
        assert s >= 1.0
        assert s >= sum(p.values) - 1e-12
        if sum(p.values) >= 1.0:
            assert s == pytest.approx(sum(p.values))


class TestSumH:
    def test_optimal_fixture_at_zero(self, optimal3):
        mech = Mechanism(3, optimal3, 0.0)
        assert sum_h(mech, TypeProfile.of([0, 0, 0])) == pytest.approx(2.0)

    def test_optimal_fixture_at_ones(self, optimal3):
        mech = Mechanism(3, optimal3, 0.0)
        assert sum_h(mech, TypeProfile.of([1, 1, 1])) == pytest.approx(7.0)

    def test_zero_net_with_shift(self, zero3):
        mech = Mechanism(3, zero3, 0.25)
        assert sum_h(mech, TypeProfile.of([0.3, 0.4, 0.9])) == pytest.approx(0.75)


class TestViolations:
    def test_optimal_fixture_clean(self, optimal3):
        mech = Mechanism(3, optimal3, 0.0)
        v = violations(mech, TypeProfile.of([0, 0, 0]), 2 / 3)
        assert v.left == pytest.approx(0.0, abs=1e-12)
        assert v.right == pytest.approx(0.0, abs=1e-12)

    def test_zero_net_left_violation(self, zero3):
        mech = Mechanism(3, zero3, 0.0)
        p = TypeProfile.of([0.5, 0.5, 0.5])
        v = violations(mech, p, 0.5)
        assert v.left == pytest.approx(2 * 1.5)
        assert v.right == 0.0

    def test_tight_ratio_goal(self, optimal3):
        mech = Mechanism(3, optimal3, 0.0)
        assert violations(mech, TypeProfile.of([0, 0, 0]), 0.9).right == 0.0
        v = violations(mech, TypeProfile.of([1, 1, 1]), 0.9)
        assert v.right == pytest.approx(0.7)

    def test_alpha_validated(self, optimal3):
        mech = Mechanism(3, optimal3, 0.0)
        with pytest.raises(ContractViolation):
            violations(mech, TypeProfile.of([0, 0, 0]), 1.5)

    @settings(max_examples=60, deadline=None)
    @given(profile_values,
           st.floats(min_value=0, max_value=1, allow_nan=False),
           st.floats(min_value=0, max_value=1, allow_nan=False))
    def test_right_monotone_in_alpha(self, vals, a1, a2):
        net = two_node_optimal_net()
        if len(vals) != 3:
            vals = (vals + [0.0, 0.0, 0.0])[:3]
        mech = Mechanism(3, net, 0.0)
        p = TypeProfile.of(vals)
        lo, hi = min(a1, a2), max(a1, a2)
        assert violations(mech, p, hi).right >= violations(mech, p, lo).right - 1e-12


class TestPayments:
    def test_no_build_payment(self, optimal3):
        mech = Mechanism(3, optimal3, 0.0)
        build, pays = payments(mech, TypeProfile.of([0, 0, 0]))
        assert not build
        for p in pays:
            assert p == pytest.approx(2 / 3 - 2 / 3)

    def test_build_at_threshold(self, optimal3):
        mech = Mechanism(3, optimal3, 0.0)
        build, _ = payments(mech, TypeProfile.of([0.5, 0.5, 0.0]))
        assert build  # the tie builds

    def test_optimal_fixture_worst_case_total(self, optimal3):
        mech = Mechanism(3, optimal3, 0.0)
        build, pays = payments(mech, TypeProfile.of([1, 1, 1]))
        assert build
        for p in pays:
            assert p == pytest.approx(2 - 7 / 3)
        total_utility = 3.0 + sum(pays)
        assert total_utility == pytest.approx(2.0)  # ratio 2/3 of first-best 3

    @settings(max_examples=80, deadline=None)
    @given(profile_values, st.floats(min_value=0, max_value=0.2, allow_nan=False))
    def test_accounting_identity(self, vals, shift):
        # total received equals (n-1)s - sum h'; total utility equals n*s - sum h'
        if len(vals) != 3:
            vals = (vals + [0.1, 0.2, 0.3])[:3]
        net = two_node_optimal_net()
        mech = Mechanism(3, net, shift)
        p = TypeProfile.of(vals)
        build, pays = payments(mech, p)
        s = s_value(p)
        total = sum_h(mech, p)
        assert sum(pays) == pytest.approx(2 * s - total, abs=1e-9)
        valuation = sum(p.values) if build else 1.0
        assert valuation + sum(pays) == pytest.approx(3 * s - total, abs=1e-9)


class TestShift:
    def test_zero_shift(self, optimal3):
        assert shift_to_feasible(optimal3, 0.0, 3).shift == 0.0

    def test_division(self, optimal3):
        assert shift_to_feasible(optimal3, 0.03, 3).shift == pytest.approx(0.01)

    def test_negative_rejected(self, optimal3):
        with pytest.raises(ContractViolation):
            shift_to_feasible(optimal3, -0.1, 3)


class TestProfileText:
    def test_round_trip(self):
        profiles = [TypeProfile.of([0.25, 0.5]), TypeProfile.of([0.0, 1.0])]
        text = profiles_to_text(profiles)
        assert parse_profiles(text) == profiles

    def test_bad_line_reports_position(self):
        with pytest.raises(ContractViolation, match="line 2"):
            parse_profiles("0.1,0.2\nf,0.3\n")
