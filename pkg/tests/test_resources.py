import os
import sys
import unittest

sys.path.append(os.path.abspath(os.path.join(__file__, "../../")))

from lockutils.errors import BudgetExceeded, DomainError
from lockutils.services.partitions import parse_partition
from lockutils.services.resources import (
    ExtractionPlan,
    Ledger,
    TeleportMove,
    delta_e,
    insufficiency_check,
    min_bell_cost,
    plan_extraction,
    profile_s1,
    profile_s2,
    replay_moves,
)
from lockutils.services.sets import StateSet


class TestProfiles(unittest.TestCase):
    def test_s1_m4_statuses(self):
        profile = profile_s1(4)
        self.assertEqual(profile.provenance, "S1")
        for text in ("12|34", "13|24", "14|23", "1234"):
            self.assertEqual(profile.status(parse_partition(text)).status, "OPEN")
        self.assertEqual(profile.status(parse_partition("1|234")).status, "LOCKED")

    def test_s2_baseline(self):
        profile = profile_s2(4)
        self.assertEqual(profile.status(parse_partition("1234")).status, "OPEN")
        self.assertEqual(profile.status(parse_partition("12|34")).status, "LOCKED")
        self.assertEqual(profile_s2(2).status(parse_partition("12")).status, "OPEN")

    def test_custom_provenance(self):
        custom = StateSet.from_terms(4, [((1, "0000"),), ((1, "1111"),)])
        self.assertEqual(profile_s1(4, custom).provenance, "custom")
        with self.assertRaises(DomainError):
            profile_s1(5, custom)


class TestBellCost(unittest.TestCase):
    def test_s1_even_cost_is_half(self):
        for m in (4, 6, 8, 10):
            cost, witness = min_bell_cost(profile_s1(m))
            self.assertEqual(cost, m // 2, f"m={m}")
            self.assertTrue(all(len(block) == 2 for block in witness.blocks))

    def test_s1_m4_witness(self):
        self.assertEqual(min_bell_cost(profile_s1(4)), (2, parse_partition("12|34")))

    def test_s2_cost(self):
        for m in range(2, 11):
            self.assertEqual(min_bell_cost(profile_s2(m))[0], m - 1)

    def test_odd_cost(self):
        self.assertEqual(min_bell_cost(profile_s1(5))[0], 3)
        self.assertEqual(min_bell_cost(profile_s1(3))[0], 2)

    def test_optimistic_never_costs_more(self):
        profile = profile_s1(6)
        self.assertLessEqual(min_bell_cost(profile, optimistic=True)[0], min_bell_cost(profile)[0])

    def test_optimistic_counts_unknown(self):
        custom = StateSet.from_terms(4, [((1, "0000"),), ((1, "1111"),)])
        profile = profile_s1(4, custom)
        self.assertEqual(min_bell_cost(profile)[0], 3)
        self.assertEqual(min_bell_cost(profile, optimistic=True)[0], 0)


class TestPlans(unittest.TestCase):
    def test_s1_m4_plan(self):
        plan = plan_extraction(profile_s1(4), 4)
        self.assertEqual(str(plan.target), "12|34")
        self.assertEqual([(mv.source, mv.dest) for mv in plan.moves], [(2, 1), (4, 3)])
        self.assertEqual(plan.bell_cost, 2)

    def test_s1_m6_plan(self):
        plan = plan_extraction(profile_s1(6))
        self.assertEqual(plan.bell_cost, 3)
        self.assertEqual(replay_moves(6, plan.moves), plan.target)

    def test_s2_plan_moves_everyone_to_party_one(self):
        plan = plan_extraction(profile_s2(5))
        self.assertEqual([(mv.source, mv.dest) for mv in plan.moves], [(2, 1), (3, 1), (4, 1), (5, 1)])

    def test_plan_must_reach_target(self):
        with self.assertRaises(ValueError):
            ExtractionPlan(target=parse_partition("12|34"), moves=[TeleportMove(source=3, dest=1)], bell_cost=1)
        with self.assertRaises(ValueError):
            ExtractionPlan(target=parse_partition("12|3|4"), moves=[TeleportMove(source=2, dest=1)], bell_cost=2)

    def test_plan_m_mismatch(self):
        with self.assertRaises(DomainError):
            plan_extraction(profile_s1(4), 6)


class TestDeltaE(unittest.TestCase):
    def test_closed_form(self):
        self.assertEqual(delta_e(4), 1)
        self.assertEqual(delta_e(6), 2)
        self.assertEqual(delta_e(10), 4)
        self.assertEqual(delta_e(5), 1)
        self.assertEqual(delta_e(3), 0)
        with self.assertRaises(DomainError):
            delta_e(2)

    def test_matches_profiles(self):
        for m in range(3, 11):
            gap = min_bell_cost(profile_s2(m))[0] - min_bell_cost(profile_s1(m))[0]
            self.assertEqual(gap, delta_e(m), f"m={m}")

    def test_monotone_per_parity(self):
        for start in (4, 5):
            values = [delta_e(m) for m in range(start, 31, 2)]
            self.assertEqual(values, sorted(values))


class TestLedgerAndVerdicts(unittest.TestCase):
    def test_ledger(self):
        ledger = Ledger(granted=2)
        ledger.consume()
        ledger.consume()
        self.assertEqual(ledger.remaining, 0)
        with self.assertRaises(BudgetExceeded):
            ledger.consume()

    def test_m4_budget_one_is_insufficient(self):
        verdict = insufficiency_check(profile_s1(4), 1)
        self.assertEqual(verdict.kind, "INSUFFICIENT")
        self.assertTrue(verdict.pigeonhole)
        self.assertEqual(str(verdict.best_reachable), "12|3|4")
        self.assertEqual(verdict.certificate.cut_party, 3)

    def test_m4_budget_two_is_sufficient(self):
        verdict = insufficiency_check(profile_s1(4), 2)
        self.assertEqual(verdict.kind, "SUFFICIENT")
        self.assertEqual(str(verdict.plan.target), "12|34")

    def test_below_half_is_insufficient(self):
        for m in (4, 6, 8, 10):
            verdict = insufficiency_check(profile_s1(m), m // 2 - 1)
            self.assertEqual(verdict.kind, "INSUFFICIENT", f"m={m}")
            self.assertIsNotNone(verdict.certificate)

    def test_baseline_needs_m_minus_one(self):
        self.assertEqual(insufficiency_check(profile_s2(4), 2).kind, "INSUFFICIENT")
        self.assertEqual(insufficiency_check(profile_s2(4), 3).kind, "SUFFICIENT")

    def test_undetermined_for_custom_set(self):
        custom = StateSet.from_terms(4, [((1, "0000"),), ((1, "1111"),)])
        verdict = insufficiency_check(profile_s1(4, custom), 2)
        self.assertEqual(verdict.kind, "UNDETERMINED")

    def test_uncertified_singletons_skip_pigeonhole(self):
        custom = StateSet.from_terms(4, [((1, "0000"),), ((1, "1111"),)])
        profile = profile_s1(4, custom)
        for budget in (0, 1):
            verdict = insufficiency_check(profile, budget)
            self.assertEqual(verdict.kind, "UNDETERMINED", f"budget={budget}")
            self.assertFalse(verdict.pigeonhole)
            self.assertIsNone(verdict.certificate)

    def test_negative_budget(self):
        with self.assertRaises(DomainError):
            insufficiency_check(profile_s1(4), -1)


if __name__ == "__main__":
    unittest.main()
