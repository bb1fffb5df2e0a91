import os
import sys
import tempfile
import unittest
from unittest import mock

sys.path.append(os.path.abspath(os.path.join(__file__, "../../")))

from config.config import ScenarioConfig, load_scenario
from lockutils.errors import BudgetExceeded, ConfigError, CorruptLog, DomainError, LocalityError, SoundnessViolation
from lockutils.services.partitions import parse_partition
from lockutils.services.protocols import generate_pairing_protocol, sample_run
from lockutils.services.resources import plan_extraction, profile_s2
from lockutils.services.sets import StateSet, build_locked_set, save_set
from workflow import LockingHarnessWorkflow
from workflow.tools.event_log import EventLog


class TestDistribution(unittest.TestCase):
    def setUp(self):
        self.harness = LockingHarnessWorkflow()

    def test_m4_secret_3(self):
        dstate, log = self.harness.run_distribution(ScenarioConfig(m=4, secret=3))
        self.assertEqual(dstate.state.nonzero_support(), ["0100", "1011"])
        self.assertEqual(dstate.owners, (1, 2, 3, 4))
        self.assertEqual([r.event for r in log.records], ["scenario", "distribute"])

    def test_m6_secret_0(self):
        dstate, _ = self.harness.run_distribution(ScenarioConfig(m=6, secret=0))
        self.assertEqual(dstate.state.nonzero_support(), ["000000", "111111"])

    def test_secret_out_of_range(self):
        with self.assertRaises(ConfigError):
            self.harness.run_distribution(ScenarioConfig(m=4, secret=6))

    def test_random_secret_follows_seed(self):
        scenario = ScenarioConfig(m=6, secret="random", seed=9)
        self.assertEqual(self.harness.resolve_secret(scenario), self.harness.resolve_secret(scenario))
        self.assertLess(self.harness.resolve_secret(scenario), 8)


class TestAttack(unittest.TestCase):
    def setUp(self):
        self.harness = LockingHarnessWorkflow()

    def test_three_party_coalition_fails(self):
        for secret in range(6):
            report = self.harness.run_attack(ScenarioConfig(m=4, secret=secret, coalition=[2, 3, 4], seed=1))
            self.assertEqual(str(report.partition), "1|234")
            self.assertEqual(report.status.status, "LOCKED")
            self.assertIsNotNone(report.status.certificate)
            self.assertLess(report.evaluation.worst_case, 1.0)
            self.assertEqual(report.log.records[-1].event, "verdict")

    def test_m6_pair_coalition_locked(self):
        report = self.harness.run_attack(ScenarioConfig(m=6, secret=0, coalition=[1, 2]))
        self.assertEqual(report.status.status, "LOCKED")
        self.assertIn(report.status.certificate.cut_party, (3, 4, 5, 6))

    def test_coalition_bounds(self):
        with self.assertRaises(DomainError):
            self.harness.run_attack(ScenarioConfig(m=4, secret=0, coalition=[1, 2, 3, 4]))
        with self.assertRaises(ConfigError):
            self.harness.run_attack(ScenarioConfig(m=4, secret=0))

    def test_protocol_must_respect_coalition(self):
        protocol = generate_pairing_protocol(build_locked_set(4), parse_partition("12|34"))
        with self.assertRaises(LocalityError):
            self.harness.run_attack(ScenarioConfig(m=4, secret=0, coalition=[1, 2]), protocol)


class TestExtraction(unittest.TestCase):
    def setUp(self):
        self.harness = LockingHarnessWorkflow()

    def test_m4_budget_two_decodes_every_secret(self):
        for secret in range(6):
            report = self.harness.run_extraction(ScenarioConfig(m=4, secret=secret, bell_budget=2, seed=secret))
            self.assertTrue(report.success)
            self.assertEqual(report.decoded, secret)
            self.assertEqual(str(report.final_partition), "12|34")
            self.assertEqual(report.ledger.consumed, 2)
            self.assertEqual(len(report.log.of_kind("teleport")), 2)
            self.assertAlmostEqual(report.evaluation.success[secret], 1.0, delta=1e-9)

    def test_m6_budget_three_decodes_every_secret(self):
        for secret in range(8):
            report = self.harness.run_extraction(ScenarioConfig(m=6, secret=secret, bell_budget=3))
            self.assertEqual(report.decoded, secret)
            self.assertEqual(report.ledger.consumed, 6 - len(report.final_partition))

    def test_budget_below_cost_is_insufficient(self):
        for m in (4, 6):
            report = self.harness.run_extraction(ScenarioConfig(m=m, secret=1, bell_budget=m // 2 - 1))
            self.assertEqual(report.verdict.kind, "INSUFFICIENT")
            self.assertIsNotNone(report.verdict.certificate)
            self.assertEqual(report.ledger.consumed, 0)
            self.assertEqual(report.log.of_kind("teleport"), [])
            self.assertIsNotNone(report.log.verdict["certificate"])

    def test_custom_set_without_certificates_is_undetermined(self):
        custom = StateSet.from_terms(4, [((1, "0000"),), ((1, "1111"),)])
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "zz.set")
            save_set(custom, path)
            report = self.harness.run_extraction(ScenarioConfig(m=4, set_path=path, secret=1, bell_budget=1))
        self.assertEqual(report.verdict.kind, "UNDETERMINED")
        self.assertFalse(report.log.verdict["pigeonhole"])
        self.assertIsNone(report.log.verdict["certificate"])
        self.assertEqual(report.ledger.consumed, 0)

    def test_sample_count_runs_are_drawn(self):
        scenario = ScenarioConfig(m=4, secret=2, bell_budget=2, seed=3)
        with mock.patch("workflow.netharness.sample_run", wraps=sample_run) as sampler:
            LockingHarnessWorkflow(sample_count=5).run_extraction(scenario)
        self.assertEqual(sampler.call_count, 6)
        self.assertEqual([c.args[3] for c in sampler.call_args_list], [3, 4, 5, 6, 7, 8])

    def test_sampled_disagreement_is_a_soundness_violation(self):
        def wrong_on_seed_five(state_set, protocol, secret, seed):
            transcript = sample_run(state_set, protocol, secret, seed)
            if seed == 5:
                return transcript.model_copy(update={"guess": (secret + 1) % state_set.size})
            return transcript

        scenario = ScenarioConfig(m=4, secret=0, bell_budget=2, seed=3)
        with mock.patch("workflow.netharness.sample_run", side_effect=wrong_on_seed_five):
            with self.assertRaises(SoundnessViolation):
                LockingHarnessWorkflow(sample_count=4).run_extraction(scenario)
            report = LockingHarnessWorkflow(sample_count=1).run_extraction(scenario)
        self.assertEqual(report.decoded, 0)

    def test_forced_plan_over_budget(self):
        plan = plan_extraction(profile_s2(4))
        with self.assertRaises(BudgetExceeded):
            self.harness.run_extraction(ScenarioConfig(m=4, secret=0, bell_budget=2), plan=plan)

    def test_forced_baseline_plan_within_budget(self):
        plan = plan_extraction(profile_s2(4))
        report = self.harness.run_extraction(ScenarioConfig(m=4, secret=5, bell_budget=3), plan=plan)
        self.assertEqual(report.decoded, 5)
        self.assertEqual(str(report.final_partition), "1234")


class TestReplay(unittest.TestCase):
    def setUp(self):
        self.harness = LockingHarnessWorkflow()

    def test_equal_seeds_give_equal_logs(self):
        scenario = ScenarioConfig(m=4, secret="random", bell_budget=2, seed=21)
        first = self.harness.run_extraction(scenario).log
        second = LockingHarnessWorkflow().run_extraction(scenario).log
        self.assertEqual(first.to_lines(), second.to_lines())

    def test_replay_from_text(self):
        log = self.harness.run_extraction(ScenarioConfig(m=4, secret=2, bell_budget=2, seed=4)).log
        verdict = self.harness.replay(EventLog.loads(log.dumps()))
        self.assertEqual(verdict, log.verdict)

    def test_replay_attack(self):
        log = self.harness.run_attack(ScenarioConfig(m=4, secret=1, coalition=[1, 2, 3], seed=2)).log
        self.assertEqual(self.harness.replay(log)["mode"], "attack")

    def test_tampered_log(self):
        log = self.harness.run_extraction(ScenarioConfig(m=4, secret=2, bell_budget=2, seed=4)).log
        last = log.records[-1]
        forged = last.model_copy(update={"verdict": {**last.verdict, "decoded": 0}})
        with self.assertRaises(CorruptLog):
            self.harness.replay(EventLog(records=log.records[:-1] + [forged]))

    def test_empty_log(self):
        with self.assertRaises(CorruptLog):
            self.harness.replay(EventLog())

    def test_unreadable_lines(self):
        with self.assertRaises(CorruptLog):
            EventLog.loads("not json\n")
        log = self.harness.run_distribution(ScenarioConfig(m=4, secret=0))[1]
        lines = log.to_lines()
        with self.assertRaises(CorruptLog):
            EventLog.from_lines([lines[1], lines[0]])

    def test_log_file_round_trip(self):
        log = self.harness.run_distribution(ScenarioConfig(m=4, secret=0))[1]
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.events")
            log.save(path)
            self.assertEqual(EventLog.load(path).to_lines(), log.to_lines())


class TestSweep(unittest.IsolatedAsyncioTestCase):
    async def test_sweep_all_secrets(self):
        harness = LockingHarnessWorkflow()
        reports = await harness.sweep_secrets(ScenarioConfig(m=4, bell_budget=2, seed=3))
        self.assertEqual([r.decoded for r in reports], list(range(6)))
        self.assertTrue(all(r.success for r in reports))

    async def test_sweep_subset(self):
        harness = LockingHarnessWorkflow()
        reports = await harness.sweep_secrets(ScenarioConfig(m=6, bell_budget=3), secrets=[7, 0])
        self.assertEqual([r.secret for r in reports], [7, 0])


class TestScenarioFile(unittest.TestCase):
    def test_load_scenario(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.cfg")
            with open(path, "w", encoding="utf-8") as f:
                f.write("[system]\nm=4\n[secret]\nvalue=3\n[coalition]\nmembers=234\n"
                        "[resources]\nbell_budget=2\n[rng]\nseed=5\n")
            scenario = load_scenario(path)
        self.assertEqual(scenario.m, 4)
        self.assertEqual(scenario.secret, 3)
        self.assertEqual(scenario.coalition, [2, 3, 4])
        self.assertEqual(scenario.bell_budget, 2)
        self.assertEqual(scenario.seed, 5)

    def test_bad_scenarios(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "bad.cfg")
            with open(path, "w", encoding="utf-8") as f:
                f.write("[system]\nm=2\n")
            with self.assertRaises(ConfigError):
                load_scenario(path)
            with open(path, "w", encoding="utf-8") as f:
                f.write("[secret]\nvalue=1\n")
            with self.assertRaises(ConfigError):
                load_scenario(path)
        with self.assertRaises(ConfigError):
            load_scenario("/nonexistent/run.cfg")


if __name__ == "__main__":
    unittest.main()
