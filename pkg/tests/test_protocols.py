import os
import sys
import tempfile
import unittest
from itertools import islice

sys.path.append(os.path.abspath(os.path.join(__file__, "../../")))

from lockutils.errors import LocalityError, ParseError, ShapeError
from lockutils.services.partitions import odd_canonical_partitions, pairings, parse_partition, singletons
from lockutils.services.protocols import (
    ProtocolLeaf,
    ProtocolNode,
    ProtocolRegistry,
    ProtocolTree,
    check_completeness,
    check_locality,
    dumps_protocol,
    evaluate,
    generate_global_protocol,
    generate_odd_protocol,
    generate_pairing_protocol,
    generate_restricted_protocol,
    load_protocol,
    loads_protocol,
    pair_parity_projectors,
    sample_run,
    save_protocol,
    triple_projectors,
    x_parity_finisher,
    z_support_finisher,
)
from lockutils.services.sets import StateSet, build_locked_set


def truncated_m4_tree(state_set: StateSet, last=None) -> ProtocolTree:
    """The {12|34} peel with the X-parity finisher replaced by `last` (default: a Z coin on party 1)."""
    if last is None:
        last = ProtocolNode(block=(1,), kind="zbasis",
                            children={"0": ProtocolLeaf(guess=0), "1": ProtocolLeaf(guess=1)})
    inner = ProtocolNode(
        block=(1, 2), kind="pairparity", projectors=pair_parity_projectors((1, 2)),
        children={"0": last, "1": z_support_finisher(state_set, [2, 3])},
    )
    root = ProtocolNode(
        block=(3, 4), kind="pairparity", projectors=pair_parity_projectors((3, 4)),
        children={"0": inner, "1": z_support_finisher(state_set, [4, 5])},
    )
    return ProtocolTree(partition=parse_partition("12|34"), root=root)


def ghz_pair(m: int) -> StateSet:
    zeros, ones = "0" * m, "1" * m
    return StateSet.from_terms(m, [((1, zeros), (1, ones)), ((1, zeros), (-1, ones))])


class TestMeasurements(unittest.TestCase):
    def test_projector_families_are_complete(self):
        self.assertTrue(check_completeness(pair_parity_projectors((1, 2))))
        self.assertTrue(check_completeness(triple_projectors((1, 2, 3))))
        self.assertFalse(check_completeness(pair_parity_projectors((1, 2))[:1]))

    def test_incomplete_node_rejected(self):
        with self.assertRaises(ValueError):
            ProtocolNode(block=(1, 2), kind="pairparity", projectors=pair_parity_projectors((1, 2))[:1])

    def test_bad_labels_rejected(self):
        with self.assertRaises(ValueError):
            ProtocolNode(block=(1, 2), kind="zbasis", children={"012": ProtocolLeaf(guess=0)})
        with self.assertRaises(ValueError):
            ProtocolNode(block=(1, 2), kind="pairparity", projectors=pair_parity_projectors((1, 2)),
                         children={"2": ProtocolLeaf(guess=0)})

    def test_x_parity_finisher_covers_all_outcomes(self):
        node = x_parity_finisher(4)
        self.assertEqual(len(node.children), 16)
        self.assertEqual(node.children["0000"].guess, 0)
        self.assertEqual(node.children["0001"].guess, 1)

    def test_x_parity_finisher_alone_splits_ghz_pair(self):
        for m in range(2, 13):
            state_set = ghz_pair(m)
            tree = ProtocolTree(partition=singletons(m), root=x_parity_finisher(m))
            report = evaluate(state_set, tree, max_workers=1)
            self.assertTrue(report.perfect, f"m={m}")
            self.assertTrue(report.complete)

    def test_z_support_finisher_alone_splits_disjoint_states(self):
        for m in (4, 6, 8):
            state_set = build_locked_set(m)
            supports = [set(s.nonzero_support()) for s in state_set.states]
            for i in range(state_set.size):
                for j in range(i + 1, state_set.size):
                    if supports[i] & supports[j]:
                        continue
                    tree = ProtocolTree(partition=singletons(m), root=z_support_finisher(state_set, [i, j]))
                    report = evaluate(state_set, tree, max_workers=1)
                    self.assertAlmostEqual(report.success[i], 1.0, delta=1e-9, msg=f"m={m} ({i},{j})")
                    self.assertAlmostEqual(report.success[j], 1.0, delta=1e-9, msg=f"m={m} ({i},{j})")

    def test_z_support_finisher_rejects_shared_support(self):
        with self.assertRaises(ShapeError):
            z_support_finisher(build_locked_set(4), [0, 1])


class TestPairingProtocols(unittest.TestCase):
    def test_every_pairing_is_perfect(self):
        for m in (4, 6, 8, 10):
            state_set = build_locked_set(m)
            for partition in pairings(m):
                report = evaluate(state_set, generate_pairing_protocol(state_set, partition), max_workers=1)
                self.assertTrue(report.perfect, f"m={m} {partition}")
                self.assertTrue(report.complete)
                self.assertFalse(report.derived)
                for value in report.success:
                    self.assertAlmostEqual(value, 1.0, delta=1e-9)

    def test_custom_peel_order(self):
        state_set = build_locked_set(6)
        partition = parse_partition("12|34|56")
        tree = generate_pairing_protocol(state_set, partition, order=[(3, 4), (1, 2), (5, 6)])
        self.assertTrue(evaluate(state_set, tree).perfect)
        with self.assertRaises(ShapeError):
            generate_pairing_protocol(state_set, partition, order=[(1, 2), (3, 4)])

    def test_shape_errors(self):
        state_set = build_locked_set(4)
        with self.assertRaises(ShapeError):
            generate_pairing_protocol(state_set, parse_partition("123|4"))
        custom = StateSet.from_terms(4, [((1, "0000"),), ((1, "1111"),)])
        with self.assertRaises(ShapeError):
            generate_pairing_protocol(custom, parse_partition("12|34"))

    def test_depth(self):
        tree = generate_pairing_protocol(build_locked_set(4), parse_partition("12|34"))
        self.assertEqual(tree.depth(), 3)


class TestOddProtocols(unittest.TestCase):
    def test_odd_canonical_partitions_are_perfect(self):
        for m, limit in ((5, None), (7, None), (9, 30)):
            state_set = build_locked_set(m)
            for partition in islice(odd_canonical_partitions(m), limit):
                tree = generate_odd_protocol(state_set, partition)
                report = evaluate(state_set, tree, max_workers=1)
                self.assertTrue(report.perfect, f"m={m} {partition}")
                self.assertTrue(report.derived)

    def test_odd_shape_error(self):
        with self.assertRaises(ShapeError):
            generate_odd_protocol(build_locked_set(5), parse_partition("1|2345"))


class TestOtherProtocols(unittest.TestCase):
    def test_global_protocol_is_perfect(self):
        for m in (3, 4, 5):
            state_set = build_locked_set(m)
            tree = generate_global_protocol(state_set)
            self.assertEqual(len(tree.partition), 1)
            self.assertTrue(evaluate(state_set, tree).perfect)

    def test_restricted_protocol_loses_against_coalition(self):
        state_set = build_locked_set(4)
        tree = generate_restricted_protocol(state_set, parse_partition("1|234"))
        report = evaluate(state_set, tree)
        self.assertTrue(report.complete)
        self.assertTrue(report.derived)
        self.assertLess(report.worst_case, 1.0)

    def test_restricted_protocol_on_pairing_is_perfect(self):
        state_set = build_locked_set(6)
        report = evaluate(state_set, generate_restricted_protocol(state_set, parse_partition("12|34|56")))
        self.assertTrue(report.perfect)

    def test_truncated_tree_halves_the_ghz_pair(self):
        state_set = build_locked_set(4)
        report = evaluate(state_set, truncated_m4_tree(state_set))
        expected = [0.5, 0.5, 1.0, 1.0, 1.0, 1.0]
        for got, want in zip(report.success, expected):
            self.assertAlmostEqual(got, want, delta=1e-9)
        self.assertTrue(report.complete)
        self.assertFalse(report.perfect)
        self.assertAlmostEqual(report.worst_case, 0.5, delta=1e-9)

    def test_abstain_leaves_are_scored(self):
        state_set = build_locked_set(4)
        report = evaluate(state_set, truncated_m4_tree(state_set, last=ProtocolLeaf()))
        for got, want in zip(report.success, [0.0, 0.0, 1.0, 1.0, 1.0, 1.0]):
            self.assertAlmostEqual(got, want, delta=1e-9)
        for got, want in zip(report.abstain, [1.0, 1.0, 0.0, 0.0, 0.0, 0.0]):
            self.assertAlmostEqual(got, want, delta=1e-9)
        self.assertFalse(report.complete)

    def test_single_leaf_tree(self):
        state_set = build_locked_set(4)
        tree = ProtocolTree(partition=singletons(4), root=ProtocolLeaf(guess=0))
        self.assertEqual(evaluate(state_set, tree).success, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0])

    def test_locality_violation(self):
        state_set = build_locked_set(4)
        tree = generate_pairing_protocol(state_set, parse_partition("12|34"))
        tampered = tree.model_copy(update={"partition": parse_partition("1|2|34")})
        with self.assertRaises(LocalityError):
            check_locality(tampered)
        with self.assertRaises(LocalityError):
            evaluate(state_set, tampered)


class TestSampling(unittest.TestCase):
    def test_sample_run_is_deterministic_and_correct(self):
        state_set = build_locked_set(6)
        tree = generate_pairing_protocol(state_set, parse_partition("14|25|36"))
        for index in range(state_set.size):
            first = sample_run(state_set, tree, index, seed=5)
            second = sample_run(state_set, tree, index, seed=5)
            self.assertEqual(first, second)
            self.assertTrue(first.correct)
            self.assertGreaterEqual(len(first.steps), 1)

    def test_thousand_runs_per_state_all_correct(self):
        state_set = build_locked_set(4)
        tree = generate_pairing_protocol(state_set, parse_partition("12|34"))
        for index in range(state_set.size):
            wrong = [seed for seed in range(1000) if not sample_run(state_set, tree, index, seed).correct]
            self.assertEqual(wrong, [], f"state {index}")

    def test_truncated_tree_samples_near_half(self):
        state_set = build_locked_set(4)
        tree = truncated_m4_tree(state_set)
        runs = 1000
        hits = sum(sample_run(state_set, tree, 0, seed).correct for seed in range(runs))
        # four standard deviations of a fair binomial
        self.assertLess(abs(hits / runs - 0.5), 4 * (0.25 / runs) ** 0.5)

    def test_sample_run_bad_index(self):
        state_set = build_locked_set(4)
        tree = generate_pairing_protocol(state_set, parse_partition("12|34"))
        with self.assertRaises(ShapeError):
            sample_run(state_set, tree, 6, seed=0)


class TestRegistry(unittest.TestCase):
    def test_m4_entries(self):
        registry = ProtocolRegistry(build_locked_set(4))
        entries = [str(p) for p, _ in registry.entries()]
        self.assertEqual(entries, ["12|34", "13|24", "14|23", "1234"])
        witness, _ = registry.find_refinement(parse_partition("1234"))
        self.assertEqual(str(witness), "12|34")
        self.assertIsNone(registry.find_refinement(parse_partition("12|3|4")))

    def test_custom_set_gets_global_protocol_only(self):
        custom = StateSet.from_terms(4, [((1, "0000"),), ((1, "1111"),)])
        self.assertEqual([str(p) for p in ProtocolRegistry(custom).candidates()], ["1234"])


class TestProtocolCodec(unittest.TestCase):
    def test_round_trip_pairing(self):
        state_set = build_locked_set(6)
        tree = generate_pairing_protocol(state_set, parse_partition("12|34|56"))
        text = dumps_protocol(tree)
        loaded = loads_protocol(text)
        self.assertEqual(dumps_protocol(loaded), text)
        self.assertTrue(evaluate(state_set, loaded).perfect)

    def test_round_trip_global_via_file(self):
        state_set = build_locked_set(3)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "global.proto")
            save_protocol(generate_global_protocol(state_set), path)
            loaded = load_protocol(path)
        self.assertTrue(evaluate(state_set, loaded).perfect)

    def test_derived_flag_survives(self):
        tree = generate_odd_protocol(build_locked_set(5), parse_partition("123|45"))
        self.assertTrue(loads_protocol(dumps_protocol(tree)).derived)

    def test_parse_errors(self):
        with self.assertRaises(ParseError):
            loads_protocol("node block=1,2 measure=pairparity\n")
        with self.assertRaises(ParseError) as ctx:
            loads_protocol("partition=12|34\nnode block=1,2 measure=bogus\n")
        self.assertEqual(ctx.exception.line, 2)
        with self.assertRaises(ParseError):
            loads_protocol("partition=12|34\nnode block=1,2,3 measure=pairparity\n")
        with self.assertRaises(ParseError):
            loads_protocol("partition=12|34\n")


if __name__ == "__main__":
    unittest.main()
