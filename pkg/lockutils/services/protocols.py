import os
import re
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.config import AUDIT, NUMERICS
from lockutils.errors import LocalityError, ParseError, ShapeError
from lockutils.services.partitions import (
    Block,
    Partition,
    make_partition,
    odd_canonical_partitions,
    pairings,
    parse_partition,
    refines,
)
from lockutils.services.qstate import (
    LocalProjector,
    ProductObservable,
    product_outcomes,
    project_amplitudes,
)
from lockutils.services.sets import StateSet
from lockutils.utils import get_logger

logger = get_logger(__name__)

MeasureKind = Literal["pairparity", "triple4", "zbasis", "xbasis", "custom"]
_PRODUCT_KINDS = {"zbasis": "Z", "xbasis": "X"}


class ProtocolLeaf(BaseModel):
    """A final guess; guess=None means abstain."""
    model_config = ConfigDict(frozen=True)

    guess: Optional[int] = None


class ProtocolNode(BaseModel):
    """
    One measurement of an LOCC protocol.

    Attributes:
        block (Tuple[int, ...]): Parties acting jointly (product kinds: each party alone).
        kind (MeasureKind): pairparity | triple4 | zbasis | xbasis | custom.
        projectors (Tuple[LocalProjector, ...]): Outcome i is projectors[i] (projective kinds).
        children (Dict[str, Union[ProtocolNode, ProtocolLeaf]]): Outcome label -> subtree.
            Missing labels abstain.
    """
    model_config = ConfigDict(frozen=True)

    block: Tuple[int, ...]
    kind: MeasureKind
    projectors: Tuple[LocalProjector, ...] = ()
    children: Dict[str, Union["ProtocolNode", ProtocolLeaf]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _well_formed(self):
        if self.is_product:
            if self.projectors:
                raise ValueError(f"{self.kind} nodes carry no projectors")
            valid = lambda label: len(label) == len(self.block) and set(label) <= {"0", "1"}
        else:
            if not self.projectors:
                raise ValueError(f"{self.kind} node needs projectors")
            if any(p.block != self.block for p in self.projectors):
                raise ValueError("every projector must act on the node block")
            if not check_completeness(self.projectors):
                raise ValueError(f"projectors on {self.block} do not sum to the identity")
            valid = lambda label: label.isdigit() and int(label) < len(self.projectors)
        bad = [label for label in self.children if not valid(label)]
        if bad:
            raise ValueError(f"invalid outcome labels {bad[:3]} for a {self.kind} node")
        return self

    @property
    def is_product(self) -> bool:
        return self.kind in _PRODUCT_KINDS

    @property
    def observable(self) -> Optional[ProductObservable]:
        if not self.is_product:
            return None
        return ProductObservable.uniform(self.block, _PRODUCT_KINDS[self.kind])


ProtocolNode.model_rebuild()

Subtree = Union[ProtocolNode, ProtocolLeaf]


class ProtocolTree(BaseModel):
    """
    An executable LOCC discrimination strategy.

    Attributes:
        partition (Partition): Declared locality structure.
        root (Subtree): First measurement (or a bare guess).
        derived (bool): True for constructions without a published proof (odd m).
    """
    model_config = ConfigDict(frozen=True)

    partition: Partition
    root: Subtree
    derived: bool = False

    def nodes(self) -> Iterator[ProtocolNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, ProtocolNode):
                yield node
                stack.extend(node.children.values())

    def depth(self) -> int:
        def walk(node: Subtree) -> int:
            if isinstance(node, ProtocolLeaf):
                return 0
            return 1 + max((walk(child) for child in node.children.values()), default=0)
        return walk(self.root)


class EvaluationReport(BaseModel):
    """
    Exact outcome of running a protocol on every state of a set.

    Attributes:
        success (List[float]): success[s] = probability of guessing s when the state is s.
        abstain (List[float]): Probability of ending on an abstain leaf, per state.
        worst_case (float): min(success).
        average (float): Mean success under a uniform prior.
        branch_count (int): Leaves reached with nonzero probability, summed over states.
        derived (bool): Copied from the protocol.
    """
    success: List[float]
    abstain: List[float]
    worst_case: float
    average: float
    branch_count: int
    derived: bool = False

    @property
    def perfect(self) -> bool:
        return self.worst_case >= 1.0 - NUMERICS.prob_tol

    @property
    def complete(self) -> bool:
        return all(a < NUMERICS.prob_tol for a in self.abstain)


class TranscriptStep(BaseModel):
    block: Tuple[int, ...]
    kind: MeasureKind
    outcome: str
    probability: float


class Transcript(BaseModel):
    true_state: int
    seed: int
    steps: List[TranscriptStep]
    guess: Optional[int]

    @property
    def correct(self) -> bool:
        return self.guess == self.true_state


def check_completeness(projectors: Sequence[LocalProjector]) -> bool:
    """True when the projectors sum to the identity of their block within 1e-9."""
    dim = projectors[0].basis_vectors.shape[1]
    total = np.zeros((dim, dim), dtype=complex)
    for projector in projectors:
        vectors = projector.basis_vectors
        total += vectors.T @ vectors.conj()
    return bool(np.allclose(total, np.eye(dim), atol=NUMERICS.prob_tol))


def check_locality(tree: ProtocolTree) -> None:
    """
    Raises:
        LocalityError: If a joint measurement spans two blocks of the declared partition.
    """
    m = tree.partition.num_parties
    for node in tree.nodes():
        if any(not 1 <= p <= m for p in node.block):
            raise LocalityError(f"node acts on {node.block}, outside 1..{m}")
        if node.is_product:
            continue
        if not tree.partition.contains_block(node.block):
            logger.error("Non-local measurement", extra={"block": node.block, "partition": str(tree.partition)})
            raise LocalityError(f"measurement on {node.block} spans blocks of {tree.partition}")


# --- measurement and finisher builders -------------------------------------------------

def pair_parity_projectors(block: Block) -> Tuple[LocalProjector, ...]:
    return (
        LocalProjector.span(block, ["00", "11"]),
        LocalProjector.span(block, ["01", "10"]),
    )


def triple_projectors(block: Block) -> Tuple[LocalProjector, ...]:
    # outcome 0: no flip inside the triple; outcome i: flip at the i-th member
    return (
        LocalProjector.span(block, ["000", "111"]),
        LocalProjector.span(block, ["100", "011"]),
        LocalProjector.span(block, ["010", "101"]),
        LocalProjector.span(block, ["001", "110"]),
    )


def z_support_finisher(state_set: StateSet, candidates: Sequence[int]) -> ProtocolNode:
    """Every party measures Z; each candidate's support bitstrings decode to it."""
    children: Dict[str, Subtree] = {}
    for index in candidates:
        for bits in state_set.states[index].nonzero_support():
            if bits in children:
                raise ShapeError(f"candidates {tuple(candidates)} share support {bits}")
            children[bits] = ProtocolLeaf(guess=index)
    block = tuple(range(1, state_set.num_qubits + 1))
    return ProtocolNode(block=block, kind="zbasis", children=children)


@lru_cache(maxsize=None)
def x_parity_finisher(m: int, plus: int = 0, minus: int = 1) -> ProtocolNode:
    """Every party measures X; even parity decodes |0..0>+|1..1>, odd parity the minus state."""
    children = {
        format(i, f"0{m}b"): ProtocolLeaf(guess=plus if bin(i).count("1") % 2 == 0 else minus)
        for i in range(2 ** m)
    }
    return ProtocolNode(block=tuple(range(1, m + 1)), kind="xbasis", children=children)


def _require_locked_set(state_set: StateSet) -> None:
    if state_set.custom or state_set.size != state_set.num_qubits + 2:
        raise ShapeError("peeling protocols need the built-in locked set")


def _flip_state(party: int) -> int:
    return 1 + party


def _peel(state_set: StateSet, steps: Sequence[Block]) -> Subtree:
    """Peels the sub-blocks in the given order, finishing with the X-parity finisher."""
    subtree: Subtree = x_parity_finisher(state_set.num_qubits)
    for sub in reversed(steps):
        if len(sub) == 2:
            subtree = ProtocolNode(
                block=sub,
                kind="pairparity",
                projectors=pair_parity_projectors(sub),
                children={
                    "0": subtree,
                    "1": z_support_finisher(state_set, [_flip_state(p) for p in sub]),
                },
            )
        elif len(sub) == 3:
            children: Dict[str, Subtree] = {"0": subtree}
            for i, party in enumerate(sub, start=1):
                children[str(i)] = ProtocolLeaf(guess=_flip_state(party))
            subtree = ProtocolNode(block=sub, kind="triple4", projectors=triple_projectors(sub), children=children)
        else:
            raise ShapeError(f"cannot peel a block of size {len(sub)}")
    return subtree


def _check_order(partition: Partition, order: Optional[Sequence[Sequence[int]]], default: List[Block]) -> List[Block]:
    if order is None:
        return default
    steps = [tuple(sorted(block)) for block in order]
    if sorted(steps) != sorted(partition.blocks):
        raise ShapeError(f"peel order {steps} is not a permutation of the blocks of {partition}")
    return steps


def generate_pairing_protocol(state_set: StateSet, partition: Partition,
                              order: Optional[Sequence[Sequence[int]]] = None) -> ProtocolTree:
    """
    Peeling protocol for a pairing: pair blocks peel last to first with the
    {span(00,11), span(01,10)} measurement; an odd outcome goes to the Z-support
    finisher, the final even outcome to the X-parity finisher.

    Raises:
        ShapeError: If the partition is not a pairing or the set is not the built-in one.
    """
    _require_locked_set(state_set)
    m = state_set.num_qubits
    if partition.num_parties != m or m % 2 or any(len(b) != 2 for b in partition.blocks):
        raise ShapeError(f"{partition} is not a pairing of {m} parties")
    steps = _check_order(partition, order, list(reversed(partition.blocks)))
    return ProtocolTree(partition=partition, root=_peel(state_set, steps))


def generate_odd_protocol(state_set: StateSet, partition: Partition,
                          order: Optional[Sequence[Sequence[int]]] = None) -> ProtocolTree:
    """
    Odd-m protocol: the triple block is measured first with the four-outcome
    measurement; a nonzero outcome names the flipped party, outcome 0 continues
    with the pair peel. Marked as a derived construction.
    """
    _require_locked_set(state_set)
    m = state_set.num_qubits
    triples = [b for b in partition.blocks if len(b) == 3]
    pairs = [b for b in partition.blocks if len(b) == 2]
    if partition.num_parties != m or m % 2 == 0 or m < 5 or len(triples) != 1 or len(pairs) != (m - 3) // 2:
        raise ShapeError(f"{partition} is not pairs plus one triple over {m} parties")
    steps = _check_order(partition, order, triples + list(reversed(pairs)))
    return ProtocolTree(partition=partition, root=_peel(state_set, steps), derived=True)


def generate_restricted_protocol(state_set: StateSet, partition: Partition) -> ProtocolTree:
    """
    Best-effort peel restricted to an arbitrary partition: every block is carved into
    pairs (plus one triple when its size is odd), singletons only join the finishers.
    """
    _require_locked_set(state_set)
    triples, pairs = [], []
    for block in partition.blocks:
        members = list(block)
        if len(members) >= 3 and len(members) % 2:
            triples.append(tuple(members[-3:]))
            members = members[:-3]
        pairs.extend(tuple(members[i:i + 2]) for i in range(0, len(members) - 1, 2))
    steps = triples + sorted(pairs, reverse=True)
    derived = bool(triples)
    return ProtocolTree(partition=partition, root=_peel(state_set, steps), derived=derived)


def generate_global_protocol(state_set: StateSet) -> ProtocolTree:
    """One joint measurement over all parties: a rank-1 projector per state, the rest abstains."""
    m = state_set.num_qubits
    matrix = np.array([s.amplitudes for s in state_set.states])
    _, _, vh = np.linalg.svd(matrix)
    projectors = [LocalProjector(block=tuple(range(1, m + 1)), basis_vectors=s.amplitudes)
                  for s in state_set.states]
    if state_set.size < 2 ** m:
        projectors.append(LocalProjector(block=tuple(range(1, m + 1)), basis_vectors=vh[state_set.size:]))
    children = {str(i): ProtocolLeaf(guess=i) for i in range(state_set.size)}
    root = ProtocolNode(block=tuple(range(1, m + 1)), kind="custom", projectors=tuple(projectors), children=children)
    return ProtocolTree(partition=make_partition(m, [range(1, m + 1)]), root=root)


# --- exact evaluation and sampling ------------------------------------------------------

def _outcomes(node: ProtocolNode, amplitudes: np.ndarray, m: int) -> List[Tuple[str, float, Optional[np.ndarray]]]:
    """(label, probability, post amplitudes) for each outcome above the prune threshold."""
    need_post = any(isinstance(child, ProtocolNode) for child in node.children.values())
    if node.is_product:
        return [
            (label, probability, post)
            for label, probability, post in product_outcomes(amplitudes, m, node.observable, need_post=need_post)
        ]
    results = []
    for index, projector in enumerate(node.projectors):
        label = str(index)
        probability, post = project_amplitudes(
            amplitudes, m, node.block, projector.basis_vectors,
            need_post=isinstance(node.children.get(label), ProtocolNode),
        )
        if probability >= NUMERICS.prune_threshold:
            results.append((label, probability, post))
    return results


def _walk(node: Subtree, amplitudes: np.ndarray, m: int, weight: float, tally: Dict) -> None:
    if isinstance(node, ProtocolLeaf):
        tally["guesses"][node.guess] = tally["guesses"].get(node.guess, 0.0) + weight
        tally["branches"] += 1
        return
    for label, probability, post in _outcomes(node, amplitudes, m):
        child = node.children.get(label, ProtocolLeaf())
        _walk(child, post, m, weight * probability, tally)


def _score_state(state_set: StateSet, tree: ProtocolTree, index: int) -> Tuple[float, float, int]:
    tally = {"guesses": {}, "branches": 0}
    _walk(tree.root, state_set.states[index].amplitudes, state_set.num_qubits, 1.0, tally)
    return tally["guesses"].get(index, 0.0), tally["guesses"].get(None, 0.0), tally["branches"]


def evaluate(state_set: StateSet, tree: ProtocolTree, max_workers: Optional[int] = None) -> EvaluationReport:
    """
    Exact branch enumeration of the protocol on every state of the set.

    Raises:
        LocalityError: If a node acts across blocks of the declared partition.
    """
    if tree.partition.num_parties != state_set.num_qubits:
        raise LocalityError(f"protocol declared over {tree.partition.num_parties} parties, set has {state_set.num_qubits}")
    check_locality(tree)
    with ThreadPoolExecutor(max_workers=max_workers or AUDIT.max_workers) as executor:
        scores = list(executor.map(lambda i: _score_state(state_set, tree, i), range(state_set.size)))
    success = [min(1.0, s) for s, _, _ in scores]
    report = EvaluationReport(
        success=success,
        abstain=[a for _, a, _ in scores],
        worst_case=min(success),
        average=float(np.mean(success)),
        branch_count=sum(b for _, _, b in scores),
        derived=tree.derived,
    )
    logger.info("Evaluated protocol", extra={"partition": str(tree.partition), "worst_case": report.worst_case})
    return report


def sample_run(state_set: StateSet, tree: ProtocolTree, true_state_index: int, seed: int) -> Transcript:
    """Draws one branch with its exact conditional probabilities; deterministic per seed."""
    check_locality(tree)
    if not 0 <= true_state_index < state_set.size:
        raise ShapeError(f"state index {true_state_index} outside 0..{state_set.size - 1}")
    rng = np.random.default_rng(seed)
    m = state_set.num_qubits
    amplitudes = state_set.states[true_state_index].amplitudes
    node: Subtree = tree.root
    steps: List[TranscriptStep] = []
    while isinstance(node, ProtocolNode):
        outcomes = _outcomes(node, amplitudes, m)
        probabilities = np.array([p for _, p, _ in outcomes])
        pick = int(rng.choice(len(outcomes), p=probabilities / probabilities.sum()))
        label, probability, post = outcomes[pick]
        steps.append(TranscriptStep(block=node.block, kind=node.kind, outcome=label, probability=probability))
        node = node.children.get(label, ProtocolLeaf())
        amplitudes = post
    return Transcript(true_state=true_state_index, seed=seed, steps=steps, guess=node.guess)


# --- registry of verified protocols -------------------------------------------------------

class ProtocolRegistry:
    """
    Protocol-verified OPEN partitions of a set, verified lazily and memoised.

    Candidates for the built-in set: every pairing (even m) or every pairs-plus-triple
    partition (odd m >= 5), then the single-block partition with the global protocol.
    Custom sets only get the global protocol.
    """
    def __init__(self, state_set: StateSet):
        self.state_set = state_set
        self._verified: Dict[Partition, Optional[ProtocolTree]] = {}

    def candidates(self) -> Iterator[Partition]:
        m = self.state_set.num_qubits
        if not self.state_set.custom:
            if m % 2 == 0 and m >= 2:
                yield from pairings(m)
            elif m >= 5:
                yield from odd_canonical_partitions(m)
        yield make_partition(m, [range(1, m + 1)])

    def _generate(self, partition: Partition) -> ProtocolTree:
        if len(partition) == 1:
            return generate_global_protocol(self.state_set)
        if self.state_set.num_qubits % 2 == 0:
            return generate_pairing_protocol(self.state_set, partition)
        return generate_odd_protocol(self.state_set, partition)

    def get(self, partition: Partition) -> Optional[ProtocolTree]:
        """The verified protocol for a candidate partition, None if it failed verification."""
        if partition not in self._verified:
            tree = self._generate(partition)
            report = evaluate(self.state_set, tree, max_workers=1)
            self._verified[partition] = tree if report.perfect else None
            if not report.perfect:
                logger.warning("Candidate protocol failed verification", extra={"partition": str(partition)})
        return self._verified[partition]

    def verify_all(self) -> Dict[Partition, ProtocolTree]:
        """Sequential build phase; afterwards lookups only read the memo."""
        return {p: tree for p in self.candidates() if (tree := self.get(p)) is not None}

    def entries(self) -> Iterator[Tuple[Partition, ProtocolTree]]:
        for partition in self.candidates():
            tree = self.get(partition)
            if tree is not None:
                yield partition, tree

    def find_refinement(self, partition: Partition) -> Optional[Tuple[Partition, ProtocolTree]]:
        """A verified entry that the given partition coarsens, if any."""
        for candidate in self.candidates():
            if refines(candidate, partition):
                tree = self.get(candidate)
                if tree is not None:
                    return candidate, tree
        return None


# --- protocol file codec --------------------------------------------------------------------

def _format_vector(vector: np.ndarray) -> str:
    return ",".join(repr(complex(z)) for z in vector)


def _node_line(node: ProtocolNode) -> str:
    block = ",".join(str(p) for p in node.block)
    if node.kind == "custom":
        payload = ";".join("/".join(_format_vector(v) for v in p.basis_vectors) for p in node.projectors)
        return f"node block={block} measure=custom({payload})"
    return f"node block={block} measure={node.kind}"


def _leaf_line(leaf: ProtocolLeaf) -> str:
    return f"guess={'abstain' if leaf.guess is None else leaf.guess}"


def dumps_protocol(tree: ProtocolTree) -> str:
    lines = [
        "# LOCC protocol tree; children are indented under 'on <label>:'",
        f"partition={tree.partition}",
        f"derived={'true' if tree.derived else 'false'}",
    ]

    def emit(node: Subtree, depth: int, prefix: str) -> None:
        indent = "  " * depth
        if isinstance(node, ProtocolLeaf):
            lines.append(f"{indent}{prefix}{_leaf_line(node)}")
            return
        lines.append(f"{indent}{prefix}{_node_line(node)}")
        for label in sorted(node.children):
            emit(node.children[label], depth + 1, f"on {label}: ")

    emit(tree.root, 0, "")
    return "\n".join(lines) + "\n"


def save_protocol(tree: ProtocolTree, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_protocol(tree))
    logger.info("Saved protocol", extra={"path": path, "partition": str(tree.partition)})


_NODE = re.compile(r"^node block=([\d,]+) measure=(pairparity|triple4|zbasis|xbasis|custom\((.*)\))$")
_LEAF = re.compile(r"^guess=(abstain|\d+)$")
_CHILD = re.compile(r"^on ([0-9]+): (.*)$")


def _parse_custom(block: Block, payload: str, lineno: int) -> Tuple[LocalProjector, ...]:
    projectors = []
    try:
        for chunk in payload.split(";"):
            rows = [[complex(tok) for tok in vec.split(",")] for vec in chunk.split("/")]
            projectors.append(LocalProjector(block=block, basis_vectors=np.array(rows)))
    except ValueError as e:
        raise ParseError(f"invalid custom measurement: {e}", lineno)
    return tuple(projectors)


def loads_protocol(text: str) -> ProtocolTree:
    """
    Parses the protocol format written by dumps_protocol.

    Raises:
        ParseError: With the offending line number.
    """
    header: Dict[str, str] = {}
    body: List[Tuple[int, int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        stripped = raw.lstrip(" ")
        indent = len(raw) - len(stripped)
        if not body and "=" in stripped and stripped.split("=", 1)[0] in ("partition", "derived"):
            key, value = stripped.split("=", 1)
            header[key] = value.strip()
            continue
        if indent % 2:
            raise ParseError("indentation must be a multiple of two spaces", lineno)
        body.append((lineno, indent // 2, stripped.rstrip()))

    if "partition" not in header:
        raise ParseError("missing 'partition=' header")
    partition = parse_partition(header["partition"])
    if not body:
        raise ParseError("protocol has no root")

    position = 0

    def parse_subtree(depth: int, text_: str, lineno: int) -> Subtree:
        nonlocal position
        leaf = _LEAF.match(text_)
        if leaf:
            value = leaf.group(1)
            return ProtocolLeaf(guess=None if value == "abstain" else int(value))
        match = _NODE.match(text_)
        if not match:
            raise ParseError(f"expected 'node ...' or 'guess=...', got {text_!r}", lineno)
        try:
            block = tuple(int(p) for p in match.group(1).split(","))
        except ValueError:
            raise ParseError(f"invalid block {match.group(1)!r}", lineno)
        kind = match.group(2)
        projectors: Tuple[LocalProjector, ...] = ()
        if kind.startswith("custom"):
            projectors = _parse_custom(block, match.group(3), lineno)
            kind = "custom"
        elif kind == "pairparity":
            projectors = pair_parity_projectors(block) if len(block) == 2 else None
        elif kind == "triple4":
            projectors = triple_projectors(block) if len(block) == 3 else None
        if projectors is None:
            raise ParseError(f"{kind} does not fit a block of size {len(block)}", lineno)

        children: Dict[str, Subtree] = {}
        while position < len(body) and body[position][1] == depth + 1:
            child_lineno, _, child_text = body[position]
            child = _CHILD.match(child_text)
            if not child:
                raise ParseError(f"expected 'on <label>: ...', got {child_text!r}", child_lineno)
            position += 1
            label = child.group(1)
            if label in children:
                raise ParseError(f"duplicate outcome label {label}", child_lineno)
            children[label] = parse_subtree(depth + 1, child.group(2), child_lineno)
        if position < len(body) and body[position][1] > depth + 1:
            raise ParseError("unexpected indentation", body[position][0])
        try:
            return ProtocolNode(block=block, kind=kind, projectors=projectors, children=children)
        except ValueError as e:
            raise ParseError(str(e), lineno)

    lineno, depth, root_text = body[0]
    if depth != 0:
        raise ParseError("root must not be indented", lineno)
    position = 1
    root = parse_subtree(0, root_text, lineno)
    if position != len(body):
        raise ParseError("trailing lines after the root subtree", body[position][0])
    derived = header.get("derived", "false").lower() == "true"
    return ProtocolTree(partition=partition, root=root, derived=derived)


def load_protocol(path: str) -> ProtocolTree:
    if not os.path.exists(path):
        logger.error("Protocol file not found: %s", path)
        raise FileNotFoundError(f"Protocol file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return loads_protocol(f.read())
