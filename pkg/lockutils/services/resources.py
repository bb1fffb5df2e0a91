from typing import Dict, Iterator, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from config.config import AUDIT
from lockutils.errors import BudgetExceeded, DomainError, NoOpenPartition
from lockutils.services.certify import BellTripleCertificate, Certifier, LockStatus
from lockutils.services.partitions import (
    Partition,
    blocks_count,
    enumerate_partitions,
    make_partition,
    merge_parties,
    singletons,
)
from lockutils.services.protocols import ProtocolRegistry
from lockutils.services.sets import StateSet, build_locked_set
from lockutils.utils import get_logger

logger = get_logger(__name__)

Provenance = Literal["S1", "S2-baseline", "custom"]


class Profile:
    """
    Lock status of every partition for one set (or for the everywhere-locked baseline).

    S1 and custom profiles delegate to a Certifier with a lazily verified protocol registry;
    the S2 baseline is axiomatic: only the single-block partition is OPEN.
    """
    def __init__(self, m: int, provenance: Provenance, certifier: Optional[Certifier] = None):
        self.m = m
        self.provenance = provenance
        self.certifier = certifier
        self._memo: Dict[Partition, LockStatus] = {}

    def status(self, partition: Partition) -> LockStatus:
        if partition not in self._memo:
            self._memo[partition] = self._compute(partition)
        return self._memo[partition]

    def _compute(self, partition: Partition) -> LockStatus:
        if self.certifier is not None:
            return self.certifier.lock_status(partition)
        if len(partition) == 1:
            return LockStatus(status="OPEN", partition=partition, witness=partition)
        return LockStatus(status="LOCKED", partition=partition)

    def open_candidates(self) -> Iterator[Partition]:
        """
        Minimal certified-OPEN partitions, most blocks first; every OPEN partition
        coarsens one of them. Each is verified only when reached.
        """
        if self.certifier is None:
            yield make_partition(self.m, [range(1, self.m + 1)])
            return
        for partition, _ in self.certifier.registry.entries():
            yield partition

    def certificate(self, partition: Partition) -> Optional[BellTripleCertificate]:
        return self.status(partition).certificate


class TeleportMove(BaseModel):
    source: int
    dest: int


class ExtractionPlan(BaseModel):
    """
    Teleport merges turning the all-singletons partition into the target.

    Attributes:
        target (Partition): Partition reached after every move.
        moves (List[TeleportMove]): Ordered by source party.
        bell_cost (int): One Bell pair per move, m - |target|.
    """
    target: Partition
    moves: List[TeleportMove]
    bell_cost: int

    @model_validator(mode="after")
    def _replays_to_target(self):
        if replay_moves(self.target.num_parties, self.moves) != self.target:
            raise ValueError("moves do not reach the target partition")
        if self.bell_cost != len(self.moves) or self.bell_cost != self.target.num_parties - len(self.target):
            raise ValueError("bell_cost must equal the number of moves and m - |target|")
        return self


class Ledger(BaseModel):
    """Bell pairs granted to and consumed by one run."""
    granted: int = Field(0, ge=0)
    consumed: int = Field(0, ge=0)

    def grant(self, count: int) -> None:
        self.granted += count

    def consume(self, count: int = 1) -> None:
        if self.consumed + count > self.granted:
            logger.error("Ledger overdraft", extra={"granted": self.granted, "consumed": self.consumed})
            raise BudgetExceeded(f"consuming {count} pair(s) exceeds the {self.granted} granted")
        self.consumed += count

    @property
    def remaining(self) -> int:
        return self.granted - self.consumed


class Verdict(BaseModel):
    """
    Whether a Bell-pair budget allows complete extraction.

    Attributes:
        kind: SUFFICIENT (with plan), INSUFFICIENT (every reachable partition LOCKED),
            UNDETERMINED (an UNKNOWN partition is reachable, no OPEN one is).
        budget (int): Bell pairs available.
        min_blocks (int): Every partition reachable with the budget has at least this many blocks.
        pigeonhole (bool): INSUFFICIENT follows from min_blocks > m/2 and certified singleton cuts.
        plan (Optional[ExtractionPlan]): Plan when SUFFICIENT.
        best_reachable (Optional[Partition]): The plan prefix the budget can afford.
        certificate (Optional[BellTripleCertificate]): LOCKED certificate of best_reachable.
    """
    kind: Literal["SUFFICIENT", "INSUFFICIENT", "UNDETERMINED"]
    budget: int
    min_blocks: int
    pigeonhole: bool = False
    plan: Optional[ExtractionPlan] = None
    best_reachable: Optional[Partition] = None
    certificate: Optional[BellTripleCertificate] = None


def replay_moves(m: int, moves: List[TeleportMove]) -> Partition:
    partition = singletons(m)
    for move in moves:
        partition = merge_parties(partition, move.source, move.dest)
    return partition


def profile_s1(m: int, state_set: Optional[StateSet] = None) -> Profile:
    """Profile of the built-in locked set (or of a given set, tagged custom)."""
    state_set = state_set if state_set is not None else build_locked_set(m)
    if state_set.num_qubits != m:
        raise DomainError(f"set has {state_set.num_qubits} qubits, profile asked for {m}")
    provenance = "custom" if state_set.custom else "S1"
    logger.info("Building profile", extra={"m": m, "provenance": provenance})
    return Profile(m, provenance, Certifier(state_set, ProtocolRegistry(state_set)))


def profile_s2(m: int) -> Profile:
    """Baseline: a set locked across every bipartition; OPEN only when all parties are together."""
    if m < 2:
        raise DomainError(f"the baseline needs m >= 2, got {m}")
    return Profile(m, "S2-baseline")


def min_bell_cost(profile: Profile, optimistic: bool = False) -> Tuple[int, Partition]:
    """
    Fewest Bell pairs reaching a certified-OPEN partition: min over OPEN P of m - |P|.
    With optimistic=True, UNKNOWN partitions count as well (not certified).

    Raises:
        NoOpenPartition: If no partition qualifies.
    """
    # candidates come in non-increasing block count, so the first verified one is cheapest
    best: Optional[Partition] = next(iter(profile.open_candidates()), None)
    if optimistic:
        for partition in enumerate_partitions(profile.m):
            if (best is None or blocks_count(partition) > blocks_count(best)) and profile.status(partition).status != "LOCKED":
                best = partition
    if best is None:
        logger.error("No OPEN partition", extra={"m": profile.m, "provenance": profile.provenance})
        raise NoOpenPartition(f"no certified-OPEN partition for m={profile.m}")
    return profile.m - blocks_count(best), best


def plan_for(target: Partition) -> ExtractionPlan:
    """Inside each block every member teleports to the block's smallest party."""
    moves = sorted(
        (TeleportMove(source=p, dest=block[0]) for block in target.blocks for p in block[1:]),
        key=lambda move: move.source,
    )
    return ExtractionPlan(target=target, moves=moves, bell_cost=len(moves))


def plan_extraction(profile: Profile, m: Optional[int] = None, optimistic: bool = False) -> ExtractionPlan:
    if m is not None and m != profile.m:
        raise DomainError(f"profile covers {profile.m} parties, asked for {m}")
    _, witness = min_bell_cost(profile, optimistic=optimistic)
    plan = plan_for(witness)
    logger.info("Planned extraction", extra={"target": str(plan.target), "bell_cost": plan.bell_cost})
    return plan


def delta_e(m: int) -> int:
    """Bell pairs saved by the locked set against the everywhere-locked baseline."""
    if m < 3:
        raise DomainError(f"the resource gap is defined for m >= 3, got {m}")
    if m == 3:
        return 0
    if m % 2 == 0:
        return (m - 2) // 2
    return (m - 3) // 2


def _singletons_certified(profile: Profile) -> bool:
    """Every {j} | rest cut carries a certificate, so any partition with a singleton is LOCKED."""
    return all(profile.certifier.certificate(j) is not None for j in range(1, profile.m + 1))


def insufficiency_check(profile: Profile, budget: int) -> Verdict:
    """
    Decides whether `budget` teleport merges can reach an OPEN partition.

    With b merges from singletons every reachable partition has at least m - b blocks;
    when m - b > m/2 some block is a singleton, so if every singleton cut is certified
    every reachable partition is LOCKED. Otherwise the reachable partitions are checked
    exhaustively; above the enumeration guard the answer is UNDETERMINED.
    """
    if budget < 0:
        raise DomainError("budget must be >= 0")
    m = profile.m
    min_blocks = max(1, m - budget)
    cost, _ = min_bell_cost(profile)
    if budget >= cost:
        return Verdict(kind="SUFFICIENT", budget=budget, min_blocks=min_blocks, plan=plan_extraction(profile))

    plan = plan_extraction(profile)
    reachable = replay_moves(m, plan.moves[:budget])
    verdict = dict(budget=budget, min_blocks=min_blocks, best_reachable=reachable,
                   certificate=profile.certificate(reachable))

    if profile.provenance == "S2-baseline":
        return Verdict(kind="INSUFFICIENT", pigeonhole=2 * min_blocks > m, **verdict)
    if 2 * min_blocks > m and _singletons_certified(profile):
        return Verdict(kind="INSUFFICIENT", pigeonhole=True, **verdict)
    if m > AUDIT.max_enumeration_m:
        logger.info("Reachable partitions not enumerated", extra={"m": m, "budget": budget})
        return Verdict(kind="UNDETERMINED", **verdict)

    statuses = [profile.status(p).status for p in enumerate_partitions(m) if blocks_count(p) >= min_blocks]
    if "OPEN" in statuses:
        # the registry's minimal partitions are the cheapest OPEN ones, so this means a bug
        raise NoOpenPartition("an OPEN partition is reachable below the minimum cost")
    if "UNKNOWN" in statuses:
        return Verdict(kind="UNDETERMINED", **verdict)
    return Verdict(kind="INSUFFICIENT", **verdict)
