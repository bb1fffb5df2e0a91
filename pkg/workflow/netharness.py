import asyncio
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from config.config import HARNESS, NUMERICS, ScenarioConfig
from lockutils.errors import ConfigError, CorruptLog, LockLabError, SoundnessViolation
from lockutils.services.certify import LockStatus
from lockutils.services.partitions import Partition, induced_partition, make_coalition, partition_from_owners
from lockutils.services.protocols import (
    EvaluationReport,
    ProtocolTree,
    Transcript,
    check_locality,
    dumps_protocol,
    evaluate,
    generate_restricted_protocol,
    loads_protocol,
    sample_run,
)
from lockutils.services.qstate import DistributedState, exact_teleport_circuit, fidelity, teleport_merge
from lockutils.services.resources import ExtractionPlan, Ledger, Profile, Verdict, insufficiency_check, profile_s1
from lockutils.services.sets import StateSet, build_locked_set, load_set
from lockutils.utils import get_logger
from workflow.tools.broker import EntanglementBroker
from workflow.tools.event_log import (
    DistributeRecord,
    EventLog,
    GuessRecord,
    MeasurementRecord,
    MessageRecord,
    ScenarioRecord,
    TeleportRecord,
    VerdictRecord,
)

logger = get_logger(__name__)


class AttackReport(BaseModel):
    """
    Outcome of one coalition attack.

    Attributes:
        partition (Partition): Locality structure induced by the coalition.
        status (LockStatus): Certificate-based verdict for that partition.
        evaluation (EvaluationReport): Exact score of the attack protocol.
        transcript (Transcript): One seeded run on the secret state.
        log (EventLog): Everything the run did.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    secret: int
    partition: Partition
    status: LockStatus
    evaluation: EvaluationReport
    transcript: Transcript
    log: EventLog


class ExtractionReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    secret: int
    verdict: Verdict
    ledger: Ledger
    final_partition: Partition
    evaluation: Optional[EvaluationReport] = None
    transcript: Optional[Transcript] = None
    decoded: Optional[int] = None
    log: EventLog

    @property
    def success(self) -> bool:
        return self.verdict.kind == "SUFFICIENT" and self.decoded == self.secret


class LockingHarnessWorkflow:
    """
    Referee-side simulation of the locking task: the referee encodes a secret into one
    state of a locked set and distributes one qubit per party; coalitions attack with
    LOCC protocols and, given Bell pairs from the broker, parties teleport qubits
    together and decode. Agents share one simulator; the ownership map keeps them local.
    """
    def __init__(self, sample_count: Optional[int] = None):
        self.sample_count = sample_count if sample_count is not None else HARNESS.sample_count
        self._sets: Dict[Tuple[int, Optional[str]], StateSet] = {}
        self._profiles: Dict[Tuple[int, Optional[str]], Profile] = {}

    # --- scenario plumbing ---------------------------------------------------------------

    def _state_set(self, scenario: ScenarioConfig) -> StateSet:
        key = (scenario.m, scenario.set_path)
        if key not in self._sets:
            if scenario.set_path:
                try:
                    state_set = load_set(scenario.set_path)
                except (LockLabError, FileNotFoundError) as e:
                    raise ConfigError(f"cannot load set {scenario.set_path}: {e}")
                if state_set.num_qubits != scenario.m:
                    raise ConfigError(f"set has {state_set.num_qubits} qubits, scenario says m={scenario.m}")
            else:
                state_set = build_locked_set(scenario.m)
            self._sets[key] = state_set
        return self._sets[key]

    def _profile(self, scenario: ScenarioConfig) -> Profile:
        key = (scenario.m, scenario.set_path)
        if key not in self._profiles:
            profile = profile_s1(scenario.m, self._state_set(scenario))
            profile.certifier.build()
            self._profiles[key] = profile
        return self._profiles[key]

    def resolve_secret(self, scenario: ScenarioConfig) -> int:
        size = self._state_set(scenario).size
        if scenario.secret == "random":
            return int(np.random.default_rng(scenario.seed).integers(size))
        if scenario.secret >= size:
            logger.error("Secret out of range", extra={"secret": scenario.secret, "N": size})
            raise ConfigError(f"secret {scenario.secret} outside 0..{size - 1}")
        return scenario.secret

    def _open_log(self, scenario: ScenarioConfig, mode: str, protocol: Optional[ProtocolTree] = None) -> EventLog:
        log = EventLog()
        log.append(ScenarioRecord(
            mode=mode,
            scenario=scenario.model_dump(mode="json"),
            protocol=dumps_protocol(protocol) if protocol is not None else None,
        ))
        return log

    def _distribute(self, scenario: ScenarioConfig, log: EventLog) -> Tuple[DistributedState, int]:
        state_set = self._state_set(scenario)
        secret = self.resolve_secret(scenario)
        dstate = DistributedState.initial(state_set.states[secret])
        log.append(DistributeRecord(
            m=scenario.m, set_size=state_set.size, custom=state_set.custom, owners=list(dstate.owners),
        ))
        return dstate, secret

    @staticmethod
    def _log_transcript(log: EventLog, transcript: Transcript) -> None:
        for step in transcript.steps:
            log.append(MeasurementRecord(
                block=list(step.block), kind=step.kind, outcome=step.outcome, probability=step.probability,
            ))
            log.append(MessageRecord(
                sender=step.block[0], receiver="broadcast", payload={"block": list(step.block), "outcome": step.outcome},
            ))
        log.append(GuessRecord(value=transcript.guess))
        log.append(MessageRecord(sender=1, receiver="referee", payload={"guess": transcript.guess}))

    def _check_samples(self, state_set: StateSet, protocol: ProtocolTree, secret: int, seed: int) -> None:
        """Seeded runs seed+1 .. seed+sample_count must all decode a perfectly evaluated secret."""
        for offset in range(1, self.sample_count + 1):
            guess = sample_run(state_set, protocol, secret, seed + offset).guess
            if guess != secret:
                logger.error("Sampled run disagrees with exact evaluation", extra={"secret": secret, "seed": seed + offset})
                raise SoundnessViolation(f"sampled run with seed {seed + offset} guessed {guess} for secret {secret}")

    # --- operations --------------------------------------------------------------------------

    def run_distribution(self, scenario: ScenarioConfig) -> Tuple[DistributedState, EventLog]:
        """
        Encodes the secret and hands party i qubit i. Agents only ever touch their own qubits;
        the secret stays with the referee (the distribute record does not carry it).

        Raises:
            ConfigError: If the secret is outside the set or the set cannot be loaded.
        """
        log = self._open_log(scenario, "distribution")
        dstate, _ = self._distribute(scenario, log)
        logger.info("Distributed state", extra={"m": scenario.m})
        return dstate, log

    def run_attack(self, scenario: ScenarioConfig, protocol: Optional[ProtocolTree] = None) -> AttackReport:
        """
        Scores an LOCC attack of the scenario's coalition (everyone else alone).

        Args:
            scenario (ScenarioConfig): Must name a coalition of 2..m-1 parties.
            protocol (Optional[ProtocolTree]): Attack strategy; the best-effort peel
                restricted to the induced partition when None.

        Raises:
            ConfigError: If the scenario has no coalition.
            DomainError: If the coalition size is outside 2..m-1.
            LocalityError: If the protocol measures across the induced partition.
            SoundnessViolation: If a LOCKED partition is attacked with a complete protocol of success 1.
        """
        if not scenario.coalition:
            raise ConfigError("an attack needs a [coalition] members entry")
        coalition = make_coalition(scenario.m, scenario.coalition)
        partition = induced_partition(scenario.m, coalition)
        state_set = self._state_set(scenario)
        supplied = protocol

        log = self._open_log(scenario, "attack", supplied)
        dstate, secret = self._distribute(scenario, log)
        if protocol is None:
            protocol = generate_restricted_protocol(state_set, partition)
        check_locality(protocol.model_copy(update={"partition": partition}))

        status = self._profile(scenario).status(partition)
        evaluation = evaluate(state_set, protocol)
        transcript = sample_run(state_set, protocol, secret, scenario.seed)
        self._log_transcript(log, transcript)

        if status.status == "LOCKED" and evaluation.complete and evaluation.perfect:
            logger.error("Locked partition decoded perfectly", extra={"partition": str(partition)})
            raise SoundnessViolation(f"{partition} is certified LOCKED but the attack succeeds with probability 1")

        log.append(VerdictRecord(verdict={
            "mode": "attack",
            "coalition": sorted(coalition.members),
            "lock": status.record(),
            "worst_case": evaluation.worst_case,
            "average": evaluation.average,
            "secret_success": evaluation.success[secret],
            "complete": evaluation.complete,
            "guess": transcript.guess,
            "correct": transcript.correct,
        }))
        logger.info("Attack scored", extra={"partition": str(partition), "worst_case": evaluation.worst_case})
        return AttackReport(
            secret=secret, partition=partition, status=status, evaluation=evaluation, transcript=transcript, log=log,
        )

    def run_extraction(self, scenario: ScenarioConfig, plan: Optional[ExtractionPlan] = None) -> ExtractionReport:
        """
        Spends the Bell-pair budget on teleport merges and decodes the secret.

        With a SUFFICIENT verdict the broker issues one pair per plan move, each move is
        applied to the ownership map (and checked against the teleport circuit), and the
        registry protocol of the target partition runs exactly, once logged, then sample_count
        more seeded times. Otherwise the verdict and the certificate of the best reachable
        partition (if it has one) are logged.

        Raises:
            BudgetExceeded: If the plan (the given one, or the computed one) costs more than the budget.
            SoundnessViolation: If a SUFFICIENT extraction fails to decode the secret in any run.
        """
        profile = self._profile(scenario)
        state_set = self._state_set(scenario)
        log = self._open_log(scenario, "extraction")
        dstate, secret = self._distribute(scenario, log)

        verdict = insufficiency_check(profile, scenario.bell_budget)
        if plan is not None:
            verdict = verdict.model_copy(update={"kind": "SUFFICIENT", "plan": plan})
        broker = EntanglementBroker(scenario.bell_budget)

        if verdict.kind != "SUFFICIENT":
            log.append(VerdictRecord(verdict={
                "mode": "extraction",
                "kind": verdict.kind,
                "budget": verdict.budget,
                "min_blocks": verdict.min_blocks,
                "pigeonhole": verdict.pigeonhole,
                "best_reachable": str(verdict.best_reachable),
                "certificate": verdict.certificate.record() if verdict.certificate else None,
            }))
            logger.info("Extraction refused", extra={"kind": verdict.kind, "budget": scenario.bell_budget})
            return ExtractionReport(
                secret=secret, verdict=verdict, ledger=broker.ledger,
                final_partition=partition_from_owners(dstate.owners), log=log,
            )

        plan = verdict.plan
        broker.authorise(plan)
        log.append(MessageRecord(sender="referee", receiver="broadcast", payload={
            "plan": [[move.source, move.dest] for move in plan.moves], "target": str(plan.target),
        }))
        for index, move in enumerate(plan.moves):
            pair_id = broker.issue(move)
            qubits = dstate.qubits_of(move.source)
            circuit_fidelity = min(
                (fidelity(dstate.state, exact_teleport_circuit(dstate.state, q, seed=scenario.seed + index)) for q in qubits),
                default=1.0,
            )
            if circuit_fidelity < 1.0 - NUMERICS.prob_tol:
                raise SoundnessViolation(f"teleporting {qubits} lost fidelity ({circuit_fidelity!r})")
            dstate = teleport_merge(dstate, move.source, move.dest)
            log.append(TeleportRecord(source=move.source, dest=move.dest, pair_id=pair_id, fidelity=round(circuit_fidelity, 9)))

        final = partition_from_owners(dstate.owners)
        teleports = len(log.of_kind("teleport"))
        if final != plan.target or broker.ledger.consumed != teleports or teleports != scenario.m - len(final):
            raise SoundnessViolation(f"merges reached {final}, plan targets {plan.target}")

        protocol = profile.status(final).protocol
        if protocol is None:
            raise SoundnessViolation(f"plan target {final} has no verified protocol")
        evaluation = evaluate(state_set, protocol)
        transcript = sample_run(state_set, protocol, secret, scenario.seed)
        self._log_transcript(log, transcript)

        if evaluation.success[secret] < 1.0 - NUMERICS.prob_tol or transcript.guess != secret:
            logger.error("Extraction failed to decode", extra={"secret": secret, "guess": transcript.guess})
            raise SoundnessViolation(f"decoded {transcript.guess} for secret {secret} with a sufficient budget")
        self._check_samples(state_set, protocol, secret, scenario.seed)

        log.append(VerdictRecord(verdict={
            "mode": "extraction",
            "kind": verdict.kind,
            "budget": scenario.bell_budget,
            "consumed": broker.ledger.consumed,
            "final_partition": str(final),
            "derived_construction": protocol.derived,
            "secret_success": evaluation.success[secret],
            "decoded": transcript.guess,
            "correct": transcript.guess == secret,
        }))
        logger.info("Extraction decoded", extra={"partition": str(final), "consumed": broker.ledger.consumed})
        return ExtractionReport(
            secret=secret, verdict=verdict, ledger=broker.ledger, final_partition=final,
            evaluation=evaluation, transcript=transcript, decoded=transcript.guess, log=log,
        )

    def replay(self, log: EventLog) -> Dict:
        """
        Re-runs the logged scenario and checks the new log matches record for record.

        Returns:
            Dict: The verdict record of the run.

        Raises:
            CorruptLog: If the log is empty, has no scenario header or differs from the re-run.
        """
        header = log.header
        if header is None:
            raise CorruptLog("log is empty or lacks a scenario header")
        try:
            scenario = ScenarioConfig(**header.scenario)
            protocol = loads_protocol(header.protocol) if header.protocol else None
            if header.mode == "attack":
                rerun = self.run_attack(scenario, protocol).log
            elif header.mode == "extraction":
                rerun = self.run_extraction(scenario).log
            else:
                _, rerun = self.run_distribution(scenario)
        except (LockLabError, ValueError) as e:
            if isinstance(e, SoundnessViolation):
                raise
            raise CorruptLog(f"logged scenario no longer runs: {e}")

        original, replayed = log.to_lines(), rerun.to_lines()
        for index, (a, b) in enumerate(zip(original, replayed)):
            if a != b:
                logger.error("Replay diverged", extra={"seq": index})
                raise CorruptLog(f"record {index} differs on replay")
        if len(original) != len(replayed):
            raise CorruptLog(f"log has {len(original)} records, replay produced {len(replayed)}")
        return rerun.verdict or {}

    async def sweep_secrets(self, scenario: ScenarioConfig, secrets: Optional[Sequence[int]] = None) -> List[ExtractionReport]:
        """
        One independent extraction per secret (all of them by default), run concurrently.
        Results come back in secret order.
        """
        self._profile(scenario)
        secrets = list(secrets) if secrets is not None else list(range(self._state_set(scenario).size))
        loop = asyncio.get_running_loop()
        tasks = [
            loop.run_in_executor(None, self.run_extraction, scenario.model_copy(update={"secret": s}))
            for s in secrets
        ]
        results = await asyncio.gather(*tasks)
        logger.info("Swept secrets", extra={"m": scenario.m, "runs": len(results)})
        return list(results)
