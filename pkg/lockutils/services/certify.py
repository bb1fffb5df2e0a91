from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config.config import AUDIT, NUMERICS
from lockutils.errors import CertificateNotFound, DimensionMismatch, DomainError, SoundnessViolation
from lockutils.services.partitions import Partition, enumerate_partitions, is_coarsening
from lockutils.services.protocols import ProtocolRegistry, ProtocolTree
from lockutils.services.qstate import block_matrix
from lockutils.services.sets import StateSet
from lockutils.utils import get_logger

logger = get_logger(__name__)

_HALF = 1 / np.sqrt(2)


class BellTripleCertificate(BaseModel):
    """
    Evidence that three states of a set are three orthogonal maximally entangled states
    of an effective two-qubit system (qubit j | two-dimensional support of the rest),
    which no LOCC protocol across that cut can tell apart.

    Attributes:
        cut_party (int): j, alone on its side of the cut.
        triple (Tuple[int, int, int]): State indices.
        side_basis (np.ndarray): 2 x 2^(m-1) orthonormal rows spanning the big side's support.
        bell_fidelities (Tuple[float, float, float]): Fidelity of each effective state with the
            closest Bell state of the effective space, (s1 + s2)^2 / 2 from its Schmidt coefficients.
        schmidt (Tuple[Tuple[float, float], ...]): Effective Schmidt coefficients per state.
        residual (float): Largest norm of the part of a state outside qubit j (x) span(side_basis).
        max_overlap (float): Largest |overlap| between two effective states.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    cut_party: int
    triple: Tuple[int, int, int]
    side_basis: np.ndarray
    bell_fidelities: Tuple[float, float, float]
    schmidt: Tuple[Tuple[float, float], ...]
    residual: float
    max_overlap: float

    @property
    def valid(self) -> bool:
        tol = NUMERICS.certificate_tol
        return (
            self.residual < tol
            and self.max_overlap < tol
            and all(abs(f - 1.0) < tol for f in self.bell_fidelities)
            and all(len(c) == 2 and all(abs(x - _HALF) < tol for x in c) for c in self.schmidt)
        )

    def record(self) -> Dict:
        """Export without the side basis amplitudes."""
        return {
            "cut_party": self.cut_party,
            "triple": list(self.triple),
            "bell_fidelities": list(self.bell_fidelities),
            "residual": self.residual,
            "max_overlap": self.max_overlap,
        }


class LockStatus(BaseModel):
    """
    LOCKED carries a certificate, OPEN a verified protocol (and the registry partition it
    comes from), UNKNOWN nothing.
    """
    model_config = ConfigDict(frozen=True)

    status: Literal["LOCKED", "OPEN", "UNKNOWN"]
    partition: Partition
    certificate: Optional[BellTripleCertificate] = None
    witness: Optional[Partition] = None
    protocol: Optional[ProtocolTree] = None

    def record(self) -> Dict:
        record = {"partition": str(self.partition), "status": self.status}
        if self.certificate is not None:
            record["certificate"] = self.certificate.record()
        if self.witness is not None:
            record["witness"] = str(self.witness)
            record["derived_construction"] = bool(self.protocol and self.protocol.derived)
        return record


class AuditTable(BaseModel):
    rows: List[LockStatus]
    counts: Dict[str, int] = Field(default_factory=dict)


def _side_basis(rows: np.ndarray) -> Optional[np.ndarray]:
    """Two orthonormal rows spanning the row space of `rows`, computational when possible."""
    columns = np.flatnonzero(np.any(np.abs(rows) > NUMERICS.norm_tol, axis=0))
    if len(columns) == 2:
        basis = np.zeros((2, rows.shape[1]), dtype=complex)
        basis[0, columns[0]] = basis[1, columns[1]] = 1.0
        return basis
    _, values, vh = np.linalg.svd(rows, full_matrices=False)
    if int(np.sum(values > NUMERICS.certificate_tol)) != 2:
        return None
    return vh[:2]


def _try_triple(state_set: StateSet, cut_party: int, triple: Tuple[int, int, int]) -> Optional[BellTripleCertificate]:
    m = state_set.num_qubits
    matrices = [block_matrix(state_set.states[i].amplitudes, m, [cut_party])[0] for i in triple]
    basis = _side_basis(np.vstack(matrices))
    if basis is None:
        return None
    effective = [M @ basis.conj().T for M in matrices]
    residual = max(float(np.linalg.norm(M - E @ basis)) for M, E in zip(matrices, effective))
    overlaps = [abs(np.vdot(effective[a], effective[b])) for a, b in combinations(range(3), 2)]
    schmidt, fidelities = [], []
    for E in effective:
        values = np.linalg.svd(E, compute_uv=False)
        schmidt.append(tuple(float(v) for v in values))
        fidelities.append(float(np.sum(values) ** 2 / 2))
    return BellTripleCertificate(
        cut_party=cut_party,
        triple=triple,
        side_basis=basis,
        bell_fidelities=tuple(fidelities),
        schmidt=tuple(schmidt),
        residual=residual,
        max_overlap=float(max(overlaps)),
    )


def bell_triple_certificate(state_set: StateSet, cut_party: int) -> BellTripleCertificate:
    """
    Finds three states that restrict to three Bell states across the cut {j} | rest.
    The triple (0, 1, 1 + j) of the built-in set is tried first, then every 3-subset.

    Raises:
        CertificateNotFound: If no 3-subset passes.
    """
    m = state_set.num_qubits
    if not 1 <= cut_party <= m or m < 2:
        raise DimensionMismatch(f"cut party {cut_party} outside 1..{m}")
    canonical = (0, 1, 1 + cut_party)
    candidates = [canonical] if canonical[-1] < state_set.size else []
    candidates += [t for t in combinations(range(state_set.size), 3) if t != canonical]
    for triple in candidates:
        certificate = _try_triple(state_set, cut_party, triple)
        if certificate is not None and certificate.valid:
            return certificate
    logger.info("No Bell triple found", extra={"cut_party": cut_party, "m": m})
    raise CertificateNotFound(f"no three states form Bell states across {cut_party} | rest")


class Certifier:
    """
    Lock-status oracle for one set. Certificates are memoised per cut party; build()
    fills the memo sequentially so concurrent lock_status calls only read it.
    """
    def __init__(self, state_set: StateSet, registry: Optional[ProtocolRegistry] = None):
        self.state_set = state_set
        self.registry = registry if registry is not None else ProtocolRegistry(state_set)
        self._certificates: Dict[int, Optional[BellTripleCertificate]] = {}

    def certificate(self, cut_party: int) -> Optional[BellTripleCertificate]:
        if cut_party not in self._certificates:
            try:
                self._certificates[cut_party] = bell_triple_certificate(self.state_set, cut_party)
            except CertificateNotFound:
                self._certificates[cut_party] = None
        return self._certificates[cut_party]

    def build(self) -> "Certifier":
        for party in range(1, self.state_set.num_qubits + 1):
            self.certificate(party)
        self.registry.verify_all()
        return self

    def locked_by(self, partition: Partition) -> Optional[BellTripleCertificate]:
        for block in partition.blocks:
            if len(block) == 1:
                certificate = self.certificate(block[0])
                if certificate is not None:
                    return certificate
        return None

    def lock_status(self, partition: Partition) -> LockStatus:
        if partition.num_parties != self.state_set.num_qubits:
            raise DimensionMismatch(f"partition of {partition.num_parties} parties for a {self.state_set.num_qubits}-qubit set")
        certificate = self.locked_by(partition)
        if certificate is not None:
            return LockStatus(status="LOCKED", partition=partition, certificate=certificate)
        found = self.registry.find_refinement(partition)
        if found is not None:
            witness, tree = found
            return LockStatus(status="OPEN", partition=partition, witness=witness, protocol=tree)
        return LockStatus(status="UNKNOWN", partition=partition)


def lock_status(state_set: StateSet, partition: Partition,
                registry: Optional[ProtocolRegistry] = None) -> LockStatus:
    """
    LOCKED when the partition refines a certified {j} | rest cut (it has a singleton j
    with a certificate), OPEN when it coarsens a verified registry partition, else UNKNOWN.
    """
    return Certifier(state_set, registry).lock_status(partition)


def audit_all(state_set: StateSet, m: int, registry: Optional[ProtocolRegistry] = None,
              certifier: Optional[Certifier] = None) -> AuditTable:
    """
    Lock status of every partition of 1..m, in canonical enumeration order. Also checks
    that no LOCKED partition coarsens a verified registry partition.

    Raises:
        DomainError: Above the exhaustive audit bound.
        SoundnessViolation: If a partition is both certified LOCKED and protocol-OPEN.
    """
    if m != state_set.num_qubits:
        raise DimensionMismatch(f"audit over {m} parties for a {state_set.num_qubits}-qubit set")
    if m > AUDIT.max_audit_m:
        logger.error("Audit refused", extra={"m": m})
        raise DomainError(f"exhaustive audits are limited to m <= {AUDIT.max_audit_m}")
    certifier = certifier or Certifier(state_set, registry)
    certifier.build()
    partitions = list(enumerate_partitions(m))
    verified = list(certifier.registry.entries())
    logger.info("Auditing partitions", extra={"m": m, "count": len(partitions), "registry": len(verified)})

    def classify(partition: Partition) -> LockStatus:
        status = certifier.lock_status(partition)
        if status.status == "LOCKED" and any(is_coarsening(partition, p) for p, _ in verified):
            logger.error("Partition both LOCKED and OPEN", extra={"partition": str(partition)})
            raise SoundnessViolation(f"{partition} is certified LOCKED yet coarsens a verified protocol")
        return status

    with ThreadPoolExecutor(max_workers=AUDIT.max_workers) as executor:
        rows = list(executor.map(classify, partitions))
    counts = {key: sum(1 for row in rows if row.status == key) for key in ("LOCKED", "OPEN", "UNKNOWN")}
    return AuditTable(rows=rows, counts=counts)
