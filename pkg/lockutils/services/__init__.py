from .qstate import (
    StateVector,
    LocalProjector,
    ProductObservable,
    DistributedState,
    basis_state,
    superpose,
    apply_projector,
    measure_product,
    schmidt_coefficients,
    teleport_merge,
    exact_teleport_circuit,
    fidelity,
    bell_states,
)
from .sets import StateSet, build_locked_set, check_orthogonality, load_set, save_set
from .partitions import (
    Partition,
    Coalition,
    make_partition,
    make_coalition,
    parse_partition,
    induced_partition,
    is_coarsening,
    enumerate_partitions,
    pairings,
    odd_canonical_partitions,
)
from .certify import BellTripleCertificate, LockStatus, Certifier, bell_triple_certificate, lock_status, audit_all
from .protocols import (
    ProtocolTree,
    EvaluationReport,
    ProtocolRegistry,
    generate_pairing_protocol,
    generate_odd_protocol,
    generate_restricted_protocol,
    generate_global_protocol,
    evaluate,
    sample_run,
    load_protocol,
    save_protocol,
)
from .resources import (
    Profile,
    ExtractionPlan,
    Ledger,
    Verdict,
    profile_s1,
    profile_s2,
    min_bell_cost,
    plan_extraction,
    delta_e,
    insufficiency_check,
)

__all__ = [
    "StateVector",
    "LocalProjector",
    "ProductObservable",
    "DistributedState",
    "basis_state",
    "superpose",
    "apply_projector",
    "measure_product",
    "schmidt_coefficients",
    "teleport_merge",
    "exact_teleport_circuit",
    "fidelity",
    "bell_states",
    "StateSet",
    "build_locked_set",
    "check_orthogonality",
    "load_set",
    "save_set",
    "Partition",
    "Coalition",
    "make_partition",
    "make_coalition",
    "parse_partition",
    "induced_partition",
    "is_coarsening",
    "enumerate_partitions",
    "pairings",
    "odd_canonical_partitions",
    "BellTripleCertificate",
    "LockStatus",
    "Certifier",
    "bell_triple_certificate",
    "lock_status",
    "audit_all",
    "ProtocolTree",
    "EvaluationReport",
    "ProtocolRegistry",
    "generate_pairing_protocol",
    "generate_odd_protocol",
    "generate_restricted_protocol",
    "generate_global_protocol",
    "evaluate",
    "sample_run",
    "load_protocol",
    "save_protocol",
    "Profile",
    "ExtractionPlan",
    "Ledger",
    "Verdict",
    "profile_s1",
    "profile_s2",
    "min_bell_cost",
    "plan_extraction",
    "delta_e",
    "insufficiency_check",
]
