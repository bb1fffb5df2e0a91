from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.config import NUMERICS
from lockutils.errors import AllZeroError, DimensionMismatch, InvariantError, SamePartyError
from lockutils.utils import get_logger

logger = get_logger(__name__)

# Bitstrings are '0'/'1' strings, party 1 leftmost (most significant bit).
Bitstring = str

_SQRT2_INV = 1 / np.sqrt(2)
_SINGLE_QUBIT_BASES = {
    "Z": np.eye(2, dtype=complex),
    # rows are <+| and <-|
    "X": np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV,
}


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=complex)
    arr.flags.writeable = False
    return arr


class StateVector(BaseModel):
    """
    Pure state of m qubits.

    Attributes:
        num_qubits (int): m >= 1.
        amplitudes (np.ndarray): 2^m complex amplitudes, index read as a big-endian bitstring.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    num_qubits: int = Field(..., ge=1)
    amplitudes: np.ndarray

    @field_validator("amplitudes", mode="before")
    @classmethod
    def _to_array(cls, value):
        return _frozen_array(value).reshape(-1)

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.amplitudes.shape[0] != 2 ** self.num_qubits:
            raise ValueError(
                f"expected {2 ** self.num_qubits} amplitudes, got {self.amplitudes.shape[0]}"
            )
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > NUMERICS.norm_tol:
            raise ValueError(f"state is not normalised (norm={norm!r})")
        return self

    @classmethod
    def from_array(cls, amplitudes: np.ndarray) -> "StateVector":
        """Normalises and wraps a raw amplitude array whose length is a power of two."""
        amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
        m = int(round(np.log2(amplitudes.shape[0])))
        if 2 ** m != amplitudes.shape[0]:
            raise DimensionMismatch(f"length {amplitudes.shape[0]} is not a power of two")
        norm = np.linalg.norm(amplitudes)
        if norm < NUMERICS.norm_tol:
            raise AllZeroError("cannot normalise the zero vector")
        return cls(num_qubits=m, amplitudes=amplitudes / norm)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape([2] * self.num_qubits)

    def nonzero_support(self, tol: float = NUMERICS.norm_tol) -> List[Bitstring]:
        indices = np.flatnonzero(np.abs(self.amplitudes) > tol)
        return [format(int(i), f"0{self.num_qubits}b") for i in indices]


class LocalProjector(BaseModel):
    """
    Projector onto the span of orthonormal vectors of a block of parties.

    Attributes:
        block (Tuple[int, ...]): Sorted party indices (1-based).
        basis_vectors (np.ndarray): rank x 2^|block| array, one basis vector per row.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    block: Tuple[int, ...]
    basis_vectors: np.ndarray

    @field_validator("block", mode="before")
    @classmethod
    def _sort_block(cls, value):
        return tuple(sorted(int(p) for p in value))

    @field_validator("basis_vectors", mode="before")
    @classmethod
    def _to_matrix(cls, value):
        arr = _frozen_array(value)
        if arr.ndim == 1:
            arr = _frozen_array(arr.reshape(1, -1))
        return arr

    @model_validator(mode="after")
    def _check_invariants(self):
        if not self.block or len(set(self.block)) != len(self.block) or self.block[0] < 1:
            raise ValueError(f"invalid block {self.block}")
        dim = 2 ** len(self.block)
        rank, width = self.basis_vectors.shape
        if width != dim:
            raise ValueError(f"basis vectors must have length {dim}, got {width}")
        if not 1 <= rank <= dim:
            raise ValueError(f"rank {rank} outside 1..{dim}")
        gram = self.basis_vectors.conj() @ self.basis_vectors.T
        if not np.allclose(gram, np.eye(rank), atol=NUMERICS.norm_tol * dim):
            raise ValueError("basis vectors are not orthonormal")
        return self

    @property
    def rank(self) -> int:
        return self.basis_vectors.shape[0]

    @classmethod
    def span(cls, block: Sequence[int], bitstrings: Iterable[Bitstring]) -> "LocalProjector":
        """Projector onto the span of computational basis states of the block (bits in block order)."""
        dim = 2 ** len(block)
        order = sorted(range(len(block)), key=lambda i: block[i])
        rows = []
        for bits in bitstrings:
            if len(bits) != len(block):
                raise DimensionMismatch(f"bitstring {bits} does not match block {tuple(block)}")
            row = np.zeros(dim, dtype=complex)
            row[int("".join(bits[i] for i in order), 2)] = 1.0
            rows.append(row)
        return cls(block=tuple(block), basis_vectors=np.array(rows))


class ProductObservable(BaseModel):
    """
    Single-qubit Z or X measurement on every party of a block.

    Attributes:
        bases (Dict[int, Literal["Z", "X"]]): party index -> basis.
    """
    model_config = ConfigDict(frozen=True)

    bases: Dict[int, Literal["Z", "X"]]

    @model_validator(mode="after")
    def _non_empty(self):
        if not self.bases or min(self.bases) < 1:
            raise ValueError("product observable needs at least one party index >= 1")
        return self

    @property
    def block(self) -> Tuple[int, ...]:
        return tuple(sorted(self.bases))

    @classmethod
    def uniform(cls, block: Iterable[int], basis: str) -> "ProductObservable":
        return cls(bases={int(p): basis for p in block})


class DistributedState(BaseModel):
    """
    A global state together with who holds each qubit.

    Attributes:
        state (StateVector): The global pure state.
        owners (Tuple[int, ...]): owners[q-1] is the party currently holding qubit q.
    """
    model_config = ConfigDict(frozen=True)

    state: StateVector
    owners: Tuple[int, ...]

    @model_validator(mode="after")
    def _owners_match(self):
        m = self.state.num_qubits
        if len(self.owners) != m or any(not 1 <= o <= m for o in self.owners):
            raise ValueError(f"owners must name a party 1..{m} for each of the {m} qubits")
        return self

    @classmethod
    def initial(cls, state: StateVector) -> "DistributedState":
        return cls(state=state, owners=tuple(range(1, state.num_qubits + 1)))

    def qubits_of(self, party: int) -> Tuple[int, ...]:
        return tuple(q for q, owner in enumerate(self.owners, start=1) if owner == party)


def _check_bits(bits: Bitstring) -> None:
    if not bits or any(ch not in "01" for ch in bits):
        raise InvariantError(f"invalid bitstring {bits!r}")


def _check_block(block: Sequence[int], m: int) -> None:
    if not block or any(p < 1 or p > m for p in block):
        raise DimensionMismatch(f"block {tuple(block)} does not fit a {m}-qubit state")


def basis_state(bits: Bitstring) -> StateVector:
    _check_bits(bits)
    amplitudes = np.zeros(2 ** len(bits), dtype=complex)
    amplitudes[int(bits, 2)] = 1.0
    return StateVector(num_qubits=len(bits), amplitudes=amplitudes)


def superpose(terms: Sequence[Tuple[complex, Bitstring]]) -> StateVector:
    """
    Normalised superposition of computational basis states.

    Args:
        terms: (coefficient, bitstring) pairs, bitstrings distinct and of one length.

    Returns:
        StateVector: The normalised sum; relative phases are kept as given.

    Raises:
        AllZeroError: If the coefficients cancel to a vector of norm < 1e-12.
    """
    if not terms:
        raise AllZeroError("superpose needs at least one term")
    lengths = {len(bits) for _, bits in terms}
    if len(lengths) != 1:
        raise DimensionMismatch(f"bitstrings of mixed lengths {sorted(lengths)}")
    if len({bits for _, bits in terms}) != len(terms):
        raise InvariantError("bitstrings in a superposition must be distinct")
    m = lengths.pop()
    amplitudes = np.zeros(2 ** m, dtype=complex)
    for coefficient, bits in terms:
        _check_bits(bits)
        amplitudes[int(bits, 2)] += complex(coefficient)
    norm = np.linalg.norm(amplitudes)
    if norm < NUMERICS.norm_tol:
        logger.error("Superposition vanishes", extra={"terms": [b for _, b in terms]})
        raise AllZeroError("superposition has zero norm")
    return StateVector(num_qubits=m, amplitudes=amplitudes / norm)


def inner_product(a: StateVector, b: StateVector) -> complex:
    if a.num_qubits != b.num_qubits:
        raise DimensionMismatch(f"{a.num_qubits}-qubit vs {b.num_qubits}-qubit state")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: StateVector, b: StateVector) -> float:
    return abs(inner_product(a, b)) ** 2


def block_matrix(amplitudes: np.ndarray, m: int, block: Sequence[int]) -> Tuple[np.ndarray, List[int]]:
    """Reshapes the state into a (2^|block|, 2^(m-|block|)) matrix, block axes first."""
    axes = [p - 1 for p in block]
    rest = [q for q in range(m) if q not in axes]
    order = axes + rest
    matrix = np.transpose(amplitudes.reshape([2] * m), order).reshape(2 ** len(axes), -1)
    return matrix, order


def _unblock(matrix: np.ndarray, m: int, order: List[int]) -> np.ndarray:
    tensor = matrix.reshape([2] * m)
    return np.transpose(tensor, np.argsort(order)).reshape(-1)


def project_amplitudes(amplitudes: np.ndarray, m: int, block: Sequence[int],
                       basis_vectors: np.ndarray, need_post: bool = True) -> Tuple[float, Optional[np.ndarray]]:
    """
    Raw-array projection used by apply_projector and the protocol evaluator.

    Returns:
        (probability, unnormalised-then-renormalised post amplitudes or None).
    """
    matrix, order = block_matrix(amplitudes, m, block)
    coefficients = basis_vectors.conj() @ matrix
    probability = float(np.vdot(coefficients, coefficients).real)
    if not need_post or probability < NUMERICS.prune_threshold:
        return probability, None
    projected = basis_vectors.T @ coefficients
    return probability, _unblock(projected, m, order) / np.sqrt(probability)


def apply_projector(state: StateVector, proj: LocalProjector) -> Tuple[float, Optional[StateVector]]:
    """
    Applies one outcome of a local projective measurement.

    Args:
        state (StateVector): Global state.
        proj (LocalProjector): Projector on a block of parties.

    Returns:
        Tuple[float, Optional[StateVector]]: Born probability and the renormalised
        post-measurement state (None when the probability is below 1e-15).
    """
    _check_block(proj.block, state.num_qubits)
    probability, post = project_amplitudes(state.amplitudes, state.num_qubits, proj.block, proj.basis_vectors)
    if post is None:
        return probability, None
    return probability, StateVector(num_qubits=state.num_qubits, amplitudes=post)


def product_outcomes(amplitudes: np.ndarray, m: int, obs: ProductObservable,
                     need_post: bool = True) -> List[Tuple[Bitstring, float, Optional[np.ndarray]]]:
    """
    Raw-array product measurement: rotates each measured qubit into its basis and
    reads the joint outcome distribution off the block axes.
    """
    block = obs.block
    matrix, order = block_matrix(amplitudes, m, block)
    k = len(block)
    rotated = matrix.reshape([2] * k + [-1])
    for axis, party in enumerate(block):
        rotated = np.moveaxis(
            np.tensordot(_SINGLE_QUBIT_BASES[obs.bases[party]].conj(), rotated, axes=([1], [axis])), 0, axis
        )
    rotated = rotated.reshape(2 ** k, -1)
    probabilities = np.einsum("ij,ij->i", rotated.conj(), rotated).real

    results = []
    for index in np.flatnonzero(probabilities >= NUMERICS.prune_threshold):
        bits = format(int(index), f"0{k}b")
        probability = float(probabilities[index])
        post = None
        if need_post:
            local = np.array([1.0 + 0j])
            for party, bit in zip(block, bits):
                local = np.kron(local, _SINGLE_QUBIT_BASES[obs.bases[party]][int(bit)])
            post_matrix = np.outer(local, rotated[index]) / np.sqrt(probability)
            post = _unblock(post_matrix, m, order)
        results.append((bits, probability, post))
    return results


def measure_product(state: StateVector, obs: ProductObservable) -> List[Tuple[Bitstring, float, StateVector]]:
    """
    Measures every party of obs.block in its Z or X basis.

    Returns:
        List of (outcome bitstring over the sorted block, probability, post state);
        zero-probability outcomes are omitted.
    """
    _check_block(obs.block, state.num_qubits)
    return [
        (bits, probability, StateVector(num_qubits=state.num_qubits, amplitudes=post))
        for bits, probability, post in product_outcomes(state.amplitudes, state.num_qubits, obs)
    ]


def schmidt_coefficients(state: StateVector, left_block: Iterable[int]) -> List[float]:
    """
    Schmidt coefficients across left_block | rest, descending, zeros dropped.
    """
    left = sorted(set(left_block))
    m = state.num_qubits
    if not left or len(left) >= m:
        raise DimensionMismatch(f"left block {tuple(left)} must be a proper nonempty subset of 1..{m}")
    _check_block(left, m)
    matrix, _ = block_matrix(state.amplitudes, m, left)
    values = np.linalg.svd(matrix, compute_uv=False)
    return [float(v) for v in values if v > NUMERICS.norm_tol]


def teleport_merge(dstate: DistributedState, source_party: int, dest_party: int) -> DistributedState:
    """
    Moves every qubit held by source_party to dest_party. Amplitudes are untouched;
    the physical circuit behind one move is exact_teleport_circuit.

    Raises:
        SamePartyError: If source and destination coincide.
    """
    m = dstate.state.num_qubits
    if source_party == dest_party:
        raise SamePartyError(f"cannot teleport party {source_party} onto itself")
    for party in (source_party, dest_party):
        if not 1 <= party <= m:
            raise DimensionMismatch(f"party {party} outside 1..{m}")
    owners = tuple(dest_party if owner == source_party else owner for owner in dstate.owners)
    if owners == dstate.owners:
        logger.warning("Teleport moved no qubit", extra={"source": source_party, "dest": dest_party})
    return DistributedState(state=dstate.state, owners=owners)


# Teleport circuit helpers. Only the gates the circuit needs.
_H = np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _apply_1q(tensor: np.ndarray, gate: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(gate, tensor, axes=([1], [axis])), 0, axis)


def _apply_cnot(tensor: np.ndarray, control: int, target: int) -> np.ndarray:
    out = tensor.copy()
    index = [slice(None)] * tensor.ndim
    index[control] = 1
    controlled = tuple(index)
    out[controlled] = np.flip(tensor[controlled], axis=target if target < control else target - 1)
    return out


def exact_teleport_circuit(state: StateVector, qubit: int, seed: Optional[int] = None) -> StateVector:
    """
    Teleports one qubit through a fresh Bell pair and returns the m-qubit result.

    Register: the m input qubits, then ancilla a (sender half) and b (receiver half).
    CNOT(qubit -> a), H(qubit), measure qubit and a, correct b with X^a Z^qubit,
    then b takes the teleported qubit's place.

    Args:
        state (StateVector): Input state.
        qubit (int): 1-based index of the qubit to teleport.
        seed (Optional[int]): Seed for the measurement draw.

    Returns:
        StateVector: Output state (fidelity 1 with the input).
    """
    m = state.num_qubits
    _check_block([qubit], m)
    q, a, b = qubit - 1, m, m + 1
    bell = bell_states()["phi+"].amplitudes
    tensor = np.kron(state.amplitudes, bell).reshape([2] * (m + 2))

    tensor = _apply_cnot(tensor, q, a)
    tensor = _apply_1q(tensor, _H, q)

    rng = np.random.default_rng(seed)
    probabilities = np.array([
        np.sum(np.abs(np.take(np.take(tensor, mq, axis=q), ma, axis=a - 1)) ** 2)
        for mq in (0, 1) for ma in (0, 1)
    ])
    outcome = int(rng.choice(4, p=probabilities / probabilities.sum()))
    mq, ma = divmod(outcome, 2)

    # remaining axes: the m-1 untouched qubits (in order) followed by b
    rest = np.take(np.take(tensor, mq, axis=q), ma, axis=a - 1)
    rest = rest / np.sqrt(probabilities[outcome])
    b_axis = rest.ndim - 1
    if ma:
        rest = _apply_1q(rest, _X, b_axis)
    if mq:
        rest = _apply_1q(rest, _Z, b_axis)
    rest = np.moveaxis(rest, b_axis, q)
    logger.info("Teleported qubit", extra={"qubit": qubit, "outcome": [mq, ma]})
    return StateVector(num_qubits=m, amplitudes=rest.reshape(-1))


def bell_states() -> Dict[str, StateVector]:
    return {
        "phi+": superpose([(1, "00"), (1, "11")]),
        "phi-": superpose([(1, "00"), (-1, "11")]),
        "psi+": superpose([(1, "01"), (1, "10")]),
        "psi-": superpose([(1, "01"), (-1, "10")]),
    }
