import os
import re
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.config import NUMERICS
from lockutils.errors import DomainError, InvariantError, ParseError
from lockutils.services.qstate import Bitstring, StateVector, superpose
from lockutils.utils import get_logger

logger = get_logger(__name__)

# (sign, bitstring) with every coefficient of modulus 1/sqrt(number of terms)
Terms = Tuple[Tuple[int, Bitstring], ...]

_TERM = re.compile(r"^([+-])1(?:/sqrt(\d+))?\*([01]+)$")


class StateSet(BaseModel):
    """
    Ordered set of states encoding the message 0..N-1. Orthogonality is checked by
    check_orthogonality and on load, not by the model.

    Attributes:
        num_qubits (int): m.
        states (List[StateVector]): states[s] encodes message s.
        terms (List[Terms]): Exact signed support of every state, used by the file codec.
        custom (bool): False only for the built-in locked set of this m.
    """
    model_config = ConfigDict(frozen=True)

    num_qubits: int = Field(..., ge=1)
    states: List[StateVector]
    terms: List[Terms]
    custom: bool = False

    @model_validator(mode="after")
    def _shapes(self):
        if not self.states:
            raise ValueError("a state set needs at least one state")
        if len(self.terms) != len(self.states):
            raise ValueError("terms and states differ in length")
        if any(s.num_qubits != self.num_qubits for s in self.states):
            raise ValueError(f"all states must have {self.num_qubits} qubits")
        return self

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def labels(self) -> List[int]:
        return list(range(len(self.states)))

    @classmethod
    def from_terms(cls, num_qubits: int, terms: List[Terms], custom: bool = True) -> "StateSet":
        states = [superpose([(sign, bits) for sign, bits in signed]) for signed in terms]
        return cls(num_qubits=num_qubits, states=states, terms=[tuple(t) for t in terms], custom=custom)


class OrthogonalityReport(BaseModel):
    max_overlap: float
    worst_pair: Optional[Tuple[int, int]] = None
    passed: bool


def flip(bits: Bitstring, party: int) -> Bitstring:
    index = party - 1
    return bits[:index] + ("1" if bits[index] == "0" else "0") + bits[index + 1:]


def complement(bits: Bitstring) -> Bitstring:
    return bits.translate(str.maketrans("01", "10"))


def locked_set_terms(m: int) -> List[Terms]:
    zeros = "0" * m
    terms = [
        ((1, zeros), (1, complement(zeros))),
        ((1, zeros), (-1, complement(zeros))),
    ]
    for party in range(1, m + 1):
        flipped = flip(zeros, party)
        terms.append(((1, flipped), (1, complement(flipped))))
    return terms


def build_locked_set(m: int) -> StateSet:
    """
    Builds the GHZ-type locked set of m qubits in canonical order:
    |0..0> + |1..1>, |0..0> - |1..1>, then |e_i> + |e_i complement> for i = 1..m.

    Raises:
        DomainError: If m < 3.
    """
    if m < 3:
        logger.error("Locked set needs m >= 3", extra={"m": m})
        raise DomainError(f"locked sets need m >= 3, got {m}")
    if m == 3:
        logger.warning("m=3 locked set carries no resource advantage", extra={"m": m})
    return StateSet.from_terms(m, locked_set_terms(m), custom=False)


def check_orthogonality(state_set: StateSet) -> OrthogonalityReport:
    matrix = np.array([s.amplitudes for s in state_set.states])
    gram = np.abs(matrix.conj() @ matrix.T)
    np.fill_diagonal(gram, 0.0)
    if gram.shape[0] < 2:
        return OrthogonalityReport(max_overlap=0.0, passed=True)
    i, j = np.unravel_index(int(np.argmax(gram)), gram.shape)
    max_overlap = float(gram[i, j])
    return OrthogonalityReport(
        max_overlap=max_overlap,
        worst_pair=(int(min(i, j)), int(max(i, j))),
        passed=max_overlap < NUMERICS.norm_tol,
    )


def _format_term(sign: int, bits: Bitstring, count: int) -> str:
    coefficient = "1" if count == 1 else f"1/sqrt{count}"
    return f"{'+' if sign > 0 else '-'}{coefficient}*{bits}"


def dumps_set(state_set: StateSet) -> str:
    lines = [
        "# locked state set, party 1 leftmost",
        f"m={state_set.num_qubits} N={state_set.size}",
    ]
    for index in state_set.labels:
        terms = state_terms(state_set, index)
        lines.append(";".join(_format_term(sign, bits, len(terms)) for sign, bits in terms))
    return "\n".join(lines) + "\n"


def save_set(state_set: StateSet, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_set(state_set))
    logger.info("Saved state set", extra={"path": path, "m": state_set.num_qubits, "N": state_set.size})


def loads_set(text: str) -> StateSet:
    """
    Parses the set format: header `m=<int> N=<int>`, then one state per line made of
    `;`-separated `<sign>1/sqrt<k>*<bitstring>` terms (k = number of terms). `#` starts a comment.

    Raises:
        ParseError: With the offending line number.
        InvariantError: If the parsed states are not pairwise orthogonal.
    """
    m = n = None
    terms: List[Terms] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m is None:
            header = re.fullmatch(r"m=(\d+)\s+N=(\d+)", line)
            if not header:
                raise ParseError(f"expected header 'm=<int> N=<int>', got {line!r}", lineno)
            m, n = int(header.group(1)), int(header.group(2))
            if m < 1 or n < 1:
                raise ParseError("m and N must be positive", lineno)
            continue
        signed = []
        tokens = [tok.strip() for tok in line.split(";") if tok.strip()]
        for token in tokens:
            match = _TERM.match(token)
            if not match:
                raise ParseError(f"malformed term {token!r}", lineno)
            sign, root, bits = match.groups()
            if len(bits) != m:
                raise ParseError(f"bitstring {bits} has length {len(bits)}, expected {m}", lineno)
            expected_root = str(len(tokens))
            if (root or "1") != expected_root:
                raise ParseError(f"coefficient 1/sqrt{root or 1} does not match {len(tokens)} terms", lineno)
            signed.append((1 if sign == "+" else -1, bits))
        if len({bits for _, bits in signed}) != len(signed):
            raise ParseError("repeated bitstring within a state", lineno)
        terms.append(tuple(signed))

    if m is None:
        raise ParseError("empty set file")
    if len(terms) != n:
        raise ParseError(f"header announces N={n} states, found {len(terms)}")

    custom = not (m >= 3 and terms == locked_set_terms(m))
    state_set = StateSet.from_terms(m, terms, custom=custom)
    report = check_orthogonality(state_set)
    if not report.passed:
        logger.error("Loaded set is not orthogonal", extra={"pair": report.worst_pair, "overlap": report.max_overlap})
        raise InvariantError(f"states {report.worst_pair} overlap by {report.max_overlap:.3g}")
    return state_set


def load_set(path: str) -> StateSet:
    if not os.path.exists(path):
        logger.error("Set file not found: %s", path)
        raise FileNotFoundError(f"Set file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        state_set = loads_set(f.read())
    logger.info("Loaded state set", extra={"path": path, "custom": state_set.custom})
    return state_set


def state_terms(state_set: StateSet, index: int) -> Terms:
    """Exact signed support of one state of the set."""
    return state_set.terms[index]


def support(state: StateVector) -> List[Bitstring]:
    return state.nonzero_support()
