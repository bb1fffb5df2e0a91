from itertools import combinations
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.config import AUDIT
from lockutils.errors import DimensionMismatch, DomainError, InvariantError, ParseError
from lockutils.utils import get_logger

logger = get_logger(__name__)

Block = Tuple[int, ...]


class Partition(BaseModel):
    """
    Grouping of parties 1..m into disjoint blocks; parties of one block may measure jointly.

    Attributes:
        num_parties (int): m.
        blocks (Tuple[Block, ...]): Sorted blocks, ordered by their minimum element.
    """
    model_config = ConfigDict(frozen=True)

    num_parties: int = Field(..., ge=1)
    blocks: Tuple[Block, ...]

    @field_validator("blocks", mode="before")
    @classmethod
    def _canonical(cls, value):
        blocks = [tuple(sorted(int(p) for p in block)) for block in value]
        return tuple(sorted(blocks, key=lambda block: block[0] if block else 0))

    @model_validator(mode="after")
    def _covers(self):
        members = [p for block in self.blocks for p in block]
        if any(not block for block in self.blocks):
            raise ValueError("blocks must be nonempty")
        if len(members) != len(set(members)):
            raise ValueError("blocks must be disjoint")
        if set(members) != set(range(1, self.num_parties + 1)):
            raise ValueError(f"blocks must cover exactly 1..{self.num_parties}")
        return self

    def __str__(self) -> str:
        return format_partition(self)

    def __len__(self) -> int:
        return len(self.blocks)

    def block_of(self, party: int) -> Block:
        for block in self.blocks:
            if party in block:
                return block
        raise DimensionMismatch(f"party {party} not in 1..{self.num_parties}")

    def contains_block(self, parties: Iterable[int]) -> bool:
        """True when all given parties sit in one block."""
        parties = set(parties)
        return any(parties <= set(block) for block in self.blocks)


class Coalition(BaseModel):
    """
    Collaborating parties; everybody else stands alone.

    Attributes:
        num_parties (int): m.
        members (FrozenSet[int]): 2 <= |members| <= m - 1.
    """
    model_config = ConfigDict(frozen=True)

    num_parties: int
    members: FrozenSet[int]

    @model_validator(mode="after")
    def _size_bounds(self):
        if not 2 <= len(self.members) <= self.num_parties - 1:
            raise ValueError(f"a coalition has between 2 and {self.num_parties - 1} members, got {len(self.members)}")
        if any(not 1 <= p <= self.num_parties for p in self.members):
            raise ValueError(f"coalition members must lie in 1..{self.num_parties}")
        return self


def make_partition(m: int, blocks: Iterable[Iterable[int]]) -> Partition:
    try:
        return Partition(num_parties=m, blocks=[tuple(b) for b in blocks])
    except ValidationError as e:
        raise InvariantError(f"invalid partition of 1..{m}: {e.errors()[0]['msg']}")


def make_coalition(m: int, members: Iterable[int]) -> Coalition:
    try:
        return Coalition(num_parties=m, members=frozenset(members))
    except ValidationError as e:
        logger.error("Rejected coalition", extra={"m": m, "members": sorted(members)})
        raise DomainError(e.errors()[0]["msg"])


def format_partition(partition: Partition) -> str:
    wide = partition.num_parties > 9
    joiner = "," if wide else ""
    return "|".join(joiner.join(str(p) for p in block) for block in partition.blocks)


def parse_partition(text: str, m: Optional[int] = None) -> Partition:
    """
    Parses `12|3|45`; with parties above 9 members are comma separated (`1,10|2,3`).

    Args:
        text (str): Partition text.
        m (Optional[int]): Number of parties; inferred from the largest member when None.
    """
    text = text.strip()
    if not text:
        raise ParseError("empty partition")
    blocks = []
    for chunk in text.split("|"):
        chunk = chunk.strip()
        try:
            if "," in text:
                blocks.append(tuple(int(tok) for tok in chunk.split(",") if tok.strip()))
            else:
                blocks.append(tuple(int(ch) for ch in chunk))
        except ValueError:
            raise ParseError(f"invalid partition block {chunk!r}")
    members = [p for block in blocks for p in block]
    if not members:
        raise ParseError("partition has no parties")
    m = m if m is not None else max(members)
    try:
        return Partition(num_parties=m, blocks=blocks)
    except ValidationError as e:
        raise ParseError(f"invalid partition {text!r}: {e.errors()[0]['msg']}")


def singletons(m: int) -> Partition:
    return Partition(num_parties=m, blocks=[(p,) for p in range(1, m + 1)])


def induced_partition(m: int, coalition: Coalition) -> Partition:
    """The coalition forms one block and every other party a singleton."""
    if coalition.num_parties != m:
        raise DomainError(f"coalition is over {coalition.num_parties} parties, expected {m}")
    others = [(p,) for p in range(1, m + 1) if p not in coalition.members]
    return Partition(num_parties=m, blocks=[tuple(coalition.members)] + others)


def is_coarsening(p: Partition, q: Partition) -> bool:
    """True iff every block of q is contained in some block of p (p coarser than or equal to q)."""
    if p.num_parties != q.num_parties:
        raise DimensionMismatch(f"partitions of {p.num_parties} and {q.num_parties} parties")
    owner: Dict[int, int] = {}
    for index, block in enumerate(p.blocks):
        for party in block:
            owner[party] = index
    return all(len({owner[party] for party in block}) == 1 for block in q.blocks)


def refines(p: Partition, q: Partition) -> bool:
    return is_coarsening(q, p)


def merge_parties(partition: Partition, source: int, dest: int) -> Partition:
    """Joins the blocks of source and dest (one teleport merge)."""
    source_block = partition.block_of(source)
    dest_block = partition.block_of(dest)
    if source_block == dest_block:
        return partition
    blocks = [b for b in partition.blocks if b not in (source_block, dest_block)]
    blocks.append(source_block + dest_block)
    return Partition(num_parties=partition.num_parties, blocks=blocks)


def partition_from_owners(owners: Sequence[int]) -> Partition:
    """Blocks are the sets of qubits held by the same party."""
    grouped: Dict[int, List[int]] = {}
    for qubit, owner in enumerate(owners, start=1):
        grouped.setdefault(owner, []).append(qubit)
    return Partition(num_parties=len(owners), blocks=list(grouped.values()))


def _pairings_of(items: Tuple[int, ...]) -> Iterator[List[Block]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for i, partner in enumerate(rest):
        remaining = rest[:i] + rest[i + 1:]
        for tail in _pairings_of(remaining):
            yield [(first, partner)] + tail


def pairings(m: int) -> Iterator[Partition]:
    """All (m-1)!! perfect pairings of 1..m, first party paired with each partner in turn."""
    if m < 2 or m % 2:
        raise DomainError(f"pairings need an even m >= 2, got {m}")
    for blocks in _pairings_of(tuple(range(1, m + 1))):
        yield Partition(num_parties=m, blocks=blocks)


def odd_canonical_partitions(m: int) -> Iterator[Partition]:
    """Partitions of an odd m >= 5 into (m-3)/2 pairs and exactly one triple."""
    if m < 5 or m % 2 == 0:
        raise DomainError(f"odd canonical partitions need an odd m >= 5, got {m}")
    parties = tuple(range(1, m + 1))
    for triple in combinations(parties, 3):
        rest = tuple(p for p in parties if p not in triple)
        for blocks in _pairings_of(rest):
            yield Partition(num_parties=m, blocks=[triple] + blocks)


def singleton_witness(partition: Partition) -> Optional[int]:
    lone = [block[0] for block in partition.blocks if len(block) == 1]
    return min(lone) if lone else None


def enumerate_partitions(m: int, allow_large: bool = False) -> Iterator[Partition]:
    """
    Every partition of 1..m exactly once, via restricted growth strings.

    Raises:
        DomainError: If m exceeds the enumeration guard and allow_large is False.
    """
    if m < 1:
        raise DomainError(f"m must be positive, got {m}")
    if m > AUDIT.max_enumeration_m and not allow_large:
        logger.error("Partition enumeration refused", extra={"m": m})
        raise DomainError(f"enumerating partitions of {m} parties is refused above m={AUDIT.max_enumeration_m}")

    def grow(prefix: List[int], largest: int) -> Iterator[List[int]]:
        if len(prefix) == m:
            yield prefix
            return
        for label in range(largest + 2):
            yield from grow(prefix + [label], max(largest, label))

    for labels in grow([0], 0):
        blocks: Dict[int, List[int]] = {}
        for party, label in enumerate(labels, start=1):
            blocks.setdefault(label, []).append(party)
        yield Partition(num_parties=m, blocks=list(blocks.values()))


def blocks_count(partition: Partition) -> int:
    return len(partition.blocks)
