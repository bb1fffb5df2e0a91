# workflow/tools/event_log.py

import os
from typing import Annotated, Any, Dict, Iterable, List, Literal, Optional, Union

from pydantic import BaseModel, Field, TypeAdapter, ValidationError

from lockutils.errors import CorruptLog
from lockutils.utils import get_logger

logger = get_logger(__name__)


class ScenarioRecord(BaseModel):
    """Header of every log: what was run, with which scenario (and supplied protocol, if any)."""
    event: Literal["scenario"] = "scenario"
    seq: int = 0
    mode: Literal["distribution", "attack", "extraction"]
    scenario: Dict[str, Any]
    protocol: Optional[str] = None


class DistributeRecord(BaseModel):
    event: Literal["distribute"] = "distribute"
    seq: int = 0
    m: int
    set_size: int
    custom: bool
    owners: List[int]


class MessageRecord(BaseModel):
    """Classical message between agents; receiver 'broadcast' reaches every party."""
    event: Literal["message"] = "message"
    seq: int = 0
    sender: Union[int, Literal["referee", "broker"]]
    receiver: Union[int, Literal["broadcast", "referee"]]
    payload: Dict[str, Any]


class MeasurementRecord(BaseModel):
    event: Literal["measurement"] = "measurement"
    seq: int = 0
    block: List[int]
    kind: str
    outcome: str
    probability: float


class TeleportRecord(BaseModel):
    event: Literal["teleport"] = "teleport"
    seq: int = 0
    source: int
    dest: int
    pair_id: str
    fidelity: float


class GuessRecord(BaseModel):
    event: Literal["guess"] = "guess"
    seq: int = 0
    value: Optional[int]


class VerdictRecord(BaseModel):
    event: Literal["verdict"] = "verdict"
    seq: int = 0
    verdict: Dict[str, Any]


Event = Annotated[
    Union[ScenarioRecord, DistributeRecord, MessageRecord, MeasurementRecord, TeleportRecord, GuessRecord, VerdictRecord],
    Field(discriminator="event"),
]
_EVENT = TypeAdapter(Event)


class EventLog(BaseModel):
    """
    Append-only, totally ordered record of one run. Each record carries its position
    as `seq`; the log renders as one JSON object per line, the verdict last.
    """
    records: List[Event] = Field(default_factory=list)

    def append(self, record: BaseModel) -> None:
        self.records.append(record.model_copy(update={"seq": len(self.records)}))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def header(self) -> Optional[ScenarioRecord]:
        if self.records and isinstance(self.records[0], ScenarioRecord):
            return self.records[0]
        return None

    @property
    def verdict(self) -> Optional[Dict[str, Any]]:
        if self.records and isinstance(self.records[-1], VerdictRecord):
            return self.records[-1].verdict
        return None

    def of_kind(self, event: str) -> List[BaseModel]:
        return [r for r in self.records if r.event == event]

    def to_lines(self) -> List[str]:
        return [record.model_dump_json() for record in self.records]

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.to_lines())

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "EventLog":
        """
        Raises:
            CorruptLog: On an unreadable record or a gap in the sequence numbers.
        """
        records = []
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = _EVENT.validate_json(line)
            except ValidationError as e:
                logger.error("Unreadable log record", extra={"line": lineno})
                raise CorruptLog(f"line {lineno}: {e.errors()[0]['msg']}")
            if record.seq != len(records):
                raise CorruptLog(f"line {lineno}: expected seq {len(records)}, got {record.seq}")
            records.append(record)
        return cls(records=records)

    @classmethod
    def loads(cls, text: str) -> "EventLog":
        return cls.from_lines(text.splitlines())

    def save(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps())
        logger.info("Saved event log", extra={"path": path, "records": len(self.records)})

    @classmethod
    def load(cls, path: str) -> "EventLog":
        if not os.path.exists(path):
            logger.error("Event log not found: %s", path)
            raise FileNotFoundError(f"Event log not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            return cls.loads(f.read())
