# workflow/tools/broker.py

from typing import List, Set, Tuple

from lockutils.errors import BudgetExceeded, DomainError
from lockutils.services.resources import ExtractionPlan, Ledger, TeleportMove
from lockutils.utils import get_logger

logger = get_logger(__name__)


class EntanglementBroker:
    """
    Hands out Bell pairs for one run. Pairs are only issued between the parties of an
    authorised plan move, and every pair is charged to the ledger.
    """
    def __init__(self, budget: int):
        self.ledger = Ledger(granted=budget)
        self._allowed: Set[Tuple[int, int]] = set()
        self._issued: List[str] = []

    def authorise(self, plan: ExtractionPlan) -> None:
        """
        Raises:
            BudgetExceeded: If the plan needs more pairs than the budget.
        """
        if plan.bell_cost > self.ledger.granted:
            logger.error("Plan exceeds budget", extra={"cost": plan.bell_cost, "budget": self.ledger.granted})
            raise BudgetExceeded(f"plan needs {plan.bell_cost} Bell pairs, budget is {self.ledger.granted}")
        self._allowed = {(move.source, move.dest) for move in plan.moves}

    def issue(self, move: TeleportMove) -> str:
        """Consumes one pair for the move and returns its id."""
        if (move.source, move.dest) not in self._allowed:
            logger.error("Pair outside the plan", extra={"source": move.source, "dest": move.dest})
            raise DomainError(f"no authorised move {move.source}->{move.dest}")
        self.ledger.consume(1)
        self._allowed.discard((move.source, move.dest))
        pair_id = f"bp-{len(self._issued)}"
        self._issued.append(pair_id)
        return pair_id

    @property
    def issued(self) -> List[str]:
        return list(self._issued)
