from .broker import EntanglementBroker
from .event_log import EventLog
