# workflow/__init__.py

from .netharness import LockingHarnessWorkflow, AttackReport, ExtractionReport

__all__ = [
    "LockingHarnessWorkflow",
    "AttackReport",
    "ExtractionReport",
]
