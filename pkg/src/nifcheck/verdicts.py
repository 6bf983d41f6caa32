"""Check outcomes with reproducible witnesses."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

INSECURE = "INSECURE"
BOUNDED_SECURE = "BOUNDED_SECURE"
CERTIFIED_SECURE = "CERTIFIED_SECURE"
# Certification-style checks are sound but not complete, so their failure is
# reported as inconclusive rather than insecure.
INCONCLUSIVE = "INCONCLUSIVE"

OUTCOMES = (INSECURE, BOUNDED_SECURE, CERTIFIED_SECURE, INCONCLUSIVE)


def jsonable(value):
    """Recursively convert witness material to plain JSON types."""
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return sorted(jsonable(v) for v in value)
    if isinstance(value, Mapping):
        return {str(k): jsonable(v) for k, v in value.items()}
    return str(value)


@dataclass(frozen=True)
class Verdict:
    property: str
    outcome: str
    witness: Optional[tuple] = None
    depth: Optional[int] = None
    notes: Tuple[str, ...] = ()
    details: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")

    def __bool__(self) -> bool:
        return self.outcome in (BOUNDED_SECURE, CERTIFIED_SECURE)

    def to_json(self) -> dict:
        return {
            "property": self.property,
            "outcome": self.outcome,
            "witness": jsonable(self.witness),
            "depth": self.depth,
            "notes": list(self.notes),
            "details": jsonable(self.details),
        }
