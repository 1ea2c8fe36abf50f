"""Small result containers shared by the solver and checker modules."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class CheckReport:
    """Outcome of a single inequality/property check.

    ``margin`` is signed so that the check's tolerance convention can be
    re-verified by the caller: its sign must be consistent with ``passed``.
    ``certified`` is True only when every inner solve used a brute-force
    (grid/enumeration) path.
    """

    name: str
    passed: bool
    margin: float
    details: dict = field(default_factory=dict)
    certified: bool = False

    def __bool__(self):
        return self.passed


@dataclass
class MembershipReport:
    """Region-membership decision with its signed margin.

    ``margin`` <= 0 (within the caller's tolerance) means the defining
    inequality family holds; ``certified`` distinguishes brute-force-backed
    decisions from multi-start heuristics.
    """

    member: bool
    margin: float
    certified: bool = False
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.member
