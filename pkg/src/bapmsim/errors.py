"""Exception and warning types shared across the package."""

from __future__ import annotations


class BapmError(Exception):
    """Base class for model errors."""


class InvalidSpec(BapmError, ValueError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid specification")


class OverCommit(BapmError, ValueError):
    pass


class OutOfMemory(BapmError):
    pass


class AllocationConflict(BapmError):
    pass


class CyclicWorkflow(BapmError, ValueError):
    pass


class InsufficientCapacity(BapmError):
    pass


class PatternRequired(BapmError, ValueError):
    pass


class Unidentifiable(BapmError):
    def __init__(self, group: str, n_targets: int, n_params: int):
        self.group = group
        super().__init__(
            f"parameter group {group!r} is unidentifiable: "
            f"{n_targets} target(s) for {n_params} free parameter(s)")


class NoConvergence(BapmError):
    pass


class MemorySpaceUnusable(UserWarning):
    """Memory space was reserved on a node running in AppDirect mode."""
