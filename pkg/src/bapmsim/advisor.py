"""Decision trees for choosing a B-APM platform configuration and AppDirect strategy."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .domain import ApplicationProfile, IoPattern, Modifiable
from .errors import PatternRequired


class Platform(str, Enum):
    MEMORY_MODE = "MemoryMode"
    APP_DIRECT_MODE = "AppDirectMode"
    MIXED = "Mixed"
    NO_BAPM_NEEDED = "NoBapmNeeded"


class Strategy(str, Enum):
    FSDAX = "Fsdax"
    DISTRIBUTED_EPHEMERAL_FS = "DistributedEphemeralFs"
    DIRECT_ACCESS = "DirectAccess"


Trail = tuple[tuple[str, str], ...]

Q_MEMORY = "Memory intensive?"
Q_IO = "I/O intensive?"
Q_PATTERN = "I/O access pattern?"
Q_MODIFY = "Code changes possible?"
Q_CRITICAL = "I/O performance critical?"


def _yn(flag: bool) -> str:
    return "yes" if flag else "no"


@dataclass(frozen=True)
class Recommendation:
    platform: Platform
    strategy: Strategy | None
    rationale: Trail

    def __post_init__(self):
        needs = self.platform in (Platform.APP_DIRECT_MODE, Platform.MIXED)
        if needs != (self.strategy is not None):
            raise ValueError(f"{self.platform.value} {'requires' if needs else 'forbids'} a strategy")
        if not self.rationale:
            raise ValueError("rationale must not be empty")

    @property
    def label(self) -> str:
        if self.platform is Platform.APP_DIRECT_MODE:
            return f"AppDirect + {self.strategy.value}"
        if self.platform is Platform.MIXED:
            return f"Mixed + {self.strategy.value}"
        return self.platform.value

    def to_dict(self) -> dict:
        return {
            "platform": self.platform.value,
            "strategy": self.strategy.value if self.strategy else None,
            "label": self.label,
            "rationale": [list(qa) for qa in self.rationale],
        }

    def to_text(self) -> str:
        lines = [f"recommendation: {self.label}"]
        lines += [f"  {q} -> {a}" for q, a in self.rationale]
        return "\n".join(lines)


def recommend_platform_mode(profile: ApplicationProfile) -> tuple[Platform, Trail]:
    mem, io = profile.memory_intensive, profile.io_intensive
    trail = ((Q_MEMORY, _yn(mem)), (Q_IO, _yn(io)))
    if mem and io:
        return Platform.MIXED, trail
    if mem:
        return Platform.MEMORY_MODE, trail
    if io:
        return Platform.APP_DIRECT_MODE, trail
    # neither resource is under pressure; this leaf is not part of the original tree
    return Platform.NO_BAPM_NEEDED, trail + (("No memory or I/O pressure", "no B-APM needed"),)


def recommend_appdirect_strategy(profile: ApplicationProfile) -> tuple[Strategy, Trail]:
    pattern = profile.io_pattern
    if pattern is IoPattern.NONE:
        raise PatternRequired(f"{profile.name}: an I/O access pattern is needed to pick a strategy")
    trail: Trail = ((Q_PATTERN, pattern.value),)
    if pattern is IoPattern.LOCAL:
        return Strategy.FSDAX, trail
    # "undesirable" modifications follow the no-modification path
    modifiable = profile.modifiable is Modifiable.YES
    trail += ((Q_MODIFY, profile.modifiable.value),)
    if not modifiable:
        return Strategy.DISTRIBUTED_EPHEMERAL_FS, trail
    trail += ((Q_CRITICAL, _yn(profile.io_perf_critical)),)
    if profile.io_perf_critical:
        return Strategy.DIRECT_ACCESS, trail
    return Strategy.DISTRIBUTED_EPHEMERAL_FS, trail


def recommend(profile: ApplicationProfile) -> Recommendation:
    platform, trail = recommend_platform_mode(profile)
    strategy = None
    if platform in (Platform.APP_DIRECT_MODE, Platform.MIXED):
        strategy, more = recommend_appdirect_strategy(profile)
        trail += more
    return Recommendation(platform, strategy, trail)
