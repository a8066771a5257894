"""First-fit core scheduler used by the pilot agent.

The pilot owns a fixed range of cores. Units ask for a contiguous block;
the scheduler places each at the lowest free offset that fits. Units that
do not fit wait in FIFO order, and a unit that can never fit (wider than
the pilot itself) is rejected outright.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .units import UnitDescription


class UnschedulableError(Exception):
    """A unit requests more cores than the pilot has in total."""


@dataclass(frozen=True)
class Placement:
    uid: str
    core_offset: int
    cores: int


class CoreMap:
    """Tracks which contiguous core blocks are allocated."""

    def __init__(self, total_cores: int) -> None:
        if total_cores < 1:
            raise ValueError("total_cores must be >= 1")
        self.total_cores = total_cores
        # uid -> (offset, width), kept sorted on demand for the fit scan.
        self._allocated: dict[str, tuple[int, int]] = {}

    def used_cores(self) -> int:
        return sum(width for _, width in self._allocated.values())

    def find_offset(self, cores: int) -> int | None:
        """Lowest offset where ``cores`` contiguous cores are free."""
        blocks = sorted(self._allocated.values())
        cursor = 0
        for offset, width in blocks:
            if offset - cursor >= cores:
                return cursor
            cursor = max(cursor, offset + width)
        if self.total_cores - cursor >= cores:
            return cursor
        return None

    def allocate(self, uid: str, cores: int) -> int:
        offset = self.find_offset(cores)
        if offset is None:
            raise RuntimeError(f"no contiguous block of {cores} cores free")
        self._allocated[uid] = (offset, cores)
        return offset

    def release(self, uid: str) -> None:
        del self._allocated[uid]


class FirstFitScheduler:
    """FIFO first-fit placement over a pilot's core map.

    ``offer`` queues units, ``place_ready`` returns every placement that
    fits right now. A skipped unit keeps its queue position, so freeing
    cores can only ever help units behind it, never reorder them.
    """

    def __init__(self, total_cores: int) -> None:
        self.cores = CoreMap(total_cores)
        self._waiting: deque[UnitDescription] = deque()

    def offer(self, unit: UnitDescription) -> None:
        if unit.cores > self.cores.total_cores:
            raise UnschedulableError(
                f"unit {unit.uid} wants {unit.cores} cores but the pilot "
                f"has only {self.cores.total_cores}"
            )
        self._waiting.append(unit)

    def waiting_count(self) -> int:
        return len(self._waiting)

    def place_ready(self) -> list[tuple[UnitDescription, Placement]]:
        placed: list[tuple[UnitDescription, Placement]] = []
        still_waiting: deque[UnitDescription] = deque()
        while self._waiting:
            unit = self._waiting.popleft()
            offset = self.cores.find_offset(unit.cores)
            if offset is None:
                still_waiting.append(unit)
                continue
            self.cores.allocate(unit.uid, unit.cores)
            placed.append((unit, Placement(unit.uid, offset, unit.cores)))
        self._waiting = still_waiting
        return placed

    def release(self, uid: str) -> None:
        self.cores.release(uid)

    def drain_waiting(self) -> list[UnitDescription]:
        """Remove and return every queued unit (used at walltime expiry)."""
        drained = list(self._waiting)
        self._waiting.clear()
        return drained
