"""Reference counting stack over archive bytes.

Level ``i`` of the stack holds every byte referenced at least ``i + 1`` times.
Entities are counted by canonical token; only the first reference to an entity
merges its bytes up into the stack and only the last one unmerges them again.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional

from .carvpath import EMPTY, ByteSet, Entity, byte_set
from .errors import EmptyByteSet, StackCorruption, UnknownEntity


@dataclass(frozen=True)
class MergeResult:
    newly_hot: ByteSet
    fully_overlapped: bool


@dataclass(frozen=True)
class UnmergeResult:
    newly_cold: ByteSet


@dataclass(frozen=True)
class PolicyStats:
    bytes_at_count_1: int
    bytes_at_global_max_count: int
    bytes_not_count_1: int
    weighted_count_sum: int
    data_bytes: int
    min_data_offset: Optional[int]
    max_count: int


class RefStack:
    def __init__(self) -> None:
        self.levels: list[ByteSet] = []
        self.entity_counts: dict[str, int] = {}
        self.version = 0
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self.levels)

    def level(self, i: int) -> ByteSet:
        return self.levels[i] if i < len(self.levels) else EMPTY

    def count(self, e: Entity) -> int:
        return self.entity_counts.get(e.token, 0)

    def add_entity(self, e: Entity) -> MergeResult:
        with self._lock:
            key = e.token
            n = self.entity_counts.get(key, 0)
            self.entity_counts[key] = n + 1
            if n:
                return MergeResult(EMPTY, True)
            carry = byte_set(e)
            newly_hot = carry - self.level(0)
            i = 0
            while carry:
                below = self.level(i)
                merged = carry | below
                if i < len(self.levels):
                    self.levels[i] = merged
                else:
                    self.levels.append(merged)
                carry = carry & below
                i += 1
            self.version += 1
            return MergeResult(newly_hot, not newly_hot)

    def remove_entity(self, e: Entity) -> UnmergeResult:
        with self._lock:
            key = e.token
            n = self.entity_counts.get(key, 0)
            if n == 0:
                raise UnknownEntity(key)
            if n > 1:
                self.entity_counts[key] = n - 1
                return UnmergeResult(EMPTY)
            carry = byte_set(e)
            if not carry.issubset(self.level(0)):
                raise StackCorruption(f"{key} is not fully covered by the bottom level")
            del self.entity_counts[key]
            for i in range(len(self.levels) - 1, 0, -1):
                level = self.levels[i]
                self.levels[i] = level - carry
                carry = carry - level
            if self.levels:
                self.levels[0] = self.levels[0] - carry
            while self.levels and not self.levels[-1]:
                self.levels.pop()
            self.version += 1
            return UnmergeResult(carry)

    def pressure(self) -> int:
        return self.level(0).size

    def whatif(self, e: Entity) -> int:
        return byte_set(e).subtract(self.level(0)).size

    def _level_overlaps(self, bs: ByteSet) -> list[int]:
        """``|bs & S_i|`` for every level, stopping at the first zero."""
        out = []
        for level in self.levels:
            n = bs.intersection_size(level)
            if not n:
                break
            out.append(n)
        return out

    def refcount_range(self, e: Entity) -> tuple[int, int]:
        bs = byte_set(e)
        if not bs:
            raise EmptyByteSet(e.token)
        with self._lock:
            overlaps = self._level_overlaps(bs)
        high = len(overlaps)
        low = sum(1 for n in overlaps if n == bs.size)
        return low, high

    def count_stats(self, e: Entity) -> PolicyStats:
        bs = byte_set(e)
        with self._lock:
            overlaps = self._level_overlaps(bs)
            top = len(self.levels)
        at_least = overlaps + [0]
        at_one = at_least[0] - at_least[1] if overlaps else 0
        at_global_max = overlaps[top - 1] if top and len(overlaps) == top else 0
        return PolicyStats(
            bytes_at_count_1=at_one,
            bytes_at_global_max_count=at_global_max,
            bytes_not_count_1=bs.size - at_one,
            weighted_count_sum=sum(overlaps),
            data_bytes=bs.size,
            min_data_offset=bs.min,
            max_count=len(overlaps),
        )

    def snapshot(self) -> list[ByteSet]:
        with self._lock:
            return list(self.levels)
