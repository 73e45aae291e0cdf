"""The growing append-only flat archive.

New data only ever enters at the end of the archive, through fixed-size mutable
regions that become immutable once frozen. Every read and write is offered to
the opportunistic hash collection, and hot/cold transitions of the reference
counting stack are turned into page-cache advice.
"""

from __future__ import annotations

import logging
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .capability import MUTABLE, Minter
from .carvpath import ByteSet, Entity, LongPathTable, byte_set
from .errors import (
    AlreadyFrozen,
    FragmentBeyondArchive,
    Frozen,
    InvalidCapability,
    OutOfBounds,
)
from .journal import Journal
from .opphash import HashCollection, Residency
from .pagecache import DONTNEED, NORMAL, Advisor, FadviseAdvisor, MincoreResidency
from .refstack import RefStack

log = logging.getLogger(__name__)


@dataclass
class MutableRegion:
    offset: int
    size: int
    cap: str
    frozen: bool = False
    held: bool = True

    @property
    def entity(self) -> Entity:
        return Entity.data(self.offset, self.size)


@dataclass(frozen=True)
class ArchiveStatus:
    normal_size: int
    dontneed_size: int
    full_archive: Entity


class Archive:
    def __init__(
        self,
        path: Optional[str | Path] = None,
        *,
        advisor: Optional[Advisor] = None,
        residency: Optional[Residency] = None,
        journal: Optional[Journal] = None,
        table: Optional[LongPathTable] = None,
        minter: Optional[Minter] = None,
    ) -> None:
        if path is None:
            self._tmp = tempfile.TemporaryFile()
            self.fd = self._tmp.fileno()
        else:
            self._tmp = None
            self.fd = os.open(path, os.O_RDWR | os.O_CREAT, 0o600)
        self.path = path
        self.end = os.fstat(self.fd).st_size
        self.advisor = advisor if advisor is not None else FadviseAdvisor(self.fd)
        self.residency = residency if residency is not None else MincoreResidency(self.fd)
        self.journal = journal
        self.table = table if table is not None else LongPathTable()
        self.minter = minter if minter is not None else Minter()
        self.stack = RefStack()
        self.hashes = HashCollection()
        self.mutables: dict[str, MutableRegion] = {}
        self.sweep_candidates: set[str] = set()
        self.lock = threading.RLock()
        # everything already present is cold until someone references it
        self._emit(ByteSet.range(0, self.end), DONTNEED)

    def close(self) -> None:
        if self._tmp is not None:
            self._tmp.close()
        else:
            os.close(self.fd)

    def __enter__(self) -> "Archive":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _emit(self, bs: ByteSet, state: str) -> None:
        for start, end in bs:
            self.advisor.advise(start, end - start, state)

    def _region(self, cap: str) -> MutableRegion:
        region = self.mutables.get(cap)
        if region is None:
            raise InvalidCapability("unknown mutable capability")
        return region

    def check_within(self, e: Entity) -> None:
        for frag in e.fragments:
            if not frag.is_sparse and frag.size and frag.end > self.end:
                raise FragmentBeyondArchive(f"{frag.token} beyond archive end {self.end}")

    # -- mutable data -------------------------------------------------------

    def allocate_mutable(self, size: int) -> str:
        if size < 0:
            raise ValueError("negative mutable size")
        with self.lock:
            offset = self.end
            self.end += size
            os.ftruncate(self.fd, self.end)
            cap = self.minter.mint(MUTABLE)
            region = MutableRegion(offset, size, cap)
            self.mutables[cap] = region
            self.open_entity(region.entity)
            return cap

    def mutable_region(self, cap: str) -> MutableRegion:
        with self.lock:
            return self._region(cap)

    def write_mutable(self, cap: str, region_offset: int, data: bytes) -> None:
        with self.lock:
            region = self._region(cap)
            if region.frozen:
                raise Frozen("mutable region already frozen")
            if region_offset < 0 or region_offset + len(data) > region.size:
                raise OutOfBounds(
                    f"write [{region_offset}, {region_offset + len(data)}) outside region of {region.size}"
                )
            if not data:
                return
            pos = region.offset + region_offset
            os.pwrite(self.fd, data, pos)
            self.hashes.feed_chunk(pos, data)

    def read_mutable(self, cap: str, region_offset: int, length: int) -> bytes:
        with self.lock:
            region = self._region(cap)
            length = max(0, min(length, region.size - region_offset))
            return self.read(region.entity, region_offset, length)

    def freeze(self, cap: str) -> Entity:
        with self.lock:
            region = self._region(cap)
            if region.frozen:
                raise AlreadyFrozen("mutable region already frozen")
            region.frozen = True
            return region.entity

    def release_mutable(self, cap: str) -> None:
        """Drop the implicit hot reference held since allocation; the capability dies."""
        with self.lock:
            region = self.mutables.pop(cap, None)
            if region is None:
                raise InvalidCapability("unknown mutable capability")
            region.frozen = True
            if region.held:
                region.held = False
                self.close_entity(region.entity)

    # -- reads --------------------------------------------------------------

    def read_raw(self, archive_offset: int, length: int) -> bytes:
        """Plain archive read; no hashing side effects."""
        return os.pread(self.fd, length, archive_offset)

    def read(self, e: Entity, offset: int, length: int) -> bytes:
        if offset < 0 or length < 0 or offset + length > e.total_size:
            raise OutOfBounds(f"read [{offset}, {offset + length}) outside entity of {e.total_size}")
        with self.lock:
            self.check_within(e)
            out = bytearray()
            pos = 0
            for frag in e.fragments:
                lo = max(offset, pos)
                hi = min(offset + length, pos + frag.size)
                if lo < hi:
                    if frag.is_sparse:
                        out += bytes(hi - lo)
                    else:
                        at = frag.offset + (lo - pos)
                        chunk = os.pread(self.fd, hi - lo, at)
                        if len(chunk) < hi - lo:
                            chunk += bytes(hi - lo - len(chunk))
                        self.hashes.feed_chunk(at, chunk)
                        out += chunk
                pos += frag.size
                if pos >= offset + length:
                    break
            return bytes(out)

    # -- hot / cold ---------------------------------------------------------

    def open_entity(self, e: Entity) -> None:
        with self.lock:
            self.check_within(e)
            result = self.stack.add_entity(e)
            if self.stack.count(e) == 1:
                self.hashes.open_state(e)
                self._emit(result.newly_hot, NORMAL)
                if result.fully_overlapped and byte_set(e):
                    self.sweep_candidates.add(e.token)

    def close_entity(self, e: Entity) -> None:
        with self.lock:
            result = self.stack.remove_entity(e)
            if self.stack.count(e) == 0:
                self.sweep_candidates.discard(e.token)
                digest = self.hashes.drop_state(e)
                if digest is not None and self.journal is not None:
                    self.journal.append("hash", carvpath=e.token, digest=digest)
                self._emit(result.newly_cold, DONTNEED)

    def sweep(self, e: Entity) -> int:
        with self.lock:
            return self.hashes.secondary_sweep(e, self.residency, self.read_raw)

    def run_secondary_sweeps(self) -> int:
        """Sweep every fully-overlapped candidate; returns total bytes advanced."""
        with self.lock:
            total = 0
            for token in list(self.sweep_candidates):
                state = self.hashes.states.get(token)
                if state is None:
                    self.sweep_candidates.discard(token)
                    continue
                total += self.hashes.secondary_sweep(state.entity, self.residency, self.read_raw)
                if state.result is not None:
                    self.sweep_candidates.discard(token)
            return total

    # -- status -------------------------------------------------------------

    def status(self) -> ArchiveStatus:
        with self.lock:
            normal = self.stack.pressure()
            return ArchiveStatus(normal, self.end - normal, Entity.data(0, self.end))

    def entity_fadvise(self, e: Entity) -> tuple[int, int]:
        with self.lock:
            bs = byte_set(e)
            normal = bs.intersection_size(self.stack.level(0))
            return normal, bs.size - normal

    def opportunistic_hash(self, e: Entity) -> tuple[Optional[str], int]:
        """``(digest or None, hashing offset)`` for a hot or previously hashed entity."""
        with self.lock:
            state = self.hashes.states.get(e.token)
            if state is not None:
                return state.result, state.offset
            digest = self.hashes.completed.get(e.token)
            return digest, (e.total_size if digest is not None else 0)
