"""Page-cache advice sinks and page-residency oracles.

The archive only ever talks to these through two tiny interfaces:
``advise(offset, size, state)`` and ``resident_prefix(offset, length)``.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import logging
import mmap
import os
from typing import Literal, Protocol

from .carvpath import EMPTY, ByteSet

log = logging.getLogger(__name__)

NORMAL = "normal"
DONTNEED = "dontneed"
AdviceState = Literal["normal", "dontneed"]


class Advisor(Protocol):
    def advise(self, offset: int, size: int, state: AdviceState) -> None: ...


class NullAdvisor:
    def advise(self, offset: int, size: int, state: AdviceState) -> None:
        pass


class RecordingAdvisor:
    """Keeps the advice stream and the resulting net-normal byte set."""

    def __init__(self) -> None:
        self.calls: list[tuple[int, int, str]] = []
        self.net_normal: ByteSet = EMPTY

    def advise(self, offset: int, size: int, state: AdviceState) -> None:
        self.calls.append((offset, size, state))
        chunk = ByteSet.range(offset, offset + size)
        if state == NORMAL:
            self.net_normal = self.net_normal | chunk
        else:
            self.net_normal = self.net_normal - chunk

    def advised(self, state: str) -> ByteSet:
        return ByteSet((o, o + s) for o, s, st in self.calls if st == state)


class FadviseAdvisor:
    """Forwards advice to ``posix_fadvise`` on the archive's backing file."""

    def __init__(self, fd: int) -> None:
        self.fd = fd

    def advise(self, offset: int, size: int, state: AdviceState) -> None:
        if size <= 0:
            return
        advice = os.POSIX_FADV_NORMAL if state == NORMAL else os.POSIX_FADV_DONTNEED
        try:
            os.posix_fadvise(self.fd, offset, size, advice)
        except OSError as exc:
            log.debug("posix_fadvise(%d, %d, %s) failed: %s", offset, size, state, exc)


class ScriptedResidency:
    """Reports whatever byte set the test says is resident."""

    def __init__(self, resident: ByteSet = EMPTY) -> None:
        self.resident = resident

    def resident_prefix(self, archive_offset: int, length: int) -> int:
        for start, end in self.resident:
            if start <= archive_offset < end:
                return min(length, end - archive_offset)
        return 0


class MincoreResidency:
    """Page residency of the backing file via ``mmap`` + ``mincore``."""

    PROT_READ = 0x1

    def __init__(self, fd: int) -> None:
        self.fd = fd
        libc = ctypes.CDLL(ctypes.util.find_library("c"), use_errno=True)
        self._mmap = libc.mmap
        self._mmap.restype = ctypes.c_void_p
        self._mmap.argtypes = [
            ctypes.c_void_p, ctypes.c_size_t, ctypes.c_int,
            ctypes.c_int, ctypes.c_int, ctypes.c_long,
        ]
        self._munmap = libc.munmap
        self._munmap.argtypes = [ctypes.c_void_p, ctypes.c_size_t]
        self._mincore = libc.mincore
        self._mincore.argtypes = [ctypes.c_void_p, ctypes.c_size_t, ctypes.c_void_p]

    def resident_prefix(self, archive_offset: int, length: int) -> int:
        end = min(archive_offset + length, os.fstat(self.fd).st_size)
        if end <= archive_offset:
            return 0
        page = mmap.PAGESIZE
        start = archive_offset - archive_offset % page
        maplen = end - start
        addr = self._mmap(None, maplen, self.PROT_READ, mmap.MAP_SHARED, self.fd, start)
        if addr in (None, ctypes.c_void_p(-1).value):
            return 0
        try:
            npages = (maplen + page - 1) // page
            vec = (ctypes.c_ubyte * npages)()
            if self._mincore(addr, maplen, vec) != 0:
                return 0
            k = 0
            while k < npages and vec[k] & 1:
                k += 1
        finally:
            self._munmap(addr, maplen)
        return max(0, min(end, start + k * page) - archive_offset)
