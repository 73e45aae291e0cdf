"""Independent brute-force oracles used by the test-suite.

Nothing here imports the package's algorithms: byte sets are boolean arrays,
reference counts are per-byte counters, and BLAKE2b is a from-scratch RFC 7693
transcription.
"""

from __future__ import annotations

import random
import struct

import numpy as np

# -- BLAKE2b (RFC 7693) -----------------------------------------------------

_IV = (
    0x6A09E667F3BCC908, 0xBB67AE8584CAA73B, 0x3C6EF372FE94F82B, 0xA54FF53A5F1D36F1,
    0x510E527FADE682D1, 0x9B05688C2B3E6C1F, 0x1F83D9ABFB41BD6B, 0x5BE0CD19137E2179,
)
_SIGMA = (
    (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15),
    (14, 10, 4, 8, 9, 15, 13, 6, 1, 12, 0, 2, 11, 7, 5, 3),
    (11, 8, 12, 0, 5, 2, 15, 13, 10, 14, 3, 6, 7, 1, 9, 4),
    (7, 9, 3, 1, 13, 12, 11, 14, 2, 6, 5, 10, 4, 0, 15, 8),
    (9, 0, 5, 7, 2, 4, 10, 15, 14, 1, 11, 12, 6, 8, 3, 13),
    (2, 12, 6, 10, 0, 11, 8, 3, 4, 13, 7, 5, 15, 14, 1, 9),
    (12, 5, 1, 15, 14, 13, 4, 10, 0, 7, 6, 3, 9, 2, 8, 11),
    (13, 11, 7, 14, 12, 1, 3, 9, 5, 0, 15, 4, 8, 6, 2, 10),
    (6, 15, 14, 9, 11, 3, 0, 8, 12, 2, 13, 7, 1, 4, 10, 5),
    (10, 2, 8, 4, 7, 6, 1, 5, 15, 11, 9, 14, 3, 12, 13, 0),
)
_M64 = 0xFFFFFFFFFFFFFFFF


def _rotr(x: int, n: int) -> int:
    return ((x >> n) | (x << (64 - n))) & _M64


def _compress(h: list[int], block: bytes, t: int, last: bool) -> None:
    m = struct.unpack("<16Q", block)
    v = list(h) + list(_IV)
    v[12] ^= t & _M64
    v[13] ^= t >> 64
    if last:
        v[14] ^= _M64

    def g(a, b, c, d, x, y):
        v[a] = (v[a] + v[b] + x) & _M64
        v[d] = _rotr(v[d] ^ v[a], 32)
        v[c] = (v[c] + v[d]) & _M64
        v[b] = _rotr(v[b] ^ v[c], 24)
        v[a] = (v[a] + v[b] + y) & _M64
        v[d] = _rotr(v[d] ^ v[a], 16)
        v[c] = (v[c] + v[d]) & _M64
        v[b] = _rotr(v[b] ^ v[c], 63)

    for r in range(12):
        s = _SIGMA[r % 10]
        g(0, 4, 8, 12, m[s[0]], m[s[1]])
        g(1, 5, 9, 13, m[s[2]], m[s[3]])
        g(2, 6, 10, 14, m[s[4]], m[s[5]])
        g(3, 7, 11, 15, m[s[6]], m[s[7]])
        g(0, 5, 10, 15, m[s[8]], m[s[9]])
        g(1, 6, 11, 12, m[s[10]], m[s[11]])
        g(2, 7, 8, 13, m[s[12]], m[s[13]])
        g(3, 4, 9, 14, m[s[14]], m[s[15]])
    for i in range(8):
        h[i] ^= v[i] ^ v[i + 8]


def ref_blake2b(data: bytes, outlen: int = 32) -> str:
    h = list(_IV)
    h[0] ^= 0x01010000 ^ outlen
    t = 0
    n = len(data)
    pos = 0
    while n - pos > 128:
        t += 128
        _compress(h, data[pos : pos + 128], t, False)
        pos += 128
    tail = data[pos:]
    t += len(tail)
    _compress(h, tail.ljust(128, b"\0"), t, True)
    return struct.pack("<8Q", *h)[:outlen].hex()


# -- byte sets and CarvPaths --------------------------------------------------

def mask_of(intervals, universe: int) -> np.ndarray:
    m = np.zeros(universe, dtype=bool)
    for s, e in intervals:
        m[s:e] = True
    return m


def intervals_of(mask: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate(([False], mask, [False])).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return [(int(s), int(e)) for s, e in zip(edges[::2], edges[1::2])]


SPARSE = -1


def materialize(fragments) -> list[int]:
    """Per-byte archive positions of a fragment list; sparse bytes are ``SPARSE``."""
    out: list[int] = []
    for kind, off, size in fragments:
        if kind == "S":
            out.extend([SPARSE] * size)
        else:
            out.extend(range(off, off + size))
    return out


def fragments_from_positions(positions: list[int]) -> list[tuple[str, int, int]]:
    """Greedy re-grouping of per-byte positions into maximal fragments."""
    out: list[list] = []
    for p in positions:
        if out:
            kind, off, size = out[-1]
            if p == SPARSE and kind == "S":
                out[-1][2] += 1
                continue
            if p != SPARSE and kind == "D" and off + size == p:
                out[-1][2] += 1
                continue
        out.append(["S", 0, 1] if p == SPARSE else ["D", p, 1])
    return [tuple(f) for f in out]


def token_of(fragments) -> str:
    return "_".join(f"S{size}" if kind == "S" else f"{off}+{size}" for kind, off, size in fragments)


def random_fragments(rng: random.Random, universe: int, max_frags: int = 16,
                     max_size: int = 256, sparse_p: float = 0.25) -> list[tuple[str, int, int]]:
    frags = []
    for _ in range(rng.randint(1, max_frags)):
        size = rng.randint(1, max_size)
        if rng.random() < sparse_p:
            frags.append(("S", 0, size))
        else:
            frags.append(("D", rng.randrange(0, universe - size + 1), size))
    return frags


def content_of(fragments, archive: bytes) -> bytes:
    out = bytearray()
    for kind, off, size in fragments:
        out += bytes(size) if kind == "S" else archive[off : off + size]
    return bytes(out)


class ByteCounter:
    """Per-byte reference counter mirroring entity-level first/last semantics."""

    def __init__(self, universe: int) -> None:
        self.counts = np.zeros(universe, dtype=np.int64)
        self.entities: dict[str, int] = {}

    def add(self, token: str, intervals) -> np.ndarray:
        """Returns the mask of bytes that went from 0 to 1."""
        n = self.entities.get(token, 0)
        self.entities[token] = n + 1
        m = mask_of(intervals, len(self.counts))
        if n:
            return np.zeros_like(m)
        newly = m & (self.counts == 0)
        self.counts += m
        return newly

    def remove(self, token: str, intervals) -> np.ndarray:
        n = self.entities[token]
        m = mask_of(intervals, len(self.counts))
        if n > 1:
            self.entities[token] = n - 1
            return np.zeros_like(m)
        del self.entities[token]
        self.counts -= m
        return m & (self.counts == 0)

    def level(self, i: int) -> list[tuple[int, int]]:
        return intervals_of(self.counts >= i + 1)

    def depth(self) -> int:
        return int(self.counts.max()) if len(self.counts) else 0
