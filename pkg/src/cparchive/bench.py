"""Job picking benchmark with a built-in per-byte correctness oracle."""

from __future__ import annotations

import csv
import io
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from .anycast import Bus, check_job_policy
from .archive import Archive
from .carvpath import Entity, Fragment
from .pagecache import NullAdvisor, ScriptedResidency

UNIVERSE = 1 << 16
CSV_HEADER = ("set_size", "policy", "mean_pick_us")


class ByteCountOracle:
    """Policy keys recomputed from a plain per-byte reference count array."""

    def __init__(self, hot_entities: Iterable[Entity], universe: int = UNIVERSE) -> None:
        self.counts = np.zeros(universe, dtype=np.int64)
        for e in {e.token: e for e in hot_entities}.values():
            self.counts += self.mask(e)
        self.global_max = int(self.counts.max()) if universe else 0

    def mask(self, e: Entity) -> np.ndarray:
        m = np.zeros(len(self.counts), dtype=bool)
        for f in e.fragments:
            if not f.is_sparse:
                m[f.offset : f.offset + f.size] = True
        return m

    def key(self, e: Entity, letter: str) -> Fraction | int | float:
        m = self.mask(e)
        c = self.counts[m]
        n = int(m.sum())
        if letter == "S":
            return e.total_size
        if letter == "H":
            data = [f.offset for f in e.fragments if not f.is_sparse and f.size]
            return data[0] if data else float("inf")
        if letter == "O":
            return int(np.argmax(m)) if n else float("inf")
        if letter == "R":
            return -int(c.max()) if n else 0
        if letter == "r":
            return -int((c == 1).sum())
        if not n:
            return Fraction(0)
        if letter == "D":
            return Fraction(int((c == self.global_max).sum()) if self.global_max else 0, n)
        if letter == "d":
            return Fraction(int((c != 1).sum()), n)
        if letter == "W":
            return Fraction(int(c.sum()), n)
        raise ValueError(letter)

    def order(self, jobs: list[tuple[int, Entity]], policy: str) -> list[int]:
        """Sequence numbers in the order a brute-force stable sort would hand them out."""
        keyed = [(tuple(self.key(e, ch) for ch in policy), seq) for seq, e in jobs]
        return [seq for _, seq in sorted(keyed)]


def random_entity(rng: random.Random, universe: int = UNIVERSE, max_fragments: int = 3) -> Entity:
    frags = []
    for _ in range(rng.randint(1, max_fragments)):
        if rng.random() < 0.2:
            frags.append(Fragment.sparse(rng.randint(1, 1024)))
        else:
            size = rng.randint(1, 2048)
            frags.append(Fragment.data(rng.randrange(0, universe - size), size))
    return Entity.of(frags)


@dataclass
class BenchResult:
    set_size: int
    policy: str
    mean_pick_us: float
    picks: int
    verified: bool


def populate(n: int, seed: int, universe: int = UNIVERSE) -> tuple[Bus, list[Entity], list[tuple[int, Entity]]]:
    """A bus with one actor set of *n* synthetic jobs over a noisy reference stack."""
    rng = random.Random(seed * 1_000_003 + n)
    archive = Archive(advisor=NullAdvisor(), residency=ScriptedResidency())
    bus = Bus(archive)
    mcap = archive.allocate_mutable(universe)
    archive.freeze(mcap)
    archive.release_mutable(mcap)
    hot = []
    for _ in range(max(4, n // 10)):
        e = random_entity(rng, universe)
        archive.open_entity(e)
        hot.append(e)
    jobs = []
    for _ in range(n):
        e = random_entity(rng, universe)
        bus.submit_job(e, "bench")
        hot.append(e)
    jobs = [(seq, job.entity) for seq, job in bus.actors["bench"].jobs.items()]
    return bus, hot, jobs


def bench_policy(policy: str, n: int, seed: int = 0, verify: bool = True) -> BenchResult:
    check_job_policy(policy)
    bus, hot, jobs = populate(n, seed)
    expected: Optional[list[int]] = ByteCountOracle(hot).order(jobs, policy) if verify else None
    worker = bus.register_worker("bench")
    bus.set_job_policy(worker, policy)
    picked = []
    elapsed = 0.0
    for _ in range(n):
        t0 = time.perf_counter()
        cap = bus.accept_job(worker)
        elapsed += time.perf_counter() - t0
        job = bus.job(cap)
        picked.append(job.sequence)
        # forwarding keeps the entity hot, so the stack and every key stay put
        bus.forward(cap, "sink")
    assert bus.accept_job(worker) is None
    bus.archive.close()
    return BenchResult(n, policy, elapsed / n * 1e6, n, expected is None or picked == expected)


def bench_policies(policies: Iterable[str], sizes: Iterable[int], seed: int = 0,
                   verify: bool = True) -> list[BenchResult]:
    return [bench_policy(p, n, seed, verify) for p in policies for n in sizes]


def to_csv(results: Iterable[BenchResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in results:
        writer.writerow((r.set_size, r.policy, f"{r.mean_pick_us:.3f}"))
    return buf.getvalue()
