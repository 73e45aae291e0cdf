"""Brute-force job ordering from per-byte reference counts."""

from __future__ import annotations

import random
from fractions import Fraction

import numpy as np

from cparchive.anycast import Bus
from cparchive.carvpath import Entity, Fragment, byte_set

from oracles import SPARSE, materialize

INF = float("inf")
UNIVERSE = 1 << 16


def frag_tuples(e: Entity):
    return [("S", 0, f.size) if f.is_sparse else ("D", f.offset, f.size) for f in e.fragments]


class CountOracle:
    def __init__(self, hot_entities, universe: int = UNIVERSE) -> None:
        self.counts = np.zeros(universe, dtype=np.int64)
        for token, e in {e.token: e for e in hot_entities}.items():
            for s, t in byte_set(e):
                self.counts[s:t] += 1
        self.top = int(self.counts.max()) if universe else 0

    def counts_of(self, e: Entity) -> np.ndarray:
        idx = np.zeros(len(self.counts), dtype=bool)
        for s, t in byte_set(e):
            idx[s:t] = True
        return idx

    def letter(self, e: Entity, letter: str, hashed: int = 0, idx=None):
        if letter == "S":
            return e.total_size
        if letter == "H":
            rest = [p for p in materialize(frag_tuples(e))[hashed:] if p != SPARSE]
            return rest[0] if rest else INF
        if idx is None:
            idx = self.counts_of(e)
        c = self.counts[idx]
        n = len(c)
        if letter == "O":
            return int(np.flatnonzero(idx)[0]) if n else INF
        if letter == "R":
            return -int(c.max()) if n else 0
        if letter == "r":
            return -int((c == 1).sum())
        if not n:
            return 0
        if letter == "D":
            return Fraction(int((c == self.top).sum()), n)
        if letter == "d":
            return Fraction(int((c != 1).sum()), n)
        if letter == "W":
            return Fraction(int(c.sum()), n)
        raise ValueError(letter)

    def order(self, jobs, policy: str, hashed=None):
        """Jobs sorted best first; *jobs* is a list of (sequence, entity)."""
        hashed = hashed or {}

        def key(item):
            seq, e = item
            idx = self.counts_of(e)
            return (*(self.letter(e, ch, hashed.get(e.token, 0), idx) for ch in policy), seq)

        return sorted(jobs, key=key)


def random_job_entity(rng: random.Random, universe: int = UNIVERSE) -> Entity:
    frags = []
    for _ in range(rng.randint(1, 4)):
        size = rng.randint(1, 2048)
        if rng.random() < 0.15:
            frags.append(Fragment.sparse(size))
        else:
            frags.append(Fragment.data(rng.randrange(universe - size), size))
    return Entity.of(frags)


def populate(bus: Bus, n: int, seed: int, actor: str = "pool"):
    """Fill the archive, open noise entities and submit *n* jobs; returns (hot, jobs)."""
    from conftest import fill

    rng = random.Random(seed)
    fill(bus.archive, rng.randbytes(UNIVERSE))
    hot = []
    for _ in range(max(5, n // 4)):
        e = random_job_entity(rng)
        bus.archive.open_entity(e)
        hot.append(e)
    jobs = []
    for _ in range(n):
        e = random_job_entity(rng)
        bus.submit_job(e, actor)
        hot.append(e)
        jobs.append(e)
    return hot, jobs


def random_chain(rng: random.Random) -> str:
    return "".join(rng.choice("RrOHDdWS") for _ in range(rng.randint(2, 4)))


def drain_and_check(bus: Bus, policy: str, hot, actor: str = "pool", sink: str = "sink") -> list[str]:
    """Accept every pending job, forwarding each to *sink*; asserts the oracle order.

    Forwarding keeps every entity hot, so *sink* can be drained again under another policy.
    """
    pending = [(seq, job.entity) for seq, job in bus.actors[actor].jobs.items()]
    hashed = {e.token: bus.archive.opportunistic_hash(e)[1] for _, e in pending}
    want = [e.token for _, e in CountOracle(hot).order(pending, policy, hashed)]
    worker = bus.register_worker(actor)
    bus.set_job_policy(worker, policy)
    got = []
    while True:
        jcap = bus.accept_job(worker)
        if jcap is None:
            break
        got.append(bus.jobs[jcap].entity.token)
        bus.forward(jcap, sink)
    bus.unregister(worker)
    assert got == want, f"policy {policy}: first difference at {next(i for i, (a, b) in enumerate(zip(got, want)) if a != b)}"
    return got
