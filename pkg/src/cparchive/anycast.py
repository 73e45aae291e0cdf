"""Local anycast message bus bound to the archive.

Every actor owns a sortable set of pending jobs. A worker registered for an
actor pulls the best job from that set according to its job-select policy
string; a load balancing worker may first pick a whole set with its
actor-select policy. Jobs keep their entity hot for as long as they live on the
bus, and every state transition lands in the provenance journal.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .archive import Archive
from .capability import JOB, WORKER, Minter, redact
from .carvpath import Entity, flatten, parse_path
from .errors import (
    BadActorName,
    InvalidCapability,
    NoCurrentMutable,
    UnknownActor,
    UnknownPolicyLetter,
    WorkerBusy,
)
from .journal import Journal
from .refstack import PolicyStats

ACTOR_NAME_RE = re.compile(r"[a-z0-9_-]{1,64}")
JOB_LETTERS = frozenset("RrOHDdWSK")
ACTOR_LETTERS = frozenset("SVDWC")
DEFAULT_WEIGHT = 100
DEFAULT_OVERFLOW = 10
DEFAULT_JOB_POLICY = "S"
DEFAULT_ACTOR_POLICY = "C"
INF = float("inf")


@dataclass
class Job:
    entity: Entity
    next_actor: str
    router_state: str = ""
    mime_type: str = ""
    extension: str = ""
    sequence: int = 0
    cap: Optional[str] = None
    worker: Optional[str] = None
    kickstart: bool = False
    mutables: list[str] = field(default_factory=list)
    current_mutable: Optional[str] = None
    outputs: set[str] = field(default_factory=set)


@dataclass
class Actor:
    name: str
    weight: int = DEFAULT_WEIGHT
    overflow: int = DEFAULT_OVERFLOW
    jobs: dict[int, Job] = field(default_factory=dict)
    workers: set[str] = field(default_factory=set)
    volume: int = 0
    entered: int = 0
    in_progress: int = 0
    left: int = 0

    @property
    def set_size(self) -> int:
        return len(self.jobs)


@dataclass
class Worker:
    cap: str
    actor: str
    job_select_policy: str = DEFAULT_JOB_POLICY
    actor_select_policy: str = DEFAULT_ACTOR_POLICY
    current_job: Optional[str] = None


@dataclass(frozen=True)
class ActorStatus:
    worker_count: int
    set_size: int
    set_volume: int


def check_actor_name(name: str) -> str:
    if not isinstance(name, str) or not ACTOR_NAME_RE.fullmatch(name):
        raise BadActorName(repr(name))
    return name


def check_job_policy(policy: str) -> str:
    bad = set(policy) - JOB_LETTERS
    if bad:
        raise UnknownPolicyLetter("".join(sorted(bad)))
    return policy


def check_actor_policy(policy: str) -> str:
    bad = set(policy) - ACTOR_LETTERS
    if bad:
        raise UnknownPolicyLetter("".join(sorted(bad)))
    return policy


def _density(num: int, den: int) -> float:
    return num / den if den else 0.0


class Bus:
    def __init__(
        self,
        archive: Archive,
        journal: Optional[Journal] = None,
        minter: Optional[Minter] = None,
    ) -> None:
        self.archive = archive
        self.journal = journal if journal is not None else (archive.journal or Journal())
        if archive.journal is None:
            archive.journal = self.journal
        self.minter = minter if minter is not None else archive.minter
        self.lock = archive.lock
        self.actors: dict[str, Actor] = {}
        self.workers: dict[str, Worker] = {}
        self.jobs: dict[str, Job] = {}
        self._sequence = itertools.count(1)
        self._stats_cache: dict[str, tuple[int, PolicyStats]] = {}
        # (actor, policy) -> ((stack version, hash version), {sequence: key})
        self._key_cache: dict[tuple[str, str], tuple[tuple[int, int], dict[int, tuple]]] = {}

    # -- lookups ------------------------------------------------------------

    def actor(self, name: str, create: bool = True) -> Actor:
        actor = self.actors.get(name)
        if actor is None:
            if not create:
                raise UnknownActor(name)
            actor = self.actors[check_actor_name(name)] = Actor(name)
        return actor

    def worker(self, cap: str) -> Worker:
        worker = self.workers.get(cap)
        if worker is None:
            raise InvalidCapability("unknown worker capability")
        return worker

    def job(self, cap: str) -> Job:
        job = self.jobs.get(cap)
        if job is None:
            raise InvalidCapability("unknown job capability")
        return job

    def _log(self, kind: str, job: Optional[Job] = None, **fields: object) -> None:
        if job is not None:
            fields.setdefault("carvpath", job.entity.token)
            if job.cap is not None:
                fields.setdefault("job", redact(job.cap))
            if job.worker is not None:
                fields.setdefault("worker", redact(job.worker))
        self.journal.append(kind, **fields)

    # -- workers ------------------------------------------------------------

    def register_worker(self, actor_name: str) -> str:
        with self.lock:
            actor = self.actor(actor_name)
            cap = self.minter.mint(WORKER)
            self.workers[cap] = Worker(cap, actor.name)
            actor.workers.add(cap)
            self._log("register", actor=actor.name, worker=redact(cap))
            return cap

    def unregister(self, cap: str) -> None:
        with self.lock:
            worker = self.worker(cap)
            del self.workers[cap]
            self.actors[worker.actor].workers.discard(cap)
            requeued = None
            if worker.current_job is not None:
                job = self.jobs.pop(worker.current_job)
                self._end_mutables(job)
                owner = self.actors[job.next_actor]
                owner.in_progress -= 1
                if job.kickstart:
                    owner.left += 1
                else:
                    # back into the set under its original sequence number
                    job.cap = job.worker = None
                    owner.jobs[job.sequence] = job
                    owner.volume += job.entity.total_size
                    requeued = job.entity.token
            self._log("unregister", actor=worker.actor, worker=redact(cap), carvpath=requeued)

    def set_job_policy(self, cap: str, policy: str) -> None:
        with self.lock:
            self.worker(cap).job_select_policy = check_job_policy(policy)

    def set_actor_policy(self, cap: str, policy: str) -> None:
        with self.lock:
            self.worker(cap).actor_select_policy = check_actor_policy(policy)

    def set_weight(self, name: str, weight: int) -> None:
        if weight < 1:
            raise ValueError("weight must be at least 1")
        with self.lock:
            self.actor(name).weight = weight

    def set_overflow(self, name: str, overflow: int) -> None:
        if overflow < 0:
            raise ValueError("overflow must be non-negative")
        with self.lock:
            self.actor(name).overflow = overflow

    # -- job entry ----------------------------------------------------------

    def _enqueue(self, job: Job) -> None:
        actor = self.actor(job.next_actor)
        job.sequence = next(self._sequence)
        job.cap = job.worker = None
        actor.jobs[job.sequence] = job
        actor.volume += job.entity.total_size
        actor.entered += 1

    def submit_job(
        self,
        entity: Entity,
        next_actor: str,
        router_state: str = "",
        mime_type: str = "",
        extension: str = "",
        *,
        _record: bool = True,
    ) -> None:
        with self.lock:
            check_actor_name(next_actor)
            self.archive.open_entity(entity)
            job = Job(entity, next_actor, router_state, mime_type, extension)
            self._enqueue(job)
            if _record:
                self._log(
                    "submit", job, actor=next_actor, state=router_state,
                    mime=mime_type or None, ext=extension or None,
                )

    # -- picking ------------------------------------------------------------

    def stats(self, e: Entity) -> PolicyStats:
        stack = self.archive.stack
        cached = self._stats_cache.get(e.token)
        if cached is None or cached[0] != stack.version:
            cached = (stack.version, stack.count_stats(e))
            self._stats_cache[e.token] = cached
        return cached[1]

    def pick_key(self, job: Job, letter: str) -> float:
        """Sort key for one policy letter; smaller is better."""
        e = job.entity
        if letter == "S":
            return e.total_size
        if letter == "H":
            state = self.archive.hashes.states.get(e.token)
            pos = state.next_needed() if state is not None else None
            return INF if pos is None else pos
        st = self.stats(e)
        if letter == "R":
            return -st.max_count
        if letter == "r":
            return -st.bytes_at_count_1
        if letter == "O":
            return INF if st.min_data_offset is None else st.min_data_offset
        if letter == "D":
            return _density(st.bytes_at_global_max_count, st.data_bytes)
        if letter == "d":
            return _density(st.bytes_not_count_1, st.data_bytes)
        if letter == "W":
            return _density(st.weighted_count_sum, st.data_bytes)
        raise UnknownPolicyLetter(letter)

    def policy_key(self, job: Job, policy: str) -> tuple:
        return (*(self.pick_key(job, letter) for letter in policy), job.sequence)

    def best_job(self, actor: Actor, policy: str) -> Optional[Job]:
        if not actor.jobs:
            return None
        stamp = (self.archive.stack.version, self.archive.hashes.version)
        cached = self._key_cache.get((actor.name, policy))
        if cached is None or cached[0] != stamp:
            cached = (stamp, {})
            self._key_cache[(actor.name, policy)] = cached
        keys = cached[1]
        for seq, job in actor.jobs.items():
            if seq not in keys:
                keys[seq] = self.policy_key(job, policy)
        return actor.jobs[min(actor.jobs, key=keys.__getitem__)]

    def _take(self, worker: Worker, actor: Actor, job: Job) -> str:
        del actor.jobs[job.sequence]
        actor.volume -= job.entity.total_size
        actor.in_progress += 1
        job.cap = self.minter.mint(JOB)
        job.worker = worker.cap
        self.jobs[job.cap] = job
        worker.current_job = job.cap
        self._log("accept", job, actor=actor.name, state=job.router_state)
        return job.cap

    def accept_job(self, cap: str) -> Optional[str]:
        with self.lock:
            worker = self.worker(cap)
            if worker.current_job is not None:
                raise WorkerBusy("worker already holds a job")
            actor = self.actors[worker.actor]
            if "K" in worker.job_select_policy:
                job = Job(Entity.empty(), actor.name, kickstart=True, sequence=next(self._sequence))
                actor.entered += 1
                actor.jobs[job.sequence] = job
                return self._take(worker, actor, job)
            job = self.best_job(actor, worker.job_select_policy)
            if job is None:
                return None
            return self._take(worker, actor, job)

    def actor_key(self, actor: Actor, letter: str) -> Fraction | float | int:
        """Set-selection key for one letter; larger is better."""
        size, volume = actor.set_size, actor.volume
        if letter == "S":
            return size
        if letter == "V":
            return volume
        if letter == "W":
            return actor.weight
        if letter in "DC":
            factor = 1 if letter == "D" else actor.weight
            if volume == 0:
                return INF if size else 0
            return Fraction(factor * size, volume)
        raise UnknownPolicyLetter(letter)

    def select_actor(self, cap: str) -> Optional[str]:
        with self.lock:
            policy = check_actor_policy(self.worker(cap).actor_select_policy)
            eligible = [a for a in self.actors.values() if a.set_size > a.overflow]
            if not eligible:
                return None
            best = min(
                eligible,
                key=lambda a: (*(-self.actor_key(a, letter) for letter in policy), a.name),
            )
            return best.name

    def accept_migrating_job(self, cap: str) -> Optional[str]:
        """Load balancer accept: pick a set by actor policy, then a job by job policy."""
        with self.lock:
            worker = self.worker(cap)
            if worker.current_job is not None:
                raise WorkerBusy("worker already holds a job")
            name = self.select_actor(cap)
            if name is None:
                return None
            actor = self.actors[name]
            job = self.best_job(actor, worker.job_select_policy.replace("K", ""))
            return self._take(worker, actor, job)

    # -- job exit -----------------------------------------------------------

    def _end_mutables(self, job: Job) -> None:
        for mcap in job.mutables:
            if mcap in self.archive.mutables:
                self.archive.release_mutable(mcap)
        job.mutables.clear()
        job.current_mutable = None

    def _finish(self, job: Job) -> Actor:
        worker = self.workers.get(job.worker)
        if worker is not None:
            worker.current_job = None
        del self.jobs[job.cap]
        actor = self.actors[job.next_actor]
        actor.in_progress -= 1
        actor.left += 1
        return actor

    def forward(self, job_cap: str, next_actor: str, router_state: str = "") -> None:
        with self.lock:
            job = self.job(job_cap)
            check_actor_name(next_actor)
            if job.kickstart:
                raise InvalidCapability("kickstart jobs carry no data to forward")
            self._log("forward", job, actor=next_actor, state=router_state)
            self._finish(job)
            self._end_mutables(job)
            job.next_actor = next_actor
            job.router_state = router_state
            self._enqueue(job)

    def complete_job(self, job_cap: str) -> None:
        with self.lock:
            job = self.job(job_cap)
            digest = None
            if not job.kickstart:
                state = self.archive.hashes.states.get(job.entity.token)
                digest = state.result if state is not None else None
            self._log("complete", job, actor=job.next_actor, digest=digest)
            self._finish(job)
            self._end_mutables(job)
            if not job.kickstart:
                self.archive.close_entity(job.entity)

    def submit_child(
        self,
        job_cap: str,
        child_carvpath: str,
        next_actor: str,
        router_state: str = "",
        mime_type: str = "",
        extension: str = "",
    ) -> Entity:
        with self.lock:
            job = self.job(job_cap)
            check_actor_name(next_actor)
            token = child_carvpath.strip("/")
            if token in job.outputs:
                child = parse_path(token, self.archive.table)
            else:
                levels = [lvl for lvl in token.split("/")]
                child = job.entity
                for level in levels:
                    child = flatten(child, parse_path(level, self.archive.table))
            self.submit_job(child, next_actor, router_state, mime_type, extension, _record=False)
            self._log(
                "child", job, actor=next_actor, carvpath=child.token, parent=job.entity.token,
                state=router_state, mime=mime_type or None, ext=extension or None,
            )
            return child

    # -- mutable data -------------------------------------------------------

    def job_mutable(self, job_cap: str, size: int) -> str:
        with self.lock:
            job = self.job(job_cap)
            previous = job.current_mutable
            if previous is not None and not self.archive.mutables[previous].frozen:
                self.archive.freeze(previous)
            mcap = self.archive.allocate_mutable(size)
            job.mutables.append(mcap)
            job.current_mutable = mcap
            return mcap

    def job_current_mutable(self, job_cap: str) -> str:
        with self.lock:
            job = self.job(job_cap)
            if job.current_mutable is None:
                raise NoCurrentMutable("no mutable allocated for this job")
            return job.current_mutable

    def job_frozen(self, job_cap: str) -> Entity:
        with self.lock:
            job = self.job(job_cap)
            if job.current_mutable is None:
                raise NoCurrentMutable("no mutable allocated for this job")
            entity = self.archive.freeze(job.current_mutable)
            job.outputs.add(entity.token)
            self._log("freeze", job, actor=job.next_actor, carvpath=entity.token)
            return entity

    # -- status -------------------------------------------------------------

    def actor_status(self, name: str) -> ActorStatus:
        with self.lock:
            actor = self.actor(name, create=False)
            return ActorStatus(len(actor.workers), actor.set_size, actor.volume)
