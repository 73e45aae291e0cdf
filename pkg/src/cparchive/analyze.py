"""Workload analysis over job timing logs.

Input is one JSON document per line with the fields ``entity``, ``actor``,
``start``, ``stop`` (seconds) and ``size`` (bytes). Timestamps are used as
given; no clock-offset correction is applied.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .carvpath import LongPathTable, parse_path
from .errors import CarvPathError

HIST_BINS = 100
BYTES_RANGE = (0.0, 12.0)
SECONDS_RANGE = (-1.0, 7.0)


@dataclass(frozen=True)
class TimingEvent:
    entity: str
    actor: str
    start: float
    stop: float
    size: int

    def __post_init__(self) -> None:
        if self.stop < self.start:
            raise ValueError(f"event for {self.entity} stops before it starts")
        if self.size < 0:
            raise ValueError(f"negative size for {self.entity}")


@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(lo), float(hi), float(d)) for lo, hi, d in zip(self.edges, self.edges[1:], self.density)]


@dataclass
class CacheTrace:
    # (t, bytes): occupancy from t until the next sample
    samples: list[tuple[float, int]] = field(default_factory=list)
    peak: int = 0
    added: int = 0
    removed: int = 0

    def occupancy_at(self, t: float) -> int:
        current = 0
        for ts, occ in self.samples:
            if ts > t:
                break
            current = occ
        return current


def histogram(values: Iterable[float], weights: Iterable[float], lo: float, hi: float,
              bins: int = HIST_BINS) -> Histogram:
    """Weighted density histogram; values outside ``[lo, hi]`` are clipped to the edge bins."""
    v = np.clip(np.asarray(list(values), dtype=float), lo, hi)
    w = np.asarray(list(weights), dtype=float)
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi), weights=w if len(w) else None)
    total = counts.sum()
    density = counts / total if total > 0 else counts.astype(float)
    return Histogram(edges, density)


def load_events(path: str | Path) -> list[TimingEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            events.append(TimingEvent(str(doc["entity"]), str(doc["actor"]), float(doc["start"]),
                                      float(doc["stop"]), int(doc["size"])))
    return events


def dump_events(events: Iterable[TimingEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.__dict__, separators=(",", ":")) + "\n")


def events_from_journal(records: Iterable[dict], table: Optional[LongPathTable] = None) -> list[TimingEvent]:
    """Turn accept -> forward/complete pairs of a provenance journal into timing events."""
    open_jobs: dict[str, dict] = {}
    events = []
    for rec in records:
        kind, job = rec.get("kind"), rec.get("job")
        if job is None:
            continue
        if kind == "accept":
            open_jobs[job] = rec
        elif kind in ("forward", "complete") and job in open_jobs:
            start = open_jobs.pop(job)
            token = start.get("carvpath", "")
            try:
                size = parse_path(token, table).data_size
            except CarvPathError:
                size = 0
            events.append(TimingEvent(token, start["actor"], start["ts"], rec["ts"], size))
    return events


def _entity_spans(events: Iterable[TimingEvent]) -> dict[str, tuple[float, float, int]]:
    spans: dict[str, tuple[float, float, int]] = {}
    for ev in events:
        if ev.entity in spans:
            first, last, size = spans[ev.entity]
            spans[ev.entity] = (min(first, ev.start), max(last, ev.stop), max(size, ev.size))
        else:
            spans[ev.entity] = (ev.start, ev.stop, ev.size)
    return spans


def perfect_cache(events: list[TimingEvent]) -> CacheTrace:
    """Occupancy of an infinite cache that holds each entity from first to last sight."""
    if not events:
        raise ValueError("no timing events")
    # additions sort before removals at the same timestamp
    boundaries = []
    for first, last, size in _entity_spans(events).values():
        boundaries.append((first, 0, size))
        boundaries.append((last, 1, -size))
    boundaries.sort()
    trace = CacheTrace()
    occupancy = 0
    for i, (t, phase, delta) in enumerate(boundaries):
        occupancy += delta
        if delta > 0:
            trace.added += delta
        else:
            trace.removed -= delta
        trace.peak = max(trace.peak, occupancy)
        if i + 1 == len(boundaries) or boundaries[i + 1][0] != t:
            if trace.samples and trace.samples[-1][1] == occupancy:
                continue
            trace.samples.append((t, occupancy))
    return trace


def cache_histogram(trace: CacheTrace, lo: float = BYTES_RANGE[0], hi: float = BYTES_RANGE[1],
                    bins: int = HIST_BINS) -> Histogram:
    """Time-weighted density of log10(occupancy); empty-cache time is left out."""
    values, weights = [], []
    for (t0, occ), (t1, _) in zip(trace.samples, trace.samples[1:]):
        if occ > 0 and t1 > t0:
            values.append(math.log10(occ))
            weights.append(t1 - t0)
    return histogram(values, weights, lo, hi, bins)


def _log_seconds(x: float, floor: float) -> float:
    return math.log10(x) if x > 0 else floor


def timing_densities(events: list[TimingEvent], lo: float = SECONDS_RANGE[0], hi: float = SECONDS_RANGE[1],
                     bins: int = HIST_BINS) -> dict:
    """Inter-job gap and first-to-last span densities, by count and by volume."""
    per_entity: dict[str, list[TimingEvent]] = defaultdict(list)
    for ev in events:
        per_entity[ev.entity].append(ev)
    gaps: list[tuple[float, int]] = []
    spans: list[tuple[float, int]] = []
    for evs in per_entity.values():
        evs.sort(key=lambda e: (e.start, e.stop, e.actor))
        size = max(e.size for e in evs)
        for prev, nxt in zip(evs, evs[1:]):
            gaps.append((nxt.start - prev.stop, size))
        spans.append((max(e.stop for e in evs) - evs[0].start, size))

    def pair(samples: list[tuple[float, int]]) -> dict:
        logs = [_log_seconds(x, lo) for x, _ in samples]
        return {
            "by_count": histogram(logs, [1.0] * len(samples), lo, hi, bins),
            "by_volume": histogram(logs, [float(s) for _, s in samples], lo, hi, bins),
            "values": [x for x, _ in samples],
        }

    return {"inter_job": pair(gaps), "first_last": pair(spans)}


def flow_matrix(events: list[TimingEvent]) -> dict[tuple[str, str], tuple[int, int]]:
    """``(producer, consumer) -> (count, bytes)`` over consecutive actors per entity."""
    per_entity: dict[str, list[TimingEvent]] = defaultdict(list)
    for ev in events:
        per_entity[ev.entity].append(ev)
    flows: dict[tuple[str, str], list[int]] = defaultdict(lambda: [0, 0])
    for evs in per_entity.values():
        evs.sort(key=lambda e: (e.start, e.stop, e.actor))
        size = max(e.size for e in evs)
        for prev, nxt in zip(evs, evs[1:]):
            cell = flows[(prev.actor, nxt.actor)]
            cell[0] += 1
            cell[1] += size
    return {k: (v[0], v[1]) for k, v in sorted(flows.items())}
