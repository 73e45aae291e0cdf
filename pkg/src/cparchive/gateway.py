"""Filesystem-shaped facade over the archive and the bus.

Paths, extended attributes and symlinks are resolved here without any kernel
involvement, so the whole API can be driven in-process; :mod:`cparchive.mount`
only translates host filesystem calls onto this class.

Layout::

    /mattockfs.ctl                      archive wide attributes
    /carvpath/<token>.<ext>             read-only pseudo file for any CarvPath
    /carvpath/<token>/<token>[.<ext>]   symlink to the flattened CarvPath
    /actor/<name>.ctl  /actor/<name>.inf
    /worker/<cap>.ctl  /job/<cap>.ctl  /mutable/<cap>.dat
"""

from __future__ import annotations

import enum
import itertools
import re
import stat as stat_mod
import threading
from dataclasses import dataclass
from typing import Any, Optional

from .anycast import Bus, check_actor_name
from .carvpath import Entity, flatten, parse_token, serialize, split_extension
from .errors import (
    AccessDenied,
    BadActorName,
    BadValue,
    CarvPathError,
    InvalidCapability,
    NotFound,
    ReadOnly,
    UnknownAttribute,
)

CTL_NAME = "mattockfs.ctl"
OPAQUE_DIRS = ("carvpath", "actor", "worker", "job", "mutable")
XATTR_PREFIX = "user."
_DECIMAL_RE = re.compile(r"0|[1-9][0-9]*")


class NodeKind(enum.Enum):
    ROOT_DIR = "RootDir"
    ROOT_CTL = "RootCtl"
    OPAQUE_DIR = "OpaqueDir"
    CARVPATH_DIR = "CarvPathDir"
    CARVPATH_FILE = "CarvPathFile"
    FLATTEN_LINK = "FlattenLink"
    ACTOR_CTL = "ActorCtl"
    ACTOR_INF = "ActorInf"
    WORKER_CTL = "WorkerCtl"
    JOB_CTL = "JobCtl"
    MUTABLE_DAT = "MutableDat"


@dataclass(frozen=True)
class Node:
    kind: NodeKind
    payload: Any = None
    extension: str = ""
    target: Optional[str] = None


# readable / writable attribute names per node kind
READ_ATTRS = {
    NodeKind.ROOT_CTL: ("full_archive", "fadvise_status"),
    NodeKind.CARVPATH_FILE: ("opportunistic_hash", "fadvise_status"),
    NodeKind.ACTOR_CTL: ("register_worker", "weight", "overflow"),
    NodeKind.ACTOR_INF: ("worker_count", "anycast_status"),
    NodeKind.WORKER_CTL: ("job_select_policy", "actor_select_policy", "unregister", "accept_job"),
    NodeKind.JOB_CTL: ("job_carvpath", "routing_info", "current_mutable", "frozen_mutable"),
}
WRITE_ATTRS = {
    NodeKind.ACTOR_CTL: ("weight", "overflow"),
    NodeKind.WORKER_CTL: ("job_select_policy", "actor_select_policy", "unregister"),
    NodeKind.JOB_CTL: ("routing_info", "submit_child", "allocate_mutable", "complete"),
}


def _decimal(value: str) -> int:
    if not _DECIMAL_RE.fullmatch(value):
        raise BadValue(f"expected a decimal integer, got {value!r}")
    return int(value)


def _attr_name(name: str) -> str:
    return name[len(XATTR_PREFIX):] if name.startswith(XATTR_PREFIX) else name


class Gateway:
    def __init__(self, bus: Bus) -> None:
        self.bus = bus
        self.archive = bus.archive
        self._handles: dict[int, Node] = {}
        self._next_fh = itertools.count(1)
        self._lock = threading.Lock()

    # -- resolution ---------------------------------------------------------

    def _entity(self, token: str) -> Entity:
        try:
            e = parse_token(token, self.archive.table)
            self.archive.check_within(e)
        except CarvPathError as exc:
            raise NotFound(token) from exc
        return e

    def resolve(self, path: str) -> Node:
        parts = [p for p in path.split("/") if p]
        if not parts:
            return Node(NodeKind.ROOT_DIR)
        head, rest = parts[0], parts[1:]
        if not rest:
            if head == CTL_NAME:
                return Node(NodeKind.ROOT_CTL)
            if head in OPAQUE_DIRS:
                return Node(NodeKind.OPAQUE_DIR, head)
            raise NotFound(path)
        if head == "carvpath":
            return self._resolve_carvpath(rest, path)
        if len(rest) != 1:
            raise NotFound(path)
        stem, ext = split_extension(rest[0])
        if head == "actor" and ext in (".ctl", ".inf"):
            try:
                name = check_actor_name(stem)
            except BadActorName:
                raise NotFound(path) from None
            kind = NodeKind.ACTOR_CTL if ext == ".ctl" else NodeKind.ACTOR_INF
            return Node(kind, name)
        if head == "worker" and ext == ".ctl" and stem in self.bus.workers:
            return Node(NodeKind.WORKER_CTL, stem)
        if head == "job" and ext == ".ctl" and stem in self.bus.jobs:
            return Node(NodeKind.JOB_CTL, stem)
        if head == "mutable" and ext == ".dat" and stem in self.archive.mutables:
            return Node(NodeKind.MUTABLE_DAT, stem)
        raise NotFound(path)

    def _resolve_carvpath(self, rest: list[str], path: str) -> Node:
        token, ext = split_extension(rest[-1])
        if len(rest) == 1:
            e = self._entity(token)
            return Node(NodeKind.CARVPATH_FILE if ext else NodeKind.CARVPATH_DIR, e, ext)
        # every level but the last must be a bare (directory) token
        if any("." in level for level in rest[:-1]):
            raise NotFound(path)
        e = self._entity(rest[0])
        try:
            for level in rest[1:-1] + [token]:
                e = flatten(e, parse_token(level, self.archive.table))
        except CarvPathError as exc:
            raise NotFound(path) from exc
        target = "../" * (len(rest) - 1) + serialize(e, self.archive.table) + ext
        return Node(NodeKind.FLATTEN_LINK, e, ext, target)

    def listdir(self, path: str) -> list[str]:
        node = self.resolve(path)
        if node.kind is NodeKind.ROOT_DIR:
            return [CTL_NAME, *OPAQUE_DIRS]
        if node.kind in (NodeKind.OPAQUE_DIR, NodeKind.CARVPATH_DIR):
            raise AccessDenied(path)
        raise NotFound(path)

    def readlink(self, path: str) -> str:
        node = self.resolve(path)
        if node.kind is not NodeKind.FLATTEN_LINK:
            raise NotFound(path)
        return node.target

    def stat(self, path: str) -> dict:
        node = self.resolve(path)
        kind = node.kind
        if kind is NodeKind.ROOT_DIR:
            return {"mode": stat_mod.S_IFDIR | 0o555, "size": 0}
        if kind in (NodeKind.OPAQUE_DIR, NodeKind.CARVPATH_DIR):
            return {"mode": stat_mod.S_IFDIR | 0o111, "size": 0}
        if kind is NodeKind.FLATTEN_LINK:
            return {"mode": stat_mod.S_IFLNK | 0o777, "size": len(node.target)}
        if kind is NodeKind.CARVPATH_FILE:
            return {"mode": stat_mod.S_IFREG | 0o444, "size": node.payload.total_size}
        if kind is NodeKind.MUTABLE_DAT:
            region = self.archive.mutables[node.payload]
            mode = 0o444 if region.frozen else 0o644
            return {"mode": stat_mod.S_IFREG | mode, "size": region.size}
        return {"mode": stat_mod.S_IFREG | 0o444, "size": 0}

    # -- extended attributes ------------------------------------------------

    def listxattr(self, path: str) -> list[str]:
        kind = self.resolve(path).kind
        names = dict.fromkeys(READ_ATTRS.get(kind, ()) + WRITE_ATTRS.get(kind, ()))
        return list(names)

    def getxattr(self, path: str, name: str) -> str:
        node = self.resolve(path)
        name = _attr_name(name)
        if name not in READ_ATTRS.get(node.kind, ()):
            raise UnknownAttribute(name)
        return getattr(self, f"_get_{node.kind.value}")(node, name)

    def setxattr(self, path: str, name: str, value: str | bytes) -> None:
        node = self.resolve(path)
        name = _attr_name(name)
        if name not in WRITE_ATTRS.get(node.kind, ()):
            raise UnknownAttribute(name)
        if isinstance(value, bytes):
            value = value.decode("utf-8")
        getattr(self, f"_set_{node.kind.value}")(node, name, value)

    def _get_RootCtl(self, node: Node, name: str) -> str:
        st = self.archive.status()
        if name == "full_archive":
            return serialize(st.full_archive, self.archive.table)
        return f"{st.normal_size};{st.dontneed_size}"

    def _get_CarvPathFile(self, node: Node, name: str) -> str:
        e = node.payload
        if name == "opportunistic_hash":
            digest, offset = self.archive.opportunistic_hash(e)
            return f"{digest or ''};{offset}"
        normal, dontneed = self.archive.entity_fadvise(e)
        return f"{normal};{dontneed}"

    def _get_ActorCtl(self, node: Node, name: str) -> str:
        if name == "register_worker":
            return self.bus.register_worker(node.payload)
        actor = self.bus.actor(node.payload)
        return str(actor.weight if name == "weight" else actor.overflow)

    def _set_ActorCtl(self, node: Node, name: str, value: str) -> None:
        number = _decimal(value)
        try:
            if name == "weight":
                self.bus.set_weight(node.payload, number)
            else:
                self.bus.set_overflow(node.payload, number)
        except ValueError as exc:
            raise BadValue(str(exc)) from exc

    def _get_ActorInf(self, node: Node, name: str) -> str:
        st = self.bus.actor_status(self.bus.actor(node.payload).name)
        if name == "worker_count":
            return str(st.worker_count)
        return f"{st.set_size};{st.set_volume}"

    def _get_WorkerCtl(self, node: Node, name: str) -> str:
        worker = self.bus.worker(node.payload)
        if name == "accept_job":
            return self.bus.accept_job(node.payload) or ""
        if name == "unregister":
            return "0"
        return getattr(worker, name)

    def _set_WorkerCtl(self, node: Node, name: str, value: str) -> None:
        if name == "unregister":
            if value == "1":
                self.bus.unregister(node.payload)
            elif value != "0":
                raise BadValue(value)
        elif name == "job_select_policy":
            self.bus.set_job_policy(node.payload, value)
        else:
            self.bus.set_actor_policy(node.payload, value)

    def _get_JobCtl(self, node: Node, name: str) -> str:
        cap = node.payload
        job = self.bus.job(cap)
        if name == "job_carvpath":
            # always a file name: a bare token would resolve to a directory
            return f"{serialize(job.entity, self.archive.table)}.{job.extension or 'dat'}"
        if name == "routing_info":
            return f"{job.next_actor};{job.router_state}"
        if name == "current_mutable":
            return self.bus.job_current_mutable(cap)
        return serialize(self.bus.job_frozen(cap), self.archive.table)

    def _set_JobCtl(self, node: Node, name: str, value: str) -> None:
        cap = node.payload
        if name == "routing_info":
            actor, sep, state = value.partition(";")
            if not sep:
                raise BadValue(value)
            self.bus.forward(cap, actor, state)
        elif name == "submit_child":
            fields = value.split(";")
            if len(fields) != 5:
                raise BadValue(f"submit_child needs 5 fields, got {len(fields)}")
            carvpath, actor, state, mime, ext = fields
            self.bus.submit_child(cap, carvpath, actor, state, mime, ext.lstrip("."))
        elif name == "complete":
            if value != "1":
                raise BadValue(value)
            self.bus.complete_job(cap)
        else:
            self.bus.job_mutable(cap, _decimal(value))

    # -- file I/O -----------------------------------------------------------

    def open(self, path: str, write: bool = False) -> int:
        node = self.resolve(path)
        if node.kind is NodeKind.CARVPATH_FILE:
            if write:
                raise ReadOnly(path)
            self.archive.open_entity(node.payload)
        elif node.kind is not NodeKind.MUTABLE_DAT:
            if write:
                raise ReadOnly(path)
            if node.kind in (NodeKind.ROOT_DIR, NodeKind.OPAQUE_DIR, NodeKind.CARVPATH_DIR):
                raise AccessDenied(path)
        with self._lock:
            fh = next(self._next_fh)
            self._handles[fh] = node
        return fh

    def _handle(self, fh: int) -> Node:
        node = self._handles.get(fh)
        if node is None:
            raise NotFound(f"file handle {fh}")
        return node

    def read(self, fh: int, offset: int, size: int) -> bytes:
        node = self._handle(fh)
        if node.kind is NodeKind.CARVPATH_FILE:
            e = node.payload
            if offset >= e.total_size:
                return b""
            return self.archive.read(e, offset, min(size, e.total_size - offset))
        if node.kind is NodeKind.MUTABLE_DAT:
            return self.archive.read_mutable(node.payload, offset, size)
        return b""

    def write(self, fh: int, offset: int, data: bytes) -> int:
        node = self._handle(fh)
        if node.kind is not NodeKind.MUTABLE_DAT:
            raise ReadOnly("only mutable files are writable")
        try:
            self.archive.write_mutable(node.payload, offset, data)
        except InvalidCapability as exc:
            raise NotFound(node.payload) from exc
        return len(data)

    def close(self, fh: int) -> None:
        with self._lock:
            node = self._handles.pop(fh, None)
        if node is None:
            raise NotFound(f"file handle {fh}")
        if node.kind is NodeKind.CARVPATH_FILE:
            self.archive.close_entity(node.payload)

    def read_file(self, path: str) -> bytes:
        """Open, read whole, close: the usual life of a tool touching one pseudo file."""
        fh = self.open(path)
        try:
            return self.read(fh, 0, self.stat(path)["size"])
        finally:
            self.close(fh)

    def write_file(self, path: str, data: bytes, offset: int = 0) -> None:
        fh = self.open(path, write=True)
        try:
            self.write(fh, offset, data)
        finally:
            self.close(fh)
