"""Instance lifecycle, raw evidence import and a client for mounted instances."""

from __future__ import annotations

import configparser
import fcntl
import logging
import os
import signal
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol

from .anycast import Bus
from .archive import Archive
from .carvpath import Entity, LongPathTable, SqliteLongPathStore, parse_path
from .errors import ConfigError, MountUnsupported, SourceUnreadable
from .gateway import XATTR_PREFIX, Gateway
from .journal import Journal

log = logging.getLogger(__name__)

IMPORT_ACTOR = "import"
DEFAULT_CHUNK = 1 << 20


@dataclass
class Config:
    archive_path: Path
    journal_path: Path
    mount_point: Optional[Path] = None
    longpath_store: Optional[Path] = None


def load_config(path: str | Path) -> Config:
    """Read ``key = value`` lines; an ``[instance]`` section header is optional."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    parser = configparser.ConfigParser()
    try:
        if not text.lstrip().startswith("["):
            text = "[instance]\n" + text
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    section = parser[parser.sections()[0]] if parser.sections() else {}
    base = Path(path).parent

    def opt(key: str) -> Optional[Path]:
        value = section.get(key, "").strip()
        return (base / value) if value else None

    archive_path, journal_path = opt("archive_path"), opt("journal_path")
    if archive_path is None or journal_path is None:
        raise ConfigError("archive_path and journal_path are required")
    return Config(archive_path, journal_path, opt("mount_point"), opt("longpath_store"))


class FileApi(Protocol):
    def getxattr(self, path: str, name: str) -> str: ...
    def setxattr(self, path: str, name: str, value: str) -> None: ...
    def open(self, path: str, write: bool = False) -> int: ...
    def write(self, fh: int, offset: int, data: bytes) -> int: ...
    def close(self, fh: int) -> None: ...


class MountClient:
    """Same calls as :class:`Gateway`, issued against a mounted instance."""

    def __init__(self, mount_point: str | Path) -> None:
        self.root = Path(mount_point)

    def _p(self, path: str) -> str:
        return str(self.root / path.lstrip("/"))

    def getxattr(self, path: str, name: str) -> str:
        return os.getxattr(self._p(path), XATTR_PREFIX + name).decode("utf-8")

    def setxattr(self, path: str, name: str, value: str) -> None:
        os.setxattr(self._p(path), XATTR_PREFIX + name, value.encode("utf-8"))

    def open(self, path: str, write: bool = False) -> int:
        return os.open(self._p(path), os.O_RDWR if write else os.O_RDONLY)

    def write(self, fh: int, offset: int, data: bytes) -> int:
        return os.pwrite(fh, data, offset)

    def close(self, fh: int) -> None:
        os.close(fh)


def import_raw(
    api: FileApi,
    source: str | Path,
    target_actor: str,
    mime: str = "application/octet-stream",
    ext: str = "raw",
    router_state: str = "",
    chunk_size: int = DEFAULT_CHUNK,
) -> str:
    """Stream a raw evidence file into a fresh mutable, freeze it and submit it.

    Runs as a kickstart worker of the ``import`` actor; returns the CarvPath token.
    """
    try:
        size = os.path.getsize(source)
        src = open(source, "rb")
    except OSError as exc:
        raise SourceUnreadable(str(exc)) from exc
    with src:
        worker = api.getxattr(f"/actor/{IMPORT_ACTOR}.ctl", "register_worker")
        wpath = f"/worker/{worker}.ctl"
        api.setxattr(wpath, "job_select_policy", "K")
        job = api.getxattr(wpath, "accept_job")
        jpath = f"/job/{job}.ctl"
        api.setxattr(jpath, "allocate_mutable", str(size))
        mutable = api.getxattr(jpath, "current_mutable")
        fh = api.open(f"/mutable/{mutable}.dat", write=True)
        try:
            offset = 0
            while chunk := src.read(chunk_size):
                api.write(fh, offset, chunk)
                offset += len(chunk)
        finally:
            api.close(fh)
        if offset != size:
            raise SourceUnreadable(f"{source} changed size while importing")
        token = api.getxattr(jpath, "frozen_mutable")
        api.setxattr(jpath, "submit_child", f"{token};{target_actor};{router_state};{mime};{ext}")
        api.setxattr(jpath, "complete", "1")
        api.setxattr(wpath, "unregister", "1")
    return token


class Instance:
    """One archive + journal + bus + gateway, guarded by an exclusive lock file."""

    def __init__(self, config: Config, advisor=None, residency=None) -> None:
        self.config = config
        lock_path = str(config.archive_path) + ".lock"
        self._lock_fd = os.open(lock_path, os.O_RDWR | os.O_CREAT, 0o600)
        try:
            fcntl.flock(self._lock_fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            os.close(self._lock_fd)
            raise ConfigError(f"archive {config.archive_path} is already served") from None
        store = SqliteLongPathStore(str(config.longpath_store)) if config.longpath_store else None
        self.table = LongPathTable(store)
        self.journal = Journal(config.journal_path)
        self.archive = Archive(config.archive_path, advisor=advisor, residency=residency,
                               journal=self.journal, table=self.table)
        self.bus = Bus(self.archive, self.journal)
        self.gateway = Gateway(self.bus)

    def close(self) -> None:
        self.archive.close()
        self.journal.close()
        if hasattr(self.table.store, "close"):
            self.table.store.close()
        fcntl.flock(self._lock_fd, fcntl.LOCK_UN)
        os.close(self._lock_fd)

    def __enter__(self) -> "Instance":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def entity(self, carvpath: str) -> Entity:
        return parse_path(carvpath, self.table)


def serve(config: Config, stop: Optional[threading.Event] = None) -> None:
    """Run an instance until *stop* is set or the process is told to terminate."""
    stop = stop or threading.Event()
    with Instance(config) as inst:
        if config.mount_point is not None:
            from .mount import mount

            try:
                mount(inst.gateway, str(config.mount_point))
                return
            except MountUnsupported as exc:
                log.warning("%s; serving the in-process facade only", exc)
        if threading.current_thread() is threading.main_thread():
            for sig in (signal.SIGINT, signal.SIGTERM):
                signal.signal(sig, lambda *_: stop.set())
        stop.wait()
