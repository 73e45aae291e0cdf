"""Optional host mount: a thin fusepy operations shim over :class:`Gateway`."""

from __future__ import annotations

import errno
import logging
import os
import stat as stat_mod
import time

from .errors import (
    AccessDenied,
    BadValue,
    CarvPathError,
    DuplicateEntity,
    Frozen,
    InvalidCapability,
    MountUnsupported,
    NotFound,
    OutOfBounds,
    ReadOnly,
    UnknownAttribute,
)
from .gateway import XATTR_PREFIX, Gateway

log = logging.getLogger(__name__)

_ERRNO = (
    (NotFound, errno.ENOENT),
    (InvalidCapability, errno.ENOENT),
    (AccessDenied, errno.EACCES),
    (ReadOnly, errno.EROFS),
    (Frozen, errno.EPERM),
    (UnknownAttribute, getattr(errno, "ENODATA", errno.ENOENT)),
    (BadValue, errno.EINVAL),
    (OutOfBounds, errno.EINVAL),
    (DuplicateEntity, errno.EEXIST),
)


def errno_for(exc: CarvPathError) -> int:
    for cls, code in _ERRNO:
        if isinstance(exc, cls):
            return code
    return errno.EIO


class GatewayOperations:
    """Callable in the shape fusepy expects: ``ops(name, *args)``."""

    def __init__(self, gateway: Gateway) -> None:
        self.gateway = gateway
        self._started = time.time()

    def __call__(self, op: str, *args):
        method = getattr(self, op, None)
        if method is None:
            raise OSError(errno.ENOSYS, op)
        try:
            return method(*args)
        except CarvPathError as exc:
            raise OSError(errno_for(exc), str(exc)) from exc

    def init(self, path):
        pass

    def destroy(self, path):
        pass

    def getattr(self, path, fh=None):
        st = self.gateway.stat(path)
        mode = st["mode"]
        return {
            "st_mode": mode,
            "st_size": st["size"],
            "st_nlink": 2 if stat_mod.S_ISDIR(mode) else 1,
            "st_uid": os.getuid(),
            "st_gid": os.getgid(),
            "st_atime": self._started,
            "st_mtime": self._started,
            "st_ctime": self._started,
        }

    def readdir(self, path, fh):
        return [".", "..", *self.gateway.listdir(path)]

    def readlink(self, path):
        return self.gateway.readlink(path)

    def open(self, path, flags):
        write = (flags & os.O_ACCMODE) != os.O_RDONLY
        return self.gateway.open(path, write=write)

    def read(self, path, size, offset, fh):
        return self.gateway.read(fh, offset, size)

    def write(self, path, data, offset, fh):
        return self.gateway.write(fh, offset, data)

    def truncate(self, path, length, fh=None):
        # mutable files have a fixed size; accept no-op truncates to that size only
        if self.gateway.stat(path)["size"] != length:
            raise OSError(errno.EPERM, path)

    def release(self, path, fh):
        self.gateway.close(fh)
        return 0

    def flush(self, path, fh):
        return 0

    def getxattr(self, path, name, position=0):
        if not name.startswith(XATTR_PREFIX):
            raise OSError(getattr(errno, "ENODATA", errno.ENOENT), name)
        return self.gateway.getxattr(path, name).encode("utf-8")

    def setxattr(self, path, name, value, options, position=0):
        if not name.startswith(XATTR_PREFIX):
            raise OSError(errno.ENOTSUP, name)
        self.gateway.setxattr(path, name, value)
        return 0

    def listxattr(self, path):
        return [XATTR_PREFIX + n for n in self.gateway.listxattr(path)]


def mount(gateway: Gateway, mount_point: str, foreground: bool = True) -> None:
    """Mount the gateway on *mount_point*; blocks until unmounted."""
    try:
        from fuse import FUSE  # fusepy
    except (ImportError, OSError) as exc:
        raise MountUnsupported(f"user-space filesystem support unavailable: {exc}") from exc
    FUSE(GatewayOperations(gateway), mount_point, foreground=foreground, nothreads=True)
