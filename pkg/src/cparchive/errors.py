"""Exception types shared by the archive, bus and gateway layers."""

from __future__ import annotations


class CarvPathError(Exception):
    """Base class for every error raised by this package."""


class MalformedToken(CarvPathError, ValueError):
    pass


class UnknownDigest(CarvPathError, KeyError):
    pass


class ChildOutOfBounds(CarvPathError, ValueError):
    pass


class EmptyByteSet(CarvPathError, ValueError):
    pass


class UnknownEntity(CarvPathError, KeyError):
    pass


class StackCorruption(CarvPathError, AssertionError):
    """Reference counting stack no longer agrees with the entity counts."""


class DuplicateEntity(CarvPathError, KeyError):
    pass


class InvalidCapability(CarvPathError, PermissionError):
    pass


class Frozen(CarvPathError, PermissionError):
    pass


class AlreadyFrozen(Frozen):
    pass


class OutOfBounds(CarvPathError, ValueError):
    pass


class FragmentBeyondArchive(OutOfBounds):
    pass


class BadActorName(CarvPathError, ValueError):
    pass


class UnknownActor(CarvPathError, KeyError):
    pass


class UnknownPolicyLetter(CarvPathError, ValueError):
    pass


class WorkerBusy(CarvPathError, RuntimeError):
    pass


class NoCurrentMutable(CarvPathError, RuntimeError):
    pass


class NotFound(CarvPathError, FileNotFoundError):
    pass


class AccessDenied(CarvPathError, PermissionError):
    pass


class UnknownAttribute(CarvPathError, KeyError):
    pass


class BadValue(CarvPathError, ValueError):
    pass


class ReadOnly(CarvPathError, PermissionError):
    pass


class SourceUnreadable(CarvPathError, OSError):
    pass


class ConfigError(CarvPathError, ValueError):
    pass


class MountUnsupported(CarvPathError, RuntimeError):
    pass
