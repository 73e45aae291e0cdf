"""Page-cache aware forensic archive and local message bus addressed by CarvPaths."""

from .anycast import Bus
from .archive import Archive
from .carvpath import (
    ByteSet,
    Entity,
    Fragment,
    LongPathTable,
    byte_set,
    digest_token,
    flatten,
    parse_path,
    parse_token,
    serialize,
)
from .gateway import Gateway
from .journal import Journal
from .refstack import RefStack

__all__ = [
    "Archive",
    "Bus",
    "ByteSet",
    "Entity",
    "Fragment",
    "Gateway",
    "Journal",
    "LongPathTable",
    "RefStack",
    "byte_set",
    "digest_token",
    "flatten",
    "parse_path",
    "parse_token",
    "serialize",
]
__version__ = "0.1.0"
