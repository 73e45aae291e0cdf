"""Sparse capabilities: unguessable tokens that both name and authorize an object."""

from __future__ import annotations

import base64
import hashlib
import secrets
from typing import Callable

TOKEN_BYTES = 32

WORKER = "W"
JOB = "J"
MUTABLE = "M"


class Minter:
    """Mints ``<kind>-<base32>`` tokens from a random byte source.

    Tests may pass a seeded ``randbytes``; production uses :func:`secrets.token_bytes`.
    """

    def __init__(self, randbytes: Callable[[int], bytes] = secrets.token_bytes) -> None:
        self._randbytes = randbytes

    def mint(self, kind: str) -> str:
        raw = self._randbytes(TOKEN_BYTES)
        body = base64.b32encode(raw).decode("ascii").rstrip("=").lower()
        return f"{kind}-{body}"


def kind_of(token: str) -> str:
    return token.partition("-")[0]


def redact(token: str) -> str:
    """Stable journal-safe id for a capability; does not reveal the token itself."""
    digest = hashlib.blake2b(token.encode("ascii"), digest_size=8).hexdigest()
    return f"{kind_of(token)}:{digest}"
