"""Content-addressed result cache with checksums and atomic writes."""

from __future__ import annotations

import hashlib
import os
import tempfile
from pathlib import Path
from typing import Optional

from .config import SCHEMA_VERSION

_MAGIC = "quasiduality-cache"


class ResultCache:
    """Files ``<key>.json`` holding a one-line header (schema, sha256) and the body bytes."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> Optional[bytes]:
        """Body bytes, or None on miss, schema mismatch or checksum failure."""
        p = self.path(key)
        try:
            raw = p.read_bytes()
        except OSError:
            return None
        head, sep, body = raw.partition(b"\n")
        if not sep:
            return None
        parts = head.decode(errors="replace").split()
        if len(parts) != 3 or parts[0] != _MAGIC or parts[1] != str(SCHEMA_VERSION):
            return None
        if hashlib.sha256(body).hexdigest() != parts[2]:
            return None
        return body

    def put(self, key: str, body: bytes) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        head = f"{_MAGIC} {SCHEMA_VERSION} {hashlib.sha256(body).hexdigest()}\n".encode()
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(head + body)
            os.replace(tmp, self.path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return self.path(key)
