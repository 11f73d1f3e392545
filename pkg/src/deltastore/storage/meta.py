"""Content-addressed storage for serialized model architectures."""

import hashlib
import os
import threading
from pathlib import Path

from ..errors import NotFound


class ArchitectureStore:
    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key_for(document: bytes) -> str:
        return hashlib.sha256(document).hexdigest()

    def _path(self, key: str) -> Path:
        if len(key) != 64 or any(c not in "0123456789abcdef" for c in key):
            raise NotFound(f"architecture {key!r} not found")
        return self.directory / f"{key}.graph"

    def save(self, document: bytes) -> str:
        key = self.key_for(document)
        path = self._path(key)
        if not path.exists():
            tmp = path.with_name(f"{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
            tmp.write_bytes(document)
            os.replace(tmp, path)
        return key

    def load(self, key: str) -> bytes:
        path = self._path(key)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise NotFound(f"architecture {key!r} not found") from None

    def __contains__(self, key: str) -> bool:
        try:
            return self._path(key).exists()
        except NotFound:
            return False

    def __len__(self) -> int:
        return sum(1 for _ in self.directory.glob("*.graph"))
