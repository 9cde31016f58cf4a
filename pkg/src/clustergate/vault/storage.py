"""Append-only record file backing the vault.

Each record is framed as a 4-byte big-endian length, one kind byte and the
payload. A truncated trailing frame is reported, not silently dropped.
"""
from __future__ import annotations

import io
import os
import struct
import threading
from pathlib import Path
from typing import Iterator

HEADER = b"H"
SEALED = b"E"

_FRAME = struct.Struct(">I")


class StorageError(Exception):
    pass


class RecordFile:
    def __init__(self, path: str | Path | None = None, *, fsync: bool = False):
        self.path = Path(path) if path is not None else None
        self._fsync = fsync
        self._memory = io.BytesIO() if self.path is None else None
        self._lock = threading.Lock()

    def _read_bytes(self) -> bytes:
        if self._memory is not None:
            return self._memory.getvalue()
        if not self.path.exists():
            return b""
        return self.path.read_bytes()

    def records(self) -> Iterator[tuple[bytes, bytes]]:
        data = self._read_bytes()
        offset = 0
        while offset < len(data):
            if offset + _FRAME.size > len(data):
                raise StorageError(f"torn frame header at offset {offset}")
            (length,) = _FRAME.unpack_from(data, offset)
            start = offset + _FRAME.size
            if length < 1 or start + length > len(data):
                raise StorageError(f"torn record at offset {offset}")
            yield data[start:start + 1], data[start + 1:start + length]
            offset = start + length

    def append(self, kind: bytes, payload: bytes) -> None:
        frame = _FRAME.pack(len(payload) + 1) + kind + payload
        with self._lock:
            if self._memory is not None:
                self._memory.seek(0, io.SEEK_END)
                self._memory.write(frame)
                return
            with open(self.path, "ab") as fh:
                fh.write(frame)
                fh.flush()
                if self._fsync:
                    os.fsync(fh.fileno())

    def empty(self) -> bool:
        return not self._read_bytes()
