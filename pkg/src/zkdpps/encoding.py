"""Canonical byte encodings plus digest and seed helpers.

Everything that gets hashed goes through :class:`Writer` so that two nodes
serializing the same record always produce the same bytes. Fields go in
declared order with u32 length prefixes.
"""

from __future__ import annotations

import hashlib
import random
import struct

DIGEST_SIZE = 32


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class Writer:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<B", v))
        return self

    def u32(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<I", v))
        return self

    def u64(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<Q", v))
        return self

    def i64(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<q", v))
        return self

    def raw(self, b: bytes) -> "Writer":
        self._parts.append(b)
        return self

    def blob(self, b: bytes) -> "Writer":
        self.u32(len(b))
        self._parts.append(b)
        return self

    def text(self, s: str) -> "Writer":
        return self.blob(s.encode("utf-8"))

    def bigint(self, v: int) -> "Writer":
        if v < 0:
            raise ValueError("bigint fields are non-negative")
        return self.blob(v.to_bytes((v.bit_length() + 7) // 8 or 1, "little"))

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes) -> None:
        self._data = memoryview(data)
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise ValueError("truncated record")
        out = bytes(self._data[self._pos : self._pos + n])
        self._pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def blob(self) -> bytes:
        return self._take(self.u32())

    def text(self) -> str:
        return self.blob().decode("utf-8")

    def bigint(self) -> int:
        return int.from_bytes(self.blob(), "little")

    def at_end(self) -> bool:
        return self._pos == len(self._data)


def derive_seed(*parts: object) -> int:
    """Domain-separated 256-bit seed from arbitrary labelled parts."""
    w = Writer()
    for p in parts:
        if isinstance(p, bytes):
            w.u8(0).blob(p)
        elif isinstance(p, bool):
            w.u8(1).u8(int(p))
        elif isinstance(p, int):
            w.u8(2).u8(p < 0).bigint(abs(p))
        else:
            w.u8(3).text(str(p))
    return int.from_bytes(digest(w.getvalue()), "big")


def seeded_rng(*parts: object) -> random.Random:
    return random.Random(derive_seed(*parts))
