"""Versioned binary envelope shared by every on-disk artifact.

Layout: 4-byte magic, version byte, type byte, big-endian section count,
then each section as a 4-byte big-endian length prefix plus payload.
"""

from __future__ import annotations

import struct
from typing import List, Optional, Sequence

MAGIC = b"JEDI"
VERSION = 1

TYPE_PARAMS = 1
TYPE_KEYSET = 2
TYPE_KEYSTORE = 3
TYPE_MESSAGE = 4
TYPE_REVLIST = 5
TYPE_EPOCH = 6


class ContainerError(Exception):
    """File is not a well-formed container of the expected type."""


def pack(type_byte: int, sections: Sequence[bytes]) -> bytes:
    out = [MAGIC, bytes([VERSION, type_byte]),
           struct.pack(">H", len(sections))]
    for s in sections:
        out.append(struct.pack(">I", len(s)))
        out.append(s)
    return b"".join(out)


def pack_prefix(type_byte: int, sections: Sequence[bytes],
                total_count: int) -> bytes:
    """The leading bytes of ``pack`` for a container whose first
    sections are already known; callers append the remaining sections
    themselves (length prefix, then payload, each)."""
    out = [MAGIC, bytes([VERSION, type_byte]),
           struct.pack(">H", total_count)]
    for s in sections:
        out.append(struct.pack(">I", len(s)))
        out.append(s)
    return b"".join(out)


def unpack(data: bytes, expect_type: Optional[int] = None) -> List[bytes]:
    if len(data) < 8 or data[:4] != MAGIC:
        raise ContainerError("bad magic")
    if data[4] != VERSION:
        raise ContainerError("unsupported container version %d" % data[4])
    if expect_type is not None and data[5] != expect_type:
        raise ContainerError("expected container type %d, found %d"
                             % (expect_type, data[5]))
    (count,) = struct.unpack(">H", data[6:8])
    sections = []
    off = 8
    for _ in range(count):
        if off + 4 > len(data):
            raise ContainerError("truncated section header")
        (n,) = struct.unpack(">I", data[off:off + 4])
        off += 4
        if off + n > len(data):
            raise ContainerError("truncated section payload")
        sections.append(data[off:off + n])
        off += n
    if off != len(data):
        raise ContainerError("trailing bytes after last section")
    return sections


def container_type(data: bytes) -> int:
    if len(data) < 6 or data[:4] != MAGIC:
        raise ContainerError("bad magic")
    return data[5]
