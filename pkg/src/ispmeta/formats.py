"""Binary k-mer stream files: one header layout, told apart by magic.

Header (16 bytes, little-endian)::

    magic   4s   b"MSBK" (bucket) / b"MSKD" (database) / b"MSIS" (intersection)
    version u16
    k       u8
    flags   u8   bit 0 = sorted-unique
    count   u64

followed by ``count`` raw 16-byte little-endian k-mers.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

from .errors import DataError, IoError
from .kmer import KMER_BYTES

VERSION = 1
FLAG_SORTED_UNIQUE = 0x1

MAGIC_BUCKET = b"MSBK"
MAGIC_KDB = b"MSKD"
MAGIC_INTERSECTION = b"MSIS"

HEADER = struct.Struct("<4sHBBQ")


def write_header(fh: BinaryIO, magic: bytes, k: int, count: int, sorted_unique: bool) -> None:
    flags = FLAG_SORTED_UNIQUE if sorted_unique else 0
    fh.write(HEADER.pack(magic, VERSION, k, flags, count))


def read_header(fh: BinaryIO, expect_magic: bytes | None = None) -> tuple[bytes, int, int, bool]:
    raw = fh.read(HEADER.size)
    if len(raw) != HEADER.size:
        raise DataError("truncated k-mer stream header")
    magic, version, k, flags, count = HEADER.unpack(raw)
    if expect_magic is not None and magic != expect_magic:
        raise DataError(f"bad magic {magic!r}, expected {expect_magic!r}")
    if version != VERSION:
        raise DataError(f"unsupported version {version}")
    return magic, k, count, bool(flags & FLAG_SORTED_UNIQUE)


def encode_kmers(kmers: Iterable[int]) -> bytes:
    return b"".join(b.to_bytes(KMER_BYTES, "little") for b in kmers)


def decode_kmers(raw: bytes) -> list[int]:
    if len(raw) % KMER_BYTES:
        raise DataError("k-mer payload is not a multiple of 16 bytes")
    return [
        int.from_bytes(raw[i : i + KMER_BYTES], "little")
        for i in range(0, len(raw), KMER_BYTES)
    ]


def write_kmer_file(
    path: str | Path, magic: bytes, k: int, kmers: list[int], sorted_unique: bool
) -> None:
    try:
        with open(path, "wb") as fh:
            write_header(fh, magic, k, len(kmers), sorted_unique)
            fh.write(encode_kmers(kmers))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_kmer_file(path: str | Path, expect_magic: bytes | None = None) -> tuple[int, list[int], bool]:
    """Return ``(k, kmers, sorted_unique)``."""
    try:
        with open(path, "rb") as fh:
            _, k, count, su = read_header(fh, expect_magic)
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    kmers = decode_kmers(raw)
    if len(kmers) != count:
        raise DataError(f"{path}: header count {count} but {len(kmers)} k-mers present")
    return k, kmers, su


def iter_kmer_file(path: str | Path, chunk: int = 1 << 16) -> Iterator[int]:
    """Stream k-mers from a file without loading it whole."""
    with open(path, "rb") as fh:
        _, _, count, _ = read_header(fh)
        left = count
        while left:
            n = min(chunk, left)
            raw = fh.read(n * KMER_BYTES)
            if len(raw) != n * KMER_BYTES:
                raise DataError(f"{path}: truncated payload")
            yield from decode_kmers(raw)
            left -= n


def peek_k(path: str | Path) -> int:
    with open(path, "rb") as fh:
        return read_header(fh)[1]
