"""Packed k-mer values.

A k-mer of up to 60 bases is stored left-aligned in a 128-bit unsigned
integer, two bits per base (A=00, C=01, G=10, T=11), base 0 in the most
significant pair.  Unused low bits are zero, so for equal ``k`` integer
order equals lexicographic order and a prefix is a mask of the high bits.

Bulk containers (buckets, databases, streams) hold the bare ``bits`` ints
and carry ``k`` once; :class:`PackedKmer` is the typed single value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import EncodingError, OrderError, RangeError

KMER_BITS = 128
KMER_BYTES = 16
MAX_K = 60

_ENC = {"A": 0, "C": 1, "G": 2, "T": 3}
_DEC = "ACGT"
# byte -> 2-bit code; 255 marks a non-ACGT character
_CODE = bytes(_ENC.get(chr(c).upper(), 255) for c in range(256))


def _check_k(k: int) -> None:
    if not 1 <= k <= MAX_K:
        raise RangeError(f"k must be in [1, {MAX_K}], got {k}")


@dataclass(frozen=True, order=True, slots=True)
class PackedKmer:
    bits: int
    k: int

    def __str__(self) -> str:
        return unpack(self)

    def to_bytes(self) -> bytes:
        return self.bits.to_bytes(KMER_BYTES, "little")


@dataclass(frozen=True, slots=True)
class TaxId:
    """Taxonomic identifier; 0 is reserved for "unclassified"."""

    id: int

    def __post_init__(self):
        if not 0 < self.id < 2**32:
            raise RangeError(f"tax id must be in [1, 2^32), got {self.id}")

    def __int__(self) -> int:
        return self.id


def pack_bits(seq: str, k: int | None = None) -> int:
    """Return the left-aligned 128-bit encoding of ``seq``."""
    if k is None:
        k = len(seq)
    _check_k(k)
    if len(seq) != k:
        raise RangeError(f"sequence length {len(seq)} != k={k}")
    v = 0
    for ch in seq.encode("ascii", errors="replace"):
        c = _CODE[ch]
        if c == 255:
            raise EncodingError(f"non-ACGT character {chr(ch)!r} in {seq!r}")
        v = (v << 2) | c
    return v << (KMER_BITS - 2 * k)


def pack(seq: str, k: int) -> PackedKmer:
    return PackedKmer(pack_bits(seq, k), k)


def unpack_bits(bits: int, k: int) -> str:
    _check_k(k)
    v = bits >> (KMER_BITS - 2 * k)
    out = []
    for _ in range(k):
        out.append(_DEC[v & 3])
        v >>= 2
    return "".join(reversed(out))


def unpack(kmer: PackedKmer) -> str:
    return unpack_bits(kmer.bits, kmer.k)


def prefix_mask(k2: int) -> int:
    return ((1 << (2 * k2)) - 1) << (KMER_BITS - 2 * k2)


def prefix_bits(bits: int, k2: int) -> int:
    return bits & prefix_mask(k2)


def prefix(kmer: PackedKmer, k2: int) -> PackedKmer:
    if not 1 <= k2 <= kmer.k:
        raise RangeError(f"prefix length {k2} outside [1, {kmer.k}]")
    return PackedKmer(prefix_bits(kmer.bits, k2), k2)


def iter_kmer_bits(seq: str, k: int) -> Iterator[int]:
    """Yield packed bits of every length-k window of ``seq``.

    Windows containing a non-ACGT character are skipped.
    """
    _check_k(k)
    if len(seq) < k:
        return
    mask = (1 << (2 * k)) - 1
    shift = KMER_BITS - 2 * k
    v = n = 0
    for ch in seq.encode("ascii", errors="replace"):
        c = _CODE[ch]
        if c == 255:
            v = n = 0
            continue
        v = ((v << 2) | c) & mask
        n += 1
        if n >= k:
            yield v << shift


def iter_kmer_positions(seq: str, k: int) -> Iterator[tuple[int, int]]:
    """Like :func:`iter_kmer_bits` but yields ``(bits, start_offset)``."""
    _check_k(k)
    mask = (1 << (2 * k)) - 1
    shift = KMER_BITS - 2 * k
    v = n = 0
    for i, ch in enumerate(seq.encode("ascii", errors="replace")):
        c = _CODE[ch]
        if c == 255:
            v = n = 0
            continue
        v = ((v << 2) | c) & mask
        n += 1
        if n >= k:
            yield v << shift, i - k + 1


def kmer_to_bytes(bits: int) -> bytes:
    return bits.to_bytes(KMER_BYTES, "little")


def kmer_from_bytes(raw: bytes) -> int:
    return int.from_bytes(raw, "little")


def check_sorted_unique(bits: Iterable[int]) -> Iterator[int]:
    """Pass-through iterator raising OrderError on a non-increasing element."""
    prev = -1
    for i, b in enumerate(bits):
        if b <= prev:
            raise OrderError("stream is not strictly increasing", i)
        prev = b
        yield b
