"""Offline construction of the on-flash data products.

* sorted k_max-mer database (magic ``MSKD``)
* KSS sketch tables (``MSKS``): sorted k_max table with taxa, plus one
  extras table per smaller k holding, for each distinct k-prefix of the
  top table, only the taxa *not* already attributed to top entries with
  that prefix
* per-species sorted (k-mer, location) indexes (``MSIX``)
"""

from __future__ import annotations

import heapq
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping

from . import formats
from .errors import BuildError, DataError, IoError, RangeError
from .kmer import KMER_BYTES, MAX_K, iter_kmer_bits, iter_kmer_positions, prefix_bits
from .seqio import read_genome

KSS_MAGIC = b"MSKS"
SIDX_MAGIC = b"MSIX"
FLAT_MAGIC = b"MSFT"
FILE_VERSION = 1

DEFAULT_SKETCH_SIZE = 64

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


# -- k-mer database ----------------------------------------------------------

@dataclass
class KmerDatabase:
    k: int
    entries: list[int]

    @property
    def count(self) -> int:
        return len(self.entries)

    @property
    def nbytes(self) -> int:
        return self.count * KMER_BYTES

    def save(self, path: str | Path) -> None:
        formats.write_kmer_file(path, formats.MAGIC_KDB, self.k, self.entries, True)

    @classmethod
    def load(cls, path: str | Path) -> "KmerDatabase":
        k, entries, _ = formats.read_kmer_file(path, formats.MAGIC_KDB)
        return cls(k, entries)


def build_kmer_db(references: Iterable[str], k_max: int) -> KmerDatabase:
    """Sorted union of all distinct ``k_max``-mers over the reference genomes."""
    if not 1 <= k_max <= MAX_K:
        raise RangeError(f"k_max must be in [1, {MAX_K}]")
    refs = list(references)
    if not refs:
        raise BuildError("empty reference set")
    kmers: set[int] = set()
    for genome in refs:
        kmers.update(iter_kmer_bits(genome, k_max))
    return KmerDatabase(k_max, sorted(kmers))


# -- sketches ----------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    # splitmix64 finalizer
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def kmer_hash(bits: int, seed: int = 42) -> int:
    return _mix64(_mix64((bits >> 64) ^ seed) ^ (bits & _MASK64))


def minhash_sketch(genome: str, k: int, size: int = DEFAULT_SKETCH_SIZE, seed: int = 42) -> list[int]:
    """Bottom-``size`` MinHash of the genome's distinct k-mers, sorted by k-mer."""
    distinct = set(iter_kmer_bits(genome, k))
    chosen = heapq.nsmallest(size, distinct, key=lambda b: (kmer_hash(b, seed), b))
    return sorted(chosen)


def sketch_references(
    genomes: Mapping[int, str], k_max: int, size: int = DEFAULT_SKETCH_SIZE, seed: int = 42
) -> dict[int, set[tuple[int, int]]]:
    return {tax: {(k_max, b) for b in minhash_sketch(g, k_max, size, seed)} for tax, g in genomes.items()}


# -- KSS ---------------------------------------------------------------------

@dataclass
class KssSketch:
    k_levels: list[int]
    top_table: list[tuple[int, tuple[int, ...]]]
    extras_tables: dict[int, list[tuple[int, ...]]]
    overflow_tables: dict[int, list[tuple[int, tuple[int, ...]]]]
    sketch_sizes: dict[int, dict[int, int]] = field(default_factory=dict)  # tax -> k -> size

    @property
    def k_max(self) -> int:
        return self.k_levels[0]

    @property
    def smaller_levels(self) -> list[int]:
        return self.k_levels[1:]

    def sketch_size(self, tax: int, k: int) -> int:
        return self.sketch_sizes.get(tax, {}).get(k, 0)

    def reconstruct(self, k: int, p: int) -> frozenset[int]:
        """Full taxon set for ``(k, p)`` (slow random-access path, for checks)."""
        if k == self.k_max:
            for km, taxa in self.top_table:
                if km == p:
                    return frozenset(taxa)
            return frozenset()
        out: set[int] = set()
        pos = -1
        prev = None
        for km, taxa in self.top_table:
            q = prefix_bits(km, k)
            if q != prev:
                pos += 1
                prev = q
            if q == p:
                out.update(taxa)
                out.update(self.extras_tables[k][pos])
        for q, taxa in self.overflow_tables[k]:
            if q == p:
                out.update(taxa)
        return frozenset(out)

    def nbytes(self) -> int:
        buf = io.BytesIO()
        write_kss(buf, self)
        return buf.tell()

    def save(self, path: str | Path) -> None:
        try:
            with open(path, "wb") as fh:
                write_kss(fh, self)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "KssSketch":
        try:
            with open(path, "rb") as fh:
                return read_kss(fh)
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc


def close_sketches(
    per_taxon_sketches: Mapping[int, Iterable[tuple[int, int]]], k_levels: list[int]
) -> dict[tuple[int, int], set[int]]:
    """Flat ``(k, k-mer) -> taxa`` table.

    A taxon sketching a k_max-mer also sketches each of its prefixes at the
    smaller levels; that is what lets a smaller-k lookup be answered from
    prefixes of the top table.
    """
    _check_levels(k_levels)
    levels = set(k_levels)
    k_max = k_levels[0]
    flat: dict[tuple[int, int], set[int]] = {}
    for tax, members in per_taxon_sketches.items():
        if not 0 < tax < 2**32:
            raise BuildError(f"tax id {tax} out of range")
        for k, bits in members:
            if k not in levels:
                raise BuildError(f"sketch k={k} not among k_levels {k_levels}")
            flat.setdefault((k, bits), set()).add(tax)
            if k == k_max:
                for k2 in k_levels[1:]:
                    flat.setdefault((k2, prefix_bits(bits, k2)), set()).add(tax)
    return flat


def _check_levels(k_levels: list[int]) -> None:
    if not k_levels:
        raise BuildError("k_levels must not be empty")
    if any(a <= b for a, b in zip(k_levels, k_levels[1:])):
        raise BuildError(f"k_levels must be strictly decreasing: {k_levels}")
    if k_levels[-1] < 1 or k_levels[0] > MAX_K:
        raise BuildError(f"k_levels out of range: {k_levels}")


def build_kss(
    per_taxon_sketches: Mapping[int, Iterable[tuple[int, int]]], k_levels: list[int]
) -> KssSketch:
    flat = close_sketches(per_taxon_sketches, k_levels)
    k_max = k_levels[0]
    top_table = sorted(
        (bits, tuple(sorted(taxa))) for (k, bits), taxa in flat.items() if k == k_max
    )
    extras_tables: dict[int, list[tuple[int, ...]]] = {}
    overflow_tables: dict[int, list[tuple[int, tuple[int, ...]]]] = {}
    for k in k_levels[1:]:
        groups: list[tuple[int, set[int]]] = []
        for bits, taxa in top_table:
            p = prefix_bits(bits, k)
            if groups and groups[-1][0] == p:
                groups[-1][1].update(taxa)
            else:
                groups.append((p, set(taxa)))
        covered = {p for p, _ in groups}
        extras_tables[k] = [tuple(sorted(flat[(k, p)] - top_taxa)) for p, top_taxa in groups]
        overflow_tables[k] = sorted(
            (p, tuple(sorted(taxa)))
            for (kk, p), taxa in flat.items()
            if kk == k and p not in covered
        )
    sizes: dict[int, dict[int, int]] = {}
    for (k, _), taxa in flat.items():
        for tax in taxa:
            per_k = sizes.setdefault(tax, {})
            per_k[k] = per_k.get(k, 0) + 1
    return KssSketch(list(k_levels), top_table, extras_tables, overflow_tables, sizes)


def _write_taxa(fh: BinaryIO, taxa: tuple[int, ...]) -> None:
    fh.write(_U32.pack(len(taxa)))
    fh.write(struct.pack(f"<{len(taxa)}I", *taxa))


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise DataError("truncated file")
    return raw


def _read_taxa(fh: BinaryIO) -> tuple[int, ...]:
    (n,) = _U32.unpack(_read_exact(fh, 4))
    return struct.unpack(f"<{n}I", _read_exact(fh, 4 * n))


def _write_sizes(fh: BinaryIO, k_levels: list[int], sizes: dict[int, dict[int, int]]) -> None:
    fh.write(_U32.pack(len(sizes)))
    for tax in sorted(sizes):
        fh.write(_U32.pack(tax))
        fh.write(struct.pack(f"<{len(k_levels)}I", *(sizes[tax].get(k, 0) for k in k_levels)))


def _write_levels_header(fh: BinaryIO, magic: bytes, k_levels: list[int]) -> None:
    fh.write(magic)
    fh.write(struct.pack("<HB", FILE_VERSION, len(k_levels)))
    fh.write(bytes(k_levels))


def write_kss(fh: BinaryIO, kss: KssSketch) -> None:
    """Serialize KSS.  Extras tables carry no length or k-mers: their length
    is the number of distinct prefixes of the top table."""
    _write_levels_header(fh, KSS_MAGIC, kss.k_levels)
    fh.write(_U64.pack(len(kss.top_table)))
    for bits, taxa in kss.top_table:
        fh.write(bits.to_bytes(KMER_BYTES, "little"))
        _write_taxa(fh, taxa)
    for k in kss.smaller_levels:
        for taxa in kss.extras_tables[k]:
            _write_taxa(fh, taxa)
    for k in kss.smaller_levels:
        fh.write(_U64.pack(len(kss.overflow_tables[k])))
        for bits, taxa in kss.overflow_tables[k]:
            fh.write(bits.to_bytes(KMER_BYTES, "little"))
            _write_taxa(fh, taxa)
    _write_sizes(fh, kss.k_levels, kss.sketch_sizes)


def _read_levels_header(fh: BinaryIO, magic: bytes) -> list[int]:
    got = _read_exact(fh, 4)
    if got != magic:
        raise DataError(f"bad magic {got!r}, expected {magic!r}")
    version, n = struct.unpack("<HB", _read_exact(fh, 3))
    if version != FILE_VERSION:
        raise DataError(f"unsupported version {version}")
    return list(_read_exact(fh, n))


def _read_sizes(fh: BinaryIO, k_levels: list[int]) -> dict[int, dict[int, int]]:
    (n,) = _U32.unpack(_read_exact(fh, 4))
    sizes = {}
    for _ in range(n):
        (tax,) = _U32.unpack(_read_exact(fh, 4))
        vals = struct.unpack(f"<{len(k_levels)}I", _read_exact(fh, 4 * len(k_levels)))
        sizes[tax] = {k: v for k, v in zip(k_levels, vals) if v}
    return sizes


def read_kss(fh: BinaryIO) -> KssSketch:
    k_levels = _read_levels_header(fh, KSS_MAGIC)
    (n_top,) = _U64.unpack(_read_exact(fh, 8))
    top = []
    for _ in range(n_top):
        bits = int.from_bytes(_read_exact(fh, KMER_BYTES), "little")
        top.append((bits, _read_taxa(fh)))
    extras = {}
    for k in k_levels[1:]:
        n_prefixes = len({prefix_bits(b, k) for b, _ in top})
        extras[k] = [_read_taxa(fh) for _ in range(n_prefixes)]
    overflow = {}
    for k in k_levels[1:]:
        (n,) = _U64.unpack(_read_exact(fh, 8))
        rows = []
        for _ in range(n):
            bits = int.from_bytes(_read_exact(fh, KMER_BYTES), "little")
            rows.append((bits, _read_taxa(fh)))
        overflow[k] = rows
    sizes = _read_sizes(fh, k_levels)
    return KssSketch(k_levels, top, extras, overflow, sizes)


def flat_table_nbytes(flat: Mapping[tuple[int, int], set[int]], k_levels: list[int],
                      sizes: dict[int, dict[int, int]]) -> int:
    """Size of the same information stored as one (k-mer, taxa) table per k."""
    buf = io.BytesIO()
    _write_levels_header(buf, FLAT_MAGIC, k_levels)
    for k in k_levels:
        rows = sorted((b, tuple(sorted(t))) for (kk, b), t in flat.items() if kk == k)
        buf.write(_U64.pack(len(rows)))
        for bits, taxa in rows:
            buf.write(bits.to_bytes(KMER_BYTES, "little"))
            _write_taxa(buf, taxa)
    _write_sizes(buf, k_levels, sizes)
    return buf.tell()


# -- species indexes ---------------------------------------------------------

@dataclass
class SpeciesIndex:
    tax: int
    genome_length: int
    k: int
    entries: list[tuple[int, int]]  # (k-mer bits, location)

    def save(self, path: str | Path) -> None:
        try:
            with open(path, "wb") as fh:
                fh.write(SIDX_MAGIC)
                fh.write(struct.pack("<HIBQQ", FILE_VERSION, self.tax, self.k,
                                     self.genome_length, len(self.entries)))
                for bits, loc in self.entries:
                    fh.write(bits.to_bytes(KMER_BYTES, "little"))
                    fh.write(_U64.pack(loc))
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "SpeciesIndex":
        try:
            with open(path, "rb") as fh:
                if _read_exact(fh, 4) != SIDX_MAGIC:
                    raise DataError(f"{path}: not a species index")
                hdr = struct.Struct("<HIBQQ")
                version, tax, k, glen, count = hdr.unpack(_read_exact(fh, hdr.size))
                if version != FILE_VERSION:
                    raise DataError(f"unsupported version {version}")
                raw = _read_exact(fh, count * (KMER_BYTES + 8))
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        step = KMER_BYTES + 8
        entries = [
            (int.from_bytes(raw[i : i + KMER_BYTES], "little"),
             _U64.unpack_from(raw, i + KMER_BYTES)[0])
            for i in range(0, len(raw), step)
        ]
        return cls(tax, glen, k, entries)

    @property
    def nbytes(self) -> int:
        return len(self.entries) * (KMER_BYTES + 8)


def build_species_index(reference: str, tax: int, k: int) -> SpeciesIndex:
    if not 1 <= k <= MAX_K:
        raise RangeError(f"k must be in [1, {MAX_K}]")
    entries = sorted(iter_kmer_positions(reference, k)) if len(reference) >= k else []
    return SpeciesIndex(tax, len(reference), k, entries)


def load_reference(path: str | Path) -> str:
    return read_genome(path)
