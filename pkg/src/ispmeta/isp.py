"""Functional semantics of the in-storage computations.

Everything here is a single-pass stream transform over sorted inputs:
intersection finding, tax-ID retrieval over KSS tables driven by the
index generator, presence calling, and unified-index merging.
"""

from __future__ import annotations

import csv
import heapq
import io
import struct
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .dbbuild import KssSketch, SpeciesIndex
from .errors import ConfigError, DataError, IoError, OrderError, RangeError
from .kmer import KMER_BYTES, prefix_bits

UNIFIED_MAGIC = b"MSUX"
UNIFIED_VERSION = 1

DEFAULT_THETA = 0.25


def _ordered(stream: Iterable[int], name: str) -> Iterator[int]:
    prev = -1
    for i, b in enumerate(stream):
        if b <= prev:
            raise OrderError(f"{name} stream is not strictly increasing", i)
        prev = b
        yield b


def stream_intersect(query: Iterable[int], db: Iterable[int]) -> Iterator[int]:
    """Merge-intersect two strictly increasing k-mer streams.

    Mirrors a comparator with one register per side: on equality both
    advance, otherwise only the smaller side advances.  The database
    register is never refilled while its value exceeds the query head.
    """
    q_it = _ordered(query, "query")
    d_it = _ordered(db, "database")
    q = next(q_it, None)
    d = next(d_it, None)
    while q is not None and d is not None:
        if q == d:
            yield q
            q = next(q_it, None)
            d = next(d_it, None)
        elif q > d:
            d = next(d_it, None)
        else:
            q = next(q_it, None)


def index_generator(top_table_kmers: Iterable[int], k2: int) -> Iterator[int]:
    """Yield, per top-table entry, its position in the ``k2`` extras table.

    The position advances whenever two consecutive entries differ in their
    ``k2``-prefix.
    """
    pos = -1
    prev = None
    for bits in top_table_kmers:
        p = prefix_bits(bits, k2)
        if p != prev:
            pos += 1
            prev = p
        yield pos


@dataclass
class HitTable:
    hits: dict[tuple[int, int], int] = field(default_factory=dict)  # (tax, k) -> count

    def add(self, tax: int, k: int, n: int = 1) -> None:
        key = (tax, k)
        self.hits[key] = self.hits.get(key, 0) + n

    def get(self, tax: int, k: int) -> int:
        return self.hits.get((tax, k), 0)

    def taxa(self) -> list[int]:
        return sorted({t for t, _ in self.hits})

    def __len__(self) -> int:
        return len(self.hits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HitTable):
            return NotImplemented
        return {k: v for k, v in self.hits.items() if v} == {k: v for k, v in other.hits.items() if v}

    def rows(self) -> list[tuple[int, int, int]]:
        return sorted((t, k, n) for (t, k), n in self.hits.items())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tax", "k", "hits"])
        w.writerows(self.rows())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "HitTable":
        table = cls()
        for row in csv.DictReader(io.StringIO(text)):
            table.add(int(row["tax"]), int(row["k"]), int(row["hits"]))
        return table


@dataclass
class RetrievalStats:
    """Cursor consumption counters, for checking the single-pass contract."""

    top_consumed: int = 0
    group_consumed: dict[int, int] = field(default_factory=dict)
    extras_consumed: dict[int, int] = field(default_factory=dict)
    overflow_consumed: dict[int, int] = field(default_factory=dict)


class _LevelCursor:
    """Streams one smaller k-level: groups of top entries sharing a prefix,
    the matching extras entry, and the overflow table."""

    def __init__(self, kss: KssSketch, k: int):
        self.k = k
        self.top = kss.top_table
        self.extras = kss.extras_tables[k]
        self.overflow = kss.overflow_tables[k]
        self.i = 0          # next unconsumed top entry
        self.pos = -1       # index generator position
        self.prev_prefix = None
        self.o = 0          # overflow cursor

    def lookup(self, p: int) -> set[int]:
        top, k = self.top, self.k
        out: set[int] = set()
        while self.i < len(top):
            gp = prefix_bits(top[self.i][0], k)
            if gp > p:
                break
            if gp != self.prev_prefix:
                self.pos += 1
                self.prev_prefix = gp
            if gp == p:
                out.update(top[self.i][1])
                out.update(self.extras[self.pos])
            self.i += 1
        ov = self.overflow
        while self.o < len(ov) and ov[self.o][0] < p:
            self.o += 1
        if self.o < len(ov) and ov[self.o][0] == p:
            out.update(ov[self.o][1])
            self.o += 1
        return out


def retrieve_taxids(
    intersection: Iterable[int],
    kss: KssSketch,
    k: int | None = None,
    per_query: bool = False,
    stats: RetrievalStats | None = None,
) -> HitTable:
    """Count per-(taxon, k-level) sketch hits for the intersecting k-mers.

    k_max hits come from exact matches in the top table.  For each smaller
    level the prefix's taxon set is rebuilt as top taxa of the prefix group
    plus its extras entry plus any overflow row.  By default each distinct
    prefix counts once; ``per_query`` counts once per query k-mer instead.
    """
    if k is not None and k != kss.k_max:
        raise ConfigError(f"query k={k} does not match KSS k_max={kss.k_max}")
    hits = HitTable()
    top = kss.top_table
    levels = [_LevelCursor(kss, k2) for k2 in kss.smaller_levels]
    last_prefix: dict[int, int] = {}
    last_taxa: dict[int, set[int]] = {}
    t = 0
    k_max = kss.k_max
    for q in _ordered(intersection, "intersection"):
        while t < len(top) and top[t][0] < q:
            t += 1
        if t < len(top) and top[t][0] == q:
            for tax in top[t][1]:
                hits.add(tax, k_max)
            t += 1
        for cur in levels:
            p = prefix_bits(q, cur.k)
            if last_prefix.get(cur.k) == p:
                if per_query:
                    for tax in last_taxa[cur.k]:
                        hits.add(tax, cur.k)
                continue
            taxa = cur.lookup(p)
            last_prefix[cur.k] = p
            last_taxa[cur.k] = taxa
            for tax in taxa:
                hits.add(tax, cur.k)
    if stats is not None:
        stats.top_consumed = t
        for cur in levels:
            stats.group_consumed[cur.k] = cur.i
            stats.extras_consumed[cur.k] = cur.pos + 1
            stats.overflow_consumed[cur.k] = cur.o
    return hits


def containment(hits: HitTable, kss: KssSketch) -> dict[int, float]:
    """Best per-level containment score for every taxon with a hit."""
    scores: dict[int, float] = {}
    for (tax, k), n in hits.hits.items():
        if n <= 0:
            continue
        size = kss.sketch_size(tax, k)
        if size <= 0:
            raise DataError(f"taxon {tax} has hits at k={k} but sketch size 0")
        scores[tax] = max(scores.get(tax, 0.0), n / size)
    return scores


def decide_presence(hits: HitTable, kss: KssSketch, theta: float = DEFAULT_THETA) -> set[int]:
    if not 0.0 <= theta <= 1.0:
        raise RangeError(f"theta must be in [0, 1], got {theta}")
    return {tax for tax, score in containment(hits, kss).items() if score >= theta}


# -- unified index -----------------------------------------------------------

@dataclass
class UnifiedIndex:
    k: int
    taxa_order: list[int]
    offsets: list[int]  # len(taxa_order) + 1 prefix sums; offsets[0] == 0
    entries: list[tuple[int, list[int]]]

    def owner(self, location: int) -> int:
        """Taxon whose rebased range contains ``location``."""
        i = bisect_right(self.offsets, location) - 1
        if not 0 <= i < len(self.taxa_order):
            raise DataError(f"location {location} outside unified index")
        return self.taxa_order[i]

    def as_dict(self) -> dict[int, list[int]]:
        return dict(self.entries)

    def save(self, path: str | Path) -> None:
        try:
            with open(path, "wb") as fh:
                fh.write(UNIFIED_MAGIC)
                fh.write(struct.pack("<HBI", UNIFIED_VERSION, self.k, len(self.taxa_order)))
                fh.write(struct.pack(f"<{len(self.taxa_order)}I", *self.taxa_order))
                fh.write(struct.pack(f"<{len(self.offsets)}Q", *self.offsets))
                fh.write(struct.pack("<Q", len(self.entries)))
                for bits, locs in self.entries:
                    fh.write(bits.to_bytes(KMER_BYTES, "little"))
                    fh.write(struct.pack(f"<I{len(locs)}Q", len(locs), *locs))
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "UnifiedIndex":
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        if data[:4] != UNIFIED_MAGIC:
            raise DataError(f"{path}: not a unified index")
        version, k, n = struct.unpack_from("<HBI", data, 4)
        if version != UNIFIED_VERSION:
            raise DataError(f"unsupported unified index version {version}")
        off = 4 + 7
        taxa = list(struct.unpack_from(f"<{n}I", data, off))
        off += 4 * n
        offsets = list(struct.unpack_from(f"<{n + 1}Q", data, off))
        off += 8 * (n + 1)
        (count,) = struct.unpack_from("<Q", data, off)
        off += 8
        entries = []
        for _ in range(count):
            bits = int.from_bytes(data[off : off + KMER_BYTES], "little")
            off += KMER_BYTES
            (m,) = struct.unpack_from("<I", data, off)
            off += 4
            locs = list(struct.unpack_from(f"<{m}Q", data, off))
            off += 8 * m
            entries.append((bits, locs))
        return cls(k, taxa, offsets, entries)


def merge_indexes(indexes: Sequence[SpeciesIndex]) -> UnifiedIndex:
    """K-way merge of sorted species indexes with location rebasing.

    Locations of the i-th index are shifted by the summed genome lengths of
    the indexes before it; shared k-mers collect all rebased locations.
    """
    if not indexes:
        raise ConfigError("no indexes to merge")
    k = indexes[0].k
    for idx in indexes:
        if idx.k != k:
            raise ConfigError(f"k mismatch: {idx.k} != {k}")
    offsets = [0]
    for idx in indexes:
        offsets.append(offsets[-1] + idx.genome_length)

    def rebased(i: int, idx: SpeciesIndex) -> Iterator[tuple[int, int]]:
        base = offsets[i]
        prev = None
        for entry in idx.entries:
            if prev is not None and entry < prev:
                raise OrderError(f"index of taxon {idx.tax} is not sorted")
            prev = entry
            yield entry[0], entry[1] + base

    entries: list[tuple[int, list[int]]] = []
    for bits, loc in heapq.merge(*(rebased(i, idx) for i, idx in enumerate(indexes))):
        if entries and entries[-1][0] == bits:
            entries[-1][1].append(loc)
        else:
            entries.append((bits, [loc]))
    return UnifiedIndex(k, [idx.tax for idx in indexes], offsets, entries)
