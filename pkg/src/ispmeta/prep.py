"""Host-side query preparation: bucketing, spilling, sorting, counting, filtering."""

from __future__ import annotations

import itertools
import math
import os
import tempfile
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Literal

from . import formats
from .errors import PlanError, RangeError
from .kmer import KMER_BITS, KMER_BYTES, iter_kmer_bits
from .seqio import read_fastq

DRAM: Literal["DRAM"] = "DRAM"
SSD: Literal["SSD"] = "SSD"

DEFAULT_BUCKETS = 512
PLAN_SAMPLE_SIZE = 100_000
DEFAULT_SPILL_BUFFER = 8 << 20
KEY_SPACE_END = 1 << KMER_BITS


@dataclass(frozen=True)
class FilterPolicy:
    min_count: int = 2
    max_count: int | None = None  # None = unlimited

    def __post_init__(self):
        if self.min_count < 1:
            raise RangeError("min_count must be >= 1")
        if self.max_count is not None and self.max_count < self.min_count:
            raise RangeError("max_count must be >= min_count")

    def keeps(self, count: int) -> bool:
        return count >= self.min_count and (self.max_count is None or count <= self.max_count)


@dataclass
class BucketPlan:
    """Lexicographic partition of the 128-bit key space.

    Bucket ``i`` covers ``[boundaries[i], boundaries[i+1])``; the last one
    runs to the end of the key space.
    """

    boundaries: list[int]
    target_count: int = DEFAULT_BUCKETS
    pinned: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.boundaries or self.boundaries[0] != 0:
            raise PlanError("first boundary must be the minimum k-mer")
        if any(a >= b for a, b in zip(self.boundaries, self.boundaries[1:])):
            raise PlanError("boundaries must be strictly increasing")
        if len(self.boundaries) > self.target_count:
            raise PlanError("more buckets than target_count")
        if not self.pinned:
            self.pinned = [DRAM] * len(self.boundaries)

    def __len__(self) -> int:
        return len(self.boundaries)

    def bucket_of(self, bits: int) -> int:
        return bisect_right(self.boundaries, bits) - 1

    def range_of(self, i: int) -> tuple[int, int]:
        hi = self.boundaries[i + 1] if i + 1 < len(self.boundaries) else KEY_SPACE_END
        return self.boundaries[i], hi


class Bucket:
    """One lexicographic range of query k-mers.

    DRAM-pinned buckets keep k-mers in a list.  SSD-pinned buckets stage
    k-mers in a host buffer and append it to a spill file whenever it fills,
    so each write moves a full ``spill_buffer_bytes`` except the last.
    """

    def __init__(self, lo: int, hi: int, k: int, spill_buffer_bytes: int = DEFAULT_SPILL_BUFFER):
        self.lo, self.hi, self.k = lo, hi, k
        self.location = DRAM
        self.spill_buffer_bytes = spill_buffer_bytes
        self.spill_path: Path | None = None
        self.spill_writes = 0
        self._kmers: list[int] = []
        self._buffer: list[int] = []
        self._spilled = 0
        self._fh = None

    @property
    def range(self) -> tuple[int, int]:
        return self.lo, self.hi

    def __len__(self) -> int:
        return len(self._kmers) + len(self._buffer) + self._spilled

    @property
    def nbytes(self) -> int:
        return len(self) * KMER_BYTES

    @property
    def resident_bytes(self) -> int:
        return len(self._kmers) * KMER_BYTES

    def append(self, bits: int) -> None:
        if self.location == DRAM:
            self._kmers.append(bits)
            return
        self._buffer.append(bits)
        if len(self._buffer) * KMER_BYTES >= self.spill_buffer_bytes:
            self._flush()

    def pin_to_ssd(self, spill_dir: Path) -> None:
        if self.location == SSD:
            return
        self.location = SSD
        fd, name = tempfile.mkstemp(prefix="bucket-", suffix=".msbk", dir=spill_dir)
        os.close(fd)
        self.spill_path = Path(name)
        self._fh = open(self.spill_path, "wb")
        formats.write_header(self._fh, formats.MAGIC_BUCKET, self.k, 0, False)
        resident, self._kmers = self._kmers, []
        for b in resident:
            self.append(b)

    def _flush(self) -> None:
        if not self._buffer:
            return
        self._fh.write(formats.encode_kmers(self._buffer))
        self.spill_writes += 1
        self._spilled += len(self._buffer)
        self._buffer = []

    def finish(self) -> None:
        """Flush the remaining buffer and finalize the spill header."""
        if self.location != SSD or self._fh is None:
            return
        self._flush()
        self._fh.seek(0)
        formats.write_header(self._fh, formats.MAGIC_BUCKET, self.k, self._spilled, False)
        self._fh.close()
        self._fh = None

    @property
    def kmers(self) -> list[int]:
        if self.location == DRAM:
            return self._kmers
        self.finish()
        _, kmers, _ = formats.read_kmer_file(self.spill_path, formats.MAGIC_BUCKET)
        return kmers

    def discard(self) -> None:
        if self.spill_path is not None and self.spill_path.exists():
            self.spill_path.unlink()


def plan_buckets(sample_kmers: Iterable[int], target_count: int = DEFAULT_BUCKETS) -> BucketPlan:
    """Choose quantile boundaries so buckets receive balanced load.

    Preliminary buckets are cut at 4x ``target_count`` sample quantiles, then
    adjacent ones are merged greedily until each holds about
    ``len(sample) / target_count`` sample k-mers.
    """
    if target_count < 1:
        raise RangeError("target_count must be >= 1")
    sample = sorted(sample_kmers)
    n = len(sample)
    if n == 0:
        raise PlanError("cannot plan buckets from an empty sample")

    n_prelim = 4 * target_count
    cuts = sorted({sample[(i * n) // n_prelim] for i in range(1, n_prelim)} - {0})
    prelim = [0] + cuts
    # sample load of each preliminary bucket
    loads = []
    for i, lo in enumerate(prelim):
        hi = prelim[i + 1] if i + 1 < len(prelim) else KEY_SPACE_END
        loads.append(bisect_right(sample, hi - 1) - bisect_right(sample, lo - 1))

    quota = n / target_count
    boundaries = [0]
    acc = 0
    for i, load in enumerate(loads):
        acc += load
        if acc >= quota and i + 1 < len(prelim):
            boundaries.append(prelim[i + 1])
            acc = 0
    # a light trailing remainder joins its neighbour
    if len(boundaries) > 1 and (acc < quota / 2 or len(boundaries) > target_count):
        boundaries.pop()
    return BucketPlan(boundaries=boundaries, target_count=target_count)


def iter_read_kmers(reads: Iterable[tuple[str, str]], k: int) -> Iterator[int]:
    for _, seq in reads:
        yield from iter_kmer_bits(seq, k)


def plan_from_reads(reads: Iterable[tuple[str, str]], k: int, target_count: int,
                    sample_size: int = PLAN_SAMPLE_SIZE) -> BucketPlan:
    sample = list(itertools.islice(iter_read_kmers(reads, k), sample_size))
    if not sample:
        # no k-mers at all: a single bucket covers the key space
        return BucketPlan(boundaries=[0], target_count=target_count)
    return plan_buckets(sample, target_count)


def extract(
    reads: Iterable[tuple[str, str]] | str | Path,
    k: int,
    plan: BucketPlan,
    host_dram_budget: int,
    spill_dir: str | Path | None = None,
    spill_buffer_bytes: int = DEFAULT_SPILL_BUFFER,
) -> list[Bucket]:
    """Distribute every k-mer of ``reads`` into the plan's buckets.

    When DRAM-resident k-mers exceed ``host_dram_budget``, the highest-range
    DRAM bucket is pinned to SSD (they are consumed last downstream) and
    its contents move to the spill file.
    """
    if host_dram_budget <= 0:
        raise RangeError("host_dram_budget must be positive")
    if isinstance(reads, (str, Path)):
        reads = read_fastq(reads)
    spill_dir = Path(spill_dir) if spill_dir is not None else Path(tempfile.gettempdir())
    buckets = [Bucket(*plan.range_of(i), k, spill_buffer_bytes) for i in range(len(plan))]
    bounds = plan.boundaries
    resident = 0
    next_victim = len(buckets) - 1
    for bits in iter_read_kmers(reads, k):
        b = buckets[bisect_right(bounds, bits) - 1]
        b.append(bits)
        if b.location == DRAM:
            resident += KMER_BYTES
            while resident > host_dram_budget and next_victim >= 0:
                victim = buckets[next_victim]
                resident -= victim.resident_bytes
                victim.pin_to_ssd(spill_dir)
                next_victim -= 1
    for b in buckets:
        b.finish()
    plan.pinned = [b.location for b in buckets]
    return buckets


def sort_and_count(bucket: Bucket | Iterable[int]) -> list[tuple[int, int]]:
    kmers = bucket.kmers if isinstance(bucket, Bucket) else bucket
    return sorted(Counter(kmers).items())


def filter_kmers(sorted_counts: Iterable[tuple[int, int]], policy: FilterPolicy) -> list[int]:
    return [km for km, c in sorted_counts if policy.keeps(c)]


def spill_write_bound(bucket: Bucket) -> int:
    return math.ceil(bucket.nbytes / bucket.spill_buffer_bytes)
