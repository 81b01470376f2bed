"""Naive reference implementations used as test oracles.

Each oracle is written from the definition of the operation and shares no
code with the package: k-mers are handled as strings where possible and
converted to integers through an independent base-4 routine.
"""

from __future__ import annotations

from collections import defaultdict

BASES = "ACGT"


def encode(s: str) -> int:
    """Left-aligned 128-bit value of a base string, via base-4 arithmetic."""
    v = 0
    for ch in s:
        v = v * 4 + BASES.index(ch)
    return v * 4 ** (64 - len(s))


def decode(v: int, k: int) -> str:
    v //= 4 ** (64 - k)
    out = []
    for _ in range(k):
        v, r = divmod(v, 4)
        out.append(BASES[r])
    return "".join(reversed(out))


def kmers_of(seq: str, k: int) -> list[str]:
    """All length-k windows made only of ACGT, in order."""
    return [seq[i : i + k] for i in range(len(seq) - k + 1)
            if all(c in BASES for c in seq[i : i + k])]


def intersect(query: list[int], db: list[int]) -> list[int]:
    return sorted(set(query) & set(db))


def count(kmers: list[int]) -> list[tuple[int, int]]:
    freq: dict[int, int] = {}
    for x in kmers:
        freq[x] = freq.get(x, 0) + 1
    return sorted(freq.items())


def keep(counts: list[tuple[int, int]], lo: int, hi: int | None) -> list[int]:
    return [x for x, c in counts if c >= lo and (hi is None or c <= hi)]


def prefix_of(v: int, k: int) -> int:
    # through the string form, so no bit masking is shared with the package
    return encode(decode(v, 64)[:k])


def flat_table(sketches: dict[int, set[tuple[int, int]]], levels: list[int]) -> dict[tuple[int, int], set[int]]:
    """``(k, k-mer) -> taxa`` with every k_max member contributing its prefixes."""
    flat: dict[tuple[int, int], set[int]] = defaultdict(set)
    for tax, members in sketches.items():
        for k, v in members:
            flat[(k, v)].add(tax)
            if k == levels[0]:
                for k2 in levels[1:]:
                    flat[(k2, prefix_of(v, k2))].add(tax)
    return dict(flat)


def retrieve(intersection: list[int], flat: dict[tuple[int, int], set[int]], levels: list[int]
             ) -> dict[tuple[int, int], int]:
    """Hits per (tax, k): exact k_max matches plus one per distinct prefix."""
    hits: dict[tuple[int, int], int] = defaultdict(int)
    for q in set(intersection):
        for t in flat.get((levels[0], q), ()):
            hits[(t, levels[0])] += 1
    for k in levels[1:]:
        for p in {prefix_of(q, k) for q in intersection}:
            for t in flat.get((k, p), ()):
                hits[(t, k)] += 1
    return dict(hits)


def merge(indexes: list[tuple[int, list[tuple[int, int]]]]) -> list[tuple[int, list[int]]]:
    """``indexes`` is ``[(genome_length, [(kmer, loc), ...]), ...]``."""
    rows = []
    base = 0
    for length, entries in indexes:
        rows.extend((km, loc + base) for km, loc in entries)
        base += length
    rows.sort()
    grouped: dict[int, list[int]] = {}
    for km, loc in rows:
        grouped.setdefault(km, []).append(loc)
    return sorted(grouped.items())


def windows(seq: str, k: int) -> list[tuple[int, int]]:
    """Sorted ``(kmer, offset)`` for every clean window."""
    return sorted((encode(seq[i : i + k]), i) for i in range(len(seq) - k + 1)
                  if all(c in BASES for c in seq[i : i + k]))
