"""Random sketch inputs shared by KSS unit and acceptance tests."""

from __future__ import annotations

import random

import oracles


def random_sketches(rng: random.Random, levels: list[int], n_taxa: int = 5,
                    per_taxon: int = 12, alphabet: str = "ACGT") -> dict[int, set[tuple[int, int]]]:
    """Sketch members drawn from a small alphabet so prefixes collide often;
    some members sit at smaller levels only (overflow candidates)."""
    k_max = levels[0]
    out: dict[int, set[tuple[int, int]]] = {}
    for tax in range(1, n_taxa + 1):
        members = set()
        for _ in range(rng.randint(0, per_taxon)):
            k = k_max if rng.random() < 0.8 else rng.choice(levels[1:] or [k_max])
            members.add((k, oracles.encode("".join(rng.choices(alphabet, k=k)))))
        out[tax] = members
    return out


def random_levels(rng: random.Random) -> list[int]:
    k_max = rng.randint(6, 60)
    a = rng.randint(2, k_max - 2)
    b = rng.randint(1, a - 1)
    return [k_max, a, b]
