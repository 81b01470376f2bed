"""Synthetic genomes and read sets with known ground truth."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import RangeError
from .seqio import write_fasta, write_fastq

FIRST_TAX_ID = 101


def random_genome(rng: random.Random, length: int) -> str:
    return "".join(rng.choices("ACGT", k=length))


def mixture_counts(fractions: Sequence[float], n_reads: int) -> list[int]:
    """Largest-remainder rounding of ``fractions * n_reads``."""
    raw = [f * n_reads for f in fractions]
    counts = [int(r) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (counts[i] - raw[i], i))
    for i in order[: n_reads - sum(counts)]:
        counts[i] += 1
    return counts


def sample_reads(rng: random.Random, genomes: dict[int, str], counts: dict[int, int],
                 read_len: int, error_rate: float = 0.0) -> list[tuple[str, str, int]]:
    """Forward-strand reads as ``(name, sequence, source tax)`` in shuffled order."""
    reads = []
    for tax, n in counts.items():
        g = genomes[tax]
        if len(g) < read_len:
            raise RangeError(f"genome of taxon {tax} shorter than read length")
        for _ in range(n):
            start = rng.randrange(len(g) - read_len + 1)
            seq = list(g[start : start + read_len])
            if error_rate:
                for j in range(read_len):
                    if rng.random() < error_rate:
                        seq[j] = rng.choice([b for b in "ACGT" if b != seq[j]])
            reads.append(("".join(seq), tax))
    rng.shuffle(reads)
    return [(f"r{i}_tax{tax}", seq, tax) for i, (seq, tax) in enumerate(reads)]


@dataclass
class SyntheticSet:
    genomes: dict[int, Path]
    sample: Path
    truth: dict
    truth_path: Path


def generate(out_dir: str | Path, mixture: Sequence[float] = (0.5, 0.3, 0.2), decoys: int = 2,
             genome_len: int = 20_000, n_reads: int = 3000, read_len: int = 150, seed: int = 7,
             error_rate: float = 0.0, sample_name: str = "sample.fastq") -> SyntheticSet:
    """Write random genomes and one FASTQ sample drawn from the first
    ``len(mixture)`` of them; ``decoys`` more genomes are never sampled."""
    if abs(sum(mixture) - 1.0) > 1e-9:
        raise RangeError(f"mixture fractions must sum to 1, got {sum(mixture)}")
    out = Path(out_dir)
    (out / "genomes").mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    n_taxa = len(mixture) + decoys
    taxa = list(range(FIRST_TAX_ID, FIRST_TAX_ID + n_taxa))
    genomes = {t: random_genome(rng, genome_len) for t in taxa}
    paths = {}
    for t, g in genomes.items():
        paths[t] = out / "genomes" / f"tax{t}.fa"
        write_fasta(paths[t], f"tax{t}", g)
    present = taxa[: len(mixture)]
    counts = dict(zip(present, mixture_counts(mixture, n_reads)))
    reads = sample_reads(rng, genomes, counts, read_len, error_rate)
    sample = out / sample_name
    write_fastq(sample, [(name, seq) for name, seq, _ in reads])
    truth = {
        "seed": seed,
        "taxa": taxa,
        "present": present,
        "fractions": {str(t): f for t, f in zip(present, mixture)},
        "read_counts": {str(t): c for t, c in counts.items()},
        "genome_len": genome_len,
        "read_len": read_len,
        "n_reads": n_reads,
    }
    truth_path = out / "truth.json"
    truth_path.write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return SyntheticSet(paths, sample, truth, truth_path)
