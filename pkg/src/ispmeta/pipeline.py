"""End-to-end orchestration: query prep, in-storage classification, optional
unified index plus abundance, multi-sample batching, and simulated timing."""

from __future__ import annotations

import logging
import os
import warnings
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import prep
from .dbbuild import KmerDatabase, KssSketch, SpeciesIndex
from .errors import ConfigError, DataError, IoError
from .formats import peek_k
from .isp import (DEFAULT_THETA, HitTable, UnifiedIndex, decide_presence, merge_indexes,
                  retrieve_taxids, stream_intersect)
from .kmer import KMER_BYTES, iter_kmer_bits
from .seqio import read_fastq
from .ssd import (PowerModel, SsdConfig, StagePlan, Timeline, energy, load_profile, simulate,
                  simulate_sequential)
from .ssd.sim import MODES, BucketLoad, normalize_mode

log = logging.getLogger(__name__)

DEFAULT_K = 60
DEFAULT_K_LEVELS = (60, 50, 40)
DEFAULT_DRAM_BUDGET = 64 << 30


@dataclass
class RunPlan:
    samples: list[Path]
    db_path: Path
    kss_path: Path
    index_paths: dict[int, Path] = field(default_factory=dict)
    k: int = DEFAULT_K
    k_levels: tuple[int, ...] = DEFAULT_K_LEVELS
    buckets: int = prep.DEFAULT_BUCKETS
    policy: prep.FilterPolicy = field(default_factory=prep.FilterPolicy)
    theta: float = DEFAULT_THETA
    mode: str = "ms"
    ssd: str | Path = "ssd-c"
    samples_buffered: int = 1
    dram_budget: int = DEFAULT_DRAM_BUDGET
    sort_accelerator: bool = False
    spill_dir: Path | None = None

    def __post_init__(self):
        self.samples = [Path(s) for s in self.samples]
        self.db_path = Path(self.db_path)
        self.kss_path = Path(self.kss_path)
        self.index_paths = {int(t): Path(p) for t, p in self.index_paths.items()}
        self.k_levels = tuple(self.k_levels)
        self.mode = normalize_mode(self.mode)
        if self.samples_buffered < 1:
            raise ConfigError("samples_buffered must be >= 1")

    def validate(self) -> None:
        for p in [*self.samples, self.db_path, self.kss_path, *self.index_paths.values()]:
            if not p.exists():
                raise IoError(f"missing input file: {p}")
        db_k = peek_k(self.db_path)
        if db_k != self.k:
            raise ConfigError(f"database k={db_k} but run uses k={self.k}")
        if self.k_levels[0] != self.k:
            raise ConfigError(f"k_levels must start with k={self.k}")

    def device(self) -> tuple[SsdConfig, PowerModel]:
        return load_profile(self.ssd)


@dataclass
class PreparedSample:
    path: Path
    bucket_plan: prep.BucketPlan
    queries: list[list[int]]      # filtered sorted k-mers per bucket
    sort_bytes: list[int]
    spill_bytes: list[int]
    n_reads: int
    n_kmers: int

    @property
    def query_stream(self) -> list[int]:
        return [q for bucket in self.queries for q in bucket]


def prepare_sample(path: Path, k: int, n_buckets: int, policy: prep.FilterPolicy,
                   dram_budget: int, bucket_plan: prep.BucketPlan | None = None,
                   spill_dir: Path | None = None) -> PreparedSample:
    if bucket_plan is None:
        bucket_plan = prep.plan_from_reads(read_fastq(path), k, n_buckets)
    n_reads = 0

    def counted():
        nonlocal n_reads
        for rec in read_fastq(path):
            n_reads += 1
            yield rec

    buckets = prep.extract(counted(), k, bucket_plan, dram_budget, spill_dir=spill_dir)
    queries, sort_bytes, spill_bytes = [], [], []
    for b in buckets:
        queries.append(prep.filter_kmers(prep.sort_and_count(b), policy))
        sort_bytes.append(b.nbytes)
        spill_bytes.append(b.nbytes if b.location == prep.SSD else 0)
        b.discard()
    return PreparedSample(
        path=path,
        bucket_plan=bucket_plan,
        queries=queries,
        sort_bytes=sort_bytes,
        spill_bytes=spill_bytes,
        n_reads=n_reads,
        n_kmers=sum(len(b) for b in buckets),
    )


@dataclass
class ClassifyResult:
    sample: Path
    presence: set[int]
    hits: HitTable
    intersection: list[int]
    stage_plan: StagePlan
    n_reads: int
    n_query_kmers: int
    timeline: Timeline | None = None


def _classify_prepared(ps: PreparedSample, db: KmerDatabase, kss: KssSketch, theta: float,
                       kss_bytes: int) -> ClassifyResult:
    loads = []
    intersection: list[int] = []
    for i, query in enumerate(ps.queries):
        lo, hi = ps.bucket_plan.range_of(i)
        a, b = bisect_left(db.entries, lo), bisect_left(db.entries, hi)
        inter = list(stream_intersect(query, db.entries[a:b]))
        intersection.extend(inter)
        loads.append(BucketLoad(
            sort_bytes=ps.sort_bytes[i],
            query_bytes=len(query) * KMER_BYTES,
            db_bytes=(b - a) * KMER_BYTES,
            intersection_bytes=len(inter) * KMER_BYTES,
            spill_bytes=ps.spill_bytes[i],
        ))
    hits = retrieve_taxids(intersection, kss, db.k)
    presence = decide_presence(hits, kss, theta)
    stage_plan = StagePlan(loads, kss_bytes=kss_bytes, db_total_bytes=db.nbytes)
    return ClassifyResult(ps.path, presence, hits, intersection, stage_plan, ps.n_reads,
                          sum(len(q) for q in ps.queries))


def _load_databases(plan: RunPlan) -> tuple[KmerDatabase, KssSketch, int]:
    plan.validate()
    db = KmerDatabase.load(plan.db_path)
    kss = KssSketch.load(plan.kss_path)
    if tuple(kss.k_levels) != plan.k_levels:
        raise ConfigError(f"KSS levels {kss.k_levels} differ from run k_levels {list(plan.k_levels)}")
    return db, kss, os.path.getsize(plan.kss_path)


def run_classify(plan: RunPlan, sample: Path | None = None) -> ClassifyResult:
    """Presence/absence for one sample plus its simulated timeline."""
    db, kss, kss_bytes = _load_databases(plan)
    sample = Path(sample) if sample is not None else plan.samples[0]
    ps = prepare_sample(sample, plan.k, plan.buckets, plan.policy, plan.dram_budget,
                        spill_dir=plan.spill_dir)
    result = _classify_prepared(ps, db, kss, plan.theta, kss_bytes)
    cfg, power = plan.device()
    result.timeline = simulate(result.stage_plan, cfg, plan.mode, plan.sort_accelerator)
    energy(result.timeline, power)
    return result


@dataclass
class AbundanceReport:
    reads: dict[int, int]
    unclassified: int

    @property
    def total_reads(self) -> int:
        return sum(self.reads.values()) + self.unclassified

    @property
    def classified(self) -> int:
        return sum(self.reads.values())

    @property
    def fractions(self) -> dict[int, float]:
        n = self.classified
        if n == 0:
            return {t: 0.0 for t in self.reads}
        return {t: c / n for t, c in sorted(self.reads.items())}


def load_indexes(plan: RunPlan, taxa: Sequence[int]) -> list[SpeciesIndex]:
    out = []
    for tax in taxa:
        path = plan.index_paths.get(tax)
        if path is None:
            raise DataError(f"no species index for present taxon {tax}")
        out.append(SpeciesIndex.load(path))
    return out


def classify_reads(sample: Path, unified: UnifiedIndex) -> AbundanceReport:
    """Assign each read to the taxon owning most of its k-mer location hits.

    Ties go to the lowest tax ID; reads without hits are unclassified.
    """
    lookup = unified.as_dict()
    reads = {t: 0 for t in unified.taxa_order}
    unclassified = 0
    for _, seq in read_fastq(sample):
        votes: dict[int, int] = {}
        for bits in iter_kmer_bits(seq, unified.k):
            locs = lookup.get(bits)
            if locs is None:
                continue
            for loc in locs:
                t = unified.owner(loc)
                votes[t] = votes.get(t, 0) + 1
        if not votes:
            unclassified += 1
            continue
        best = min(votes.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        reads[best] += 1
    return AbundanceReport(reads, unclassified)


def run_abundance(plan: RunPlan, presence: set[int], sample: Path | None = None
                  ) -> tuple[AbundanceReport, UnifiedIndex]:
    if not presence:
        raise DataError("abundance estimation needs at least one present taxon")
    sample = Path(sample) if sample is not None else plan.samples[0]
    indexes = load_indexes(plan, sorted(presence))
    unified = merge_indexes(indexes)
    return classify_reads(sample, unified), unified


def unified_nbytes(unified: UnifiedIndex) -> int:
    return sum(KMER_BYTES + 4 + 8 * len(locs) for _, locs in unified.entries)


@dataclass
class RunOutputs:
    plan: RunPlan
    classify: ClassifyResult
    abundance: AbundanceReport | None = None
    timeline: Timeline | None = None
    stage_plan: StagePlan | None = None


def run_pipeline(plan: RunPlan, abundance: bool = False) -> RunOutputs:
    """Classify the first sample, optionally estimate abundance, and time it all."""
    result = run_classify(plan)
    timeline = result.timeline
    stage_plan = result.stage_plan
    report = None
    if abundance:
        if result.presence:
            report, unified = run_abundance(plan, result.presence)
            stage_plan = StagePlan(
                result.stage_plan.buckets,
                kss_bytes=result.stage_plan.kss_bytes,
                index_bytes=sum(os.path.getsize(plan.index_paths[t]) for t in result.presence),
                unified_bytes=unified_nbytes(unified),
                db_total_bytes=result.stage_plan.db_total_bytes,
            )
            cfg, power = plan.device()
            timeline = simulate(stage_plan, cfg, plan.mode, plan.sort_accelerator)
            energy(timeline, power)
        else:
            report = AbundanceReport({}, result.n_reads)
    return RunOutputs(plan, result, report, timeline, stage_plan)


def simulate_modes(stage_plan: StagePlan, plan: RunPlan) -> dict[str, Timeline]:
    """The same work timed under every mode; functional results do not change."""
    cfg, power = plan.device()
    out = {}
    for mode in MODES:
        tl = simulate(stage_plan, cfg, mode, plan.sort_accelerator)
        energy(tl, power)
        out[mode] = tl
    return out


@dataclass
class MultiResult:
    results: list[ClassifyResult]
    groups: list[list[int]]
    timeline: Timeline
    sequential: Timeline

    @property
    def speedup(self) -> float:
        return self.sequential.total / self.timeline.total if self.timeline.total else 1.0


def group_samples(sizes: Sequence[int], m: int, budget: int) -> list[list[int]]:
    """Greedy grouping in arrival order: at most ``m`` samples whose buffered
    k-mer bytes fit ``budget``; an oversize sample goes alone."""
    groups: list[list[int]] = []
    cur: list[int] = []
    used = 0
    for i, size in enumerate(sizes):
        if cur and (len(cur) == m or used + size > budget):
            groups.append(cur)
            cur, used = [], 0
        cur.append(i)
        used += size
    if cur:
        groups.append(cur)
    return groups


def run_multi(plan: RunPlan, samples_buffered: int | None = None) -> MultiResult:
    """Classify all samples, buffering up to M of them per database pass."""
    m = samples_buffered or plan.samples_buffered
    if m < 1:
        raise ConfigError("samples_buffered must be >= 1")
    db, kss, kss_bytes = _load_databases(plan)
    first = plan.samples[0]
    bucket_plan = prep.plan_from_reads(read_fastq(first), plan.k, plan.buckets)
    prepared = [prepare_sample(s, plan.k, plan.buckets, plan.policy, plan.dram_budget,
                               bucket_plan=bucket_plan, spill_dir=plan.spill_dir)
                for s in plan.samples]
    results = [_classify_prepared(ps, db, kss, plan.theta, kss_bytes) for ps in prepared]
    sizes = [ps.n_kmers * KMER_BYTES for ps in prepared]
    groups = group_samples(sizes, m, plan.dram_budget)
    if len(groups) > -(-len(plan.samples) // m):
        warnings.warn(
            f"host DRAM budget {plan.dram_budget} cannot buffer {m} samples; "
            f"processing in groups {groups}",
            RuntimeWarning,
            stacklevel=2,
        )
    cfg, power = plan.device()
    combined = [StagePlan.combine([results[i].stage_plan for i in g]) for g in groups]
    timeline = simulate_sequential(combined, cfg, plan.mode, plan.sort_accelerator)
    sequential = simulate_sequential([r.stage_plan for r in results], cfg, plan.mode,
                                     plan.sort_accelerator)
    energy(timeline, power)
    energy(sequential, power)
    return MultiResult(results, groups, timeline, sequential)
