"""Discrete-event timing model of the host/SSD pipeline.

Work is expressed as byte volumes per bucket (a :class:`StagePlan`).  The
scheduler places one event per (stage, resource, bucket) with start time
``max(dependencies done, resource free)``; flash reads are rate-bound, so
collapsing the page transfers of a bucket into one event per channel
gives the same times as page-by-page simulation.

Modes
-----
``ms``      in-storage processing, host sort / transfer / ISP pipelined over buckets
``ms-nol``  same work, every event serialized (no overlap)
``ext-ms``  same accelerators outside the SSD; database streamed over the
            external link into host DRAM
``ms-cc``   in-storage processing on the controller cores instead of comparators
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..errors import ConfigError
from ..kmer import KMER_BYTES
from .config import SsdConfig
from .ftl import ftl_layout, metadata_budget

MODES = ("ms", "ms-nol", "ext-ms", "ms-cc")

STAGES = ("setup", "spill", "sort", "transfer", "intersect", "taxid", "merge")
# coarse breakdown matching the usual time-breakdown figure
STAGE_GROUPS = {
    "setup": "setup",
    "spill": "input processing",
    "sort": "input processing",
    "transfer": "input processing",
    "intersect": "intersection finding",
    "taxid": "tax-ID retrieval",
    "merge": "index merging",
}

# per-block FTL metadata touched while streaming: L2P entry read, counter read+write
_MD_BYTES_PER_BLOCK = 12


def normalize_mode(mode: str) -> str:
    m = mode.lower().replace("_", "-")
    if m not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    return m


@dataclass(frozen=True)
class BucketLoad:
    sort_bytes: int            # extracted k-mers sorted on the host
    query_bytes: int           # filtered k-mers sent to the SSD
    db_bytes: int              # database bytes inside the bucket's range
    intersection_bytes: int = 0
    spill_bytes: int = 0       # SSD-pinned bytes written at extraction, read back before sort


@dataclass
class StagePlan:
    buckets: list[BucketLoad]
    kss_bytes: int = 0
    index_bytes: int = 0       # species indexes streamed for the unified index
    unified_bytes: int = 0     # unified index shipped to the host
    db_total_bytes: int | None = None
    samples: int = 1

    def __post_init__(self):
        if self.db_total_bytes is None:
            self.db_total_bytes = sum(b.db_bytes for b in self.buckets)

    @property
    def query_bytes(self) -> int:
        return sum(b.query_bytes for b in self.buckets)

    @property
    def intersection_bytes(self) -> int:
        return sum(b.intersection_bytes for b in self.buckets)

    @classmethod
    def uniform(cls, db_bytes: int, query_bytes: int, sort_bytes: int, n_buckets: int,
                intersection_bytes: int = 0, kss_bytes: int = 0, spill_bytes: int = 0) -> "StagePlan":
        """Spread every volume evenly over ``n_buckets`` buckets."""
        def split(total: int) -> list[int]:
            base, rem = divmod(total, n_buckets)
            return [base + (1 if i < rem else 0) for i in range(n_buckets)]

        cols = zip(split(sort_bytes), split(query_bytes), split(db_bytes),
                   split(intersection_bytes), split(spill_bytes))
        return cls([BucketLoad(*c) for c in cols], kss_bytes=kss_bytes, db_total_bytes=db_bytes)

    @classmethod
    def combine(cls, plans: Sequence["StagePlan"]) -> "StagePlan":
        """Buffer several samples against one database pass.

        Plans must share the bucket partition (same per-bucket database
        volumes); host-side and query volumes add up, the database and KSS
        are charged once.
        """
        if not plans:
            raise ConfigError("no plans to combine")
        first = plans[0]
        for p in plans[1:]:
            if [b.db_bytes for b in p.buckets] != [b.db_bytes for b in first.buckets]:
                raise ConfigError("multi-sample plans must share the bucket partition")
        buckets = []
        for loads in zip(*(p.buckets for p in plans)):
            buckets.append(BucketLoad(
                sort_bytes=sum(b.sort_bytes for b in loads),
                query_bytes=sum(b.query_bytes for b in loads),
                db_bytes=loads[0].db_bytes,
                intersection_bytes=sum(b.intersection_bytes for b in loads),
                spill_bytes=sum(b.spill_bytes for b in loads),
            ))
        return cls(
            buckets,
            kss_bytes=first.kss_bytes,
            index_bytes=sum(p.index_bytes for p in plans),
            unified_bytes=sum(p.unified_bytes for p in plans),
            db_total_bytes=first.db_total_bytes,
            samples=sum(p.samples for p in plans),
        )

    def to_dict(self) -> dict:
        return {
            "buckets": [vars(b) for b in self.buckets],
            "kss_bytes": self.kss_bytes,
            "index_bytes": self.index_bytes,
            "unified_bytes": self.unified_bytes,
            "db_total_bytes": self.db_total_bytes,
            "samples": self.samples,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StagePlan":
        return cls(
            [BucketLoad(**b) for b in data["buckets"]],
            kss_bytes=data.get("kss_bytes", 0),
            index_bytes=data.get("index_bytes", 0),
            unified_bytes=data.get("unified_bytes", 0),
            db_total_bytes=data.get("db_total_bytes"),
            samples=data.get("samples", 1),
        )


@dataclass(frozen=True)
class Event:
    stage: str
    resource: str
    start: float
    end: float
    bytes: int = 0
    bucket: int = -1

    @property
    def duration(self) -> float:
        return self.end - self.start


def _union_length(intervals: Iterable[tuple[float, float]]) -> float:
    total = 0.0
    cur_s = cur_e = None
    for s, e in sorted(intervals):
        if cur_e is None or s > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = s, e
        else:
            cur_e = max(cur_e, e)
    if cur_e is not None:
        total += cur_e - cur_s
    return total


@dataclass
class Timeline:
    events: list[Event]
    mode: str
    resources: list[str]
    counters: dict[str, int] = field(default_factory=dict)
    energy_joules: float | None = None

    def __post_init__(self):
        self.events.sort(key=lambda e: (e.start, e.end, e.stage, e.resource, e.bucket))

    @property
    def total(self) -> float:
        return max((e.end for e in self.events), default=0.0)

    @property
    def stage_totals(self) -> dict[str, float]:
        """Wall time during which each stage had at least one event running."""
        out = {}
        for stage in STAGES:
            iv = [(e.start, e.end) for e in self.events if e.stage == stage]
            if iv:
                out[stage] = _union_length(iv)
        return out

    @property
    def breakdown(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for stage, t in self.stage_totals.items():
            g = STAGE_GROUPS[stage]
            out[g] = out.get(g, 0.0) + t
        return out

    def busy_time(self, resource: str) -> float:
        return _union_length((e.start, e.end) for e in self.events if e.resource == resource)

    def stage_bytes(self, stage: str, resource_prefix: str = "") -> int:
        return sum(e.bytes for e in self.events
                   if e.stage == stage and e.resource.startswith(resource_prefix))

    @property
    def db_read_bytes(self) -> int:
        return self.counters.get("db_read_bytes", 0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "resource", "start", "end", "bytes"])
        for e in self.events:
            w.writerow([e.stage, e.resource, repr(e.start), repr(e.end), e.bytes])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "total_seconds": self.total,
            "stage_seconds": self.stage_totals,
            "breakdown_seconds": self.breakdown,
            "energy_joules": self.energy_joules,
            "counters": dict(sorted(self.counters.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "resources": list(self.resources),
            "counters": dict(sorted(self.counters.items())),
            "energy_joules": self.energy_joules,
            "events": [[e.stage, e.resource, e.start, e.end, e.bytes, e.bucket] for e in self.events],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Timeline":
        events = [Event(s, r, float(a), float(b), int(n), int(i)) for s, r, a, b, n, i in data["events"]]
        return cls(events, data["mode"], list(data["resources"]), dict(data.get("counters", {})),
                   data.get("energy_joules"))


class _Scheduler:
    def __init__(self, serialize: bool):
        self.free: dict[str, float] = {}
        self.serialize = serialize
        self.barrier = 0.0
        self.events: list[Event] = []

    def run(self, stage: str, resources: Sequence[str], duration: float, after: float = 0.0,
            nbytes: Sequence[int] | int = 0, bucket: int = -1) -> float:
        """Place one event on every resource in ``resources`` (all start together)."""
        start = max([after] + [self.free.get(r, 0.0) for r in resources])
        if self.serialize:
            start = max(start, self.barrier)
        end = start + duration
        if isinstance(nbytes, int):
            nbytes = [nbytes] * len(resources)
        for r, b in zip(resources, nbytes):
            self.free[r] = end
            self.events.append(Event(stage, r, start, end, b, bucket))
        self.barrier = max(self.barrier, end)
        return end


def dram_buffer_demand(config: SsdConfig, metadata_bytes: int) -> int:
    """Internal DRAM needed for two query batches plus FTL metadata."""
    return 2 * config.batch_bytes + metadata_bytes


def simulate(plan: StagePlan, config: SsdConfig, mode: str = "ms", sort_accelerator: bool = False) -> Timeline:
    mode = normalize_mode(mode)
    in_storage = mode != "ext-ms"
    C = config.channels
    channels = [f"ch{c}" for c in range(C)]
    engine = "cores" if mode == "ms-cc" else "accel"
    sched = _Scheduler(serialize=(mode == "ms-nol"))
    counters = {"db_read_bytes": 0, "kss_read_bytes": 0, "query_transfer_bytes": 0,
                "dram_traffic_bytes": 0, "host_dram_traffic_bytes": 0, "taxid_passes": 0}

    mapping = ftl_layout(plan.db_total_bytes, config)
    md_bytes = metadata_budget(mapping, config)
    free_dram = config.internal_dram_bytes
    if in_storage:
        demand = dram_buffer_demand(config, md_bytes)
        if demand > config.internal_dram_bytes:
            raise ConfigError(
                f"internal DRAM too small: need {demand} bytes for batches and metadata, "
                f"have {config.internal_dram_bytes}"
            )
        free_dram = config.internal_dram_bytes - demand
        setup_end = sched.run("setup", ["dram"], md_bytes / config.internal_dram_bw, nbytes=md_bytes)
    else:
        setup_end = 0.0

    sort_rate = config.sort_accel_rate if sort_accelerator else config.host_sort_rate

    # extraction spills SSD-pinned buckets with sequential writes
    extract_end = setup_end
    for i, b in enumerate(plan.buckets):
        if b.spill_bytes:
            extract_end = sched.run("spill", ["link"], b.spill_bytes / config.external_bw,
                                    after=extract_end, nbytes=b.spill_bytes, bucket=i)

    isp_done = extract_end
    for i, b in enumerate(plan.buckets):
        ready = extract_end
        if b.spill_bytes:  # read the pinned bucket back before sorting
            ready = sched.run("spill", ["link"], b.spill_bytes / config.external_bw,
                              after=ready, nbytes=b.spill_bytes, bucket=i)
        if b.sort_bytes:
            ready = sched.run("sort", ["host"], b.sort_bytes / sort_rate, after=ready,
                              nbytes=b.sort_bytes, bucket=i)
        if b.query_bytes == 0:
            continue  # nothing to look up: this database range is skipped
        kmers = (b.db_bytes + b.query_bytes) / KMER_BYTES
        if in_storage:
            ready = sched.run("transfer", ["link"], b.query_bytes / config.external_bw,
                              after=ready, nbytes=b.query_bytes, bucket=i)
            counters["query_transfer_bytes"] += b.query_bytes
            flash_t = b.db_bytes / C / config.per_channel_bw
            if mode == "ms-cc":
                comp_t = kmers / config.controller_core_rate
            else:
                comp_t = kmers / C / config.comparator_rate
            duration = max(flash_t, comp_t)
            traffic = (2 * b.query_bytes + b.intersection_bytes
                       + _MD_BYTES_PER_BLOCK * math.ceil(b.db_bytes / config.block_bytes))
            if duration > 0 and traffic / duration > config.internal_dram_bw:
                duration = traffic / config.internal_dram_bw  # throttled by DRAM bandwidth
            per_ch = b.db_bytes // C
            nbytes = [per_ch + (1 if c < b.db_bytes % C else 0) for c in range(C)]
            isp_done = sched.run("intersect", channels + [engine, "dram"], duration, after=ready,
                                 nbytes=nbytes + [0, traffic], bucket=i)
            counters["dram_traffic_bytes"] += traffic
        else:
            link_t = b.db_bytes / config.external_bw
            comp_t = kmers / (C * config.comparator_rate)
            duration = max(link_t, comp_t)
            traffic = 2 * b.db_bytes + b.query_bytes + b.intersection_bytes
            if duration > 0 and traffic / duration > config.host_dram_bw:
                duration = traffic / config.host_dram_bw
            isp_done = sched.run("intersect", ["link", engine, "host-dram"], duration, after=ready,
                                 nbytes=[b.db_bytes, 0, traffic], bucket=i)
            counters["host_dram_traffic_bytes"] += traffic
        counters["db_read_bytes"] += b.db_bytes

    inter = plan.intersection_bytes
    if inter > 0 and plan.kss_bytes > 0:
        if in_storage:
            # intersections that overflow free DRAM are retrieved in phases
            passes = max(1, math.ceil(inter / free_dram)) if free_dram > 0 else 1
            kss = plan.kss_bytes * passes
            flash_t = kss / config.internal_bw
            kmers = kss / KMER_BYTES + inter / KMER_BYTES
            comp_t = (kmers / config.controller_core_rate if mode == "ms-cc"
                      else kmers / C / config.comparator_rate)
            duration = max(flash_t, comp_t)
            traffic = inter
            if traffic / duration > config.internal_dram_bw:
                duration = traffic / config.internal_dram_bw
            per_ch = kss // C
            sched.run("taxid", channels + [engine, "dram"], duration, after=isp_done,
                      nbytes=[per_ch] * C + [0, traffic])
            counters["dram_traffic_bytes"] += traffic
        else:
            passes = 1
            kss = plan.kss_bytes
            duration = max(kss / config.external_bw,
                           (kss + inter) / KMER_BYTES / (C * config.comparator_rate))
            sched.run("taxid", ["link", engine], duration, after=isp_done, nbytes=[kss, 0])
        counters["kss_read_bytes"] = kss
        counters["taxid_passes"] = passes

    if plan.index_bytes:
        last = max((e.end for e in sched.events), default=0.0)
        if in_storage:
            read_t = plan.index_bytes / config.internal_bw
            end = sched.run("merge", channels + [engine], read_t, after=last,
                            nbytes=[plan.index_bytes // C] * C + [0])
            sched.run("merge", ["link"], plan.unified_bytes / config.external_bw, after=end,
                      nbytes=plan.unified_bytes)
        else:
            sched.run("merge", ["link", engine],
                      (plan.index_bytes + plan.unified_bytes) / config.external_bw,
                      after=last, nbytes=[plan.index_bytes, 0])

    counters["metadata_bytes"] = md_bytes if in_storage else 0
    resources = ["host", "link", "dram", "accel", "cores", "host-dram"] + channels
    return Timeline(sched.events, mode, resources, counters)


def simulate_sequential(plans: Sequence[StagePlan], config: SsdConfig, mode: str = "ms",
                        sort_accelerator: bool = False) -> Timeline:
    """Run plans one after another (no database sharing), concatenated in time."""
    events: list[Event] = []
    counters: dict[str, int] = {}
    offset = 0.0
    resources: list[str] = []
    for p in plans:
        tl = simulate(p, config, mode, sort_accelerator)
        events.extend(Event(e.stage, e.resource, e.start + offset, e.end + offset, e.bytes, e.bucket)
                      for e in tl.events)
        for k, v in tl.counters.items():
            counters[k] = counters.get(k, 0) + v
        offset += tl.total
        resources = tl.resources
    return Timeline(events, normalize_mode(mode), resources, counters)
