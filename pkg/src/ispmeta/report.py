"""Run records and the files rendered from them.

A :class:`RunRecord` holds everything a report needs in JSON-friendly form,
so ``report`` can re-render figures and tables from ``run.json`` alone.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import DataError, IoError
from .isp import HitTable
from .ssd.sim import Timeline

RUN_FILE = "run.json"
RECORD_VERSION = 1
# bulky inputs kept in run.json for re-timing, not echoed into summary.json
_RUN_ONLY = ("stage_plan", "config")


@dataclass
class SampleRecord:
    name: str
    n_reads: int
    n_query_kmers: int
    intersection_size: int
    presence: list[int]
    hits: list[list[int]]          # rows of (tax, k, hits)

    def hit_table(self) -> HitTable:
        table = HitTable()
        for t, k, n in self.hits:
            table.add(t, k, n)
        return table


@dataclass
class RunRecord:
    kind: str                                  # classify | abundance | multi | simulate
    params: dict
    samples: list[SampleRecord] = field(default_factory=list)
    abundance: dict | None = None              # {"reads": {tax: n}, "unclassified": n}
    timeline: dict | None = None
    mode_timelines: dict[str, dict] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        data = asdict(self)
        data["version"] = RECORD_VERSION
        # insertion order is deterministic and fixes the bar order of figures
        return json.dumps(data, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"run record is not valid JSON: {exc}") from exc
        if data.pop("version", None) != RECORD_VERSION:
            raise DataError("unsupported run record version")
        data["samples"] = [SampleRecord(**s) for s in data.get("samples", [])]
        return cls(**data)

    def save(self, path: str | Path) -> None:
        _write_text(Path(path), self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "RunRecord":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read run record {path}: {exc}") from exc
        return cls.from_json(text)


def sample_record(result) -> SampleRecord:
    """From a :class:`~ispmeta.pipeline.ClassifyResult`."""
    return SampleRecord(
        name=Path(result.sample).name,
        n_reads=result.n_reads,
        n_query_kmers=result.n_query_kmers,
        intersection_size=len(result.intersection),
        presence=sorted(result.presence),
        hits=[list(r) for r in result.hits.rows()],
    )


def abundance_record(report) -> dict:
    return {"reads": {str(t): n for t, n in sorted(report.reads.items())},
            "unclassified": report.unclassified}


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def presence_csv(sample: SampleRecord) -> str:
    return _csv(["tax_id"], [[t] for t in sample.presence])


def abundance_csv(abundance: dict | None) -> str:
    rows = []
    if abundance:
        reads = {int(t): n for t, n in abundance["reads"].items()}
        total = sum(reads.values())
        for t in sorted(reads):
            rows.append([t, reads[t], repr(reads[t] / total if total else 0.0)])
    return _csv(["tax_id", "reads", "fraction"], rows)


def summary(record: RunRecord) -> dict:
    out: dict = {"kind": record.kind, "params": record.params}
    if record.samples:
        out["samples"] = [
            {"name": s.name, "reads": s.n_reads, "query_kmers": s.n_query_kmers,
             "intersection_kmers": s.intersection_size, "present": s.presence}
            for s in record.samples
        ]
    if record.abundance is not None:
        reads = {int(t): n for t, n in record.abundance["reads"].items()}
        classified = sum(reads.values())
        out["abundance"] = {
            "classified_reads": classified,
            "unclassified_reads": record.abundance["unclassified"],
            "fractions": {str(t): (reads[t] / classified if classified else 0.0) for t in sorted(reads)},
        }
    if record.timeline is not None:
        out["timeline"] = Timeline.from_dict(record.timeline).summary()
    if record.mode_timelines:
        out["mode_total_seconds"] = {m: Timeline.from_dict(d).total
                                     for m, d in record.mode_timelines.items()}
    extra = {k: v for k, v in record.extra.items() if k not in _RUN_ONLY}
    if extra:
        out["extra"] = extra
    return out


def write_report(record: RunRecord, out_dir: str | Path, figures: bool = True) -> list[Path]:
    """Write CSV tables, ``summary.json`` and (optionally) PNG figures.

    One sample: tables at the top of ``out_dir``.  Several samples: per-sample
    ``presence.csv``/``hits.csv`` under ``samples/<index>_<file stem>/``.
    """
    out = Path(out_dir)
    written: list[Path] = []

    def put(rel: str, text: str) -> None:
        _write_text(out / rel, text)
        written.append(out / rel)

    if len(record.samples) == 1:
        s = record.samples[0]
        put("presence.csv", presence_csv(s))
        put("hits.csv", s.hit_table().to_csv())
    else:
        for i, s in enumerate(record.samples):
            d = f"samples/{i:03d}_{Path(s.name).stem}"
            put(f"{d}/presence.csv", presence_csv(s))
            put(f"{d}/hits.csv", s.hit_table().to_csv())
    if record.kind != "simulate":
        put("abundance.csv", abundance_csv(record.abundance))
    timeline = Timeline.from_dict(record.timeline) if record.timeline is not None else None
    if timeline is not None:
        put("timeline.csv", timeline.to_csv())
    put("summary.json", json.dumps(summary(record), indent=2, sort_keys=True) + "\n")
    if figures:
        from .plots import plot_breakdown, plot_timeline

        try:
            if timeline is not None:
                written.append(plot_timeline(timeline, out / "timeline.png"))
            if record.mode_timelines:
                tls = {m: Timeline.from_dict(d) for m, d in record.mode_timelines.items()}
                written.append(plot_breakdown(tls, out / "breakdown.png"))
        except OSError as exc:
            raise IoError(f"cannot write figure in {out}: {exc}") from exc
    return written
