"""Command-line entry point: ``ispmeta <verb> ...``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import warnings
from pathlib import Path
from typing import Sequence

from . import prep
from .dbbuild import (DEFAULT_SKETCH_SIZE, SpeciesIndex, build_kmer_db, build_kss,
                      build_species_index, load_reference, sketch_references)
from .errors import EXIT_CONFIG, EXIT_IO, ConfigError, IspMetaError
from .formats import MAGIC_BUCKET, write_kmer_file
from .kmer import MAX_K
from .pipeline import (DEFAULT_DRAM_BUDGET, DEFAULT_K, DEFAULT_K_LEVELS, RunPlan, prepare_sample,
                       run_multi, run_pipeline, simulate_modes)
from .report import RUN_FILE, RunRecord, abundance_record, sample_record, write_report
from .ssd import StagePlan, energy, load_profile, simulate
from .ssd.sim import MODES
from .synth import generate

log = logging.getLogger("ispmeta")

_SIZE_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([KMGT]i?B?|B)?\s*$", re.IGNORECASE)
_SIZE_SHIFT = {"": 0, "B": 0, "K": 10, "M": 20, "G": 30, "T": 40}


def parse_size(text: str) -> int:
    """``"4096"``, ``"64G"``, ``"1.5MiB"``; suffixes are binary."""
    m = _SIZE_RE.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"not a byte size: {text!r}")
    unit = (m.group(2) or "").upper()[:1]
    return int(float(m.group(1)) * (1 << _SIZE_SHIFT[unit]))


def parse_levels(text: str) -> tuple[int, ...]:
    try:
        levels = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k-levels {text!r}") from None
    if not levels or any(b >= a for a, b in zip(levels, levels[1:])):
        raise argparse.ArgumentTypeError("k-levels must be strictly decreasing, e.g. 60,50,40")
    if levels[-1] < 1 or levels[0] > MAX_K:
        raise argparse.ArgumentTypeError(f"k-levels must lie in [1, {MAX_K}]")
    return levels


def parse_fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad mixture {text!r}") from None


_TAX_IN_NAME = re.compile(r"(\d+)")


def parse_ref(text: str) -> tuple[int, Path]:
    """``TAX=PATH``, or a path whose file name carries the tax ID (``tax101.fa``)."""
    if "=" in text:
        tax, path = text.split("=", 1)
        if not tax.isdigit():
            raise argparse.ArgumentTypeError(f"bad tax id in {text!r}")
        return int(tax), Path(path)
    m = _TAX_IN_NAME.search(Path(text).name)
    if not m:
        raise argparse.ArgumentTypeError(f"cannot infer tax id from {text!r}; use TAX=PATH")
    return int(m.group(1)), Path(text)


def _check_k(k: int) -> int:
    if not 1 <= k <= MAX_K:
        raise ConfigError(f"--k must be in [1, {MAX_K}]")
    return k


def _unique_taxa(refs: list[tuple[int, Path]]) -> dict[int, Path]:
    out: dict[int, Path] = {}
    for tax, path in refs:
        if tax in out:
            raise ConfigError(f"tax id {tax} given twice")
        out[tax] = path
    return out


# -- verbs ---------------------------------------------------------------------

def cmd_gen(args) -> int:
    s = generate(args.out, mixture=args.mixture, decoys=args.decoys, genome_len=args.genome_len,
                 n_reads=args.reads, read_len=args.read_len, seed=args.seed,
                 error_rate=args.error_rate)
    print(f"wrote {len(s.genomes)} genomes, {s.sample.name} and {s.truth_path.name} to {args.out}")
    return 0


def cmd_build_db(args) -> int:
    k = _check_k(args.k)
    refs = _unique_taxa(args.refs)
    db = build_kmer_db((load_reference(p) for _, p in sorted(refs.items())), k)
    db.save(args.out)
    print(f"{db.count} distinct {k}-mers -> {args.out}")
    return 0


def cmd_build_kss(args) -> int:
    refs = _unique_taxa(args.refs)
    genomes = {t: load_reference(p) for t, p in sorted(refs.items())}
    sketches = sketch_references(genomes, args.k_levels[0], args.sketch_size, args.seed)
    kss = build_kss(sketches, list(args.k_levels))
    kss.save(args.out)
    print(f"KSS over {len(genomes)} taxa, levels {list(args.k_levels)}: {kss.nbytes()} bytes -> {args.out}")
    return 0


def cmd_build_index(args) -> int:
    k = _check_k(args.k)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for tax, path in sorted(_unique_taxa(args.refs).items()):
        idx = build_species_index(load_reference(path), tax, k)
        idx.save(out / f"tax{tax}.msix")
    print(f"{len(args.refs)} species indexes -> {out}")
    return 0


def cmd_prep(args) -> int:
    k = _check_k(args.k)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    policy = prep.FilterPolicy(args.min_count, args.max_count)
    ps = prepare_sample(Path(args.sample), k, args.buckets, policy, args.dram_budget,
                        spill_dir=out)
    for i, kmers in enumerate(ps.queries):
        write_kmer_file(out / f"bucket{i:05d}.msbk", MAGIC_BUCKET, k, kmers, sorted_unique=True)
    meta = {
        "k": k,
        "reads": ps.n_reads,
        "extracted_kmers": ps.n_kmers,
        "filtered_kmers": sum(len(q) for q in ps.queries),
        "min_count": policy.min_count,
        "max_count": policy.max_count,
        "boundaries": [f"{b:032x}" for b in ps.bucket_plan.boundaries],
        "pinned": list(ps.bucket_plan.pinned),
    }
    (out / "plan.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{len(ps.queries)} buckets, {meta['filtered_kmers']} query k-mers -> {out}")
    return 0


def _index_paths(items: Sequence[str]) -> dict[int, Path]:
    files: list[Path] = []
    for item in items:
        p = Path(item)
        files.extend(sorted(p.glob("*.msix")) if p.is_dir() else [p])
    out = {}
    for f in files:
        out[SpeciesIndex.load(f).tax] = f
    return out


def _plan(args, samples: Sequence[str]) -> RunPlan:
    return RunPlan(
        samples=[Path(s) for s in samples],
        db_path=Path(args.db),
        kss_path=Path(args.kss),
        index_paths=_index_paths(getattr(args, "index", None) or []),
        k=_check_k(args.k),
        k_levels=args.k_levels,
        buckets=args.buckets,
        policy=prep.FilterPolicy(args.min_count, args.max_count),
        theta=args.theta,
        mode=args.mode,
        ssd=args.ssd,
        samples_buffered=args.samples,
        dram_budget=args.dram_budget,
        sort_accelerator=args.sort_accelerator,
    )


def _params(args, plan: RunPlan) -> dict:
    cfg, _ = plan.device()
    return {
        "k": plan.k,
        "k_levels": list(plan.k_levels),
        "buckets": plan.buckets,
        "min_count": plan.policy.min_count,
        "max_count": plan.policy.max_count,
        "theta": plan.theta,
        "mode": plan.mode,
        "ssd": cfg.name,
        "samples_buffered": plan.samples_buffered,
        "dram_budget": plan.dram_budget,
        "sort_accelerator": plan.sort_accelerator,
    }


def _finish(record: RunRecord, out: Path, figures: bool) -> int:
    out.mkdir(parents=True, exist_ok=True)
    record.save(out / RUN_FILE)
    write_report(record, out, figures=figures)
    print(f"report -> {out}")
    return 0


def cmd_classify(args, abundance: bool = False) -> int:
    plan = _plan(args, args.sample)
    out = Path(args.out)
    if len(plan.samples) > 1:
        if abundance:
            raise ConfigError("abundance takes a single sample")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            multi = run_multi(plan)
        for w in caught:
            log.warning("%s", w.message)
        record = RunRecord(
            kind="multi",
            params=_params(args, plan),
            samples=[sample_record(r) for r in multi.results],
            timeline=multi.timeline.to_dict(),
            mode_timelines={f"M={plan.samples_buffered}": multi.timeline.to_dict(),
                            "sequential": multi.sequential.to_dict()},
            extra={"groups": multi.groups, "speedup": multi.speedup,
                   "db_read_bytes": multi.timeline.db_read_bytes,
                   "sequential_db_read_bytes": multi.sequential.db_read_bytes},
        )
        return _finish(record, out, not args.no_figures)
    outputs = run_pipeline(plan, abundance=abundance)
    modes = simulate_modes(outputs.stage_plan, plan)
    record = RunRecord(
        kind="abundance" if abundance else "classify",
        params=_params(args, plan),
        samples=[sample_record(outputs.classify)],
        abundance=abundance_record(outputs.abundance) if outputs.abundance else None,
        timeline=outputs.timeline.to_dict(),
        mode_timelines={m: tl.to_dict() for m, tl in modes.items()},
        extra={"stage_plan": outputs.stage_plan.to_dict()},
    )
    return _finish(record, out, not args.no_figures)


def cmd_abundance(args) -> int:
    if not args.index:
        raise ConfigError("abundance needs --index (species index files or directories)")
    return cmd_classify(args, abundance=True)


def cmd_simulate(args) -> int:
    cfg, power = load_profile(args.ssd)
    if args.run:
        src = RunRecord.load(_run_file(args.run))
        if "stage_plan" not in src.extra:
            raise ConfigError(f"{args.run} has no stage plan to re-time")
        plan = StagePlan.from_dict(src.extra["stage_plan"])
    else:
        if args.db_bytes is None or args.query_bytes is None:
            raise ConfigError("simulate needs --run, or both --db-bytes and --query-bytes")
        sort_bytes = args.sort_bytes if args.sort_bytes is not None else args.query_bytes
        plan = StagePlan.uniform(args.db_bytes, args.query_bytes, sort_bytes, args.buckets,
                                 kss_bytes=args.kss_bytes)
    timelines = {}
    for mode in MODES:
        tl = simulate(plan, cfg, mode, args.sort_accelerator)
        energy(tl, power)
        timelines[mode] = tl
    record = RunRecord(
        kind="simulate",
        params={"mode": args.mode, "ssd": cfg.name, "sort_accelerator": args.sort_accelerator},
        timeline=timelines[args.mode].to_dict(),
        mode_timelines={m: tl.to_dict() for m, tl in timelines.items()},
        extra={"stage_plan": plan.to_dict(), "config": cfg.to_dict()},
    )
    return _finish(record, Path(args.out), not args.no_figures)


def _run_file(path: str | Path) -> Path:
    p = Path(path)
    return p / RUN_FILE if p.is_dir() else p


def cmd_report(args) -> int:
    src = _run_file(args.run)
    record = RunRecord.load(src)
    out = Path(args.out) if args.out else src.parent
    write_report(record, out, figures=not args.no_figures)
    print(f"report -> {out}")
    return 0


# -- parser ------------------------------------------------------------------

def _add_k(p) -> None:
    p.add_argument("--k", type=int, default=DEFAULT_K, help="k-mer length (default %(default)s)")


def _add_device(p) -> None:
    p.add_argument("--mode", choices=MODES, default="ms", help="simulated execution mode")
    p.add_argument("--ssd", default="ssd-c",
                   help="SSD profile: built-in name (ssd-c, ssd-p) or JSON file")
    p.add_argument("--sort-accelerator", action="store_true",
                   help="sort on a host-side accelerator instead of the CPU")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def _add_run(p) -> None:
    _add_k(p)
    p.add_argument("--db", required=True, help="sorted k-mer database (build-db output)")
    p.add_argument("--kss", required=True, help="KSS sketch tables (build-kss output)")
    p.add_argument("--k-levels", type=parse_levels, default=DEFAULT_K_LEVELS,
                   help="comma-separated k levels, largest first (default 60,50,40)")
    p.add_argument("--buckets", type=int, default=prep.DEFAULT_BUCKETS)
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--max-count", type=int, default=None)
    p.add_argument("--theta", type=float, default=0.25, help="presence threshold on containment")
    p.add_argument("--samples", type=int, default=1, metavar="N",
                   help="samples buffered per database pass")
    p.add_argument("--dram-budget", type=parse_size, default=DEFAULT_DRAM_BUDGET,
                   help="host DRAM budget for buffered query k-mers, e.g. 64G")
    p.add_argument("--out", required=True, help="report directory")
    _add_device(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ispmeta", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", help="write synthetic genomes and a FASTQ mixture with ground truth")
    p.add_argument("out")
    p.add_argument("--mixture", type=parse_fractions, default=(0.5, 0.3, 0.2))
    p.add_argument("--decoys", type=int, default=2, help="genomes never sampled")
    p.add_argument("--genome-len", type=int, default=20_000)
    p.add_argument("--reads", type=int, default=3000)
    p.add_argument("--read-len", type=int, default=150)
    p.add_argument("--error-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build-db", help="sorted distinct k-mer database from references")
    p.add_argument("refs", nargs="+", type=parse_ref, help="TAX=FASTA or taxNNN.fa")
    p.add_argument("-o", "--out", required=True)
    _add_k(p)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("build-kss", help="multi-level sketch tables from references")
    p.add_argument("refs", nargs="+", type=parse_ref)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--k-levels", type=parse_levels, default=DEFAULT_K_LEVELS)
    p.add_argument("--sketch-size", type=int, default=DEFAULT_SKETCH_SIZE)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_build_kss)

    p = sub.add_parser("build-index", help="per-species (k-mer, location) indexes")
    p.add_argument("refs", nargs="+", type=parse_ref)
    p.add_argument("-o", "--out", required=True, help="output directory")
    _add_k(p)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("prep", help="extract, bucket, count and filter query k-mers")
    p.add_argument("sample")
    p.add_argument("-o", "--out", required=True, help="output directory")
    _add_k(p)
    p.add_argument("--buckets", type=int, default=prep.DEFAULT_BUCKETS)
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--max-count", type=int, default=None)
    p.add_argument("--dram-budget", type=parse_size, default=DEFAULT_DRAM_BUDGET)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("classify", help="presence/absence for one or more samples")
    p.add_argument("sample", nargs="+")
    _add_run(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("abundance", help="presence plus majority-vote relative abundance")
    p.add_argument("sample", nargs="+")
    _add_run(p)
    p.add_argument("--index", nargs="+", help="species index files or directories")
    p.set_defaults(func=cmd_abundance)

    p = sub.add_parser("simulate", help="time a workload under every mode")
    p.add_argument("--run", help="run directory or run.json whose stage plan is re-timed")
    p.add_argument("--db-bytes", type=parse_size)
    p.add_argument("--query-bytes", type=parse_size)
    p.add_argument("--sort-bytes", type=parse_size)
    p.add_argument("--kss-bytes", type=parse_size, default=0)
    p.add_argument("--buckets", type=int, default=prep.DEFAULT_BUCKETS)
    p.add_argument("--out", required=True)
    _add_device(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="re-render tables and figures from run.json")
    p.add_argument("run", help="run directory or run.json")
    p.add_argument("--out", help="output directory (default: next to run.json)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except IspMetaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
