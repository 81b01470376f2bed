from __future__ import annotations

import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from ispmeta.cli import main, parse_levels, parse_ref, parse_size
from ispmeta.formats import MAGIC_BUCKET, read_kmer_file


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def built(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("cli")
    assert run("gen", root / "syn", "--reads", 1500) == 0
    refs = sorted((root / "syn" / "genomes").glob("*.fa"))
    assert run("build-db", *refs, "-o", root / "db.mskd") == 0
    assert run("build-kss", *refs, "-o", root / "kss.msks") == 0
    assert run("build-index", *refs, "-o", root / "idx") == 0
    return root


def run_args(built: Path, out: Path, *extra) -> list:
    return ["--db", built / "db.mskd", "--kss", built / "kss.msks", "--buckets", 32,
            "--out", out, *extra]


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_classify_report_files(built, tmp_path):
    out = tmp_path / "c"
    assert run("classify", built / "syn" / "sample.fastq", *run_args(built, out)) == 0
    assert (out / "presence.csv").read_text().splitlines()[0] == "tax_id"
    assert [int(r["tax_id"]) for r in read_csv(out / "presence.csv")] == [101, 102, 103]
    assert (out / "hits.csv").read_text().startswith("tax,k,hits\n")
    assert (out / "timeline.csv").read_text().startswith("stage,resource,start,end,bytes\n")
    assert (out / "abundance.csv").read_text() == "tax_id,reads,fraction\n"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["kind"] == "classify" and summary["params"]["k"] == 60
    assert set(summary["mode_total_seconds"]) == {"ms", "ms-nol", "ext-ms", "ms-cc"}
    for png in ("timeline.png", "breakdown.png"):
        assert (out / png).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_abundance_fractions(built, tmp_path):
    out = tmp_path / "a"
    rc = run("abundance", built / "syn" / "sample.fastq", *run_args(built, out), "--index", built / "idx")
    assert rc == 0
    rows = read_csv(out / "abundance.csv")
    assert sum(float(r["fraction"]) for r in rows) == pytest.approx(1.0, abs=1e-9)
    truth = json.loads((built / "syn" / "truth.json").read_text())
    for r in rows:
        assert float(r["fraction"]) == pytest.approx(truth["fractions"][r["tax_id"]], abs=0.05)


@pytest.mark.parametrize("verb", ["classify", "abundance", "multi", "simulate", "prep"])
def test_reruns_are_byte_identical(built, tmp_path, verb):
    sample = built / "syn" / "sample.fastq"

    def once(out: Path) -> None:
        if verb == "classify":
            argv = ["classify", sample, *run_args(built, out)]
        elif verb == "abundance":
            argv = ["abundance", sample, *run_args(built, out), "--index", built / "idx"]
        elif verb == "multi":
            argv = ["classify", sample, sample, *run_args(built, out), "--samples", 2]
        elif verb == "simulate":
            argv = ["simulate", "--db-bytes", "2G", "--query-bytes", "100M", "--buckets", 16, "--out", out]
        else:
            argv = ["prep", sample, "-o", out, "--buckets", 8]
        assert run(*argv) == 0

    a, b = tmp_path / "a", tmp_path / "b"
    once(a)
    once(b)
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b and files_a
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_report_rerenders_identically(built, tmp_path):
    out = tmp_path / "c"
    run("classify", built / "syn" / "sample.fastq", *run_args(built, out))
    assert run("report", out, "--out", tmp_path / "r") == 0
    for name in ("presence.csv", "hits.csv", "timeline.csv", "summary.json", "timeline.png", "breakdown.png"):
        assert (out / name).read_bytes() == (tmp_path / "r" / name).read_bytes()


def test_simulate_retimes_a_run(built, tmp_path):
    out = tmp_path / "c"
    run("classify", built / "syn" / "sample.fastq", *run_args(built, out))
    assert run("simulate", "--run", out, "--mode", "ext-ms", "--out", tmp_path / "s") == 0
    summary = json.loads((tmp_path / "s" / "summary.json").read_text())
    assert summary["timeline"]["mode"] == "ext-ms"


def test_multi_sample_layout(built, tmp_path):
    sample = built / "syn" / "sample.fastq"
    out = tmp_path / "m"
    assert run("classify", sample, sample, sample, *run_args(built, out), "--samples", 3) == 0
    dirs = sorted(p.name for p in (out / "samples").iterdir())
    assert dirs == ["000_sample", "001_sample", "002_sample"]
    extra = json.loads((out / "summary.json").read_text())["extra"]
    assert extra["groups"] == [[0, 1, 2]]
    assert extra["db_read_bytes"] * 3 == extra["sequential_db_read_bytes"]


def test_prep_outputs(built, tmp_path):
    out = tmp_path / "p"
    assert run("prep", built / "syn" / "sample.fastq", "-o", out, "--buckets", 8) == 0
    meta = json.loads((out / "plan.json").read_text())
    stream = []
    for f in sorted(out.glob("bucket*.msbk")):
        k, kmers, sorted_unique = read_kmer_file(f, MAGIC_BUCKET)
        assert k == 60 and sorted_unique
        stream.extend(kmers)
    assert stream == sorted(set(stream)) and len(stream) == meta["filtered_kmers"]


def test_exit_codes(built, tmp_path):
    sample = built / "syn" / "sample.fastq"
    assert run("classify", tmp_path / "missing.fq", *run_args(built, tmp_path / "x")) == 4
    assert run("classify", sample, *run_args(built, tmp_path / "x"), "--k", 31) == 2
    bad = tmp_path / "bad.fq"
    bad.write_text("@r\nACGT\n+\nII\n")
    assert run("classify", bad, *run_args(built, tmp_path / "x")) == 3
    assert run("abundance", sample, *run_args(built, tmp_path / "x")) == 2
    assert run("simulate", "--out", tmp_path / "x") == 2
    with pytest.raises(SystemExit) as err:
        run("classify", sample, *run_args(built, tmp_path / "x"), "--mode", "turbo")
    assert err.value.code == 2


@pytest.mark.skipif(hasattr(os, "geteuid") and os.geteuid() == 0, reason="root ignores permissions")
def test_unwritable_report_dir(built, tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    assert run("classify", built / "syn" / "sample.fastq", *run_args(built, ro / "x")) == 4


def test_report_into_file_path_is_io_error(built, tmp_path):
    out = tmp_path / "c"
    run("classify", built / "syn" / "sample.fastq", *run_args(built, out))
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert run("report", out, "--out", blocker / "sub") == 4


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ispmeta", "simulate", "--db-bytes", "1G",
                           "--query-bytes", "10M", "--buckets", "4", "--no-figures", "--out",
                           str(tmp_path / "s")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "s" / "summary.json").exists()


@pytest.mark.parametrize("text,want", [("4096", 4096), ("64G", 64 << 30), ("1.5MiB", 3 << 19), ("2k", 2048)])
def test_parse_size(text, want):
    assert parse_size(text) == want


def test_parse_levels_and_refs():
    assert parse_levels("60,50,40") == (60, 50, 40)
    assert parse_ref("7=/x/g.fa") == (7, Path("/x/g.fa"))
    assert parse_ref("genomes/tax101.fa") == (101, Path("genomes/tax101.fa"))
