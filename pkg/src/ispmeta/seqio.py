"""FASTA/FASTQ readers (plain or gzip)."""

from __future__ import annotations

import gzip
from pathlib import Path
from typing import IO, Iterator

from .errors import IoError, ParseError


def _open_text(path: str | Path) -> IO[str]:
    try:
        with open(path, "rb") as fh:
            magic = fh.read(2)
        if magic == b"\x1f\x8b":
            return gzip.open(path, "rt", encoding="ascii", errors="replace")
        return open(path, "rt", encoding="ascii", errors="replace")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc


def parse_fastq_lines(lines: Iterator[str]) -> Iterator[tuple[str, str]]:
    """Yield ``(name, sequence)`` from FASTQ text lines.

    Raises ParseError naming the 0-based record index on malformed input.
    """
    record = 0
    it = iter(lines)
    for header in it:
        header = header.rstrip("\r\n")
        if not header:
            continue
        if not header.startswith("@"):
            raise ParseError(f"expected '@' header, got {header[:20]!r}", record)
        seq = next(it, None)
        plus = next(it, None)
        qual = next(it, None)
        if seq is None or plus is None or qual is None:
            raise ParseError("truncated record", record)
        seq = seq.rstrip("\r\n")
        qual = qual.rstrip("\r\n")
        if not plus.startswith("+"):
            raise ParseError("missing '+' separator line", record)
        if len(seq) != len(qual):
            raise ParseError(
                f"sequence/quality length mismatch ({len(seq)} vs {len(qual)})", record
            )
        yield header[1:], seq
        record += 1


def read_fastq(path: str | Path) -> Iterator[tuple[str, str]]:
    with _open_text(path) as fh:
        yield from parse_fastq_lines(fh)


def read_fasta(path: str | Path) -> Iterator[tuple[str, str]]:
    name, buf = None, []
    with _open_text(path) as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if line.startswith(">"):
                if name is not None:
                    yield name, "".join(buf)
                name, buf = line[1:], []
            elif line:
                if name is None:
                    raise ParseError("sequence data before first '>' header", 0)
                buf.append(line.upper())
        if name is not None:
            yield name, "".join(buf)


def read_genome(path: str | Path) -> str:
    """Concatenate all records of a FASTA file into one genome string.

    Record boundaries become an ``N`` so no k-mer spans two records.
    """
    return "N".join(seq for _, seq in read_fasta(path))


def write_fasta(path: str | Path, name: str, seq: str, width: int = 80) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f">{name}\n")
        for i in range(0, len(seq), width):
            fh.write(seq[i : i + width] + "\n")


def write_fastq(path: str | Path, records) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for name, seq in records:
            fh.write(f"@{name}\n{seq}\n+\n{'I' * len(seq)}\n")
