from __future__ import annotations


import pytest
from hypothesis import settings

from ispmeta.dbbuild import build_kmer_db, build_kss, build_species_index, sketch_references
from ispmeta.seqio import read_genome
from ispmeta.synth import generate

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def synthetic(tmp_path_factory) -> dict:
    """Three-taxon 50/30/20 mixture plus two decoys, with built databases."""
    root = tmp_path_factory.mktemp("synthetic")
    s = generate(root, seed=7)
    genomes = {t: read_genome(p) for t, p in s.genomes.items()}
    db = build_kmer_db(genomes.values(), 60)
    db.save(root / "db.mskd")
    kss = build_kss(sketch_references(genomes, 60), [60, 50, 40])
    kss.save(root / "kss.msks")
    index_dir = root / "idx"
    index_dir.mkdir()
    index_paths = {}
    for t, g in genomes.items():
        index_paths[t] = index_dir / f"tax{t}.msix"
        build_species_index(g, t, 60).save(index_paths[t])
    return {
        "root": root,
        "set": s,
        "genomes": genomes,
        "db_path": root / "db.mskd",
        "kss_path": root / "kss.msks",
        "index_dir": index_dir,
        "index_paths": index_paths,
        "sample": s.sample,
        "truth": s.truth,
    }


@pytest.fixture
def syn_tmp(synthetic, tmp_path):
    return synthetic, tmp_path
