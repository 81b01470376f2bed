from __future__ import annotations

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from kss_cases import random_levels, random_sketches
from ispmeta.dbbuild import SpeciesIndex, build_kss, build_species_index
from ispmeta.errors import ConfigError, DataError, OrderError, RangeError
from ispmeta.isp import (HitTable, RetrievalStats, UnifiedIndex, containment, decide_presence,
                         index_generator, merge_indexes, retrieve_taxids, stream_intersect)

E = oracles.encode
sorted_sets = st.lists(st.integers(0, 200), unique=True, max_size=60).map(sorted)


@given(sorted_sets, sorted_sets)
def test_intersect_matches_oracle(q, d):
    out = list(stream_intersect(q, d))
    assert out == oracles.intersect(q, d)
    assert len(out) <= min(len(q), len(d))


@pytest.mark.parametrize("q,d,want", [([1, 2], [3, 4], []), ([1, 5, 9], [1, 5, 9], [1, 5, 9]), ([], [1], [])])
def test_intersect_examples(q, d, want):
    assert list(stream_intersect(q, d)) == want


@pytest.mark.parametrize("q,d,pos", [([1, 3, 2], [1, 2, 3], 2), ([1, 2, 3], [2, 2], 1)])
def test_intersect_detects_unsorted(q, d, pos):
    with pytest.raises(OrderError) as err:
        list(stream_intersect(q, d))
    assert err.value.position == pos


def test_intersect_reads_each_input_once():
    pulled = {"q": 0, "d": 0}

    def counting(xs, key):
        for x in xs:
            pulled[key] += 1
            yield x

    q, d = list(range(0, 100, 3)), list(range(0, 100, 2))
    list(stream_intersect(counting(q, "q"), counting(d, "d")))
    assert pulled["q"] <= len(q) and pulled["d"] <= len(d)


def test_index_generator_example():
    top = [E("AATCA"), E("AATCC"), E("AATGG")]
    assert list(index_generator(top, 4)) == [0, 0, 1]


def test_index_generator_shared_prefix():
    assert list(index_generator([E("AAAC"), E("AAAG"), E("AAAT")], 2)) == [0, 0, 0]


@given(st.lists(st.text("AC", min_size=8, max_size=8), min_size=1, unique=True), st.integers(1, 7))
def test_index_generator_counts_distinct_prefixes(words, k2):
    top = sorted(E(w) for w in words)
    gen = list(index_generator(top, k2))
    assert gen[-1] + 1 == len({w[:k2] for w in words})


def test_retrieve_example():
    kss = build_kss({1: {(5, E("AATCC"))}, 2: {(4, E("AATC"))}}, [5, 4])
    hits = retrieve_taxids([E("AATCC")], kss, 5)
    assert hits.hits == {(1, 5): 1, (1, 4): 1, (2, 4): 1}


def test_retrieve_empty():
    kss = build_kss({1: {(5, E("AATCC"))}}, [5, 4])
    assert len(retrieve_taxids([], kss)) == 0


def test_retrieve_level_mismatch():
    kss = build_kss({1: {(5, E("AATCC"))}}, [5, 4])
    with pytest.raises(ConfigError):
        retrieve_taxids([], kss, 6)


def test_prefix_only_match_is_found():
    # query misses the top table but its 4-prefix is sketched
    kss = build_kss({1: {(5, E("AATCC"))}}, [5, 4])
    hits = retrieve_taxids([E("AATCG")], kss, 5)
    assert hits.hits == {(1, 4): 1}


def test_per_query_counting_flag():
    kss = build_kss({1: {(5, E("AATCC"))}}, [5, 4])
    qs = [E("AATCA"), E("AATCC"), E("AATCG")]
    assert retrieve_taxids(qs, kss).get(1, 4) == 1
    assert retrieve_taxids(qs, kss, per_query=True).get(1, 4) == 3


def _random_case(seed: int):
    rng = random.Random(seed)
    levels = random_levels(rng)
    sketches = random_sketches(rng, levels, alphabet="AC")
    kss = build_kss(sketches, levels)
    top = [km for km, _ in kss.top_table]
    pool = top + [E("".join(rng.choices("AC", k=levels[0]))) for _ in range(10)]
    queries = sorted(set(rng.sample(pool, min(len(pool), rng.randint(0, 15)))))
    return levels, sketches, kss, queries


@given(st.integers(0, 2**32 - 1))
def test_retrieve_matches_flat_oracle(seed):
    levels, sketches, kss, queries = _random_case(seed)
    stats = RetrievalStats()
    hits = retrieve_taxids(queries, kss, levels[0], stats=stats)
    want = oracles.retrieve(queries, oracles.flat_table(sketches, levels), levels)
    assert {k: v for k, v in hits.hits.items() if v} == want
    assert stats.top_consumed <= len(kss.top_table)
    for k in levels[1:]:
        assert stats.group_consumed[k] <= len(kss.top_table)
        assert stats.extras_consumed[k] <= len(kss.extras_tables[k])
        assert stats.overflow_consumed[k] <= len(kss.overflow_tables[k])


def test_retrieve_unsorted_intersection():
    kss = build_kss({1: {(5, E("AATCC"))}}, [5, 4])
    with pytest.raises(OrderError):
        retrieve_taxids([E("AATCC"), E("AAAAA")], kss)


def test_hit_table_csv_round_trip():
    t = HitTable()
    t.add(7, 60, 3)
    t.add(2, 40)
    assert t.to_csv() == "tax,k,hits\n2,40,1\n7,60,3\n"
    assert HitTable.from_csv(t.to_csv()) == t


def _presence_kss():
    return build_kss({1: {(5, E("AATCC")), (5, E("CCCCC")), (5, E("GGGGG")), (5, E("TTTTT"))},
                      2: {(5, E("ACACA")), (5, E("AAAAA"))}}, [5, 4])


def test_presence_zero_hits():
    assert decide_presence(HitTable(), _presence_kss()) == set()


def test_presence_threshold_boundaries():
    kss = _presence_kss()
    hits = retrieve_taxids([E("AATCC")], kss)  # 1 of 4 sketch members for taxon 1
    assert containment(hits, kss)[1] == pytest.approx(0.25)
    assert decide_presence(hits, kss, 0.25) == {1}
    assert decide_presence(hits, kss, 0.26) == set()
    assert decide_presence(hits, kss, 0.0) == {1}


def test_presence_bad_theta():
    with pytest.raises(RangeError):
        decide_presence(HitTable(), _presence_kss(), 1.5)


def test_presence_missing_sketch_size():
    hits = HitTable()
    hits.add(99, 5)
    with pytest.raises(DataError):
        decide_presence(hits, _presence_kss())


@given(st.dictionaries(st.integers(1, 5), st.integers(1, 20), min_size=1),
       st.integers(1, 6), st.floats(0, 1))
def test_presence_ratio_invariance(sizes, scale, theta):
    from ispmeta.dbbuild import KssSketch

    rng = random.Random(len(sizes))
    hits, hits_scaled = HitTable(), HitTable()
    for tax, size in sizes.items():
        n = rng.randint(0, size)
        hits.add(tax, 5, n)
        hits_scaled.add(tax, 5, n * scale)
    kss = KssSketch([5], [], {}, {}, {t: {5: s} for t, s in sizes.items()})
    kss_scaled = KssSketch([5], [], {}, {}, {t: {5: s * scale} for t, s in sizes.items()})
    assert decide_presence(hits, kss, theta) == decide_presence(hits_scaled, kss_scaled, theta)


def test_merge_example_rebases_second_index():
    a = SpeciesIndex(1, 1000, 3, [(E("AAA"), 5)])
    b = SpeciesIndex(2, 50, 3, [(E("CCA"), 20)])
    u = merge_indexes([a, b])
    assert u.as_dict()[E("CCA")] == [1020]
    assert u.owner(1020) == 2 and u.owner(5) == 1


def test_merge_single_is_identity():
    idx = build_species_index("CCACCA", 4, 3)
    u = merge_indexes([idx])
    assert u.offsets == [0, 6]
    assert [(b, loc) for b, locs in u.entries for loc in locs] == idx.entries


def test_merge_k_mismatch():
    with pytest.raises(ConfigError):
        merge_indexes([SpeciesIndex(1, 5, 3, []), SpeciesIndex(2, 5, 4, [])])


@given(st.lists(st.text("ACG", max_size=40), min_size=1, max_size=4), st.integers(1, 4))
def test_merge_matches_oracle(genomes, k):
    idxs = [build_species_index(g, i + 1, k) for i, g in enumerate(genomes)]
    u = merge_indexes(idxs)
    assert u.entries == oracles.merge([(ix.genome_length, ix.entries) for ix in idxs])
    assert sum(len(l) for _, l in u.entries) == sum(len(ix.entries) for ix in idxs)
    for i, ix in enumerate(idxs):
        lo, hi = u.offsets[i], u.offsets[i] + ix.genome_length
        owned = [loc for _, locs in u.entries for loc in locs if lo <= loc < hi]
        assert len(owned) == len(ix.entries)


def test_unified_round_trip(tmp_path):
    u = merge_indexes([build_species_index("ACGTACGA", 1, 3), build_species_index("GGACGT", 2, 3)])
    u.save(tmp_path / "u")
    assert UnifiedIndex.load(tmp_path / "u") == u
