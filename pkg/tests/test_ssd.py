from __future__ import annotations

import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ispmeta.errors import CapacityError, ConfigError, RangeError
from ispmeta.ssd import (PowerModel, SsdConfig, StagePlan, Timeline, accelerator_power, energy,
                         energy_breakdown, ftl_layout, load_profile, metadata_budget,
                         regular_l2p_bytes, simulate)
from ispmeta.ssd.config import Power
from ispmeta.ssd.ftl import HEADER_BYTES
from ispmeta.ssd.sim import STAGES, BucketLoad, Event, dram_buffer_demand

GB = 10**9
CFG = SsdConfig()


# -- configuration -------------------------------------------------------------

@pytest.mark.parametrize("name,channels,external", [("ssd-c", 8, 560e6), ("ssd-p", 16, 7e9)])
def test_profiles(name, channels, external):
    cfg, power = load_profile(name)
    assert (cfg.name, cfg.channels, cfg.external_bw) == (name, channels, external)
    assert power.accelerator.active == pytest.approx(accelerator_power(channels))


def test_accelerator_power_eight_channels():
    assert accelerator_power(8) == pytest.approx(7.658e-3)


def test_profile_from_file(tmp_path):
    p = tmp_path / "dev.json"
    p.write_text(json.dumps({"channels": 4, "name": "mine"}))
    cfg, power = load_profile(p)
    assert cfg.channels == 4 and cfg.name == "mine" and power == PowerModel()


@pytest.mark.parametrize("data", [{"channels": 0}, {"per_channel_bw": -1}, {"bogus": 1},
                                  {"block_bytes": 1000}])
def test_bad_config(tmp_path, data):
    p = tmp_path / "dev.json"
    p.write_text(json.dumps(data))
    with pytest.raises(ConfigError):
        load_profile(p)


def test_bad_power():
    with pytest.raises(ConfigError):
        Power(0.1, 0.2)


def test_batch_geometry():
    assert CFG.batch_bytes == 1 << 20
    assert dram_buffer_demand(CFG, 0) == 2 << 20


# -- FTL -----------------------------------------------------------------------

def test_round_robin_channels():
    m = ftl_layout(64 * CFG.page_bytes, CFG)
    assert [m.channel_of(p) for p in range(64)] == [p % 8 for p in range(64)]
    assert len({m.page_offset(p) for p in range(8)}) == 1
    with pytest.raises(RangeError):
        m.channel_of(64)


def test_zero_db_is_header_only():
    m = ftl_layout(0, CFG)
    assert m.blocks() == [] and metadata_budget(m) == HEADER_BYTES


def test_capacity_exceeded():
    with pytest.raises(CapacityError):
        ftl_layout(CFG.capacity_bytes + 1, CFG)


@given(st.integers(0, 1 << 38), st.integers(0, 1000))
def test_layout_reproducible_from_compact_fields(db_bytes, start):
    m = ftl_layout(db_bytes, CFG, start_pba=start)
    assert len(m.blocks()) == math.ceil(db_bytes / CFG.block_bytes)
    assert m.blocks() == list(range(start, start + m.used_blocks))
    assert m.l2p_bytes == HEADER_BYTES + 4 * max(m.used_blocks - 1, 0)


def test_doubling_block_size_halves_block_terms():
    db = 1 << 40
    a = ftl_layout(db, CFG)
    b = ftl_layout(db, CFG.replace(block_bytes=2 * CFG.block_bytes))
    assert (metadata_budget(a) - HEADER_BYTES) == pytest.approx(2 * (metadata_budget(b) - HEADER_BYTES), rel=1e-4)


def test_regular_l2p_is_tenth_of_percent():
    assert regular_l2p_bytes(1 << 40) / (1 << 40) == pytest.approx(0.001, rel=0.03)


# -- simulator -----------------------------------------------------------------

def plan(db=9.6 * GB, query=0.56 * GB, sort=None, n=64, inter=0, kss=0):
    return StagePlan.uniform(int(db), int(query), int(query if sort is None else sort), n,
                             intersection_bytes=int(inter), kss_bytes=int(kss))


def test_stream_lower_bound_met():
    tl = simulate(plan(), CFG.replace(comparator_rate=1e15), "ms")
    assert tl.stage_totals["intersect"] == pytest.approx(1.0, rel=1e-9)


def test_ext_ms_stream_bound():
    tl = simulate(plan(), CFG, "ext-ms")
    assert tl.stage_totals["intersect"] == pytest.approx(9.6 * GB / 560e6, rel=1e-9)
    assert "transfer" not in tl.stage_totals


@pytest.mark.parametrize("mode", ["ms", "ms-nol", "ext-ms", "ms-cc"])
def test_resources_never_overlap(mode):
    tl = simulate(plan(inter=1e8, kss=1e7), CFG, mode)
    by_res: dict[str, list[Event]] = {}
    for e in tl.events:
        by_res.setdefault(e.resource, []).append(e)
    for evs in by_res.values():
        evs.sort(key=lambda e: e.start)
        for a, b in zip(evs, evs[1:]):
            assert a.end <= b.start + 1e-12
    assert tl.total == max(e.end for e in tl.events)


def test_pipeline_legality():
    tl = simulate(plan(), CFG, "ms")
    ev = {(e.stage, e.bucket): e for e in tl.events if e.resource in ("host", "link", "accel")}
    for i in range(64):
        assert ev[("sort", i)].end <= ev[("transfer", i)].start
        assert ev[("transfer", i)].end <= ev[("intersect", i)].start
    # sort of a later bucket runs while an earlier bucket is transferred
    assert ev[("sort", 1)].start < ev[("transfer", 0)].end


def test_mode_bounds_and_ordering():
    p = plan(sort=0.56 * GB * 4, inter=1e8, kss=1e7)
    t = {m: simulate(p, CFG, m) for m in ("ms", "ms-nol", "ms-cc", "ext-ms")}
    assert t["ms"].total <= t["ms-nol"].total
    assert t["ms"].total >= max(t["ms"].stage_totals.values())
    assert t["ms-nol"].total == pytest.approx(sum(t["ms-nol"].stage_totals.values()), rel=0.01)
    assert t["ms"].total <= t["ms-cc"].total <= t["ext-ms"].total


def test_dram_throttling_slows_isp():
    p = plan(inter=4 * GB)
    fast = simulate(p, CFG, "ms").stage_totals["intersect"]
    slow = simulate(p, CFG.replace(internal_dram_bw=1e9), "ms").stage_totals["intersect"]
    assert slow > fast


def test_dram_demand_is_small_at_full_bandwidth():
    p = plan(query=0.56 * GB, inter=0.2 * GB)
    tl = simulate(p, CFG, "ms")
    demand = tl.counters["dram_traffic_bytes"] / tl.stage_totals["intersect"]
    assert demand < CFG.internal_dram_bw


def test_internal_dram_too_small():
    with pytest.raises(ConfigError):
        simulate(plan(), CFG.replace(internal_dram_bytes=1 << 20), "ms")


def test_empty_bucket_skips_database_range():
    p = StagePlan([BucketLoad(100, 0, 10**6), BucketLoad(100, 160, 10**6)])
    tl = simulate(p, CFG, "ms")
    assert tl.db_read_bytes == 10**6


def test_oversized_intersection_takes_two_phases():
    free = CFG.internal_dram_bytes - dram_buffer_demand(CFG, metadata_budget(ftl_layout(int(9.6 * GB), CFG)))
    tl = simulate(plan(inter=free * 1.5, kss=1e6), CFG, "ms")
    assert tl.counters["taxid_passes"] == 2


def test_spill_events_use_the_link():
    p = StagePlan([BucketLoad(1000, 160, 10**6, spill_bytes=1000)])
    tl = simulate(p, CFG, "ms")
    spills = [e for e in tl.events if e.stage == "spill"]
    assert len(spills) == 2 and all(e.resource == "link" for e in spills)


def test_unknown_mode():
    with pytest.raises(ConfigError):
        simulate(plan(), CFG, "fast")


def test_deterministic_and_serializable():
    a = simulate(plan(inter=1e8, kss=1e6), CFG, "ms")
    b = simulate(plan(inter=1e8, kss=1e6), CFG, "ms")
    assert a.to_csv() == b.to_csv()
    assert Timeline.from_dict(json.loads(json.dumps(a.to_dict()))).to_csv() == a.to_csv()
    assert a.to_csv().splitlines()[0] == "stage,resource,start,end,bytes"
    assert set(a.stage_totals) <= set(STAGES)


def test_stage_plan_round_trip():
    p = plan(inter=1e8, kss=1e6)
    assert StagePlan.from_dict(json.loads(json.dumps(p.to_dict()))) == p


# -- energy --------------------------------------------------------------------

def test_empty_timeline_energy():
    assert energy(Timeline([], "ms", ["host", "accel"]), PowerModel()) == 0.0


def test_accelerator_share():
    tl = Timeline([Event("intersect", "accel", 0.0, 1.0)], "ms", ["accel"])
    assert energy_breakdown(tl, PowerModel())["accelerator"] == pytest.approx(7.658e-3)


def test_energy_definition():
    tl = Timeline([Event("sort", "host", 0.0, 1.0), Event("transfer", "link", 1.0, 3.0)],
                  "ms", ["host", "link"])
    pm = PowerModel()
    want = (pm.host_cpu.active * 1 + pm.host_cpu.idle * 2
            + pm.external_link.active * 2 + pm.external_link.idle * 1)
    assert energy(tl, pm) == pytest.approx(want)
    assert tl.energy_joules == pytest.approx(want)


def test_energy_linearity_in_active_power():
    tl = simulate(plan(inter=1e8, kss=1e6), CFG, "ms")
    pm = PowerModel()
    components = {"host": "host_cpu", "link": "external_link", "dram": "internal_dram",
                  "accel": "accelerator", "cores": "controller_cores"}
    active_busy = sum(
        getattr(pm, "nand_per_channel" if r.startswith("ch") else components[r]).active * tl.busy_time(r)
        for r in tl.resources if r.startswith("ch") or r in components
    )
    # doubling every active power adds the active*busy terms once more
    assert energy(tl, pm.scaled(2.0)) - energy(tl, pm) == pytest.approx(active_busy, rel=1e-9)
