"""Energy from a timeline: active power while busy, idle power otherwise."""

from __future__ import annotations

from .config import PowerModel
from .sim import Timeline


def component_of(resource: str) -> str | None:
    if resource.startswith("ch"):
        return "nand_per_channel"
    return {
        "host": "host_cpu",
        "link": "external_link",
        "dram": "internal_dram",
        "accel": "accelerator",
        "cores": "controller_cores",
    }.get(resource)


def energy_breakdown(timeline: Timeline, power: PowerModel) -> dict[str, float]:
    total = timeline.total
    out: dict[str, float] = {}
    for res in timeline.resources:
        comp = component_of(res)
        if comp is None:
            continue
        p = power.component(comp)
        busy = timeline.busy_time(res)
        out[comp] = out.get(comp, 0.0) + p.active * busy + p.idle * (total - busy)
    return out


def energy(timeline: Timeline, power: PowerModel) -> float:
    """Total joules; also stored on ``timeline.energy_joules``."""
    joules = sum(energy_breakdown(timeline, power).values())
    timeline.energy_joules = joules
    return joules
