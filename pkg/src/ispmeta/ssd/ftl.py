"""Compact logical-to-physical mapping for sequentially stored databases.

The database is written evenly and sequentially across channels (page
``p`` goes to channel ``p mod channels``), so a read-only mapping needs
only the start LPA->PPA pair, the database size and the list of physical
blocks.  The start PPA already names the first block, so the block list
holds the blocks that follow it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import CapacityError, RangeError
from .config import SsdConfig

ENTRY_BYTES = 4          # one PBA
ACCESS_COUNTER_BYTES = 4
# start LPA (4) + start PPA (4) + database size (8)
HEADER_BYTES = 16
REGULAR_L2P_GRANULE = 4096


@dataclass(frozen=True)
class CompactMapping:
    start_lpa: int
    start_ppa: int
    db_bytes: int
    block_bytes: int
    page_bytes: int
    channels: int
    block_sequence: tuple[int, ...]

    @property
    def pages(self) -> int:
        return math.ceil(self.db_bytes / self.page_bytes)

    @property
    def used_blocks(self) -> int:
        """Physical blocks holding database data."""
        return math.ceil(self.db_bytes / self.block_bytes)

    @property
    def pages_per_block(self) -> int:
        return self.block_bytes // self.page_bytes

    @property
    def first_block(self) -> int:
        return self.start_ppa // self.pages_per_block

    def blocks(self) -> list[int]:
        if self.used_blocks == 0:
            return []
        return [self.first_block, *self.block_sequence]

    @property
    def l2p_bytes(self) -> int:
        return HEADER_BYTES + ENTRY_BYTES * len(self.block_sequence)

    def channel_of(self, lpa: int) -> int:
        rel = lpa - self.start_lpa
        if not 0 <= rel < self.pages:
            raise RangeError(f"LPA {lpa} outside the mapped database")
        return rel % self.channels

    def page_offset(self, lpa: int) -> int:
        """Page offset inside the channel's active block.

        Pages stripe round-robin over channels, so every channel's active
        block sits at the same offset.
        """
        rel = lpa - self.start_lpa
        if not 0 <= rel < self.pages:
            raise RangeError(f"LPA {lpa} outside the mapped database")
        return (rel // self.channels) % self.pages_per_block


def ftl_layout(db_bytes: int, config: SsdConfig, start_lpa: int = 0, start_pba: int = 0) -> CompactMapping:
    if db_bytes < 0:
        raise RangeError("db_bytes must be >= 0")
    if db_bytes > config.capacity_bytes:
        raise CapacityError(
            f"database of {db_bytes} bytes exceeds device capacity {config.capacity_bytes}"
        )
    n_blocks = math.ceil(db_bytes / config.block_bytes)
    ppb = config.pages_per_block
    seq = tuple(range(start_pba + 1, start_pba + n_blocks)) if n_blocks else ()
    return CompactMapping(
        start_lpa=start_lpa,
        start_ppa=start_pba * ppb,
        db_bytes=db_bytes,
        block_bytes=config.block_bytes,
        page_bytes=config.page_bytes,
        channels=config.channels,
        block_sequence=seq,
    )


def metadata_budget(mapping: CompactMapping, config: SsdConfig | None = None) -> int:
    """Bytes of FTL metadata kept in internal DRAM during ISP: the compact
    L2P plus a read-disturb access counter per used block."""
    return mapping.l2p_bytes + ACCESS_COUNTER_BYTES * mapping.used_blocks


def regular_l2p_bytes(db_bytes: int) -> int:
    """Conventional page-level table: 4 bytes per 4 KiB."""
    return ENTRY_BYTES * math.ceil(db_bytes / REGULAR_L2P_GRANULE)
