"""Offset-partitioned address table mapping tracker statuses to SLICEs.

The table is the preloaded lookup structure a restore controller walks on
power loss: a tracker-region entry listing the SLICEs hosting tracker
state (always stored), and per tracker a contiguous block of rows indexed
by status. Row ``base + 0`` is reserved as the zero/no-action row; row
``base + s`` holds the SLICE addresses covering the live set of the
resume point of completed-cycle boundary ``s``. Store-all functions get a
single row with all of their SLICEs. Each tracker also carries a result
row used to hold a finished function's outputs until the program ends.

Storage accounting treats the table as a packed address pool plus a
(start, length) directory, 32 bits per entry either way; tables whose
widest tracked counter stays below 8 bits are folded into logic and cost
no BRAM, which is what synthesis does to small lookup structures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import struct

from .liveness import LiveSetTable, TrackerSpec, TRACKED
from .placement import Placement, SliceAddress
from .program import ProgramError, ScheduledProgram

BRAM_BITS = 18432          # one block RAM holds 18 Kb
ENTRY_BITS = 32            # two 16-bit coordinates per address
DIRECTORY_BITS = 32        # 16-bit start + 16-bit length per row


class ControlUnitError(ProgramError):
    pass


class UnplacedRegisterError(ControlUnitError):
    pass


@dataclass(frozen=True)
class ControlUnitTable:
    tracker_region: Tuple[SliceAddress, ...]
    offsets: Dict[str, int]                      # tracker -> base row index
    rows: Tuple[Tuple[SliceAddress, ...], ...]   # global row list
    status_rows: Dict[str, int]                  # tracker -> highest valid status
    result_rows: Dict[str, int]                  # tracker -> result-hold row index
    table_width: int                             # widest tracked counter, 0 if none
    entry_width: int = ENTRY_BITS

    def row(self, fid: str, status: int) -> Tuple[SliceAddress, ...]:
        hi = self.status_rows[fid]
        if not 0 <= status <= hi:
            raise ControlUnitError(
                f"corrupt status {status} for {fid}: row range is [0, {hi}]")
        return self.rows[self.offsets[fid] + status]

    def result_row(self, fid: str) -> Tuple[SliceAddress, ...]:
        return self.rows[self.result_rows[fid]]

    @property
    def n_rows(self) -> int:
        return 1 + len(self.rows)  # tracker region directory entry + rows

    @property
    def pool_entries(self) -> int:
        return len(self.tracker_region) + sum(len(r) for r in self.rows)

    @property
    def total_bits(self) -> int:
        return DIRECTORY_BITS * self.n_rows + self.entry_width * self.pool_entries


def build_table(program: ScheduledProgram, specs: Mapping[str, TrackerSpec],
                placement: Placement,
                live_tables: Mapping[str, LiveSetTable]) -> ControlUnitTable:
    """Assemble the address table from live sets and placement.

    Tracked function, status s in [1, body_length]: SLICEs of the live set
    at resume_point(s - 1). Store-all function: one row with every SLICE
    the function touches. Every function: a result row with the SLICEs of
    its result registers.
    """

    def slices_of(regs) -> Tuple[SliceAddress, ...]:
        out = set()
        for reg in regs:
            addrs = placement.regs.get(reg)
            if addrs is None:
                raise UnplacedRegisterError(f"unplaced register {reg}")
            out.update(addrs)
        return tuple(sorted(out))

    region_slices = sorted({a for addrs in placement.trackers.values() for a in addrs})

    rows: List[Tuple[SliceAddress, ...]] = []
    offsets: Dict[str, int] = {}
    status_rows: Dict[str, int] = {}
    result_rows: Dict[str, int] = {}
    width = 0
    for f in program.functions:
        spec = specs[f.id]
        table = live_tables[f.id]
        offsets[f.id] = len(rows)
        rows.append(())  # zero row: no action
        if spec.mode == TRACKED:
            width = max(width, spec.width)
            for status in range(1, spec.body_length + 1):
                rows.append(slices_of(table.live[table.resume[status - 1]]))
            status_rows[f.id] = spec.body_length
        else:
            region = f.region
            all_regs = set(region.written_regs()) | set(region.live_in)
            rows.append(slices_of(all_regs))
            status_rows[f.id] = 1
        result_rows[f.id] = len(rows)
        rows.append(slices_of(f.result_regs))

    return ControlUnitTable(
        tracker_region=tuple(region_slices),
        offsets=offsets, rows=tuple(rows),
        status_rows=status_rows, result_rows=result_rows,
        table_width=width)


def lookup(table: ControlUnitTable, statuses: Mapping[str, int]) -> List[SliceAddress]:
    """SLICEs to store for a snapshot: tracker region plus each nonzero
    tracker's row. Deduplicated and sorted."""
    out = set(table.tracker_region)
    for fid, status in statuses.items():
        if status == 0:
            continue
        out.update(table.row(fid, status))
    return sorted(out)


def bram_usage(table: ControlUnitTable) -> int:
    """Block RAMs consumed by the table under the packed layout.

    A table indexed by counters narrower than 8 bits lives in logic (cost
    reported as zero); otherwise directory and pool bits fill 18 Kb blocks.
    """
    if table.table_width < 8:
        return 0
    return -(-table.total_bits // BRAM_BITS)


def serialize_table(table: ControlUnitTable) -> bytes:
    """Binary form: directory then pool, little-endian throughout.

    Header: u32 row count (tracker region first), u32 pool entry count.
    Directory: per row, u16 pool start + u16 length.
    Pool: per address, u16 x + u16 y.
    """
    pool: List[SliceAddress] = []
    directory: List[Tuple[int, int]] = []
    for row in (table.tracker_region,) + table.rows:
        directory.append((len(pool), len(row)))
        pool.extend(row)
    out = [struct.pack("<II", len(directory), len(pool))]
    for start, length in directory:
        out.append(struct.pack("<HH", start, length))
    for addr in pool:
        out.append(struct.pack("<HH", addr.x, addr.y))
    return b"".join(out)
