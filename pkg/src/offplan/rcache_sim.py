"""Trace-driven simulation of the replication cache (rCache).

The rCache is the only memory layer allowed to hold gathered (replicated)
chunk data; it has ``n_block`` chunk-sized storage blocks.  The simulator
walks the forward node sets and then the mirrored backward node sets.  Any
chunk a node needs that is not resident is gathered (one gather op, full
chunk volume); when the cache is full, the resident, unpinned chunk whose
next use lies farthest in the remaining walk is evicted — the offline-optimal
replacement rule, which is valid here because the full calling order is known
before training.  Ties break toward the lowest chunk id.

During the backward pass a chunk is pinned from its first backward access
until its reduce position: its blocks hold accumulating gradients that must
survive until the reduce-scatter fires, so they are not eviction candidates.
At the reduce position the chunk's gradient volume is charged, and chunks
whose home is CPU additionally pay the offload transfer.  A pinned set that
outgrows ``n_block`` means the cache cannot execute the trace at all and
raises :class:`InfeasibleCacheError`.

Gather (GPU-GPU) traffic is assumed to be prefetched and overlapped with
computation, so it appears in the byte counters but never in the estimated
seconds; only GPU<->CPU transfers and optimizer updates contribute time.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from math import inf
from types import MappingProxyType
from typing import Hashable, Mapping, Sequence

from .chunking import ChunkTrace
from .errors import InfeasibleCacheError, OracleLimitError, ValidationError
from .profiles import HardwareProfile, PrecisionSpec


class Device(str, Enum):
    GPU = "gpu"
    CPU = "cpu"


@dataclass(frozen=True)
class CachePolicyInput:
    """Everything the simulator needs for one training step.

    ``placement`` maps every chunk id in the trace to its home device.  When
    ``hardware`` is provided the report includes estimated offload/update
    seconds for ``gpu_count`` processes; otherwise those fields are zero.
    """

    trace: ChunkTrace
    n_block: int
    chunk_length: int
    placement: Mapping[int, Device]
    precision: PrecisionSpec
    gpu_count: int
    hardware: HardwareProfile | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "placement", MappingProxyType(dict(self.placement)))


@dataclass(frozen=True)
class SimReport:
    """Counters from one simulated training step.

    Byte counters are aggregate volumes (full chunk bytes per primitive, not
    per-GPU shards); ``g2c_shard_bytes``/``c2g_shard_bytes`` expose the
    per-GPU share of the offload traffic for inspection.
    """

    gather_ops: int
    gather_bytes: int
    reduce_bytes: int
    g2c_bytes: int
    c2g_bytes: int
    replaced_bytes: int
    peak_rcache_blocks: int
    estimated_offload_seconds: float
    estimated_update_seconds: float
    g2c_shard_bytes: int
    c2g_shard_bytes: int


def simulate(inp: CachePolicyInput) -> SimReport:
    """Run one forward+backward step through the cache and count traffic."""
    if inp.n_block < 1:
        raise ValidationError("n_block must be >= 1")
    if inp.chunk_length < 1:
        raise ValidationError("chunk_length must be >= 1")
    if inp.gpu_count < 1:
        raise ValidationError("gpu_count must be >= 1")

    trace = inp.trace
    chunk_ids = trace.chunk_ids
    missing = sorted(cid for cid in chunk_ids if cid not in inp.placement)
    if missing:
        raise ValidationError(f"placement missing chunk ids {missing}")

    working = max((len(ids) for ids in trace.forward), default=0)
    if inp.n_block < working:
        raise InfeasibleCacheError(
            f"n_block={inp.n_block} is below the working set of {working} chunks "
            "required by a single coarse node"
        )

    chunk_bytes = inp.precision.compute_bytes * inp.chunk_length
    walk: list[frozenset[int]] = list(trace.forward) + list(trace.backward)
    n_forward = len(trace.forward)

    # Future-occurrence queues drive the farthest-next-use eviction rule.
    occurrences: dict[int, deque[int]] = {cid: deque() for cid in chunk_ids}
    for pos, ids in enumerate(walk):
        for cid in ids:
            occurrences[cid].append(pos)

    resident: set[int] = set()
    pinned: set[int] = set()
    gathered_once: set[int] = set()
    gather_ops = 0
    replaced = 0
    reduce_ops = 0
    g2c_units = 0
    c2g_units = 0
    peak = 0

    def next_use(cid: int) -> float:
        q = occurrences[cid]
        return q[0] if q else inf

    for pos, needed in enumerate(walk):
        in_backward = pos >= n_forward
        bpos = pos - n_forward
        for cid in needed:
            occurrences[cid].popleft()

        for cid in sorted(needed):
            if cid in resident:
                continue
            if len(resident) >= inp.n_block:
                candidates = [c for c in resident if c not in needed and c not in pinned]
                if not candidates:
                    raise InfeasibleCacheError(
                        f"pinned chunks fill all {inp.n_block} blocks at backward "
                        f"position {bpos}; the trace cannot execute with this n_block"
                    )
                victim = max(candidates, key=lambda c: (next_use(c), -c))
                resident.discard(victim)
            resident.add(cid)
            gather_ops += 1
            if cid in gathered_once:
                replaced += 1
            gathered_once.add(cid)
            if inp.placement[cid] is Device.CPU:
                c2g_units += 1
        peak = max(peak, len(resident))

        if in_backward:
            pinned |= needed
            for cid in needed:
                if trace.reduce_after[cid] == bpos:
                    reduce_ops += 1
                    if inp.placement[cid] is Device.CPU:
                        g2c_units += 1
                    pinned.discard(cid)

    g2c_bytes = g2c_units * chunk_bytes
    c2g_bytes = c2g_units * chunk_bytes
    offload_s = 0.0
    update_s = 0.0
    if inp.hardware is not None:
        rates = inp.hardware.rates(inp.gpu_count)
        offload_s = g2c_bytes / rates.b_g2c + c2g_bytes / rates.b_c2g
        # Update velocities were profiled in bytes/s over optimizer-width
        # elements, so a chunk of C elements streams optimizer_bytes*C bytes.
        os_chunk_bytes = inp.precision.optimizer_bytes * inp.chunk_length
        n_gpu_home = sum(1 for cid in chunk_ids if inp.placement[cid] is Device.GPU)
        n_cpu_home = len(chunk_ids) - n_gpu_home
        update_s = (
            n_gpu_home * os_chunk_bytes / rates.v_g
            + n_cpu_home * os_chunk_bytes / rates.v_c
        )

    n = inp.gpu_count
    return SimReport(
        gather_ops=gather_ops,
        gather_bytes=gather_ops * chunk_bytes,
        reduce_bytes=reduce_ops * chunk_bytes,
        g2c_bytes=g2c_bytes,
        c2g_bytes=c2g_bytes,
        replaced_bytes=replaced * chunk_bytes,
        peak_rcache_blocks=peak,
        estimated_offload_seconds=offload_s,
        estimated_update_seconds=update_s,
        g2c_shard_bytes=-(-g2c_bytes // n),
        c2g_shard_bytes=-(-c2g_bytes // n),
    )


def replaced_bytes(
    trace: ChunkTrace,
    n_block: int,
    chunk_length: int,
    precision: PrecisionSpec = PrecisionSpec(),
) -> int:
    """Bytes re-gathered after eviction during one step.

    Placement does not affect replacement decisions, so the walk runs with
    every chunk homed on GPU.
    """
    placement = {cid: Device.GPU for cid in trace.chunk_ids}
    report = simulate(
        CachePolicyInput(
            trace=trace,
            n_block=n_block,
            chunk_length=chunk_length,
            placement=placement,
            precision=precision,
            gpu_count=1,
        )
    )
    return report.replaced_bytes


# ---------------------------------------------------------------------------
# Flat-walk engines and the exhaustive oracle
# ---------------------------------------------------------------------------


def belady_misses(sequence: Sequence[Hashable], n_block: int) -> int:
    """Miss count of farthest-next-use replacement over a flat access walk."""
    if n_block < 1:
        raise ValidationError("n_block must be >= 1")
    occurrences: dict[Hashable, deque[int]] = {}
    for pos, item in enumerate(sequence):
        occurrences.setdefault(item, deque()).append(pos)
    resident: set[Hashable] = set()
    misses = 0
    for item in sequence:
        occurrences[item].popleft()
        if item in resident:
            continue
        misses += 1
        if len(resident) >= n_block:
            victim = max(
                resident,
                key=lambda c: (occurrences[c][0] if occurrences[c] else inf, _tie(c)),
            )
            resident.discard(victim)
        resident.add(item)
    return misses


def _tie(item: Hashable):
    # Lowest-id tie break, mirrored for max(); falls back to repr for
    # non-numeric ids.
    if isinstance(item, (int, float)):
        return -item
    return tuple(-ord(ch) for ch in str(item))


def lru_misses(sequence: Sequence[Hashable], n_block: int) -> int:
    """Miss count of least-recently-used replacement; test foil only."""
    if n_block < 1:
        raise ValidationError("n_block must be >= 1")
    last_used: dict[Hashable, int] = {}
    resident: set[Hashable] = set()
    misses = 0
    for pos, item in enumerate(sequence):
        if item not in resident:
            misses += 1
            if len(resident) >= n_block:
                victim = min(resident, key=lambda c: last_used[c])
                resident.discard(victim)
            resident.add(item)
        last_used[item] = pos
    return misses


ORACLE_MAX_ACCESSES = 20
ORACLE_MAX_DISTINCT = 8


def oracle_min_misses(sequence: Sequence[Hashable], n_block: int) -> int:
    """Exhaustive minimum miss count over all eviction schedules.

    Enumerates every reachable cache content after each access, so it is the
    ground truth the farthest-next-use policy is checked against.  Limited to
    small instances; larger ones raise :class:`OracleLimitError`.
    """
    if n_block < 1:
        raise ValidationError("n_block must be >= 1")
    if len(sequence) > ORACLE_MAX_ACCESSES:
        raise OracleLimitError(
            f"oracle limited to {ORACLE_MAX_ACCESSES} accesses, got {len(sequence)}"
        )
    if len(set(sequence)) > ORACLE_MAX_DISTINCT:
        raise OracleLimitError(
            f"oracle limited to {ORACLE_MAX_DISTINCT} distinct chunks, "
            f"got {len(set(sequence))}"
        )

    states: dict[frozenset, int] = {frozenset(): 0}
    for item in sequence:
        nxt: dict[frozenset, int] = {}

        def record(state: frozenset, misses: int) -> None:
            if misses < nxt.get(state, inf):
                nxt[state] = misses

        for state, misses in states.items():
            if item in state:
                record(state, misses)
            elif len(state) < n_block:
                record(state | {item}, misses + 1)
            else:
                for victim in state:
                    record((state - {victim}) | {item}, misses + 1)
        states = nxt
    return min(states.values()) if states else 0
