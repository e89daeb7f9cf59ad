"""Packing parameters into fixed-length chunks and the chunk-level trace.

Single-use parameters, ordered by first forward use, are packed greedily into
chunks of one fixed element length: a parameter is appended to the current
chunk if it fits, otherwise the chunk is closed and a new one opened.  A
parameter never straddles two chunks, so trailing padding is the only waste.
Multi-use parameters never enter chunks; they are split off by
:func:`partition_multiuse` and costed separately as replicated state.

:func:`build_chunk_trace` lifts the coarse parameter trace to chunk ids and
adds the gradient-reduce schedule: a chunk's gradients are complete — and the
reduce collective is charged — at the last backward position that touches it.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence

from .errors import ChunkTooSmallError, ValidationError
from .profiles import AccessTrace, ModelProfile, ParameterSpec


@dataclass(frozen=True)
class ChunkMember:
    param_id: str
    offset: int
    numel: int


@dataclass(frozen=True)
class Chunk:
    """One fixed-length buffer holding a run of consecutive parameters."""

    id: int
    length: int
    members: tuple[ChunkMember, ...]

    @property
    def used_elements(self) -> int:
        return sum(m.numel for m in self.members)


@dataclass(frozen=True)
class ChunkLayout:
    chunk_length: int
    chunks: tuple[Chunk, ...]
    param_to_chunk: Mapping[str, int]
    total_elements: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "param_to_chunk", MappingProxyType(dict(self.param_to_chunk)))

    @property
    def n_chunks(self) -> int:
        return len(self.chunks)

    @property
    def aggregate_length(self) -> int:
        """Total elements across all chunk buffers (packed elements plus padding)."""
        return self.n_chunks * self.chunk_length


@dataclass(frozen=True)
class ChunkTrace:
    """Per-coarse-node chunk sets for the forward pass, the mirrored backward
    pass, and the backward position at which each chunk's reduce fires."""

    forward: tuple[frozenset[int], ...]
    backward: tuple[frozenset[int], ...]
    reduce_after: Mapping[int, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "reduce_after", MappingProxyType(dict(self.reduce_after)))

    @property
    def chunk_ids(self) -> frozenset[int]:
        return frozenset(self.reduce_after)


def partition_multiuse(
    profile: ModelProfile,
) -> tuple[int, tuple[ParameterSpec, ...]]:
    """Split off multi-use parameters and order the rest by first forward use.

    Returns the total element count of the excluded (shared) parameters and
    the single-use packing sequence.  Parameters first used by the same
    operator keep their declaration order, so the sequence is deterministic.
    """
    first_use: dict[str, int] = {}
    for idx, op in enumerate(profile.operators):
        for pid in op.param_ids:
            first_use.setdefault(pid, idx)
    shared_elements = sum(p.numel for p in profile.parameters if p.shared)
    decl = {p.id: i for i, p in enumerate(profile.parameters)}
    single = [p for p in profile.parameters if not p.shared]
    single.sort(key=lambda p: (first_use[p.id], decl[p.id]))
    return shared_elements, tuple(single)


def pack_chunks(sequence: Sequence[ParameterSpec], chunk_length: int) -> ChunkLayout:
    """Greedy in-order packing of ``sequence`` into chunks of ``chunk_length``."""
    if chunk_length < 1:
        raise ValidationError("chunk_length must be >= 1")
    for p in sequence:
        if p.numel > chunk_length:
            raise ChunkTooSmallError(
                f"chunk_length {chunk_length} cannot hold parameter "
                f"'{p.id}' with numel {p.numel}"
            )

    chunks: list[Chunk] = []
    param_to_chunk: dict[str, int] = {}
    members: list[ChunkMember] = []
    offset = 0

    def close() -> None:
        nonlocal members, offset
        if members:
            chunks.append(Chunk(len(chunks), chunk_length, tuple(members)))
            members = []
            offset = 0

    for p in sequence:
        if offset + p.numel > chunk_length:
            close()
        param_to_chunk[p.id] = len(chunks)
        members.append(ChunkMember(p.id, offset, p.numel))
        offset += p.numel
    close()

    return ChunkLayout(
        chunk_length=chunk_length,
        chunks=tuple(chunks),
        param_to_chunk=param_to_chunk,
        total_elements=sum(p.numel for p in sequence),
    )


def waste_rate(layout: ChunkLayout) -> float:
    """Fraction of chunk storage lost to padding, in [0, 1)."""
    agg = layout.aggregate_length
    if agg == 0:
        return 0.0
    return (agg - layout.total_elements) / agg


def build_chunk_trace(trace: AccessTrace, layout: ChunkLayout) -> ChunkTrace:
    """Map coarse parameter nodes to chunk-id sets and schedule reduces.

    ``backward`` is the elementwise reverse of ``forward``; ``reduce_after``
    records, per chunk, the last backward position touching it.
    """
    forward = []
    for node in trace.coarse_ops:
        ids = set()
        for pid in node:
            if pid not in layout.param_to_chunk:
                raise ValidationError(
                    f"parameter '{pid}' in the access trace is not mapped to any chunk"
                )
            ids.add(layout.param_to_chunk[pid])
        forward.append(frozenset(ids))
    backward = tuple(reversed(forward))
    reduce_after: dict[int, int] = {}
    for pos, ids in enumerate(backward):
        for cid in ids:
            reduce_after[cid] = pos
    return ChunkTrace(tuple(forward), backward, reduce_after)


def working_set_blocks(trace: ChunkTrace) -> int:
    """Largest chunk set any single coarse node needs resident at once."""
    if not trace.forward:
        return 0
    return max(len(ids) for ids in trace.forward)
