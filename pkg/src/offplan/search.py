"""Configuration search: budget, chunk length, and the greedy allocation.

The budget is the usable fraction of GPU capacity after reserving buffers and
a fragmentation-inflated activation estimate.  The chunk length is chosen by
simulating each candidate and keeping the one that minimizes the bytes
replaced in the cache during one step.  Free memory is then allocated
greedily between two uses, ranked by their normalized benefit per byte:

* ``benefit_I`` — one extra cache block keeps one more chunk resident across
  the forward/backward turnaround, saving its offload round trip;
* ``benefit_J`` — homing one chunk (and its optimizer update) on GPU removes
  its offload traffic and swaps a CPU optimizer update for a GPU one.

Both benefits are linear in the chunk length, so for a fixed process count
one action class dominates outright and the allocation runs in two phases,
which keeps the decision trace readable.

Unit conventions: chunk lengths enter bandwidth terms as bytes (element count
times the printed precision width).  Update velocities were profiled in
bytes/s streaming optimizer-width elements, so updating a chunk of C elements
moves ``optimizer_bytes * C`` bytes; this conversion follows the
:class:`~offplan.profiles.PrecisionSpec` in use and so is configurable.

Shared (multi-use) parameters never enter chunks: they are costed as
replicated compute state plus a partitioned state shard per GPU and charged
against the budget before any allocation.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Sequence

from .chunking import (
    ChunkTrace,
    build_chunk_trace,
    pack_chunks,
    partition_multiuse,
    waste_rate,
    working_set_blocks,
)
from .cost_model import _ceil_div, chunk_footprint
from .errors import NoFeasibleCandidateError, ProfileFormatError, ValidationError
from .profiles import (
    FORMAT_VERSION,
    AccessTrace,
    HardwareProfile,
    ModelProfile,
    PrecisionSpec,
    coarsen_graph,
)
from .rcache_sim import CachePolicyInput, Device, SimReport, replaced_bytes, simulate

logger = logging.getLogger(__name__)

DEFAULT_F_ALLOC = 0.95
DEFAULT_F_FRAG = 1.25
DEFAULT_CANDIDATE_COUNT = 16


@dataclass(frozen=True)
class BudgetSpec:
    """Resolved memory budget: the usable fraction, the activation reserve
    multiplier, and the derived allowed bytes."""

    f_alloc: float
    f_frag: float
    u_allowed: float

    def __post_init__(self) -> None:
        if not 0 < self.f_alloc <= 1:
            raise ValidationError("f_alloc must be in (0, 1]")
        if self.f_frag < 1:
            raise ValidationError("f_frag must be >= 1")
        if self.u_allowed < 0:
            raise ValidationError("u_allowed must be >= 0")


def allowed_memory(
    capacity_bytes: float,
    buffer_bytes: float,
    activation_bytes: float,
    f_alloc: float = DEFAULT_F_ALLOC,
    f_frag: float = DEFAULT_F_FRAG,
) -> float:
    """Usable planner budget after reserving buffers and inflated activations.

    Clamps to zero (with a warning) when the reserves alone exceed capacity.
    """
    for label, val in (
        ("capacity_bytes", capacity_bytes),
        ("buffer_bytes", buffer_bytes),
        ("activation_bytes", activation_bytes),
    ):
        if val < 0:
            raise ValidationError(f"{label} must be >= 0")
    if not 0 < f_alloc <= 1:
        raise ValidationError("f_alloc must be in (0, 1]")
    if f_frag < 1:
        raise ValidationError("f_frag must be >= 1")
    if capacity_bytes < buffer_bytes + f_frag * activation_bytes:
        warnings.warn(
            "GPU capacity is below the buffer + activation reserve; "
            "allowed memory clamps to 0",
            RuntimeWarning,
            stacklevel=2,
        )
        return 0.0
    return f_alloc * (capacity_bytes - buffer_bytes - f_frag * activation_bytes)


def shared_state_bytes(
    shared_elements: int, gpus: int, precision: PrecisionSpec = PrecisionSpec()
) -> int:
    """Per-GPU cost of multi-use parameters: a replicated compute copy plus a
    partitioned parameter+optimizer shard (gradient-partitioning treatment)."""
    if shared_elements <= 0:
        return 0
    lc = precision.compute_bytes
    return lc * shared_elements + _ceil_div(
        (lc + precision.optimizer_state_bytes) * shared_elements, gpus
    )


def benefit_I(
    n: int,
    chunk_length: int,
    hardware: HardwareProfile,
    precision: PrecisionSpec = PrecisionSpec(),
) -> float:
    """Normalized time saved per byte by one extra cache block."""
    rates = hardware.rates(n)
    c_bytes = precision.compute_bytes * chunk_length
    return (c_bytes / rates.b_g2c + c_bytes / rates.b_c2g) / precision.compute_bytes


def benefit_J(
    n: int,
    chunk_length: int,
    hardware: HardwareProfile,
    precision: PrecisionSpec = PrecisionSpec(),
) -> float:
    """Normalized time saved per byte by homing one chunk on GPU."""
    rates = hardware.rates(n)
    lc = precision.compute_bytes
    state_bytes = lc + precision.optimizer_state_bytes
    c_bytes = lc * chunk_length
    os_bytes = precision.optimizer_bytes * chunk_length
    saved = (
        os_bytes / rates.b_c2g
        + lc * benefit_I(n, chunk_length, hardware, precision)
        + c_bytes / rates.b_g2c
        + os_bytes / rates.v_c
        - os_bytes / rates.v_g
    )
    return n / state_bytes * saved


@dataclass(frozen=True)
class SweepPoint:
    """One chunk-length candidate: packing quality and simulated replacement."""

    chunk_length: int
    n_chunks: int
    waste_rate: float
    replaced_bytes: int
    n_block: int


def default_chunk_candidates(
    profile: ModelProfile, gpus: int, count: int = DEFAULT_CANDIDATE_COUNT
) -> tuple[int, ...]:
    """Geometric grid from the largest single-use parameter up to the
    per-GPU share of the packable elements."""
    _, single = partition_multiuse(profile)
    if not single:
        return ()
    lo = max(p.numel for p in single)
    hi = max(lo, _ceil_div(sum(p.numel for p in single), gpus))
    if count < 2 or hi == lo:
        return (lo,)
    ratio = (hi / lo) ** (1 / (count - 1))
    grid = {int(round(lo * ratio**k)) for k in range(count)}
    grid.add(lo)
    grid.add(hi)
    return tuple(sorted(grid))


def sweep_chunk_lengths(
    profile: ModelProfile,
    trace: AccessTrace,
    candidates: Iterable[int],
    provisional_budget: float,
    precision: PrecisionSpec = PrecisionSpec(),
) -> tuple[SweepPoint, ...]:
    """Pack, trace, and simulate every feasible chunk-length candidate.

    For each candidate the cache gets as many blocks as the provisional
    budget affords, never fewer than the working set and never more than the
    chunk count.  Candidates smaller than the largest single-use parameter
    are skipped with a note.
    """
    _, single = partition_multiuse(profile)
    if not single:
        raise NoFeasibleCandidateError("profile has no single-use parameters to pack")
    max_numel = max(p.numel for p in single)

    points = []
    for length in sorted({int(c) for c in candidates}):
        if length < max_numel:
            logger.info(
                "skipping chunk-length candidate %d: below largest parameter (%d)",
                length, max_numel,
            )
            continue
        layout = pack_chunks(single, length)
        chunk_trace = build_chunk_trace(trace, layout)
        affordable = int(provisional_budget // (precision.compute_bytes * length))
        n_block = min(
            layout.n_chunks,
            max(1, working_set_blocks(chunk_trace), affordable),
        )
        points.append(
            SweepPoint(
                chunk_length=length,
                n_chunks=layout.n_chunks,
                waste_rate=waste_rate(layout),
                replaced_bytes=replaced_bytes(chunk_trace, n_block, length, precision),
                n_block=n_block,
            )
        )
    if not points:
        raise NoFeasibleCandidateError(
            "no chunk-length candidate can hold the largest single-use parameter"
        )
    return tuple(points)


def search_chunk_length(
    profile: ModelProfile,
    trace: AccessTrace,
    candidates: Iterable[int],
    provisional_budget: float,
    precision: PrecisionSpec = PrecisionSpec(),
) -> int:
    """Chunk length minimizing replaced bytes; ties prefer lower waste, then
    the smaller length."""
    points = sweep_chunk_lengths(profile, trace, candidates, provisional_budget, precision)
    best = min(points, key=lambda p: (p.replaced_bytes, p.waste_rate, p.chunk_length))
    return best.chunk_length


@dataclass(frozen=True)
class Decision:
    """One greedy allocation step: what was bought, at which benefit value,
    and the budget left afterwards."""

    action: str
    benefit: float
    budget_after: float


@dataclass(frozen=True)
class Plan:
    """The emitted placement plan.

    ``estimates`` is None only when the budget forced the cache below its
    working-set floor, in which case the configuration cannot execute and no
    meaningful step simulation exists.
    """

    chunk_length: int
    n_block: int
    chunk_homes: Mapping[int, Device]
    shared_strategy_bytes: int
    shared_param_ids: tuple[str, ...]
    estimates: SimReport | None
    decision_trace: tuple[Decision, ...]

    def __post_init__(self) -> None:
        if self.n_block < 1:
            raise ValidationError("n_block must be >= 1")
        object.__setattr__(self, "chunk_homes", MappingProxyType(dict(self.chunk_homes)))

    @property
    def gpu_home_chunks(self) -> int:
        return sum(1 for d in self.chunk_homes.values() if d is Device.GPU)


def build_plan(
    profile: ModelProfile,
    hardware: HardwareProfile,
    precision: PrecisionSpec = PrecisionSpec(),
    *,
    f_alloc: float = DEFAULT_F_ALLOC,
    f_frag: float = DEFAULT_F_FRAG,
    u_allowed: float | None = None,
    candidates: Sequence[int] | None = None,
) -> Plan:
    """Search the full configuration and emit a plan with step estimates.

    The budget first pays for the shared-parameter state and the working-set
    cache floor.  If it cannot cover that floor, the cache is clamped to the
    largest affordable block count (at least one), every chunk stays on CPU,
    and the plan is returned as the degraded fallback.  Otherwise the
    remaining bytes go to chunk uploads and cache blocks in benefit order.
    """
    n = hardware.gpu_count
    trace = coarsen_graph(profile)
    shared_elements, single = partition_multiuse(profile)
    if u_allowed is None:
        u_allowed = allowed_memory(
            hardware.gpu_capacity_bytes,
            profile.buffer_bytes,
            profile.activation_bytes,
            f_alloc,
            f_frag,
        )
    budget = BudgetSpec(f_alloc, f_frag, u_allowed)

    lc = precision.compute_bytes
    shared_cost = shared_state_bytes(shared_elements, n, precision)
    shared_ids = tuple(sorted(p.id for p in profile.parameters if p.shared))
    remaining = budget.u_allowed - shared_cost

    if not single:
        # Degenerate profile: everything is multi-use, nothing to pack.
        empty_trace = ChunkTrace((), (), {})
        report = simulate(
            CachePolicyInput(empty_trace, 1, 1, {}, precision, n, hardware=hardware)
        )
        return Plan(1, 1, {}, shared_cost, shared_ids, report, ())

    if candidates is None:
        candidates = default_chunk_candidates(profile, n)
    chunk_length = search_chunk_length(
        profile, trace, candidates, max(remaining, 0.0), precision
    )
    layout = pack_chunks(single, chunk_length)
    chunk_trace = build_chunk_trace(trace, layout)
    n_chunks = layout.n_chunks
    working = max(1, working_set_blocks(chunk_trace))
    block_cost = lc * chunk_length

    decisions: list[Decision] = []

    if remaining < working * block_cost:
        # Budget below the working-set floor: largest affordable cache, all
        # chunks stay on CPU.
        n_block = min(n_chunks, max(1, int(remaining // block_cost)))
        remaining -= n_block * block_cost
        decisions.append(Decision("clamp_rcache", 0.0, remaining))
        homes = {cid: Device.CPU for cid in range(n_chunks)}
        estimates = None
        if n_block >= working_set_blocks(chunk_trace):
            estimates = simulate(
                CachePolicyInput(
                    chunk_trace, n_block, chunk_length, homes, precision, n,
                    hardware=hardware,
                )
            )
        return Plan(
            chunk_length, n_block, homes, shared_cost, shared_ids,
            estimates, tuple(decisions),
        )

    n_block = working
    remaining -= working * block_cost
    i_val = benefit_I(n, chunk_length, hardware, precision)
    j_val = benefit_J(n, chunk_length, hardware, precision)
    uploaded: set[int] = set()
    upload_cost = chunk_footprint(chunk_length, n, precision)

    def upload_phase() -> None:
        nonlocal remaining
        for cid in range(n_chunks):
            if remaining < upload_cost:
                return
            uploaded.add(cid)
            remaining -= upload_cost
            decisions.append(Decision("upload_chunk", j_val, remaining))

    def extend_phase() -> None:
        nonlocal remaining, n_block
        while n_block < n_chunks and remaining >= block_cost:
            n_block += 1
            remaining -= block_cost
            decisions.append(Decision("extend_rcache", i_val, remaining))

    if j_val > i_val:
        upload_phase()
        extend_phase()
    else:
        extend_phase()
        upload_phase()

    homes = {
        cid: (Device.GPU if cid in uploaded else Device.CPU)
        for cid in range(n_chunks)
    }
    estimates = simulate(
        CachePolicyInput(
            chunk_trace, n_block, chunk_length, homes, precision, n,
            hardware=hardware,
        )
    )
    return Plan(
        chunk_length, n_block, homes, shared_cost, shared_ids,
        estimates, tuple(decisions),
    )


# ---------------------------------------------------------------------------
# Plan file I/O
# ---------------------------------------------------------------------------


def serialize_plan(plan: Plan, meta: dict | None = None) -> str:
    estimates: dict[str, Any] | None = None
    if plan.estimates is not None:
        estimates = dict(plan.estimates.__dict__)
    payload: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "chunk_length": plan.chunk_length,
        "n_block": plan.n_block,
        "chunk_homes": {str(cid): dev.value for cid, dev in sorted(plan.chunk_homes.items())},
        "shared_strategy_bytes": plan.shared_strategy_bytes,
        "shared_param_ids": list(plan.shared_param_ids),
        "decision_trace": [
            {"action": d.action, "benefit": d.benefit, "budget_after": d.budget_after}
            for d in plan.decision_trace
        ],
        "estimates": estimates,
    }
    if meta:
        payload["meta"] = meta
    return json.dumps(payload, indent=2)


def load_plan(text: str) -> Plan:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileFormatError(f"plan: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ProfileFormatError("plan: top level must be an object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ProfileFormatError(
            f"plan: format_version: expected {FORMAT_VERSION}, "
            f"got {doc.get('format_version')!r}"
        )
    try:
        homes = {int(cid): Device(dev) for cid, dev in doc["chunk_homes"].items()}
        decisions = tuple(
            Decision(d["action"], float(d["benefit"]), float(d["budget_after"]))
            for d in doc["decision_trace"]
        )
        raw_estimates = doc["estimates"]
        estimates = None if raw_estimates is None else SimReport(**raw_estimates)
        return Plan(
            chunk_length=doc["chunk_length"],
            n_block=doc["n_block"],
            chunk_homes=homes,
            shared_strategy_bytes=doc["shared_strategy_bytes"],
            shared_param_ids=tuple(doc["shared_param_ids"]),
            estimates=estimates,
            decision_trace=decisions,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProfileFormatError(f"plan: malformed field ({exc})") from None
