"""Closed-form memory and communication costs per distributed strategy.

One row per strategy, transcribed verbatim from the strategy comparison
table: plain data parallelism, the three progressive state-partitioning
stages, and the two cache boundary configurations (all blocks resident vs. a
single block).  The table's communication constants are reproduced as
printed, even where a first-principles collective count would differ — the
trace simulator counts primitive volumes independently, and both views are
exposed side by side.

All byte quantities are exact integers when the inputs are; divisions by the
GPU count round up, modeling padded partition shards, so cross-checks are
bit-stable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError
from .profiles import PrecisionSpec

DDP = "DDP"
ZERO_1 = "ZeRO-1"
ZERO_2 = "ZeRO-2"
ZERO_3 = "ZeRO-3"
RCACHE_MAX = "rCache-max"
RCACHE_MIN = "rCache-min"

STRATEGY_NAMES = (DDP, ZERO_1, ZERO_2, ZERO_3, RCACHE_MAX, RCACHE_MIN)
OFFLOADABLE = frozenset({ZERO_2, ZERO_3, RCACHE_MAX, RCACHE_MIN})


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class StrategySpec:
    """A strategy row selector.

    ``epsilon_bytes`` is the gathered-parameter buffer that fully offloaded
    parameter partitioning keeps on each GPU; it is required for the ZeRO-3
    offload row and ignored everywhere else.
    """

    name: str
    offload: bool = False
    epsilon_bytes: int | None = None

    def __post_init__(self) -> None:
        if self.name not in STRATEGY_NAMES:
            raise ValidationError(
                f"unknown strategy '{self.name}'; expected one of {STRATEGY_NAMES}"
            )
        if self.offload and self.name not in OFFLOADABLE:
            raise ValidationError(f"strategy '{self.name}' has no offload variant")
        if self.name == ZERO_3 and self.offload:
            if self.epsilon_bytes is None or self.epsilon_bytes <= 0:
                raise ValidationError(
                    "ZeRO-3 offload requires a positive epsilon_bytes buffer size"
                )


@dataclass(frozen=True)
class CostRow:
    gpu_mem_per_gpu: int
    g2c_comm: int
    g2g_comm: int


def strategy_costs(
    model_elements: int,
    gpus: int,
    precision: PrecisionSpec,
    strategy: StrategySpec,
    aggregate_chunk_elements: int,
    chunk_length: int,
) -> CostRow:
    """Per-GPU memory and aggregate communication volume for one strategy row."""
    for label, val in (
        ("model_elements", model_elements), ("gpus", gpus),
        ("aggregate_chunk_elements", aggregate_chunk_elements),
        ("chunk_length", chunk_length),
    ):
        if val < 1:
            raise ValidationError(f"{label} must be >= 1")

    lc = precision.compute_bytes
    osb = precision.optimizer_state_bytes
    m, n = model_elements, gpus
    s, c = aggregate_chunk_elements, chunk_length

    if strategy.name == DDP:
        return CostRow((2 * lc + osb) * m, 0, 2 * lc * m)
    if strategy.name == ZERO_1:
        return CostRow(2 * lc * m + _ceil_div(osb * m, n), 0, 2 * lc * m)
    if strategy.name == ZERO_2:
        mem = lc * m if strategy.offload else lc * m + _ceil_div((lc + osb) * m, n)
        return CostRow(mem, 2 * lc * m if strategy.offload else 0, 2 * lc * m)
    if strategy.name == ZERO_3:
        mem = strategy.epsilon_bytes if strategy.offload else _ceil_div((2 * lc + osb) * m, n)
        return CostRow(mem, 4 * lc * m if strategy.offload else 0, 4 * lc * m)
    if strategy.name == RCACHE_MAX:
        mem = lc * s if strategy.offload else lc * s + _ceil_div((lc + osb) * s, n)
        return CostRow(mem, 2 * lc * s if strategy.offload else 0, 2 * lc * s)
    # rCache-min: a single resident block plus the partitioned chunk state.
    mem = lc * c if strategy.offload else lc * c + _ceil_div((lc + osb) * s, n)
    return CostRow(mem, 4 * lc * s if strategy.offload else 0, 4 * lc * s)


def cost_table(
    model_elements: int,
    gpus: int,
    precision: PrecisionSpec,
    aggregate_chunk_elements: int,
    chunk_length: int,
    epsilon_bytes: int | None = None,
) -> list[tuple[StrategySpec, CostRow]]:
    """All strategy rows, offload variants included where defined.

    Without ``epsilon_bytes`` the ZeRO-3 offload row is omitted, since its
    buffer size has no meaningful default.
    """
    rows: list[tuple[StrategySpec, CostRow]] = []
    for name in STRATEGY_NAMES:
        variants = [StrategySpec(name)]
        if name in OFFLOADABLE:
            if name == ZERO_3:
                if epsilon_bytes is not None:
                    variants.append(StrategySpec(name, offload=True, epsilon_bytes=epsilon_bytes))
            else:
                variants.append(StrategySpec(name, offload=True))
        for spec in variants:
            rows.append(
                (
                    spec,
                    strategy_costs(
                        model_elements, gpus, precision, spec,
                        aggregate_chunk_elements, chunk_length,
                    ),
                )
            )
    return rows


def chunk_footprint(chunk_length: int, gpus: int, precision: PrecisionSpec) -> int:
    """Per-GPU bytes of one partitioned chunk plus its paired optimizer chunk."""
    if chunk_length < 1 or gpus < 1:
        raise ValidationError("chunk_length and gpus must be >= 1")
    lc = precision.compute_bytes
    osb = precision.optimizer_state_bytes
    return _ceil_div(lc * chunk_length + osb * chunk_length, gpus)


def mixed_precision_states(
    model_elements: int, precision: PrecisionSpec
) -> tuple[int, int, int]:
    """(parameter, gradient, optimizer-state) bytes for the whole model."""
    if model_elements < 1:
        raise ValidationError("model_elements must be >= 1")
    lc = precision.compute_bytes
    return (
        lc * model_elements,
        lc * model_elements,
        precision.optimizer_state_bytes * model_elements,
    )


def tflops_metric(model_elements: float, tokens: float, elapsed_seconds: float) -> float:
    """Training throughput: 8 * model_elements * tokens FLOPs over wall time."""
    if elapsed_seconds <= 0:
        raise ValidationError("elapsed_seconds must be strictly positive")
    return 8.0 * model_elements * tokens / elapsed_seconds / 1e12
