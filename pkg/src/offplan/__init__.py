"""Planner and trace-driven simulator for chunk-based GPU/CPU memory
offloading in data-parallel training.

The pipeline: a model profile and a hardware profile go in; the coarse access
trace is derived, parameters are packed into fixed-length chunks, the
replication cache is simulated under offline-optimal replacement, and a
greedy benefit-driven search allocates the memory budget between cache blocks
and GPU-homed chunks.  Out comes a placement plan with quantified memory and
communication estimates.
"""

from .chunking import (
    Chunk,
    ChunkLayout,
    ChunkMember,
    ChunkTrace,
    build_chunk_trace,
    pack_chunks,
    partition_multiuse,
    waste_rate,
    working_set_blocks,
)
from .cost_model import (
    CostRow,
    StrategySpec,
    chunk_footprint,
    cost_table,
    mixed_precision_states,
    strategy_costs,
    tflops_metric,
)
from .errors import (
    BudgetInfeasibleError,
    ChunkTooSmallError,
    InfeasibleCacheError,
    InfeasibleError,
    NoFeasibleCandidateError,
    OracleLimitError,
    PlannerError,
    ProfileFormatError,
    UncommonGraphError,
    ValidationError,
)
from .profiles import (
    AccessTrace,
    HardwareProfile,
    ModelProfile,
    OperatorNode,
    ParameterSpec,
    PrecisionSpec,
    RateTable,
    ac_buffer_size,
    coarsen_graph,
    load_hardware_profile,
    load_model_profile,
    serialize_hardware_profile,
    serialize_model_profile,
    synthesize_transformer_profile,
)
from .rcache_sim import (
    CachePolicyInput,
    Device,
    SimReport,
    belady_misses,
    lru_misses,
    oracle_min_misses,
    replaced_bytes,
    simulate,
)
from .search import (
    BudgetSpec,
    Decision,
    Plan,
    SweepPoint,
    allowed_memory,
    benefit_I,
    benefit_J,
    build_plan,
    default_chunk_candidates,
    load_plan,
    search_chunk_length,
    serialize_plan,
    shared_state_bytes,
    sweep_chunk_lengths,
)

__version__ = "0.1.0"
