"""Model and hardware profiles and the coarse-grained parameter access trace.

The planner runs entirely offline.  A model enters either as a profile file
(ordered parameter and operator records plus activation/buffer byte counts)
or through :func:`synthesize_transformer_profile`; the machine enters as a
table of per-process-count transfer bandwidths and optimizer-update
velocities.  :func:`coarsen_graph` collapses each activation-checkpointing
region into one coarse operator so that every single-use parameter is touched
exactly once per forward pass — the property the chunk trace and the cache
simulation downstream rely on.

File formats (JSON, ``format_version: 1``):

* model profile::

    {"format_version": 1, "name": str,
     "parameters": [{"id": str, "numel": int, "shared": bool}, ...],
     "operators": [{"name": str, "param_ids": [str], "ac_group": int|null}, ...],
     "activation_bytes": int, "buffer_bytes": int}

* hardware profile::

    {"format_version": 1, "gpu_count": int, "gpu_capacity_bytes": int,
     "tables": {"<n>": {"b_g2g": float|null, "b_c2g": float, "b_g2c": float,
                        "v_g": float, "v_c": float}, ...}}

Hardware rates are stored in GB/s with 1 GB = 1e9 bytes (decimal convention)
and converted to bytes/second on load.  Writers may attach a top-level
``meta`` object (``generated_at`` etc.); loaders ignore it so that payload
equality is well defined.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Any, Mapping

from .errors import ProfileFormatError, UncommonGraphError, ValidationError

FORMAT_VERSION = 1
GB = 1_000_000_000

# Bytes per activation element under mixed precision, and the number of
# seq*hidden-sized tensors kept live per layer with checkpointing enabled
# (one checkpoint plus recompute headroom).
_ACTIVATION_ELEMENT_BYTES = 2
_ACTIVATION_TENSORS_PER_LAYER = 2


@dataclass(frozen=True)
class PrecisionSpec:
    """Per-element byte widths of the training state.

    ``compute_bytes`` is the width of parameters/gradients as computed,
    ``optimizer_bytes`` the width of optimizer-state elements, and
    ``optimizer_factor`` how many such elements the optimizer keeps per
    parameter.  The defaults model mixed-precision Adam: FP16 compute state
    and an FP32 master weight plus two FP32 moments (12 bytes/element).
    """

    compute_bytes: int = 2
    optimizer_bytes: int = 4
    optimizer_factor: int = 3

    def __post_init__(self) -> None:
        for name in ("compute_bytes", "optimizer_bytes", "optimizer_factor"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"precision.{name} must be strictly positive")

    @property
    def optimizer_state_bytes(self) -> int:
        """Optimizer bytes per parameter element (12 for mixed-precision Adam)."""
        return self.optimizer_bytes * self.optimizer_factor


@dataclass(frozen=True)
class ParameterSpec:
    """One parameter tensor; ``shared`` marks weights used more than once per
    forward pass (e.g. a tied embedding)."""

    id: str
    numel: int
    shared: bool = False

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("parameter id must be non-empty")
        if self.numel < 1:
            raise ValidationError(f"parameter '{self.id}': numel must be >= 1")


@dataclass(frozen=True)
class OperatorNode:
    """One compute operator in forward execution order.

    ``ac_group`` identifies the activation-checkpointing function enclosing
    the operator, if any; operators sharing a group are merged by
    :func:`coarsen_graph`.
    """

    name: str
    param_ids: tuple[str, ...]
    ac_group: int | None = None


@dataclass(frozen=True)
class ModelProfile:
    """Ordered parameter/operator records plus activation and buffer bytes."""

    name: str
    parameters: tuple[ParameterSpec, ...]
    operators: tuple[OperatorNode, ...]
    activation_bytes: int
    buffer_bytes: int

    def __post_init__(self) -> None:
        if self.activation_bytes < 0:
            raise ValidationError("activation_bytes must be >= 0")
        if self.buffer_bytes < 0:
            raise ValidationError("buffer_bytes must be >= 0")
        seen: set[str] = set()
        for p in self.parameters:
            if p.id in seen:
                raise ValidationError(f"duplicate parameter id '{p.id}'")
            seen.add(p.id)
        used: set[str] = set()
        for op in self.operators:
            for pid in op.param_ids:
                if pid not in seen:
                    raise ValidationError(
                        f"operator '{op.name}' references unknown parameter '{pid}'"
                    )
                used.add(pid)
        for p in self.parameters:
            if not p.shared and p.id not in used:
                raise ValidationError(
                    f"parameter '{p.id}' is not read by any operator"
                )

    @cached_property
    def _numel_by_id(self) -> dict[str, int]:
        return {p.id: p.numel for p in self.parameters}

    def numel_of(self, param_id: str) -> int:
        try:
            return self._numel_by_id[param_id]
        except KeyError:
            raise ValidationError(f"unknown parameter id '{param_id}'") from None

    @property
    def total_elements(self) -> int:
        return sum(p.numel for p in self.parameters)


@dataclass(frozen=True)
class RateTable:
    """Aggregate rates for one process count, in bytes/second.

    ``b_*`` are transfer bandwidths (GPU-GPU, CPU-to-GPU, GPU-to-CPU);
    ``v_*`` are optimizer-update velocities as profiled.  ``b_g2g`` may be
    absent for a single process, where no inter-GPU traffic exists.
    """

    b_c2g: float
    b_g2c: float
    v_g: float
    v_c: float
    b_g2g: float | None = None

    def __post_init__(self) -> None:
        for name in ("b_c2g", "b_g2c", "v_g", "v_c"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"hardware rate {name} must be strictly positive")
        if self.b_g2g is not None and self.b_g2g <= 0:
            raise ValidationError("hardware rate b_g2g must be strictly positive")


@dataclass(frozen=True)
class HardwareProfile:
    """GPU count and capacity plus per-process-count rate tables."""

    gpu_count: int
    gpu_capacity_bytes: int
    tables: Mapping[int, RateTable]

    def __post_init__(self) -> None:
        if self.gpu_count < 1:
            raise ValidationError("gpu_count must be >= 1")
        if self.gpu_capacity_bytes <= 0:
            raise ValidationError("gpu_capacity_bytes must be strictly positive")
        for n in self.tables:
            if n < 1:
                raise ValidationError(f"rate table process count {n} must be >= 1")
        if self.gpu_count not in self.tables:
            raise ValidationError(
                f"hardware profile lacks a rate table for n = gpu_count = {self.gpu_count}"
            )
        object.__setattr__(self, "tables", MappingProxyType(dict(self.tables)))

    def rates(self, n: int) -> RateTable:
        try:
            return self.tables[n]
        except KeyError:
            raise ValidationError(
                f"hardware profile has no rate table for process count {n}"
            ) from None


@dataclass(frozen=True)
class AccessTrace:
    """Coarse-grained forward access order.

    ``coarse_ops[i]`` is the set of parameter ids touched by the i-th coarse
    operator (an AC function collapsed to one node, or a bare operator), with
    multi-use parameters removed into ``shared_param_ids``.  After coarsening
    every single-use parameter appears in exactly one coarse node.
    """

    coarse_ops: tuple[frozenset[str], ...]
    shared_param_ids: frozenset[str] = field(default_factory=frozenset)


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------


def _parse_json(text: str, what: str) -> dict[str, Any]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileFormatError(f"{what}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ProfileFormatError(f"{what}: top level must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ProfileFormatError(
            f"{what}: format_version: expected {FORMAT_VERSION}, got {version!r}"
        )
    return doc


def _get(obj: Mapping[str, Any], key: str, types, ctx: str):
    if key not in obj:
        raise ProfileFormatError(f"{ctx}: missing field '{key}'")
    val = obj[key]
    if isinstance(val, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ProfileFormatError(f"{ctx}.{key}: unexpected boolean")
    if not isinstance(val, types):
        raise ProfileFormatError(f"{ctx}.{key}: unexpected type {type(val).__name__}")
    return val


def _reject_unknown(obj: Mapping[str, Any], allowed: set[str], ctx: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ProfileFormatError(f"{ctx}: unknown field '{sorted(unknown)[0]}'")


# ---------------------------------------------------------------------------
# Model profile I/O
# ---------------------------------------------------------------------------


def load_model_profile(text: str) -> ModelProfile:
    """Parse and validate a model profile file."""
    doc = _parse_json(text, "model profile")
    _reject_unknown(
        doc,
        {"format_version", "name", "parameters", "operators", "activation_bytes",
         "buffer_bytes", "meta"},
        "model profile",
    )
    name = _get(doc, "name", str, "model profile")
    raw_params = _get(doc, "parameters", list, "model profile")
    raw_ops = _get(doc, "operators", list, "model profile")

    params = []
    for i, entry in enumerate(raw_params):
        ctx = f"parameters[{i}]"
        if not isinstance(entry, dict):
            raise ProfileFormatError(f"{ctx}: expected an object")
        _reject_unknown(entry, {"id", "numel", "shared"}, ctx)
        params.append(
            ParameterSpec(
                id=_get(entry, "id", str, ctx),
                numel=_get(entry, "numel", int, ctx),
                shared=_get(entry, "shared", bool, ctx),
            )
        )
    ops = []
    for i, entry in enumerate(raw_ops):
        ctx = f"operators[{i}]"
        if not isinstance(entry, dict):
            raise ProfileFormatError(f"{ctx}: expected an object")
        _reject_unknown(entry, {"name", "param_ids", "ac_group"}, ctx)
        pids = _get(entry, "param_ids", list, ctx)
        if not all(isinstance(p, str) for p in pids):
            raise ProfileFormatError(f"{ctx}.param_ids: entries must be strings")
        group = _get(entry, "ac_group", (int, type(None)), ctx)
        ops.append(OperatorNode(_get(entry, "name", str, ctx), tuple(pids), group))

    return ModelProfile(
        name=name,
        parameters=tuple(params),
        operators=tuple(ops),
        activation_bytes=_get(doc, "activation_bytes", int, "model profile"),
        buffer_bytes=_get(doc, "buffer_bytes", int, "model profile"),
    )


def serialize_model_profile(profile: ModelProfile, meta: dict | None = None) -> str:
    payload: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "name": profile.name,
        "parameters": [
            {"id": p.id, "numel": p.numel, "shared": p.shared}
            for p in profile.parameters
        ],
        "operators": [
            {"name": op.name, "param_ids": list(op.param_ids), "ac_group": op.ac_group}
            for op in profile.operators
        ],
        "activation_bytes": profile.activation_bytes,
        "buffer_bytes": profile.buffer_bytes,
    }
    if meta:
        payload["meta"] = meta
    return json.dumps(payload, indent=2)


# ---------------------------------------------------------------------------
# Hardware profile I/O
# ---------------------------------------------------------------------------

_RATE_KEYS = ("b_g2g", "b_c2g", "b_g2c", "v_g", "v_c")


def load_hardware_profile(text: str) -> HardwareProfile:
    """Parse and validate a hardware profile file; GB/s rates become bytes/s."""
    doc = _parse_json(text, "hardware profile")
    _reject_unknown(
        doc,
        {"format_version", "gpu_count", "gpu_capacity_bytes", "tables", "meta"},
        "hardware profile",
    )
    raw_tables = _get(doc, "tables", dict, "hardware profile")
    tables: dict[int, RateTable] = {}
    for key, entry in raw_tables.items():
        ctx = f"tables[{key!r}]"
        try:
            n = int(key)
        except ValueError:
            raise ProfileFormatError(f"{ctx}: key must be an integer process count") from None
        if not isinstance(entry, dict):
            raise ProfileFormatError(f"{ctx}: expected an object")
        _reject_unknown(entry, set(_RATE_KEYS), ctx)
        rates = {}
        for rk in _RATE_KEYS:
            val = _get(entry, rk, (int, float, type(None)), ctx)
            if val is None and rk != "b_g2g":
                raise ProfileFormatError(f"{ctx}.{rk}: must be a number")
            rates[rk] = None if val is None else float(val) * GB
        tables[n] = RateTable(
            b_c2g=rates["b_c2g"],
            b_g2c=rates["b_g2c"],
            v_g=rates["v_g"],
            v_c=rates["v_c"],
            b_g2g=rates["b_g2g"],
        )
    return HardwareProfile(
        gpu_count=_get(doc, "gpu_count", int, "hardware profile"),
        gpu_capacity_bytes=_get(doc, "gpu_capacity_bytes", int, "hardware profile"),
        tables=tables,
    )


def serialize_hardware_profile(hw: HardwareProfile, meta: dict | None = None) -> str:
    tables = {}
    for n in sorted(hw.tables):
        r = hw.rates(n)
        tables[str(n)] = {
            "b_g2g": None if r.b_g2g is None else r.b_g2g / GB,
            "b_c2g": r.b_c2g / GB,
            "b_g2c": r.b_g2c / GB,
            "v_g": r.v_g / GB,
            "v_c": r.v_c / GB,
        }
    payload: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "gpu_count": hw.gpu_count,
        "gpu_capacity_bytes": hw.gpu_capacity_bytes,
        "tables": tables,
    }
    if meta:
        payload["meta"] = meta
    return json.dumps(payload, indent=2)


# ---------------------------------------------------------------------------
# Synthetic transformer generator
# ---------------------------------------------------------------------------


def synthesize_transformer_profile(
    hidden: int,
    layers: int,
    heads: int,
    vocab: int,
    seq_len: int,
    batch: int,
    name: str | None = None,
) -> ModelProfile:
    """Build a GPT-style decoder profile in forward execution order.

    Each layer contributes two layer norms, a fused qkv projection, an
    attention output projection, and a two-matrix MLP (12 h^2 + 13 h
    elements), all enclosed in one activation-checkpointing group.  The token
    embedding is tied to the output head and therefore marked shared; the
    position embedding is single-use.  ``heads`` does not change element
    counts and is kept only for configuration fidelity.

    The activation estimate is the documented closed form
    ``2 * batch * seq_len * hidden * layers * 2`` bytes (FP16 elements, one
    checkpoint tensor per layer plus recompute headroom); the buffer estimate
    is a single ``2 * seq_len^2`` attention-mask scratch.
    """
    for arg, val in (
        ("hidden", hidden), ("layers", layers), ("heads", heads),
        ("vocab", vocab), ("seq_len", seq_len), ("batch", batch),
    ):
        if val < 1:
            raise ValidationError(f"{arg} must be >= 1")

    h = hidden
    params = [
        ParameterSpec("wte", vocab * h, shared=True),
        ParameterSpec("wpe", seq_len * h),
    ]
    ops = [OperatorNode("embed", ("wte", "wpe"))]

    for i in range(layers):
        def add(suffix: str, numel: int) -> str:
            pid = f"h{i}.{suffix}"
            params.append(ParameterSpec(pid, numel))
            return pid

        ln1 = (add("ln_1.w", h), add("ln_1.b", h))
        qkv = (add("attn.qkv.w", 3 * h * h), add("attn.qkv.b", 3 * h))
        proj = (add("attn.proj.w", h * h), add("attn.proj.b", h))
        ln2 = (add("ln_2.w", h), add("ln_2.b", h))
        fc = (add("mlp.fc.w", 4 * h * h), add("mlp.fc.b", 4 * h))
        out = (add("mlp.proj.w", 4 * h * h), add("mlp.proj.b", h))
        ops += [
            OperatorNode(f"h{i}.ln_1", ln1, ac_group=i),
            OperatorNode(f"h{i}.attn.qkv", qkv, ac_group=i),
            OperatorNode(f"h{i}.attn.proj", proj, ac_group=i),
            OperatorNode(f"h{i}.ln_2", ln2, ac_group=i),
            OperatorNode(f"h{i}.mlp.fc", fc, ac_group=i),
            OperatorNode(f"h{i}.mlp.proj", out, ac_group=i),
        ]

    params += [ParameterSpec("ln_f.w", h), ParameterSpec("ln_f.b", h)]
    ops += [
        OperatorNode("ln_f", ("ln_f.w", "ln_f.b")),
        OperatorNode("lm_head", ("wte",)),
    ]

    activation = (
        _ACTIVATION_ELEMENT_BYTES * batch * seq_len * hidden * layers
        * _ACTIVATION_TENSORS_PER_LAYER
    )
    return ModelProfile(
        name=name or f"transformer-h{hidden}-l{layers}",
        parameters=tuple(params),
        operators=tuple(ops),
        activation_bytes=activation,
        buffer_bytes=2 * seq_len * seq_len,
    )


# ---------------------------------------------------------------------------
# Graph coarsening
# ---------------------------------------------------------------------------


def coarsen_graph(profile: ModelProfile) -> AccessTrace:
    """Merge operators sharing an AC group and strip multi-use parameters.

    Raises :class:`UncommonGraphError` when a parameter not declared shared
    would still appear in more than one coarse node, since the backward pass
    of such a graph is not the reverse of its forward pass.
    """
    shared = frozenset(p.id for p in profile.parameters if p.shared)
    nodes: list[set[str]] = []
    group_index: dict[int, int] = {}
    for i, op in enumerate(profile.operators):
        if op.ac_group is None:
            nodes.append(set(op.param_ids))
            continue
        if op.ac_group not in group_index:
            group_index[op.ac_group] = len(nodes)
            nodes.append(set())
        nodes[group_index[op.ac_group]].update(op.param_ids)

    owner: dict[str, int] = {}
    coarse = []
    for idx, node in enumerate(nodes):
        kept = frozenset(node - shared)
        for pid in kept:
            if pid in owner:
                raise UncommonGraphError(
                    f"parameter '{pid}' is read by multiple coarse operators; "
                    "mark it shared=true or enclose its operators in one ac_group"
                )
            owner[pid] = idx
        coarse.append(kept)
    return AccessTrace(tuple(coarse), shared)


def ac_buffer_size(trace: AccessTrace, profile: ModelProfile) -> int:
    """Largest total element count touched by any single coarse operator.

    This is the floor on how many elements the replication cache must be able
    to hold at once.
    """
    if not trace.coarse_ops:
        return 0
    return max(sum(profile.numel_of(pid) for pid in node) for node in trace.coarse_ops)
