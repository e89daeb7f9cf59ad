"""Command-line surface for the offload planner.

Subcommands::

    gen-profile   synthesize a transformer model profile file
    plan          search the optimal configuration and write a plan file
    simulate      run the cache simulation for an explicit plan/profile/hardware triple
    compare       render the per-strategy cost table as CSV
    sweep         render the chunk-length sweep as CSV

Numeric flags accept plain integers, scientific notation (``1e9``), and
binary-suffixed element counts (``Ki``/``Mi``/``Gi``).  All emitted files are
deterministic given their inputs; timestamps appear only inside a ``meta``
sidecar block that loaders ignore.  Validation failures exit with status 1
and a single ``error: validation: ...`` line on stderr; infeasible
configurations exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from .chunking import build_chunk_trace, pack_chunks, partition_multiuse
from .cost_model import cost_table, chunk_footprint
from .errors import BudgetInfeasibleError, InfeasibleError, PlannerError, ValidationError
from .profiles import (
    HardwareProfile,
    ModelProfile,
    PrecisionSpec,
    coarsen_graph,
    load_hardware_profile,
    load_model_profile,
    serialize_model_profile,
    synthesize_transformer_profile,
)
from .rcache_sim import CachePolicyInput, simulate
from .search import (
    DEFAULT_F_ALLOC,
    DEFAULT_F_FRAG,
    allowed_memory,
    build_plan,
    default_chunk_candidates,
    load_plan,
    serialize_plan,
    shared_state_bytes,
    sweep_chunk_lengths,
)

# Table-7-style presets: (hidden, layers, heads).
PRESETS = {
    "gpt2-4b": (3072, 32, 24),
    "gpt2-10b": (4096, 48, 32),
    "gpt2-15b": (8192, 18, 64),
    "gpt2-20b": (8192, 24, 64),
}
DEFAULT_VOCAB = 50257
DEFAULT_SEQ_LEN = 1024
DEFAULT_BATCH = 8

_SUFFIXES = {"Ki": 2**10, "Mi": 2**20, "Gi": 2**30}


def parse_count(text: str) -> int:
    """Parse '1024', '1e9', or '64Mi' into an integer count."""
    text = text.strip()
    for suffix, scale in _SUFFIXES.items():
        if text.endswith(suffix):
            base = text[: -len(suffix)]
            try:
                return int(float(base) * scale)
            except ValueError:
                raise ValidationError(f"cannot parse count '{text}'") from None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return int(float(text))
    except ValueError:
        raise ValidationError(f"cannot parse count '{text}'") from None


def _meta() -> dict:
    return {"generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds")}


def _write_or_print(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        print(text)


def _read(path: str, what: str) -> str:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"{what} file not found: {path}")
    return p.read_text()


def _precision_from(args: argparse.Namespace) -> PrecisionSpec:
    return PrecisionSpec(
        compute_bytes=args.compute_bytes,
        optimizer_bytes=args.optimizer_bytes,
        optimizer_factor=args.optimizer_factor,
    )


def _add_precision_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--compute-bytes", type=int, default=2,
                        help="bytes per element in compute state (default 2)")
    parser.add_argument("--optimizer-bytes", type=int, default=4,
                        help="bytes per optimizer element (default 4)")
    parser.add_argument("--optimizer-factor", type=int, default=3,
                        help="optimizer elements kept per parameter (default 3)")


def _add_budget_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--f-alloc", type=float, default=DEFAULT_F_ALLOC,
                        help="usable fraction of GPU memory (default 0.95)")
    parser.add_argument("--f-frag", type=float, default=DEFAULT_F_FRAG,
                        help="activation reserve multiplier (default 1.25)")
    parser.add_argument("--u-allowed", type=parse_count, default=None,
                        help="explicit memory budget in bytes, overriding the formula")
    parser.add_argument("--candidates", type=str, default=None,
                        help="comma-separated chunk-length candidates in elements "
                             "(e.g. '32Mi,64Mi,128Mi'); default: geometric grid")


def _candidates_from(args: argparse.Namespace, profile: ModelProfile,
                     hardware: HardwareProfile) -> list[int]:
    if args.candidates:
        return [parse_count(tok) for tok in args.candidates.split(",") if tok.strip()]
    return list(default_chunk_candidates(profile, hardware.gpu_count))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_profile(args: argparse.Namespace) -> int:
    if args.preset:
        hidden, layers, heads = PRESETS[args.preset]
        name = args.preset
    else:
        if args.hidden is None or args.layers is None or args.heads is None:
            raise ValidationError("either --preset or --hidden/--layers/--heads is required")
        hidden, layers, heads = args.hidden, args.layers, args.heads
        name = None
    profile = synthesize_transformer_profile(
        hidden=hidden, layers=layers, heads=heads,
        vocab=args.vocab, seq_len=args.seq_len, batch=args.batch, name=name,
    )
    _write_or_print(serialize_model_profile(profile, meta=_meta()), args.output)
    return 0


def _plan_summary(plan, profile, hardware, precision, budget_bytes: float) -> str:
    lines = []
    lc = precision.compute_bytes
    rcache_bytes = plan.n_block * lc * plan.chunk_length
    upload_bytes = plan.gpu_home_chunks * chunk_footprint(
        plan.chunk_length, hardware.gpu_count, precision
    )
    total = plan.shared_strategy_bytes + rcache_bytes + upload_bytes
    lines.append(f"model: {profile.name}  gpus: {hardware.gpu_count}")
    lines.append(f"budget: u_allowed = {budget_bytes:.3e} bytes")
    lines.append(
        f"chunk_length: {plan.chunk_length} elements  "
        f"chunks: {len(plan.chunk_homes)}  rcache blocks: {plan.n_block}"
    )
    lines.append(
        f"chunk homes: {plan.gpu_home_chunks} gpu / "
        f"{len(plan.chunk_homes) - plan.gpu_home_chunks} cpu  "
        f"shared params: {len(plan.shared_param_ids)}"
    )
    lines.append("memory per gpu:")
    lines.append(f"  shared state     {plan.shared_strategy_bytes:>16d} B")
    lines.append(f"  rcache blocks    {rcache_bytes:>16d} B")
    lines.append(f"  uploaded chunks  {upload_bytes:>16d} B")
    lines.append(f"  total            {total:>16d} B  (budget {budget_bytes:.3e})")
    if plan.decision_trace:
        lines.append(f"decision trace ({len(plan.decision_trace)} steps):")
        shown = plan.decision_trace[:8]
        for d in shown:
            lines.append(
                f"  {d.action:<14s} benefit={d.benefit:.5f} "
                f"budget_after={d.budget_after:.3e}"
            )
        if len(plan.decision_trace) > len(shown):
            lines.append(f"  ... {len(plan.decision_trace) - len(shown)} more")
    else:
        lines.append("decision trace: empty (nothing to allocate)")
    if plan.estimates is None:
        lines.append("estimates: n/a (cache clamped below the working set)")
    else:
        est = plan.estimates
        lines.append(
            "comm volumes: "
            f"gather {est.gather_bytes} B, reduce {est.reduce_bytes} B, "
            f"c2g {est.c2g_bytes} B, g2c {est.g2c_bytes} B, "
            f"replaced {est.replaced_bytes} B"
        )
        lines.append(
            "estimated non-compute seconds: "
            f"offload {est.estimated_offload_seconds:.4f} + "
            f"update {est.estimated_update_seconds:.4f} = "
            f"{est.estimated_offload_seconds + est.estimated_update_seconds:.4f}"
        )
    return "\n".join(lines)


def cmd_plan(args: argparse.Namespace) -> int:
    profile = load_model_profile(_read(args.model, "model profile"))
    hardware = load_hardware_profile(_read(args.hardware, "hardware profile"))
    precision = _precision_from(args)
    candidates = _candidates_from(args, profile, hardware)
    plan = build_plan(
        profile, hardware, precision,
        f_alloc=args.f_alloc, f_frag=args.f_frag,
        u_allowed=args.u_allowed, candidates=candidates,
    )
    if args.strict and any(d.action == "clamp_rcache" for d in plan.decision_trace):
        raise BudgetInfeasibleError(
            "memory budget is below the working-set cache floor"
        )
    budget = args.u_allowed
    if budget is None:
        budget = allowed_memory(
            hardware.gpu_capacity_bytes, profile.buffer_bytes,
            profile.activation_bytes, args.f_alloc, args.f_frag,
        )
    Path(args.output).write_text(serialize_plan(plan, meta=_meta()))
    print(_plan_summary(plan, profile, hardware, precision, budget))
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    profile = load_model_profile(_read(args.model, "model profile"))
    hardware = load_hardware_profile(_read(args.hardware, "hardware profile"))
    plan = load_plan(_read(args.plan, "plan"))
    precision = _precision_from(args)

    trace = coarsen_graph(profile)
    _, single = partition_multiuse(profile)
    layout = pack_chunks(single, plan.chunk_length)
    if set(plan.chunk_homes) != set(range(layout.n_chunks)):
        raise ValidationError(
            f"plan chunk_homes cover {len(plan.chunk_homes)} chunks but the profile "
            f"packs into {layout.n_chunks} at chunk_length {plan.chunk_length}"
        )
    chunk_trace = build_chunk_trace(trace, layout)
    report = simulate(
        CachePolicyInput(
            chunk_trace, plan.n_block, plan.chunk_length, plan.chunk_homes,
            precision, hardware.gpu_count, hardware=hardware,
        )
    )
    payload = {"format_version": 1, "report": dict(report.__dict__), "meta": _meta()}
    _write_or_print(json.dumps(payload, indent=2), args.output)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    precision = _precision_from(args)
    m = args.model_elements
    s = args.aggregate_elements if args.aggregate_elements is not None else m
    c = args.chunk_elements if args.chunk_elements is not None else max(1, s // (4 * args.gpus))
    if args.epsilon is None:
        print(
            "note: --epsilon not given; omitting the ZeRO-3 offload row",
            file=sys.stderr,
        )
    rows = cost_table(m, args.gpus, precision, s, c, epsilon_bytes=args.epsilon)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["strategy", "offload", "gpu_mem_bytes", "g2c_bytes", "g2g_bytes"])
    for spec, row in rows:
        writer.writerow(
            [spec.name, int(spec.offload), row.gpu_mem_per_gpu, row.g2c_comm, row.g2g_comm]
        )
    _write_or_print(buf.getvalue().rstrip("\n"), args.output)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    profile = load_model_profile(_read(args.model, "model profile"))
    hardware = load_hardware_profile(_read(args.hardware, "hardware profile"))
    precision = _precision_from(args)
    candidates = _candidates_from(args, profile, hardware)

    budget = args.u_allowed
    if budget is None:
        budget = allowed_memory(
            hardware.gpu_capacity_bytes, profile.buffer_bytes,
            profile.activation_bytes, args.f_alloc, args.f_frag,
        )
    trace = coarsen_graph(profile)
    shared_elements, _ = partition_multiuse(profile)
    shared_cost = shared_state_bytes(shared_elements, hardware.gpu_count, precision)
    points = sweep_chunk_lengths(
        profile, trace, candidates, max(budget - shared_cost, 0.0), precision
    )
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["chunk_length", "n_chunks", "waste_rate", "replaced_bytes"])
    for p in points:
        writer.writerow([p.chunk_length, p.n_chunks, f"{p.waste_rate:.6f}", p.replaced_bytes])
    _write_or_print(buf.getvalue().rstrip("\n"), args.output)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="offplan",
        description="Planner and trace-driven simulator for chunk-based "
                    "GPU/CPU memory offloading.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log informational notes to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-profile", help="synthesize a transformer model profile")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--hidden", type=parse_count, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--vocab", type=parse_count, default=DEFAULT_VOCAB)
    p.add_argument("--seq-len", type=parse_count, default=DEFAULT_SEQ_LEN)
    p.add_argument("--batch", type=int, default=DEFAULT_BATCH)
    p.add_argument("-o", "--output", default=None, help="output path (default stdout)")
    p.set_defaults(func=cmd_gen_profile)

    p = sub.add_parser("plan", help="search a configuration and write a plan file")
    p.add_argument("--model", required=True)
    p.add_argument("--hardware", required=True)
    p.add_argument("-o", "--output", required=True, help="plan file path")
    p.add_argument("--strict", action="store_true",
                   help="exit with status 2 instead of clamping when the budget "
                        "cannot cover the working-set cache floor")
    _add_budget_flags(p)
    _add_precision_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="simulate one step for a plan/profile/hardware triple")
    p.add_argument("--plan", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--hardware", required=True)
    p.add_argument("-o", "--output", default=None, help="report path (default stdout)")
    _add_precision_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="render the per-strategy cost table as CSV")
    p.add_argument("--model-elements", type=parse_count, required=True)
    p.add_argument("--gpus", type=int, required=True)
    p.add_argument("--aggregate-elements", type=parse_count, default=None,
                   help="aggregate chunk elements (default: model elements)")
    p.add_argument("--chunk-elements", type=parse_count, default=None,
                   help="chunk length in elements (default: aggregate / (4 * gpus))")
    p.add_argument("--epsilon", type=parse_count, default=None,
                   help="gathered-parameter buffer bytes for the ZeRO-3 offload row; "
                        "the row is omitted when not given")
    p.add_argument("-o", "--output", default=None)
    _add_precision_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="render the chunk-length sweep as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--hardware", required=True)
    p.add_argument("-o", "--output", default=None)
    _add_budget_flags(p)
    _add_precision_flags(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return 2
    except PlannerError as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
