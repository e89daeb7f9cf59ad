"""Acceptance suite: one test per criterion, each printing a PASS line.

Run ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion lines.
Tolerances are pinned here; nothing is deferred to later calibration.
"""

import json
import random
import time

import pytest

from conftest import (
    HW_DIR,
    chain_profile,
    flatten_walk,
    random_chain_profile,
    random_run_trace,
    uniform_profile,
)
from offplan import (
    CachePolicyInput,
    Device,
    PrecisionSpec,
    StrategySpec,
    allowed_memory,
    benefit_I,
    benefit_J,
    build_chunk_trace,
    build_plan,
    chunk_footprint,
    coarsen_graph,
    load_plan,
    oracle_min_misses,
    pack_chunks,
    partition_multiuse,
    replaced_bytes,
    serialize_plan,
    shared_state_bytes,
    simulate,
    strategy_costs,
    synthesize_transformer_profile,
    tflops_metric,
    working_set_blocks,
)
from offplan.cli import main as cli_main
from offplan.search import default_chunk_candidates, sweep_chunk_lengths

DEFAULT = PrecisionSpec()
DEV4 = str(HW_DIR / "dev_server_4gpu.json")

PRESET_SHAPES = {
    "gpt2-4b": (3072, 32, 24),
    "gpt2-10b": (4096, 48, 32),
    "gpt2-15b": (8192, 18, 64),
    "gpt2-20b": (8192, 24, 64),
}


def _ok(criterion: int, detail: str) -> None:
    print(f"criterion {criterion}: PASS - {detail}")


# ---------------------------------------------------------------------------
# 1. Belady optimality against the exhaustive oracle
# ---------------------------------------------------------------------------


def test_criterion_1_belady_matches_oracle():
    rng = random.Random(0xBE1AD5)
    started = time.perf_counter()
    traces = 0
    comparisons = 0
    while traces < 500:
        trace = random_run_trace(rng, max_chunks=8, max_forward=8)
        walk = flatten_walk(trace)
        assert len(walk) <= 16 and len(set(walk)) <= 8
        distinct = len(set(walk))
        for n_block in range(1, distinct + 2):
            report = simulate(
                CachePolicyInput(
                    trace, n_block, 4,
                    {cid: Device.GPU for cid in trace.chunk_ids},
                    DEFAULT, 1,
                )
            )
            assert report.gather_ops == oracle_min_misses(walk, n_block)
            comparisons += 1
        traces += 1
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0
    _ok(1, f"{traces} traces, {comparisons} oracle comparisons in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. Strategy table reproduction
# ---------------------------------------------------------------------------


def _hand_rows(m, n, lc, osb, s, c, eps):
    ceil = lambda a, b: -(-a // b)  # noqa: E731
    return {
        ("DDP", False): ((2 * lc + osb) * m, 0, 2 * lc * m),
        ("ZeRO-1", False): (2 * lc * m + ceil(osb * m, n), 0, 2 * lc * m),
        ("ZeRO-2", False): (lc * m + ceil((lc + osb) * m, n), 0, 2 * lc * m),
        ("ZeRO-2", True): (lc * m, 2 * lc * m, 2 * lc * m),
        ("ZeRO-3", False): (ceil((2 * lc + osb) * m, n), 0, 4 * lc * m),
        ("ZeRO-3", True): (eps, 4 * lc * m, 4 * lc * m),
        ("rCache-max", False): (lc * s + ceil((lc + osb) * s, n), 0, 2 * lc * s),
        ("rCache-max", True): (lc * s, 2 * lc * s, 2 * lc * s),
        ("rCache-min", False): (lc * c + ceil((lc + osb) * s, n), 0, 4 * lc * s),
        ("rCache-min", True): (lc * c, 4 * lc * s, 4 * lc * s),
    }


def test_criterion_2_strategy_table_exact():
    precisions = [DEFAULT, PrecisionSpec(4, 4, 2)]
    eps = 123_456
    checked = 0
    for precision in precisions:
        lc, osb = precision.compute_bytes, precision.optimizer_state_bytes
        for m in (10**9, 123_457, 7):
            for n in (1, 2, 4):
                s, c = m, max(1, m // 8)
                expected = _hand_rows(m, n, lc, osb, s, c, eps)
                for (name, offload), want in expected.items():
                    spec = StrategySpec(
                        name, offload=offload,
                        epsilon_bytes=eps if (name == "ZeRO-3" and offload) else None,
                    )
                    row = strategy_costs(m, n, precision, spec, s, c)
                    assert (row.gpu_mem_per_gpu, row.g2c_comm, row.g2g_comm) == want
                    checked += 1
    # Pinned reference point: defaults, M=1e9, N=4.
    ref = strategy_costs(10**9, 4, DEFAULT, StrategySpec("ZeRO-3"), 10**9, 10**8)
    assert ref.gpu_mem_per_gpu == 4_000_000_000
    assert ref.g2g_comm == 8_000_000_000
    _ok(2, f"{checked} table cells match hand-transcribed formulas exactly")


# ---------------------------------------------------------------------------
# 3. Limiting-case consistency with the table's cache rows
# ---------------------------------------------------------------------------


def test_criterion_3_volume_limits():
    profile = synthesize_transformer_profile(128, 6, 4, 512, 32, 1)
    access = coarsen_graph(profile)
    _, single = partition_multiuse(profile)
    layout = pack_chunks(single, 100_000)
    trace = build_chunk_trace(access, layout)
    lc = DEFAULT.compute_bytes
    aggregate = layout.aggregate_length
    floor = working_set_blocks(trace)
    placement = {cid: Device.GPU for cid in trace.chunk_ids}

    top = simulate(
        CachePolicyInput(trace, layout.n_chunks, layout.chunk_length, placement, DEFAULT, 1)
    )
    assert top.gather_bytes + top.reduce_bytes == 2 * lc * aggregate

    for n_block in range(floor, layout.n_chunks):
        report = simulate(
            CachePolicyInput(trace, n_block, layout.chunk_length, placement, DEFAULT, 1)
        )
        volume = report.gather_bytes + report.reduce_bytes
        assert 2 * lc * aggregate <= volume <= 4 * lc * aggregate
    _ok(
        3,
        f"exact 2*Lc*S at n_block={layout.n_chunks}; "
        f"{layout.n_chunks - floor} smaller caches stay within [2,4]*Lc*S",
    )


# ---------------------------------------------------------------------------
# 4. Waste-rate claim on every preset
# ---------------------------------------------------------------------------


def test_criterion_4_preset_waste_rates():
    results = []
    for name, (hidden, layers, heads) in PRESET_SHAPES.items():
        started = time.perf_counter()
        profile = synthesize_transformer_profile(
            hidden, layers, heads, 50257, 1024, 8, name=name
        )
        access = coarsen_graph(profile)
        budget = allowed_memory(80_000_000_000, profile.buffer_bytes, profile.activation_bytes)
        shared_elements, _ = partition_multiuse(profile)
        shared_cost = shared_state_bytes(shared_elements, 4)
        points = sweep_chunk_lengths(
            profile, access, default_chunk_candidates(profile, 4),
            max(budget - shared_cost, 0.0),
        )
        best = min(points, key=lambda p: (p.replaced_bytes, p.waste_rate, p.chunk_length))
        elapsed = time.perf_counter() - started
        assert best.waste_rate < 0.04, f"{name}: waste {best.waste_rate:.4f}"
        assert elapsed < 120.0
        results.append(f"{name}={best.waste_rate:.4f}")
    _ok(4, "searched waste rates " + ", ".join(results) + " all < 0.04")


# ---------------------------------------------------------------------------
# 5. Benefit arithmetic and the resulting plan decisions
# ---------------------------------------------------------------------------


def test_criterion_5_benefits_and_decisions(dev_hw1, dev_hw4):
    c = 10**9
    assert benefit_I(1, c, dev_hw1) == pytest.approx(0.10795, rel=1e-4)
    assert benefit_J(1, c, dev_hw1) == pytest.approx(0.08877, rel=1e-4)
    assert benefit_I(4, c, dev_hw4) == pytest.approx(0.030952, rel=1e-4)
    assert benefit_J(4, c, dev_hw4) == pytest.approx(0.19020, rel=1e-4)

    profile = uniform_profile(count=8, numel=1000)
    plan1 = build_plan(profile, dev_hw1, u_allowed=40_000.0, candidates=[1000])
    plan4 = build_plan(profile, dev_hw4, u_allowed=40_000.0, candidates=[1000])
    assert plan1.decision_trace[0].action == "extend_rcache"
    assert plan4.decision_trace[0].action == "upload_chunk"
    _ok(5, "I/J reproduce published values; plans extend first at N=1, upload first at N=4")


# ---------------------------------------------------------------------------
# 6. Budget formula
# ---------------------------------------------------------------------------


def test_criterion_6_budget_formula_exact():
    value = allowed_memory(80e9, 1e9, 10e9, 0.95, 1.25)
    assert value == 63.175e9
    _ok(6, f"allowed_memory(80e9, 1e9, 10e9) == {value:.6e} exactly")


# ---------------------------------------------------------------------------
# 7. Property suites, >=200 seeded instances each
# ---------------------------------------------------------------------------


def test_criterion_7_property_suites(dev_hw4):
    # (a) packing preserves order and elements
    rng = random.Random(701)
    for _ in range(200):
        numels = [rng.randint(1, 30) for _ in range(rng.randint(1, 15))]
        profile = chain_profile(numels)
        _, single = partition_multiuse(profile)
        layout = pack_chunks(single, max(numels) + rng.randint(0, 20))
        flat = [m.param_id for ch in layout.chunks for m in ch.members]
        assert flat == [p.id for p in single]
        assert sum(ch.used_elements for ch in layout.chunks) == sum(numels)

    # (b) backward is the elementwise reverse of forward
    rng = random.Random(702)
    for _ in range(200):
        profile = random_chain_profile(rng)
        access = coarsen_graph(profile)
        _, single = partition_multiuse(profile)
        if not single:
            continue
        layout = pack_chunks(single, max(p.numel for p in single) + rng.randint(0, 8))
        trace = build_chunk_trace(access, layout)
        assert trace.backward == tuple(reversed(trace.forward))

    # (c) replaced bytes are non-increasing in the block count
    rng = random.Random(703)
    for _ in range(200):
        trace = random_run_trace(rng)
        distinct = len(trace.chunk_ids)
        previous = None
        for n_block in range(1, distinct + 2):
            current = replaced_bytes(trace, n_block, 8)
            if previous is not None:
                assert current <= previous
            previous = current

    # (d) plans respect the budget whenever the floor is affordable
    rng = random.Random(704)
    respected = 0
    for _ in range(200):
        profile = random_chain_profile(rng)
        budget = rng.uniform(0, 40.0 * 16 * profile.total_elements)
        plan = build_plan(profile, dev_hw4, u_allowed=budget)
        if any(d.action == "clamp_rcache" for d in plan.decision_trace):
            assert plan.gpu_home_chunks == 0
            assert plan.n_block >= 1
            continue
        spent = (
            plan.n_block * 2 * plan.chunk_length
            + plan.gpu_home_chunks * chunk_footprint(plan.chunk_length, 4, DEFAULT)
            + plan.shared_strategy_bytes
        )
        assert spent <= budget + 1e-6
        respected += 1
    assert respected >= 100

    # (e) the upload-vs-extend comparison is scale invariant in chunk length
    rng = random.Random(705)
    from offplan import HardwareProfile, RateTable

    for _ in range(200):
        n = rng.randint(1, 16)
        table = RateTable(
            b_c2g=rng.uniform(1e8, 1e12), b_g2c=rng.uniform(1e8, 1e12),
            v_g=rng.uniform(1e8, 1e12), v_c=rng.uniform(1e8, 1e12),
        )
        hw = HardwareProfile(n, 10**9, {n: table})
        c1 = rng.randint(1, 10**9)
        c2 = rng.randint(1, 10**9)
        d1 = benefit_J(n, c1, hw) - benefit_I(n, c1, hw)
        d2 = benefit_J(n, c2, hw) - benefit_I(n, c2, hw)
        if max(abs(d1), abs(d2)) > benefit_I(n, c1, hw) * 1e-9:
            assert (d1 > 0) == (d2 > 0)

    # (f) growing the budget never shrinks the plan (chunk length held fixed)
    rng = random.Random(706)
    for _ in range(200):
        profile = random_chain_profile(rng, allow_shared=False)
        _, single = partition_multiuse(profile)
        cand = [max(p.numel for p in single)]
        b1 = rng.uniform(0, 20.0 * 16 * profile.total_elements)
        b2 = b1 + rng.uniform(0, 10.0 * 16 * profile.total_elements)
        p1 = build_plan(profile, dev_hw4, u_allowed=b1, candidates=cand)
        p2 = build_plan(profile, dev_hw4, u_allowed=b2, candidates=cand)
        assert p2.n_block >= p1.n_block
        assert p2.gpu_home_chunks >= p1.gpu_home_chunks

    _ok(7, "six property suites passed at 200 seeded instances each")


# ---------------------------------------------------------------------------
# 8. Metric spot checks
# ---------------------------------------------------------------------------


def test_criterion_8_metric_checks():
    assert tflops_metric(1e9, 1000, 1.0) == 8.0
    assert chunk_footprint(10**9, 4, DEFAULT) == 3_500_000_000
    _ok(8, "tflops(1e9, 1000, 1s) == 8.0 and chunk_footprint(1e9, 4) == 3.5e9")


# ---------------------------------------------------------------------------
# 9. End-to-end pipeline smoke
# ---------------------------------------------------------------------------


def test_criterion_9_end_to_end(tmp_path, capsys):
    started = time.perf_counter()
    model = tmp_path / "gpt2-10b.json"
    plan_path = tmp_path / "plan.json"
    report_path = tmp_path / "report.json"

    assert cli_main(["gen-profile", "--preset", "gpt2-10b", "-o", str(model)]) == 0
    assert cli_main(
        ["plan", "--model", str(model), "--hardware", DEV4, "-o", str(plan_path)]
    ) == 0
    assert cli_main(
        ["simulate", "--plan", str(plan_path), "--model", str(model),
         "--hardware", DEV4, "-o", str(report_path)]
    ) == 0
    capsys.readouterr()

    plan = load_plan(plan_path.read_text())
    assert load_plan(serialize_plan(plan)) == plan
    report = json.loads(report_path.read_text())["report"]
    assert report["gather_ops"] >= len(plan.chunk_homes)

    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    _ok(9, f"gen-profile -> plan -> simulate in {elapsed:.1f}s with round-trip")
