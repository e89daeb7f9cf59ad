"""Shared fixtures: published hardware tables and small synthetic profiles."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from offplan import (
    AccessTrace,
    ModelProfile,
    OperatorNode,
    ParameterSpec,
    load_hardware_profile,
    synthesize_transformer_profile,
)
from offplan.chunking import ChunkTrace

HW_DIR = Path(__file__).resolve().parents[1] / "hardware"


@pytest.fixture(scope="session")
def dev_hw4():
    return load_hardware_profile((HW_DIR / "dev_server_4gpu.json").read_text())


@pytest.fixture(scope="session")
def dev_hw1():
    return load_hardware_profile((HW_DIR / "dev_server_1gpu.json").read_text())


@pytest.fixture(scope="session")
def aws_hw4():
    return load_hardware_profile((HW_DIR / "aws_p4d_4gpu.json").read_text())


@pytest.fixture(scope="session")
def gpt2_4b():
    return synthesize_transformer_profile(3072, 32, 24, 50257, 1024, 8, name="gpt2-4b")


def chain_profile(numels, shared=(), op_sizes=None, name="chain",
                  activation_bytes=0, buffer_bytes=0) -> ModelProfile:
    """Profile with params p0..pk in declaration order, chopped into operators
    of the given sizes (default: one operator per parameter)."""
    params = tuple(
        ParameterSpec(f"p{i}", n, shared=(i in shared)) for i, n in enumerate(numels)
    )
    if op_sizes is None:
        op_sizes = [1] * len(numels)
    ops = []
    pos = 0
    for k, size in enumerate(op_sizes):
        ids = tuple(f"p{i}" for i in range(pos, min(pos + size, len(numels))))
        if ids:
            ops.append(OperatorNode(f"op{k}", ids))
        pos += size
    return ModelProfile(name, params, tuple(ops), activation_bytes, buffer_bytes)


def uniform_profile(count=8, numel=1000, **kw) -> ModelProfile:
    return chain_profile([numel] * count, name="uniform", **kw)


def random_chain_profile(rng: random.Random, max_params=10, max_numel=64,
                         allow_shared=True) -> ModelProfile:
    """Random profile with operators of 1..3 consecutive parameters."""
    n = rng.randint(1, max_params)
    numels = [rng.randint(1, max_numel) for _ in range(n)]
    shared = set()
    if allow_shared:
        shared = {i for i in range(n) if rng.random() < 0.15}
        if len(shared) == n:
            shared.pop()
    op_sizes = []
    left = n
    while left > 0:
        size = rng.randint(1, min(3, left))
        op_sizes.append(size)
        left -= size
    return chain_profile(numels, shared=shared, op_sizes=op_sizes)


def run_trace(runs) -> ChunkTrace:
    """ChunkTrace from per-chunk forward run lengths, e.g. [2, 1, 3] gives a
    forward walk 0,0,1,2,2,2 with one chunk per coarse node."""
    forward = tuple(
        frozenset({cid}) for cid, length in enumerate(runs) for _ in range(length)
    )
    backward = tuple(reversed(forward))
    reduce_after = {}
    for pos, ids in enumerate(backward):
        for cid in ids:
            reduce_after[cid] = pos
    return ChunkTrace(forward, backward, reduce_after)


def random_run_trace(rng: random.Random, max_chunks=8, max_forward=8) -> ChunkTrace:
    """Random single-chunk-per-node trace with contiguous chunk runs, the
    shape real packings produce."""
    runs = []
    total = 0
    k = rng.randint(1, max_chunks)
    for _ in range(k):
        if total >= max_forward:
            break
        length = rng.randint(1, min(3, max_forward - total))
        runs.append(length)
        total += length
    return run_trace(runs)


def flatten_walk(trace: ChunkTrace) -> list[int]:
    """Forward+backward walk as a flat access list (single-chunk nodes)."""
    out = []
    for ids in list(trace.forward) + list(trace.backward):
        out.extend(sorted(ids))
    return out


def access_trace(node_param_ids, shared=()) -> AccessTrace:
    return AccessTrace(
        tuple(frozenset(node) for node in node_param_ids), frozenset(shared)
    )
