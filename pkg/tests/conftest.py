import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # satoshi_oracle importable
# provenance trees on long chains parse/build deeper than the default limit
sys.setrecursionlimit(100_000)

from taintchain.chain_model import Block, Chain, OutPoint, Transaction, TxOutput
from taintchain.ingest import GeneratorSpec, PatternSpec, TaintSource, generate_synthetic_chain


def mk_txid(n: int) -> str:
    return format(n, "064x")


def coinbase(n: int, values: list[int], prefix: str = "miner") -> Transaction:
    return Transaction(
        mk_txid(n), True, (),
        tuple(TxOutput(v, f"{prefix}{n}.{i}") for i, v in enumerate(values)))


def tx(n: int, inputs: list[tuple[str, int]], outputs: list[tuple[int, str]]) -> Transaction:
    return Transaction(
        mk_txid(n), False,
        tuple(OutPoint(txid, vout) for txid, vout in inputs),
        tuple(TxOutput(value, address) for value, address in outputs))


@pytest.fixture
def slice_chain() -> Chain:
    """The canonical hand fixture: a RED source output and a clean output
    merged by one spender with a 1-satoshi fee.

    tx A splits the block-0 coinbase into a 5-sat loot output (the RED taint
    source) and change; tx B carves a clean 5-sat output; tx C spends both
    (loot first) into outputs of 4 and 5, paying 1 sat of fee.
    """
    blocks = (
        Block(0, "blockhash0", (coinbase(0, [100]),)),
        Block(1, "blockhash1", (
            coinbase(1, [101]),
            tx(10, [(mk_txid(0), 0)], [(5, "alice"), (95, "bob")]),
            tx(11, [(mk_txid(10), 1)], [(5, "carol"), (90, "dave")]),
            tx(12, [(mk_txid(10), 0), (mk_txid(11), 0)], [(4, "eve"), (5, "frank")]),
        )),
    )
    return Chain(blocks, subsidy=100)


@pytest.fixture
def slice_sources() -> list[TaintSource]:
    return [TaintSource(mk_txid(10), 0, "RED", "#d62728")]


def small_spec(seed: int, **kwargs) -> GeneratorSpec:
    """A chain small enough for per-satoshi simulation (<= 10^5 satoshis)."""
    defaults = dict(n_blocks=25, txs_per_block=3, n_taint_sources=2, subsidy=2000)
    defaults.update(kwargs)
    return GeneratorSpec(seed=seed, **defaults)


@pytest.fixture(scope="session")
def pattern_chain():
    """Generated chain with one instance of every pattern kind."""
    spec = GeneratorSpec(
        seed=1105,
        n_blocks=40,
        txs_per_block=3,
        n_taint_sources=4,
        patterns=(
            PatternSpec("splitting", {"fan": 50}),
            PatternSpec("collection", {"fan_in": 20}),
            PatternSpec("peeling_chain", {"length": 8}),
            PatternSpec("mix", {"width": 6, "rounds": 3}),
        ),
        subsidy=1_000_000,
    )
    return generate_synthetic_chain(spec)


@pytest.fixture(scope="session")
def mixing_chain():
    """Heavy-mixing chain used for the diffusion-shape acceptance criterion."""
    spec = GeneratorSpec(
        seed=2718,
        n_blocks=220,
        txs_per_block=8,
        n_taint_sources=3,
        subsidy=1_000_000,
    )
    return generate_synthetic_chain(spec)
