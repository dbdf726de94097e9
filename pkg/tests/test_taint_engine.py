import json
import random
from fractions import Fraction

import pytest

from taintchain.chain_model import ChainIndex, OutPoint
from taintchain.ingest import TaintSource, generate_synthetic_chain
from taintchain.intervals import CLEAN, SegmentList
from taintchain.taint_engine import (
    AccountingError,
    CoinbaseOrigin,
    TaintEngineError,
    TaintEvent,
    fifo_propagate,
    fifo_slice,
    haircut_propagate,
    leaf_segments,
    parse_assignment,
    poison_propagate,
    provenance_json,
    provenance_to_doc,
    trace_back,
    assignment_records,
)

from conftest import mk_txid, small_spec, tx
from satoshi_oracle import fifo_oracle, haircut_oracle, poison_oracle, to_segments


# -- fifo_slice ---------------------------------------------------------------


def test_fifo_slice_red_over_clean():
    spender = tx(1, [(mk_txid(0), 0), (mk_txid(0), 1)], [(4, "a"), (5, "b")])
    outs, fee = fifo_slice(spender, [SegmentList([(5, "RED")]), SegmentList([(5, CLEAN)])])
    assert outs[0].to_pairs() == [[4, "RED"]]
    assert outs[1].to_pairs() == [[1, "RED"], [4, "CLEAN"]]
    assert fee.to_pairs() == [[1, "CLEAN"]]


def test_fifo_slice_identity():
    spender = tx(1, [(mk_txid(0), 0)], [(10, "a")])
    outs, fee = fifo_slice(spender, [SegmentList.clean(10)])
    assert outs[0] == SegmentList.clean(10)
    assert fee.total() == 0


def test_fifo_slice_two_label_case_matches_satoshi_replay():
    spender = tx(1, [(mk_txid(0), 0), (mk_txid(0), 1)], [(3, "a"), (2, "b")])
    inputs = [SegmentList([(2, "RED"), (1, CLEAN)]), SegmentList([(3, "BLUE")])]
    outs, fee = fifo_slice(spender, inputs)
    # independent per-satoshi replay of the same queue
    queue = ["RED", "RED", CLEAN, "BLUE", "BLUE", "BLUE"]
    assert outs[0] == to_segments(queue[0:3])
    assert outs[1] == to_segments(queue[3:5])
    assert fee == to_segments(queue[5:6])
    assert outs[0].to_pairs() == [[2, "RED"], [1, "CLEAN"]]
    assert outs[1].to_pairs() == [[2, "BLUE"]]
    assert fee.to_pairs() == [[1, "BLUE"]]


def test_fifo_slice_override_replaces_whole_output():
    spender = tx(1, [(mk_txid(0), 0)], [(4, "a"), (6, "b")])
    outs, _ = fifo_slice(spender, [SegmentList.clean(10)], {1: "RED"})
    assert outs[0] == SegmentList.clean(4)
    assert outs[1] == SegmentList.uniform(6, "RED")


def test_fifo_slice_detects_short_queue():
    spender = tx(1, [(mk_txid(0), 0)], [(10, "a")])
    with pytest.raises(AccountingError):
        fifo_slice(spender, [SegmentList.clean(5)])


# -- propagation --------------------------------------------------------------


def test_no_sources_everything_clean(slice_chain):
    assignment = fifo_propagate(slice_chain, [])
    assert all(sl.is_clean() for sl in assignment.outputs.values())


def test_unspent_source_taints_one_output():
    chain, _, _ = generate_synthetic_chain(small_spec(3, n_taint_sources=0))
    # taint an output of the tip coinbase: never spent
    tip_cb = chain.blocks[-1].transactions[0]
    sources = [TaintSource(tip_cb.txid, 0, "RED")]
    assignment = fifo_propagate(chain, sources)
    tainted = [op for op, sl in assignment.outputs.items() if not sl.is_clean()]
    assert tainted == [OutPoint(tip_cb.txid, 0)]


def test_source_txid_not_in_chain_raises(slice_chain):
    with pytest.raises(TaintEngineError, match="not found"):
        fifo_propagate(slice_chain, [TaintSource(mk_txid(404), 0, "RED")])


def test_source_vout_out_of_range_raises(slice_chain):
    with pytest.raises(TaintEngineError, match="missing output"):
        fifo_propagate(slice_chain, [TaintSource(mk_txid(12), 9, "RED")])


def test_slice_chain_fifo_assignment(slice_chain, slice_sources):
    assignment = fifo_propagate(slice_chain, slice_sources)
    assert assignment.outputs[OutPoint(mk_txid(12), 0)].to_pairs() == [[4, "RED"]]
    assert assignment.outputs[OutPoint(mk_txid(12), 1)].to_pairs() == [[1, "RED"], [4, "CLEAN"]]
    assert assignment.fees[mk_txid(12)].to_pairs() == [[1, "CLEAN"]]
    # coinbase picked up only clean fee satoshis
    cb = slice_chain.blocks[1].transactions[0]
    assert assignment.outputs[OutPoint(cb.txid, 0)].is_clean()


@pytest.mark.parametrize("seed", [0, 11, 42])
def test_fifo_matches_satoshi_oracle(seed):
    chain, sources, _ = generate_synthetic_chain(small_spec(seed))
    assignment = fifo_propagate(chain, sources)
    expected = fifo_oracle(chain, sources)
    assert set(expected) == set(assignment.outputs)
    for outpoint, labels in expected.items():
        assert assignment.outputs[outpoint] == to_segments(labels), outpoint


def test_fee_taint_reaches_coinbase():
    # spender pays a tainted fee; the block coinbase must carry it
    chain, sources, _ = generate_synthetic_chain(small_spec(42))
    assignment = fifo_propagate(chain, sources)
    tainted_cb = [
        block.height for block in chain.blocks
        if not assignment.outputs[OutPoint(block.transactions[0].txid, 0)].is_clean()
    ]
    expected = fifo_oracle(chain, sources)
    oracle_cb = [
        block.height for block in chain.blocks
        if any(lab != CLEAN for lab in expected[OutPoint(block.transactions[0].txid, 0)])
    ]
    assert tainted_cb == oracle_cb


def test_poison_union_of_labels():
    chain, _, _ = generate_synthetic_chain(small_spec(8, n_taint_sources=0, n_blocks=6))
    # two sources whose outputs are spent together later require a hand chain;
    # cover the union rule on the slice fixture instead, extended with 2 labels
    # (see test below); here: no sources -> empty sets
    assignment = poison_propagate(chain, [])
    assert all(labels == frozenset() for labels in assignment.outputs.values())


def test_poison_merges_everything(slice_chain):
    sources = [TaintSource(mk_txid(10), 0, "RED"), TaintSource(mk_txid(11), 0, "GREEN")]
    assignment = poison_propagate(slice_chain, sources)
    merger = mk_txid(12)
    assert assignment.outputs[OutPoint(merger, 0)] == frozenset({"RED", "GREEN"})
    assert assignment.outputs[OutPoint(merger, 1)] == frozenset({"RED", "GREEN"})
    # tx 11's other output inherits nothing (clean input)
    assert assignment.outputs[OutPoint(mk_txid(11), 1)] == frozenset()


@pytest.mark.parametrize("seed", [2, 19])
def test_poison_matches_reachability_oracle(seed):
    chain, sources, _ = generate_synthetic_chain(small_spec(seed))
    assignment = poison_propagate(chain, sources)
    expected = poison_oracle(chain, sources)
    assert assignment.outputs == expected


def test_haircut_half_tainted_inputs(slice_chain):
    # tx C spends 5 RED-overridden + 5 clean satoshis -> exactly 1/2 everywhere
    sources = [TaintSource(mk_txid(10), 0, "RED")]
    assignment = haircut_propagate(slice_chain, sources)
    merger = mk_txid(12)
    assert assignment.outputs[OutPoint(merger, 0)] == {"RED": Fraction(1, 2)}
    assert assignment.outputs[OutPoint(merger, 1)] == {"RED": Fraction(1, 2)}


def test_haircut_all_clean(slice_chain):
    assignment = haircut_propagate(slice_chain, [])
    assert all(fracs == {} for fracs in assignment.outputs.values())


@pytest.mark.parametrize("seed", [4, 33])
def test_haircut_matches_mass_oracle(seed):
    chain, sources, _ = generate_synthetic_chain(small_spec(seed))
    assignment = haircut_propagate(chain, sources)
    expected = haircut_oracle(chain, sources)
    assert assignment.outputs == expected


def test_haircut_override_sets_fraction_one(slice_chain, slice_sources):
    assignment = haircut_propagate(slice_chain, slice_sources)
    assert assignment.outputs[OutPoint(mk_txid(10), 0)] == {"RED": Fraction(1)}


# -- conservation and ordering invariants ---------------------------------------


def label_mass_of(value) -> dict[str, int]:
    return value.mass_by_label()


@pytest.mark.parametrize("seed", [0, 42])
def test_fifo_per_transaction_conservation(seed):
    chain, sources, _ = generate_synthetic_chain(small_spec(seed))
    index, _ = ChainIndex.build(chain)
    assignment = fifo_propagate(chain, sources, index)
    overrides = {
        OutPoint(s.txid, s.vout) for s in sources if s.vout is not None}
    for block in chain.blocks:
        for t in block.transactions[1:]:
            mass_in: dict[str, int] = {}
            for op in t.inputs:
                for label, sats in assignment.outputs[op].mass_by_label().items():
                    mass_in[label] = mass_in.get(label, 0) + sats
            mass_out: dict[str, int] = {}
            for vout in range(len(t.outputs)):
                outpoint = OutPoint(t.txid, vout)
                if outpoint in overrides:
                    # a taint event replaces provenance; conservation restarts here
                    break
                for label, sats in assignment.outputs[outpoint].mass_by_label().items():
                    mass_out[label] = mass_out.get(label, 0) + sats
            else:
                for label, sats in assignment.fees[t.txid].mass_by_label().items():
                    mass_out[label] = mass_out.get(label, 0) + sats
                assert mass_in == mass_out, t.txid


@pytest.mark.parametrize("seed", [5, 42])
def test_haircut_exact_mass_balance(seed):
    chain, sources, _ = generate_synthetic_chain(small_spec(seed))
    index, _ = ChainIndex.build(chain)
    assignment = haircut_propagate(chain, sources, index)
    override_txids = {s.txid for s in sources}
    for block in chain.blocks:
        for t in block.transactions[1:]:
            if t.txid in override_txids:
                continue
            mass_in: dict[str, Fraction] = {}
            for op in t.inputs:
                value = index.resolve(op).value
                for label, frac in assignment.outputs[op].items():
                    mass_in[label] = mass_in.get(label, Fraction(0)) + frac * value
            mass_out: dict[str, Fraction] = {}
            for vout, out in enumerate(t.outputs):
                for label, frac in assignment.outputs[OutPoint(t.txid, vout)].items():
                    mass_out[label] = mass_out.get(label, Fraction(0)) + frac * out.value
            fee = index.fee(t.txid)
            for label, frac in assignment.fees[t.txid].items():
                mass_out[label] = mass_out.get(label, Fraction(0)) + frac * fee
            assert mass_in == mass_out, t.txid


@pytest.mark.parametrize("seed", [0, 13, 42])
def test_policy_ordering_subset(seed):
    chain, sources, _ = generate_synthetic_chain(small_spec(seed))
    index, _ = ChainIndex.build(chain)
    fifo = fifo_propagate(chain, sources, index)
    haircut = haircut_propagate(chain, sources, index)
    poison = poison_propagate(chain, sources, index)
    fifo_set = set(fifo.tainted_outpoints())
    haircut_set = set(haircut.tainted_outpoints())
    poison_set = set(poison.tainted_outpoints())
    assert fifo_set <= haircut_set <= poison_set


@pytest.mark.parametrize("seed", [0, 42])
def test_segments_normalized_and_total_output_value(seed):
    chain, sources, _ = generate_synthetic_chain(small_spec(seed))
    index, _ = ChainIndex.build(chain)
    assignment = fifo_propagate(chain, sources, index)
    for outpoint, seglist in assignment.outputs.items():
        assert seglist.total() == index.resolve(outpoint).value
        for first, second in zip(seglist.segments, seglist.segments[1:]):
            assert first.label != second.label


# -- trace_back -----------------------------------------------------------------


def test_trace_coinbase_subsidy_is_single_leaf(slice_chain, slice_sources):
    cb0 = slice_chain.blocks[0].transactions[0]
    node = trace_back(slice_chain, slice_sources, OutPoint(cb0.txid, 0), 10, 20)
    assert node.terminal == CoinbaseOrigin(0)
    assert node.children == ()
    assert node.length == 10


def test_trace_finds_taint_event(slice_chain, slice_sources):
    node = trace_back(slice_chain, slice_sources, OutPoint(mk_txid(12), 1), 0, 1)
    leaves = list(node.leaves())
    assert len(leaves) == 1
    assert leaves[0].terminal == TaintEvent("RED", mk_txid(10))


def test_trace_interval_bounds_checked(slice_chain, slice_sources):
    with pytest.raises(TaintEngineError, match="out of bounds"):
        trace_back(slice_chain, slice_sources, OutPoint(mk_txid(12), 0), 0, 5)


def test_trace_fee_range_recurses_into_paying_tx(slice_chain, slice_sources):
    # coinbase of block 1 = 100 subsidy + 1 fee satoshi from tx C's queue tail
    cb1 = slice_chain.blocks[1].transactions[0]
    node = trace_back(slice_chain, slice_sources, OutPoint(cb1.txid, 0), 100, 101)
    leaves = list(node.leaves())
    assert len(leaves) == 1
    # C's fee satoshi was clean (queue tail from B's clean output)
    assert isinstance(leaves[0].terminal, CoinbaseOrigin)
    assert leaves[0].outpoint.txid == mk_txid(0)


def test_trace_spanning_subsidy_and_fee(slice_chain, slice_sources):
    cb1 = slice_chain.blocks[1].transactions[0]
    node = trace_back(slice_chain, slice_sources, OutPoint(cb1.txid, 0), 99, 101)
    assert sum(leaf.length for leaf in node.leaves()) == 2
    kinds = [type(leaf.terminal) for leaf in node.leaves()]
    assert kinds == [CoinbaseOrigin, CoinbaseOrigin]
    heights = [leaf.terminal.height for leaf in node.leaves()]
    assert heights == [1, 0]  # subsidy satoshi of block 1, then block 0 via fee


@pytest.mark.parametrize("seed", [0, 23, 42])
def test_trace_round_trips_forward_fifo(seed):
    chain, sources, _ = generate_synthetic_chain(small_spec(seed))
    index, _ = ChainIndex.build(chain)
    assignment = fifo_propagate(chain, sources, index)
    rng = random.Random(seed)
    tainted = [op for op, sl in assignment.outputs.items() if not sl.is_clean()]
    sample = rng.sample(tainted, min(25, len(tainted)))
    for outpoint in sample:
        value = index.resolve(outpoint).value
        start = rng.randrange(value)
        end = rng.randint(start + 1, value)
        node = trace_back(chain, sources, outpoint, start, end, index)
        assert sum(leaf.length for leaf in node.leaves()) == end - start
        assert leaf_segments(node) == assignment.outputs[outpoint].slice(start, end)


def test_children_interval_lengths_sum(slice_chain, slice_sources):
    node = trace_back(slice_chain, slice_sources, OutPoint(mk_txid(12), 1), 0, 5)
    stack = [node]
    while stack:
        n = stack.pop()
        if n.children:
            assert sum(c.length for c in n.children) == n.length
            stack.extend(n.children)


# -- wire formats -----------------------------------------------------------------


def test_assignment_export_parses_back(slice_chain, slice_sources):
    for propagate in (fifo_propagate, poison_propagate, haircut_propagate):
        assignment = propagate(slice_chain, slice_sources)
        lines = list(assignment_records(slice_chain, assignment))
        parsed = parse_assignment(lines)
        assert parsed.policy == assignment.policy
        assert parsed.outputs == assignment.outputs


def test_assignment_record_shape(slice_chain, slice_sources):
    assignment = fifo_propagate(slice_chain, slice_sources)
    record = json.loads(list(assignment_records(slice_chain, assignment))[3])
    assert list(record) == ["txid", "vout", "policy", "segments"]
    haircut = haircut_propagate(slice_chain, slice_sources)
    record = json.loads(list(assignment_records(slice_chain, haircut))[2])
    assert record["policy"] == "haircut"
    assert record["fractions"] == {"RED": "1/1"}


def test_provenance_json_matches_doc(slice_chain, slice_sources):
    node = trace_back(slice_chain, slice_sources, OutPoint(mk_txid(12), 1), 0, 5)
    doc = provenance_to_doc(node)
    assert provenance_json(node) == json.dumps(doc, separators=(",", ":"))
    assert doc["children"][0]["terminal"] == {
        "kind": "taint_event", "label": "RED", "txid": mk_txid(10)}
