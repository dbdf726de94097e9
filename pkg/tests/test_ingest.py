import json

import pytest

from taintchain.chain_model import ChainIndex, OutPoint, validate_chain
from taintchain.ingest import (
    ChainFormatError,
    GeneratorError,
    GeneratorSpec,
    PatternSpec,
    TaintSourceError,
    generate_synthetic_chain,
    generator_spec_to_doc,
    load_taint_sources,
    parse_chain,
    parse_generator_spec,
    write_chain,
    write_taint_sources,
)

from conftest import mk_txid, small_spec

T = mk_txid(7)


def chain_lines(*docs) -> list[str]:
    return [json.dumps(doc) for doc in docs]


def block_doc(height, txs):
    return {"height": height, "hash": f"h{height}", "txs": txs}


def cb_doc(n, value):
    return {"txid": mk_txid(n), "coinbase": True, "inputs": [],
            "outputs": [{"value": value, "address": f"m{n}"}]}


def test_parse_single_block():
    chain = parse_chain(chain_lines(block_doc(0, [cb_doc(0, 100)])), subsidy=100)
    assert len(chain) == 1
    assert chain.blocks[0].transactions[0].is_coinbase


def test_parse_rejects_negative_vout():
    bad = block_doc(0, [
        cb_doc(0, 100),
    ])
    bad["txs"].append({
        "txid": mk_txid(1), "coinbase": False,
        "inputs": [{"txid": mk_txid(0), "vout": -1}],
        "outputs": [{"value": 1, "address": "a"}],
    })
    with pytest.raises(ChainFormatError, match="line 1.*'vout'"):
        parse_chain(chain_lines(bad))


def test_parse_reports_malformed_json_line():
    with pytest.raises(ChainFormatError, match="line 2"):
        parse_chain(chain_lines(block_doc(0, [cb_doc(0, 100)])) + ["{not json"])


def test_parse_reports_missing_field():
    doc = block_doc(0, [cb_doc(0, 100)])
    del doc["hash"]
    with pytest.raises(ChainFormatError, match="'hash'"):
        parse_chain(chain_lines(doc))


def test_parse_rejects_non_consecutive_heights():
    with pytest.raises(ChainFormatError, match="non-consecutive"):
        parse_chain(chain_lines(block_doc(0, [cb_doc(0, 100)]),
                                block_doc(2, [cb_doc(1, 100)])))


def test_parse_rejects_duplicate_txid():
    with pytest.raises(ChainFormatError, match="duplicate txid"):
        parse_chain(chain_lines(block_doc(0, [cb_doc(0, 100)]),
                                block_doc(1, [cb_doc(0, 100)])))


def test_empty_chain_round_trip():
    assert list(write_chain(parse_chain([]))) == []


@pytest.mark.parametrize("seed", [7, 21])
def test_generated_chain_round_trips(seed):
    chain, _, _ = generate_synthetic_chain(small_spec(seed, n_blocks=10))
    lines = list(write_chain(chain))
    assert parse_chain(lines, subsidy=chain.subsidy) == chain


def test_write_chain_is_one_line_per_block():
    chain, _, _ = generate_synthetic_chain(small_spec(3, n_blocks=5))
    lines = list(write_chain(chain))
    assert len(lines) == 5
    for line in lines:
        assert "\n" not in line
        json.loads(line)


def test_chain_wire_key_order():
    chain, _, _ = generate_synthetic_chain(small_spec(3, n_blocks=5))
    line = next(iter(write_chain(chain)))
    assert line.startswith('{"height":0,"hash":"')
    assert '"txs":[{"txid":"' in line


# -- taint sources ------------------------------------------------------------


def test_load_single_source():
    sources = load_taint_sources([json.dumps({"txid": T, "vout": 0, "label": "RED"})])
    assert len(sources) == 1
    assert sources[0].vout == 0
    assert sources[0].display_color is None


def test_load_source_with_color():
    line = json.dumps({"txid": T, "vout": 0, "label": "RED", "color": "#d62728"})
    assert load_taint_sources([line])[0].display_color == "#d62728"


def test_duplicate_source_rejected():
    line = json.dumps({"txid": T, "vout": 0, "label": "RED"})
    with pytest.raises(TaintSourceError, match="duplicate taint source"):
        load_taint_sources([line, line])


def test_conflicting_labels_rejected():
    lines = [json.dumps({"txid": T, "vout": 0, "label": "RED"}),
             json.dumps({"txid": T, "vout": 0, "label": "BLUE"})]
    with pytest.raises(TaintSourceError, match="conflicting"):
        load_taint_sources(lines)


def test_null_vout_covers_all_outputs_and_conflicts():
    source = load_taint_sources([json.dumps({"txid": T, "vout": None, "label": "RED"})])[0]
    assert source.vout is None
    lines = [json.dumps({"txid": T, "vout": None, "label": "RED"}),
             json.dumps({"txid": T, "vout": 1, "label": "BLUE"})]
    with pytest.raises(TaintSourceError, match="conflicting"):
        load_taint_sources(lines)


def test_clean_label_reserved():
    with pytest.raises(TaintSourceError, match="reserved"):
        load_taint_sources([json.dumps({"txid": T, "vout": 0, "label": "CLEAN"})])


def test_empty_and_long_labels_rejected():
    with pytest.raises(TaintSourceError):
        load_taint_sources([json.dumps({"txid": T, "vout": 0, "label": ""})])
    with pytest.raises(TaintSourceError, match="longer"):
        load_taint_sources([json.dumps({"txid": T, "vout": 0, "label": "X" * 33})])


def test_unknown_txid_is_fine_at_load_time():
    sources = load_taint_sources([json.dumps({"txid": mk_txid(12345), "vout": 0,
                                              "label": "RED"})])
    assert len(sources) == 1


def test_sources_round_trip():
    chain, sources, _ = generate_synthetic_chain(small_spec(9))
    lines = list(write_taint_sources(sources))
    assert load_taint_sources(lines) == sources


# -- generator ----------------------------------------------------------------


def test_generator_is_deterministic():
    spec = small_spec(42, patterns=(PatternSpec("splitting", {"fan": 12}),),
                      n_taint_sources=2)
    first = generate_synthetic_chain(spec)
    second = generate_synthetic_chain(spec)
    assert list(write_chain(first[0])) == list(write_chain(second[0]))
    assert list(write_taint_sources(first[1])) == list(write_taint_sources(second[1]))
    assert first[2].to_doc() == second[2].to_doc()


def test_no_pattern_spec_yields_empty_ledger():
    chain, sources, ledger = generate_synthetic_chain(
        GeneratorSpec(seed=1, n_blocks=5, txs_per_block=2, subsidy=5000))
    assert ledger.records == []
    assert sources == []
    assert validate_chain(chain).ok()


def test_splitting_injection_recorded_with_shape():
    spec = small_spec(5, n_blocks=12, n_taint_sources=1,
                      patterns=(PatternSpec("splitting", {"fan": 50}),),
                      subsidy=100_000)
    chain, sources, ledger = generate_synthetic_chain(spec)
    assert validate_chain(chain).ok()
    records = ledger.by_kind("splitting")
    assert len(records) == 1
    txid = records[0].txids[0]
    found = [t for b in chain.blocks for t in b.transactions if t.txid == txid]
    assert len(found) == 1
    assert len(found[0].outputs) == 50


def test_peeling_injection_forms_spend_path(pattern_chain):
    chain, _, ledger = pattern_chain
    index, report = ChainIndex.build(chain)
    assert report.ok()
    (record,) = ledger.by_kind("peeling_chain")
    assert len(record.txids) == 8
    for here, there in zip(record.txids, record.txids[1:]):
        tx = index.locate(here).tx
        assert len(tx.outputs) == 2
        larger = 0 if tx.outputs[0].value >= tx.outputs[1].value else 1
        spender = index.spender_of(OutPoint(here, larger))
        assert spender is not None and spender[0] == there


def test_collection_injection_converges(pattern_chain):
    chain, _, ledger = pattern_chain
    index, _ = ChainIndex.build(chain)
    (record,) = ledger.by_kind("collection")
    assert len(record.txids) == 20
    for txid in record.txids:
        tx = index.locate(txid).tx
        assert any(out.address == record.address for out in tx.outputs)


def test_pattern_needs_source():
    with pytest.raises(GeneratorError, match="source"):
        GeneratorSpec(seed=1, n_blocks=20, n_taint_sources=0,
                      patterns=(PatternSpec("splitting", {}),))


def test_pattern_must_fit_chain():
    with pytest.raises(GeneratorError, match="too short"):
        generate_synthetic_chain(GeneratorSpec(
            seed=1, n_blocks=5, n_taint_sources=1,
            patterns=(PatternSpec("peeling_chain", {"length": 30}),)))


def test_insufficient_value_raises():
    with pytest.raises(GeneratorError, match="more value than subsidies"):
        generate_synthetic_chain(GeneratorSpec(
            seed=1, n_blocks=12, txs_per_block=0, n_taint_sources=1, subsidy=20,
            patterns=(PatternSpec("splitting", {"fan": 500}),)))


def test_generator_spec_doc_round_trip():
    spec = small_spec(6, patterns=(PatternSpec("mix", {"width": 4, "rounds": 2}),),
                      n_taint_sources=1)
    assert parse_generator_spec(generator_spec_to_doc(spec)) == spec


def test_unknown_pattern_kind_rejected():
    with pytest.raises(GeneratorError, match="unknown pattern kind"):
        PatternSpec("teleport", {})
