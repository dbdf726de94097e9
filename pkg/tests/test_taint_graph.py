from fractions import Fraction
from pathlib import Path

import pytest

from taintchain.chain_model import Block, Chain, ChainIndex, OutPoint
from taintchain.ingest import TaintSource, generate_synthetic_chain
from taintchain.taint_engine import fifo_propagate, poison_propagate
from taintchain.taint_graph import (
    SvgStyle,
    UnknownTxidError,
    build_color_map,
    build_graph,
    expand,
    export_svg_columnar,
)

from conftest import coinbase, mk_txid, small_spec, tx

GOLDEN = Path(__file__).parent / "golden" / "columnar.svg"


def test_clean_chain_gives_empty_graph():
    chain, _, _ = generate_synthetic_chain(small_spec(5, n_taint_sources=0))
    graph = build_graph(chain, fifo_propagate(chain, []))
    assert graph.vertices == {}
    assert graph.n_edges == 0


def test_single_unspent_tainted_output_is_one_vertex():
    chain, _, _ = generate_synthetic_chain(small_spec(5, n_taint_sources=0))
    tip_cb = chain.blocks[-1].transactions[0]
    sources = [TaintSource(tip_cb.txid, 0, "RED")]
    graph = build_graph(chain, fifo_propagate(chain, sources))
    assert set(graph.vertices) == {tip_cb.txid}
    assert graph.n_edges == 0


def test_slice_chain_edges(slice_chain, slice_sources):
    assignment = fifo_propagate(slice_chain, slice_sources)
    graph = build_graph(slice_chain, assignment)
    # A creates the loot, C consumes it and keeps taint flowing
    assert set(graph.vertices) == {mk_txid(10), mk_txid(12)}
    (edge,) = graph.edges_from(mk_txid(10))
    assert edge.to_txid == mk_txid(12)
    assert edge.value == 5
    assert edge.tainted == {"RED": 5}
    assert edge.proportion == Fraction(5, 10)
    vertex = graph.vertex(mk_txid(12))
    assert vertex.tainted_out == {"RED": 5}
    assert vertex.tainted_in == {"RED": 5}
    assert vertex.height == 1
    assert vertex.block_hash == "blockhash1"


def test_graph_requires_fifo(slice_chain, slice_sources):
    with pytest.raises(ValueError, match="FIFO"):
        build_graph(slice_chain, poison_propagate(slice_chain, slice_sources))


def test_vertex_set_matches_assignment_scan(pattern_chain):
    chain, sources, _ = pattern_chain
    index, _ = ChainIndex.build(chain)
    assignment = fifo_propagate(chain, sources, index)
    graph = build_graph(chain, assignment, index)
    expected = set()
    for block in chain.blocks:
        for t in block.transactions:
            touched = any(
                not assignment.outputs[OutPoint(t.txid, v)].is_clean()
                for v in range(len(t.outputs)))
            touched = touched or any(
                not assignment.outputs[op].is_clean() for op in t.inputs)
            if touched:
                expected.add(t.txid)
    assert set(graph.vertices) == expected


def test_incoming_edge_mass_equals_input_mass(pattern_chain):
    chain, sources, _ = pattern_chain
    index, _ = ChainIndex.build(chain)
    assignment = fifo_propagate(chain, sources, index)
    graph = build_graph(chain, assignment, index)
    for txid, vertex in graph.vertices.items():
        edge_mass: dict[str, int] = {}
        for edge in graph.edges_to(txid):
            for label, sats in edge.tainted.items():
                edge_mass[label] = edge_mass.get(label, 0) + sats
        assert edge_mass == vertex.tainted_in, txid


# -- expand ---------------------------------------------------------------------


def test_expand_terminal_vertex(slice_chain, slice_sources):
    graph = build_graph(slice_chain, fifo_propagate(slice_chain, slice_sources))
    pairs, collapsed = expand(graph, mk_txid(12), "forward")
    assert pairs == []
    assert collapsed == 0


def test_expand_label_filter_hides_other_labels(slice_chain, slice_sources):
    graph = build_graph(slice_chain, fifo_propagate(slice_chain, slice_sources))
    pairs, collapsed = expand(graph, mk_txid(10), "forward", label_filter="BLUE")
    assert pairs == []
    assert collapsed == 1  # the RED edge is collapsed, not silently dropped


def test_expand_backward(slice_chain, slice_sources):
    graph = build_graph(slice_chain, fifo_propagate(slice_chain, slice_sources))
    pairs, collapsed = expand(graph, mk_txid(12), "backward")
    assert [(e.from_txid, v.txid) for e, v in pairs] == [(mk_txid(10), mk_txid(10))]
    assert collapsed == 0


def test_expand_threshold_collapses_fanout():
    # one tainted 5000-sat output fanned across 50 outputs of 100 sats
    fan = tx(10, [(mk_txid(0), 0)], [(100, f"a{i}") for i in range(50)])
    spenders = tuple(
        tx(20 + i, [(mk_txid(10), i)], [(100, f"b{i}")]) for i in range(50))
    chain = Chain((
        Block(0, "h0", (coinbase(0, [5000]),)),
        Block(1, "h1", (coinbase(1, [5000]), fan, *spenders)),
    ), subsidy=5000)
    sources = [TaintSource(mk_txid(0), 0, "RED")]
    graph = build_graph(chain, fifo_propagate(chain, sources))
    pairs, collapsed = expand(graph, mk_txid(10), "forward", min_sats=1000)
    assert pairs == []
    assert collapsed == 50
    pairs, collapsed = expand(graph, mk_txid(10), "forward", min_sats=0)
    assert len(pairs) == 50
    assert collapsed == 0


def test_expand_counts_always_cover_degree(pattern_chain):
    chain, sources, _ = pattern_chain
    index, _ = ChainIndex.build(chain)
    assignment = fifo_propagate(chain, sources, index)
    graph = build_graph(chain, assignment, index)
    some = list(graph.vertices)[:40]
    for txid in some:
        degree = len(graph.edges_from(txid))
        for min_sats in (0, 10, 10_000):
            pairs, collapsed = expand(graph, txid, "forward", min_sats=min_sats)
            assert len(pairs) + collapsed == degree
        pairs, collapsed = expand(graph, txid, "forward", label_filter="RED")
        assert len(pairs) + collapsed == degree


def test_expand_unknown_txid(slice_chain, slice_sources):
    graph = build_graph(slice_chain, fifo_propagate(slice_chain, slice_sources))
    with pytest.raises(UnknownTxidError):
        expand(graph, mk_txid(404), "forward")
    with pytest.raises(ValueError, match="direction"):
        expand(graph, mk_txid(10), "sideways")


# -- colors and SVG ----------------------------------------------------------------


def test_color_map_priorities():
    sources = [TaintSource(mk_txid(1), 0, "RED", "#111111"),
               TaintSource(mk_txid(2), 0, "ODDLABEL")]
    colors = build_color_map(["RED", "ODDLABEL", "BLUE"], sources,
                             overrides={"BLUE": "#222222"})
    assert colors["RED"] == "#111111"  # source color beats palette
    assert colors["BLUE"] == "#222222"  # explicit override wins
    assert colors["ODDLABEL"].startswith("#")  # palette fallback


def test_svg_empty_range_has_column_frames_only(slice_chain):
    assignment = fifo_propagate(slice_chain, [])
    svg = export_svg_columnar(slice_chain, assignment, 0, 1, {})
    assert svg.count('class="column"') == 2
    assert "data-txid" not in svg


def test_svg_rect_height_proportional():
    big = tx(10, [(mk_txid(0), 0)], [(200, "a")])
    small = tx(11, [(mk_txid(0), 1)], [(100, "b")])
    chain = Chain((
        Block(0, "h0", (coinbase(0, [200, 100]),)),
        Block(1, "h1", (coinbase(1, [300]), big, small)),
    ), subsidy=300)
    sources = [TaintSource(mk_txid(0), None, "RED")]
    assignment = fifo_propagate(chain, sources)
    svg = export_svg_columnar(chain, assignment, 0, 1, {"RED": "#d62728"},
                              SvgStyle(pixels_per_sat=1.0))
    import re
    heights = [int(m) for m in re.findall(r'height="(\d+)" fill="#d62728"', svg)]
    assert 200 in heights and 100 in heights


def test_svg_bad_range_rejected(slice_chain):
    assignment = fifo_propagate(slice_chain, [])
    with pytest.raises(ValueError, match="empty range"):
        export_svg_columnar(slice_chain, assignment, 1, 0, {})
    with pytest.raises(ValueError, match="empty range"):
        export_svg_columnar(slice_chain, assignment, 0, 5, {})


def golden_svg() -> str:
    chain, sources, _ = generate_synthetic_chain(small_spec(12, n_taint_sources=2))
    assignment = fifo_propagate(chain, sources)
    colors = build_color_map(assignment.labels, sources)
    return export_svg_columnar(chain, assignment, 0, len(chain.blocks) - 1, colors)


def test_svg_deterministic_across_runs():
    assert golden_svg() == golden_svg()


def test_svg_matches_golden_file():
    assert golden_svg() == GOLDEN.read_text(encoding="utf-8")


def test_svg_carries_txids_and_no_scripts():
    svg = golden_svg()
    assert "data-txid=" in svg
    assert "<script" not in svg
