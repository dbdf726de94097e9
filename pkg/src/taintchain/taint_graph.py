"""Transaction-vertex / hop-edge taint graph and the static columnar SVG view.

Vertices are transactions touching tainted satoshis; edges are hops moving at
least one tainted satoshi. Clean transactions and clean hops are omitted, so
the graph stays small even on chains that are mostly legitimate traffic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .chain_model import Chain, ChainIndex, OutPoint, TxClass, classify_transaction
from .ingest import LABEL_PALETTE, TaintSource
from .taint_engine import TaintAssignment


class UnknownTxidError(KeyError):
    pass


@dataclass(frozen=True, slots=True)
class TaintVertex:
    txid: str
    height: int
    block_hash: str
    tx_class: TxClass
    tainted_out: dict[str, int]  # per-label tainted satoshis over outputs
    tainted_in: dict[str, int]


@dataclass(frozen=True, slots=True)
class TaintEdge:
    from_txid: str
    from_vout: int
    to_txid: str
    to_input: int
    value: int
    tainted: dict[str, int]  # per-label tainted satoshis within the hop
    proportion: Fraction  # value / spending tx total input value

    def tainted_mass(self, label: str | None = None) -> int:
        if label is None:
            return sum(self.tainted.values())
        return self.tainted.get(label, 0)


class TaintGraph:
    """Immutable after build; reads are safe to run concurrently."""

    def __init__(self) -> None:
        self.vertices: dict[str, TaintVertex] = {}
        self.out_edges: dict[str, list[TaintEdge]] = {}
        self.in_edges: dict[str, list[TaintEdge]] = {}
        self.n_edges = 0

    def vertex(self, txid: str) -> TaintVertex:
        vertex = self.vertices.get(txid)
        if vertex is None:
            raise UnknownTxidError(txid)
        return vertex

    def edges_from(self, txid: str) -> list[TaintEdge]:
        return self.out_edges.get(txid, [])

    def edges_to(self, txid: str) -> list[TaintEdge]:
        return self.in_edges.get(txid, [])


def _sorted_mass(mass: dict[str, int]) -> dict[str, int]:
    return {label: mass[label] for label in sorted(mass)}


def build_graph(
    chain: Chain,
    fifo_assignment: TaintAssignment,
    index: ChainIndex | None = None,
    fan_threshold: int = 3,
) -> TaintGraph:
    """Build the graph of transactions with tainted inputs or outputs."""
    if fifo_assignment.policy != "fifo":
        raise ValueError("taint graph requires a FIFO assignment")
    if index is None:
        index, _ = ChainIndex.build(chain)
    graph = TaintGraph()

    for block in chain.blocks:
        for tx in block.transactions:
            out_mass: dict[str, int] = {}
            for vout in range(len(tx.outputs)):
                for label, sats in fifo_assignment.outputs[
                        OutPoint(tx.txid, vout)].mass_by_label().items():
                    out_mass[label] = out_mass.get(label, 0) + sats
            in_mass: dict[str, int] = {}
            for op in tx.inputs:
                for label, sats in fifo_assignment.outputs[op].mass_by_label().items():
                    in_mass[label] = in_mass.get(label, 0) + sats
            if not out_mass and not in_mass:
                continue
            graph.vertices[tx.txid] = TaintVertex(
                tx.txid, block.height, block.hash,
                classify_transaction(tx, fan_threshold),
                _sorted_mass(out_mass), _sorted_mass(in_mass))

    for txid in graph.vertices:
        tx = index.locate(txid).tx
        total_in = sum(index.resolve(op).value for op in tx.inputs)
        for input_index, op in enumerate(tx.inputs):
            hop_taint = fifo_assignment.outputs[op].mass_by_label()
            if not hop_taint:
                continue
            edge = TaintEdge(
                op.txid, op.vout, txid, input_index,
                index.resolve(op).value, _sorted_mass(hop_taint),
                Fraction(index.resolve(op).value, total_in))
            graph.out_edges.setdefault(op.txid, []).append(edge)
            graph.in_edges.setdefault(txid, []).append(edge)
            graph.n_edges += 1

    return graph


def expand(
    graph: TaintGraph,
    txid: str,
    direction: str,
    label_filter: str | None = None,
    min_sats: int = 0,
) -> tuple[list[tuple[TaintEdge, TaintVertex]], int]:
    """Neighbors in one direction whose hop taint passes the filters.

    Returns (pairs, collapsed): pairs in stable edge order, collapsed counting
    the edges suppressed by the label filter or threshold, so that
    len(pairs) + collapsed always equals the unfiltered degree.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    graph.vertex(txid)  # raises UnknownTxidError
    edges = graph.edges_from(txid) if direction == "forward" else graph.edges_to(txid)
    pairs: list[tuple[TaintEdge, TaintVertex]] = []
    collapsed = 0
    for edge in edges:
        mass = edge.tainted_mass(label_filter)
        if mass >= min_sats and (label_filter is None or mass > 0):
            neighbor = edge.to_txid if direction == "forward" else edge.from_txid
            pairs.append((edge, graph.vertices[neighbor]))
        else:
            collapsed += 1
    return pairs, collapsed


# ---------------------------------------------------------------------------
# Label colors
# ---------------------------------------------------------------------------


def build_color_map(labels: list[str] | tuple[str, ...],
                    sources: list[TaintSource] | None = None,
                    overrides: dict[str, str] | None = None) -> dict[str, str]:
    """Stable label -> CSS color map: explicit overrides win, then source
    colors, then the default palette in label order."""
    palette = {name: color for name, color in LABEL_PALETTE}
    source_colors: dict[str, str] = {}
    for source in sources or ():
        if source.display_color and source.label not in source_colors:
            source_colors[source.label] = source.display_color
    colors: dict[str, str] = {}
    cycle = [color for _, color in LABEL_PALETTE]
    for i, label in enumerate(labels):
        if overrides and label in overrides:
            colors[label] = overrides[label]
        elif label in source_colors:
            colors[label] = source_colors[label]
        elif label in palette:
            colors[label] = palette[label]
        else:
            colors[label] = cycle[i % len(cycle)]
    return colors


# ---------------------------------------------------------------------------
# Static columnar SVG export
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SvgStyle:
    pixels_per_sat: float = 0.02
    min_rect_px: int = 2
    column_width: int = 96
    column_gap: int = 48
    tx_gap: int = 8
    margin: int = 24
    header_px: int = 18


def export_svg_columnar(
    chain: Chain,
    fifo_assignment: TaintAssignment,
    start_height: int,
    end_height: int,
    colors: dict[str, str],
    style: SvgStyle = SvgStyle(),
    index: ChainIndex | None = None,
) -> str:
    """Render blocks as columns of tainted-transaction rectangles.

    Rectangle height is linear in tainted satoshis with a minimum so dust
    stays visible; multi-label transactions stack one sub-rectangle per label;
    hop lines join rectangles; every rectangle carries data-txid. Output is
    deterministic for fixed inputs.
    """
    if not chain.blocks:
        raise ValueError("empty range: chain has no blocks")
    if not (0 <= start_height <= end_height < len(chain.blocks)):
        raise ValueError(
            f"empty range: [{start_height}, {end_height}] not within chain of "
            f"{len(chain.blocks)} blocks")
    if fifo_assignment.policy != "fifo":
        raise ValueError("SVG export requires a FIFO assignment")
    if index is None:
        index, _ = ChainIndex.build(chain)

    st = style
    blocks = chain.blocks[start_height:end_height + 1]

    # per-tx stacked label bars, chain order
    tx_bars: dict[str, list[tuple[str, int, int]]] = {}  # txid -> [(label, mass, px)]
    placements: dict[str, tuple[int, int, int]] = {}  # txid -> (x, y, total_px)
    columns: list[list[str]] = []
    for col, block in enumerate(blocks):
        drawn: list[str] = []
        for tx in block.transactions:
            mass: dict[str, int] = {}
            for vout in range(len(tx.outputs)):
                for label, sats in fifo_assignment.outputs[
                        OutPoint(tx.txid, vout)].mass_by_label().items():
                    mass[label] = mass.get(label, 0) + sats
            if not mass:
                continue
            bars = []
            for label in sorted(mass, key=lambda l: (-mass[l], l)):
                px = max(st.min_rect_px, int(round(mass[label] * st.pixels_per_sat)))
                bars.append((label, mass[label], px))
            tx_bars[tx.txid] = bars
            drawn.append(tx.txid)
        columns.append(drawn)

    top = st.margin + st.header_px
    content_heights = []
    for col, drawn in enumerate(columns):
        x = st.margin + col * (st.column_width + st.column_gap)
        y = top
        for txid in drawn:
            total_px = sum(px for _, _, px in tx_bars[txid])
            placements[txid] = (x, y, total_px)
            y += total_px + st.tx_gap
        content_heights.append(y - top)
    max_content = max(content_heights) if content_heights else 0
    frame_height = max(max_content, 4 * st.min_rect_px) + st.tx_gap

    width = 2 * st.margin + len(blocks) * (st.column_width + st.column_gap) - st.column_gap
    height = top + frame_height + st.margin

    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">')
    parts.append('<rect width="100%" height="100%" fill="#ffffff"/>')

    for col, block in enumerate(blocks):
        x = st.margin + col * (st.column_width + st.column_gap)
        parts.append(
            f'<rect class="column" x="{x - 4}" y="{top - 4}" '
            f'width="{st.column_width + 8}" height="{frame_height + 8}" '
            f'fill="none" stroke="#cccccc" stroke-width="1"/>')
        parts.append(
            f'<text x="{x + st.column_width // 2}" y="{st.margin + 12}" '
            f'font-family="monospace" font-size="12" text-anchor="middle" '
            f'fill="#333333">{block.height}</text>')

    # hop lines beneath the rectangles
    for block in blocks:
        for tx in block.transactions:
            if tx.txid not in placements:
                continue
            to_x, to_y, to_px = placements[tx.txid]
            for op in tx.inputs:
                if op.txid not in placements:
                    continue
                hop_mass = fifo_assignment.outputs[op].mass_by_label()
                if not hop_mass:
                    continue
                from_x, from_y, from_px = placements[op.txid]
                label = max(sorted(hop_mass), key=lambda l: hop_mass[l])
                color = colors.get(label, "#888888")
                parts.append(
                    f'<line x1="{from_x + st.column_width}" y1="{from_y + from_px // 2}" '
                    f'x2="{to_x}" y2="{to_y + to_px // 2}" '
                    f'stroke="{color}" stroke-width="1" stroke-opacity="0.5"/>')

    for block in blocks:
        for tx in block.transactions:
            if tx.txid not in placements:
                continue
            x, y, _ = placements[tx.txid]
            bar_y = y
            for label, _, px in tx_bars[tx.txid]:
                color = colors.get(label, "#888888")
                parts.append(
                    f'<rect x="{x}" y="{bar_y}" width="{st.column_width}" '
                    f'height="{px}" fill="{color}" data-txid="{tx.txid}"/>')
                bar_y += px

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
