"""Taint propagation over a chain: poison, haircut and FIFO policies.

FIFO is the precise one: every transaction concatenates its input satoshi
runs into a queue, outputs take from the front in index order, and the queue
tail is the fee. Fees flow into the block coinbase behind the subsidy, in
block transaction order, which keeps taint conserved and makes every forward
assignment losslessly reversible by `trace_back`.

Poison and haircut follow the same chain walk but spread label sets and
exact value fractions instead of satoshi runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

from .chain_model import Chain, ChainIndex, OutPoint, Transaction
from .ingest import TaintSource
from .intervals import CLEAN, SegmentList, concat_all

POLICY_FIFO = "fifo"
POLICY_POISON = "poison"
POLICY_HAIRCUT = "haircut"
POLICIES = (POLICY_FIFO, POLICY_POISON, POLICY_HAIRCUT)


class TaintEngineError(ValueError):
    """Propagation or tracing cannot proceed (bad sources, broken accounting)."""


class AccountingError(TaintEngineError):
    """Queue arithmetic does not balance; signals an upstream bug, not bad data."""


@dataclass(slots=True)
class TaintAssignment:
    """Per-policy taint of every output of every transaction plus fee taint.

    `outputs` maps each OutPoint to a SegmentList (fifo), frozenset of labels
    (poison) or label -> Fraction map (haircut); `fees` carries the same type
    per non-coinbase txid, attributing fee taint to the block coinbase.
    """

    policy: str
    outputs: dict[OutPoint, object]
    fees: dict[str, object]
    labels: tuple[str, ...]
    n_blocks: int = 0
    tip_hash: str | None = None

    def is_tainted(self, outpoint: OutPoint) -> bool:
        value = self.outputs[outpoint]
        if self.policy == POLICY_FIFO:
            return not value.is_clean()
        return bool(value)

    def tainted_outpoints(self) -> Iterator[OutPoint]:
        for outpoint, value in self.outputs.items():
            if self.policy == POLICY_FIFO:
                if not value.is_clean():
                    yield outpoint
            elif value:
                yield outpoint


def resolve_overrides(index: ChainIndex, sources: Iterable[TaintSource]) -> dict[OutPoint, str]:
    """Expand taint sources into per-output override labels.

    Raises TaintEngineError when a source names a transaction not in the
    chain or an output index past the transaction's outputs.
    """
    overrides: dict[OutPoint, str] = {}
    for source in sources:
        if not index.has_tx(source.txid):
            raise TaintEngineError(f"taint source txid not found in chain: {source.txid}")
        tx = index.locate(source.txid).tx
        if source.vout is None:
            vouts = range(len(tx.outputs))
        else:
            if source.vout >= len(tx.outputs):
                raise TaintEngineError(
                    f"taint source {source.txid}:{source.vout} names a missing output "
                    f"(transaction has {len(tx.outputs)})")
            vouts = (source.vout,)
        for vout in vouts:
            outpoint = OutPoint(source.txid, vout)
            if outpoint in overrides and overrides[outpoint] != source.label:
                raise TaintEngineError(f"conflicting overrides on {outpoint}")
            overrides[outpoint] = source.label
    return overrides


def _ordered_labels(sources: Iterable[TaintSource]) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for source in sources:
        seen.setdefault(source.label)
    return tuple(seen)


def _build_index(chain: Chain, index: ChainIndex | None) -> ChainIndex:
    if index is not None:
        return index
    built, report = ChainIndex.build(chain)
    if not report.ok():
        raise TaintEngineError(
            f"chain fails validation ({len(report.violations)} violations); "
            f"first: {report.violations[0]}")
    return built


# ---------------------------------------------------------------------------
# FIFO
# ---------------------------------------------------------------------------


def fifo_slice(
    tx: Transaction,
    input_segments: list[SegmentList],
    taint_overrides: dict[int, str] | None = None,
) -> tuple[list[SegmentList], SegmentList]:
    """Slice a transaction's input queue across its outputs, FIFO order.

    Inputs are concatenated in input-list order; each output takes exactly its
    value from the queue front in output-index order; the remaining tail is
    the fee. An override replaces an output's entire run with its label.
    """
    queue = concat_all(input_segments)
    needed = tx.output_total()
    if queue.total() < needed:
        raise AccountingError(
            f"tx {tx.txid}: queue holds {queue.total()} satoshis, outputs need {needed}")
    overrides = taint_overrides or {}
    out_lists: list[SegmentList] = []
    for vout, output in enumerate(tx.outputs):
        taken, queue = queue.split_at(output.value)
        if vout in overrides:
            taken = SegmentList.uniform(output.value, overrides[vout])
        out_lists.append(taken)
    return out_lists, queue


def fifo_propagate(
    chain: Chain,
    sources: list[TaintSource],
    index: ChainIndex | None = None,
) -> TaintAssignment:
    """Forward FIFO propagation across the whole chain."""
    index = _build_index(chain, index)
    overrides = resolve_overrides(index, sources)
    outputs: dict[OutPoint, SegmentList] = {}
    fees: dict[str, SegmentList] = {}

    for block in chain.blocks:
        for tx in block.transactions[1:]:
            input_lists = [outputs[op] for op in tx.inputs]
            tx_overrides = {
                vout: overrides[OutPoint(tx.txid, vout)]
                for vout in range(len(tx.outputs))
                if OutPoint(tx.txid, vout) in overrides
            }
            out_lists, fee_list = fifo_slice(tx, input_lists, tx_overrides)
            for vout, seglist in enumerate(out_lists):
                outputs[OutPoint(tx.txid, vout)] = seglist
            fees[tx.txid] = fee_list

        coinbase = block.transactions[0]
        queue = SegmentList.clean(chain.subsidy)
        for tx in block.transactions[1:]:
            queue = queue.concat(fees[tx.txid])
        if queue.total() != coinbase.output_total():
            raise AccountingError(
                f"block {block.height}: coinbase outputs total {coinbase.output_total()}, "
                f"subsidy plus fees total {queue.total()}")
        for vout, output in enumerate(coinbase.outputs):
            taken, queue = queue.split_at(output.value)
            outpoint = OutPoint(coinbase.txid, vout)
            if outpoint in overrides:
                taken = SegmentList.uniform(output.value, overrides[outpoint])
            outputs[outpoint] = taken

    return TaintAssignment(
        POLICY_FIFO, outputs, fees, _ordered_labels(sources),
        n_blocks=len(chain.blocks),
        tip_hash=chain.blocks[-1].hash if chain.blocks else None,
    )


# ---------------------------------------------------------------------------
# Poison
# ---------------------------------------------------------------------------


def poison_propagate(
    chain: Chain,
    sources: list[TaintSource],
    index: ChainIndex | None = None,
) -> TaintAssignment:
    """Any tainted input poisons every output with the full input label union."""
    index = _build_index(chain, index)
    overrides = resolve_overrides(index, sources)
    outputs: dict[OutPoint, frozenset[str]] = {}
    fees: dict[str, frozenset[str]] = {}
    empty: frozenset[str] = frozenset()

    for block in chain.blocks:
        for tx in block.transactions[1:]:
            union = frozenset().union(*(outputs[op] for op in tx.inputs))
            for vout in range(len(tx.outputs)):
                outpoint = OutPoint(tx.txid, vout)
                if outpoint in overrides:
                    outputs[outpoint] = frozenset((overrides[outpoint],))
                else:
                    outputs[outpoint] = union
            # a zero fee moves no satoshis, so it carries no taint
            fees[tx.txid] = union if index.fee(tx.txid) > 0 else empty

        coinbase = block.transactions[0]
        fee_union = frozenset().union(
            *(fees[tx.txid] for tx in block.transactions[1:]), empty)
        for vout in range(len(coinbase.outputs)):
            outpoint = OutPoint(coinbase.txid, vout)
            if outpoint in overrides:
                outputs[outpoint] = frozenset((overrides[outpoint],))
            else:
                outputs[outpoint] = fee_union

    return TaintAssignment(
        POLICY_POISON, outputs, fees, _ordered_labels(sources),
        n_blocks=len(chain.blocks),
        tip_hash=chain.blocks[-1].hash if chain.blocks else None,
    )


# ---------------------------------------------------------------------------
# Haircut
# ---------------------------------------------------------------------------


def _drop_zero(fractions: dict[str, Fraction]) -> dict[str, Fraction]:
    return {label: frac for label, frac in fractions.items() if frac > 0}


def haircut_propagate(
    chain: Chain,
    sources: list[TaintSource],
    index: ChainIndex | None = None,
) -> TaintAssignment:
    """Value-proportional taint fractions, kept as exact rationals throughout."""
    index = _build_index(chain, index)
    overrides = resolve_overrides(index, sources)
    outputs: dict[OutPoint, dict[str, Fraction]] = {}
    fees: dict[str, dict[str, Fraction]] = {}

    for block in chain.blocks:
        for tx in block.transactions[1:]:
            total_in = sum(index.resolve(op).value for op in tx.inputs)
            tainted_mass: dict[str, Fraction] = {}
            for op in tx.inputs:
                value = index.resolve(op).value
                for label, frac in outputs[op].items():
                    tainted_mass[label] = tainted_mass.get(label, Fraction(0)) + frac * value
            shared = _drop_zero(
                {label: mass / total_in for label, mass in tainted_mass.items()})
            for vout in range(len(tx.outputs)):
                outpoint = OutPoint(tx.txid, vout)
                if outpoint in overrides:
                    outputs[outpoint] = {overrides[outpoint]: Fraction(1)}
                else:
                    outputs[outpoint] = dict(shared)
            fees[tx.txid] = dict(shared) if index.fee(tx.txid) > 0 else {}

        coinbase = block.transactions[0]
        coinbase_total = coinbase.output_total()
        fee_mass: dict[str, Fraction] = {}
        for tx in block.transactions[1:]:
            fee_value = index.fee(tx.txid)
            for label, frac in fees[tx.txid].items():
                fee_mass[label] = fee_mass.get(label, Fraction(0)) + frac * fee_value
        shared = _drop_zero(
            {label: mass / coinbase_total for label, mass in fee_mass.items()})
        for vout in range(len(coinbase.outputs)):
            outpoint = OutPoint(coinbase.txid, vout)
            if outpoint in overrides:
                outputs[outpoint] = {overrides[outpoint]: Fraction(1)}
            else:
                outputs[outpoint] = dict(shared)

    return TaintAssignment(
        POLICY_HAIRCUT, outputs, fees, _ordered_labels(sources),
        n_blocks=len(chain.blocks),
        tip_hash=chain.blocks[-1].hash if chain.blocks else None,
    )


def propagate(
    chain: Chain,
    sources: list[TaintSource],
    policy: str,
    index: ChainIndex | None = None,
) -> TaintAssignment:
    if policy == POLICY_FIFO:
        return fifo_propagate(chain, sources, index)
    if policy == POLICY_POISON:
        return poison_propagate(chain, sources, index)
    if policy == POLICY_HAIRCUT:
        return haircut_propagate(chain, sources, index)
    raise TaintEngineError(f"unknown policy {policy!r}")


# ---------------------------------------------------------------------------
# Backward tracing
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class CoinbaseOrigin:
    height: int


@dataclass(frozen=True, slots=True)
class TaintEvent:
    label: str
    txid: str


@dataclass(frozen=True, slots=True)
class ProvenanceNode:
    """Provenance of the satoshi interval [start, end) of one output.

    Leaves carry a terminal (coinbase subsidy or taint event); interior nodes
    split their interval across the creating transaction's inputs, children
    in queue order so an in-order walk of the leaves follows the interval.
    """

    outpoint: OutPoint
    start: int
    end: int
    children: tuple["ProvenanceNode", ...]
    terminal: CoinbaseOrigin | TaintEvent | None

    @property
    def length(self) -> int:
        return self.end - self.start

    def leaves(self) -> Iterator["ProvenanceNode"]:
        # explicit stack; spend chains can be deeper than the recursion limit
        stack: list[ProvenanceNode] = [self]
        while stack:
            node = stack.pop()
            if node.terminal is not None:
                yield node
            else:
                stack.extend(reversed(node.children))


def leaf_segments(node: ProvenanceNode) -> SegmentList:
    """The forward-equivalent segment run implied by a provenance tree."""
    pairs = []
    for leaf in node.leaves():
        label = leaf.terminal.label if isinstance(leaf.terminal, TaintEvent) else CLEAN
        pairs.append((leaf.length, label))
    return SegmentList(pairs)


@dataclass(slots=True)
class _Frame:
    outpoint: OutPoint
    start: int
    end: int
    terminal: CoinbaseOrigin | TaintEvent | None
    child_specs: list
    children: list = field(default_factory=list)
    cursor: int = 0


class _Tracer:
    """Iterative backward tracer; explicit stack so deep spend chains cannot
    overflow Python's recursion limit."""

    def __init__(self, chain: Chain, index: ChainIndex, overrides: dict[OutPoint, str]):
        self.chain = chain
        self.index = index
        self.overrides = overrides

    def trace(self, outpoint: OutPoint, start: int, end: int) -> ProvenanceNode:
        value = self.index.resolve(outpoint).value
        if not 0 <= start < end <= value:
            raise TaintEngineError(
                f"interval [{start}, {end}) out of bounds for {outpoint} of value {value}")
        sink: list[ProvenanceNode] = []
        stack = [self._frame(outpoint, start, end)]
        sinks = [sink]
        while stack:
            frame = stack[-1]
            if frame.cursor < len(frame.child_specs):
                spec = frame.child_specs[frame.cursor]
                frame.cursor += 1
                if isinstance(spec, ProvenanceNode):
                    frame.children.append(spec)
                else:
                    stack.append(self._frame(*spec))
                    sinks.append(frame.children)
            else:
                node = ProvenanceNode(frame.outpoint, frame.start, frame.end,
                                      tuple(frame.children), frame.terminal)
                stack.pop()
                sinks.pop().append(node)
        return sink[0]

    def _frame(self, outpoint: OutPoint, start: int, end: int) -> _Frame:
        if outpoint in self.overrides:
            return _Frame(outpoint, start, end,
                          TaintEvent(self.overrides[outpoint], outpoint.txid), [])
        loc = self.index.locate(outpoint.txid)
        tx = loc.tx
        prefix = sum(tx.outputs[i].value for i in range(outpoint.vout))
        qs, qe = prefix + start, prefix + end
        if not tx.is_coinbase:
            return _Frame(outpoint, start, end, None, self._queue_specs(tx, qs, qe))

        subsidy = self.chain.subsidy
        if qe <= subsidy:
            return _Frame(outpoint, start, end, CoinbaseOrigin(loc.height), [])
        specs: list = []
        if qs < subsidy:
            # the subsidy part of the interval is already terminal
            specs.append(ProvenanceNode(
                outpoint, start, start + (subsidy - qs), (), CoinbaseOrigin(loc.height)))
        block = self.chain.blocks[loc.height]
        zone_start = subsidy
        for fee_tx in block.transactions[1:]:
            fee = self.index.fee(fee_tx.txid)
            if fee == 0:
                continue
            lo, hi = max(qs, zone_start), min(qe, zone_start + fee)
            if lo < hi:
                # map into the fee-paying transaction's queue tail
                tail_base = fee_tx.output_total()
                specs.extend(self._queue_specs(
                    fee_tx, tail_base + lo - zone_start, tail_base + hi - zone_start))
            zone_start += fee
        return _Frame(outpoint, start, end, None, specs)

    def _queue_specs(self, tx: Transaction, qs: int, qe: int) -> list[tuple[OutPoint, int, int]]:
        """Split queue interval [qs, qe) across tx's inputs by cumulative value."""
        specs = []
        cursor = 0
        for op in tx.inputs:
            value = self.index.resolve(op).value
            lo, hi = max(qs, cursor), min(qe, cursor + value)
            if lo < hi:
                specs.append((op, lo - cursor, hi - cursor))
            cursor += value
        if qe > cursor:
            raise AccountingError(
                f"tx {tx.txid}: queue interval [{qs}, {qe}) exceeds input total {cursor}")
        return specs


def trace_back(
    chain: Chain,
    sources: list[TaintSource],
    outpoint: OutPoint,
    start: int,
    end: int,
    index: ChainIndex | None = None,
) -> ProvenanceNode:
    """Trace an output interval back to coinbase origins and taint events.

    Requires no forward assignment; the queue arithmetic alone determines
    provenance, which is what makes FIFO tracking reversible.
    """
    index = _build_index(chain, index)
    overrides = resolve_overrides(index, sources)
    if not index.has_tx(outpoint.txid):
        raise TaintEngineError(f"unknown txid {outpoint.txid}")
    return _Tracer(chain, index, overrides).trace(outpoint, start, end)


# ---------------------------------------------------------------------------
# Wire formats
# ---------------------------------------------------------------------------


def format_fraction(frac: Fraction) -> str:
    return f"{frac.numerator}/{frac.denominator}"


def parse_fraction(text: str) -> Fraction:
    num, _, den = text.partition("/")
    return Fraction(int(num), int(den))


def assignment_records(chain: Chain, assignment: TaintAssignment) -> Iterator[str]:
    """Canonical JSONL export, one record per output, chain order."""
    for block in chain.blocks:
        for tx in block.transactions:
            for vout in range(len(tx.outputs)):
                outpoint = OutPoint(tx.txid, vout)
                doc: dict = {"txid": tx.txid, "vout": vout, "policy": assignment.policy}
                value = assignment.outputs[outpoint]
                if assignment.policy == POLICY_FIFO:
                    doc["segments"] = value.to_pairs()
                elif assignment.policy == POLICY_POISON:
                    doc["labels"] = sorted(value)
                else:
                    doc["fractions"] = {
                        label: format_fraction(value[label]) for label in sorted(value)}
                yield json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def write_assignment_file(chain: Chain, assignment: TaintAssignment, fp) -> None:
    for line in assignment_records(chain, assignment):
        fp.write(line)
        fp.write("\n")


def parse_assignment(lines: Iterable[str]) -> TaintAssignment:
    """Re-parse an exported assignment; fee attributions are not part of the
    wire format, so the result carries outputs only."""
    policy: str | None = None
    outputs: dict[OutPoint, object] = {}
    labels: dict[str, None] = {}
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TaintEngineError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
        record_policy = doc.get("policy")
        if record_policy not in POLICIES:
            raise TaintEngineError(f"line {line_no}: unknown policy {record_policy!r}")
        if policy is None:
            policy = record_policy
        elif policy != record_policy:
            raise TaintEngineError(f"line {line_no}: mixed policies in assignment file")
        outpoint = OutPoint(doc["txid"], int(doc["vout"]))
        if record_policy == POLICY_FIFO:
            seglist = SegmentList.from_pairs(doc["segments"])
            outputs[outpoint] = seglist
            for label in seglist.labels():
                labels.setdefault(label)
        elif record_policy == POLICY_POISON:
            value = frozenset(doc["labels"])
            outputs[outpoint] = value
            for label in sorted(value):
                labels.setdefault(label)
        else:
            fractions = {label: parse_fraction(text)
                         for label, text in doc["fractions"].items()}
            outputs[outpoint] = fractions
            for label in sorted(fractions):
                labels.setdefault(label)
    if policy is None:
        raise TaintEngineError("empty assignment file")
    return TaintAssignment(policy, outputs, {}, tuple(labels))


def provenance_to_doc(node: ProvenanceNode) -> dict:
    """Nested JSON form of a provenance tree (built without recursion)."""
    def shell(n: ProvenanceNode) -> dict:
        if isinstance(n.terminal, CoinbaseOrigin):
            terminal = {"kind": "coinbase", "height": n.terminal.height}
        elif isinstance(n.terminal, TaintEvent):
            terminal = {"kind": "taint_event", "label": n.terminal.label,
                        "txid": n.terminal.txid}
        else:
            terminal = None
        return {
            "txid": n.outpoint.txid,
            "vout": n.outpoint.vout,
            "start": n.start,
            "end": n.end,
            "terminal": terminal,
            "children": [],
        }

    root = shell(node)
    stack = [(node, root)]
    while stack:
        parent, parent_doc = stack.pop()
        for child in parent.children:
            child_doc = shell(child)
            parent_doc["children"].append(child_doc)
            stack.append((child, child_doc))
    return root


def provenance_json(node: ProvenanceNode) -> str:
    """Canonical compact JSON of a provenance tree.

    Serialized with an explicit stack because json.dumps recurses per nesting
    level and deep traces would blow the recursion limit.
    """
    out: list[str] = []
    dumps = json.dumps
    # work items: ('node', n) opens a node, strings are emitted verbatim
    stack: list = [("node", node)]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            out.append(item)
            continue
        _, n = item
        if isinstance(n.terminal, CoinbaseOrigin):
            terminal = f'{{"kind":"coinbase","height":{n.terminal.height}}}'
        elif isinstance(n.terminal, TaintEvent):
            terminal = (f'{{"kind":"taint_event","label":{dumps(n.terminal.label)},'
                        f'"txid":{dumps(n.terminal.txid)}}}')
        else:
            terminal = "null"
        out.append(
            f'{{"txid":{dumps(n.outpoint.txid)},"vout":{n.outpoint.vout},'
            f'"start":{n.start},"end":{n.end},"terminal":{terminal},"children":[')
        stack.append("]}")
        for i in range(len(n.children) - 1, -1, -1):
            stack.append(("node", n.children[i]))
            if i > 0:
                stack.append(",")
    return "".join(out)
