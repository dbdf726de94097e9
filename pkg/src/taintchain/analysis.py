"""Diffusion statistics across policies and laundering-pattern detectors.

The detectors run over a FIFO assignment: splitting (one transaction fanning
tainted value across many outputs), collection (many tainted transactions
converging on one address inside a block window) and peeling chains (paths of
two-output transactions repeatedly forwarding the larger branch).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator

from .chain_model import Chain, ChainIndex, OutPoint
from .taint_engine import (
    POLICY_FIFO,
    TaintAssignment,
    format_fraction,
)


@dataclass(frozen=True, slots=True)
class DetectorThresholds:
    min_fan: int = 10
    min_tainted_sats: int = 1
    min_converging: int = 5
    window_blocks: int = 144
    min_length: int = 4
    peel_fraction: Fraction = Fraction(3, 4)

    def to_doc(self) -> dict:
        return {
            "min_fan": self.min_fan,
            "min_tainted_sats": self.min_tainted_sats,
            "min_converging": self.min_converging,
            "window_blocks": self.window_blocks,
            "min_length": self.min_length,
            "peel_fraction": format_fraction(self.peel_fraction),
        }


@dataclass(frozen=True, slots=True)
class PatternMatch:
    kind: str  # splitting | collection | peeling_chain
    txids: tuple[str, ...]
    label: str
    score: Fraction
    address: str | None = None


@dataclass(slots=True)
class PolicyDiffusion:
    policy: str
    tainted_output_count: int
    tainted_address_count: int
    mass_per_label: dict[str, object]  # int for fifo/poison, Fraction for haircut


@dataclass(slots=True)
class DiffusionReport:
    heights: list[int]
    active_addresses: list[int]
    series: dict[str, list[Fraction]]  # policy -> tainted-address fraction per height
    policies: dict[str, PolicyDiffusion]


def _require_fifo(assignment: TaintAssignment, what: str) -> None:
    if assignment.policy != POLICY_FIFO:
        raise ValueError(f"{what} requires a FIFO assignment, got {assignment.policy!r}")


def _check_assignment_matches(chain: Chain, assignment: TaintAssignment) -> None:
    if assignment.tip_hash is not None and chain.blocks:
        if (assignment.tip_hash != chain.blocks[-1].hash
                or assignment.n_blocks != len(chain.blocks)):
            raise ValueError("assignment was computed on a different chain")
        return
    # parsed assignments carry no fingerprint; fall back to coverage
    for block in chain.blocks:
        for tx in block.transactions:
            if OutPoint(tx.txid, 0) not in assignment.outputs:
                raise ValueError("assignment does not cover this chain")


def _dominant_label(mass: dict[str, int]) -> str:
    return max(sorted(mass), key=lambda label: mass[label])


# ---------------------------------------------------------------------------
# Diffusion
# ---------------------------------------------------------------------------


def diffusion_report(
    chain: Chain,
    assignments: Iterable[TaintAssignment],
    index: ChainIndex | None = None,
) -> DiffusionReport:
    """Per-height tainted-address fractions and whole-chain headline counts.

    An address counts as tainted at height h when any UTXO it owns after
    block h carries taint under the policy; active means it owns any UTXO.
    """
    assignments = list(assignments)
    seen_policies = [a.policy for a in assignments]
    if len(set(seen_policies)) != len(seen_policies):
        raise ValueError("duplicate policy in assignments")
    for assignment in assignments:
        _check_assignment_matches(chain, assignment)
    if index is None:
        index, _ = ChainIndex.build(chain)

    heights: list[int] = []
    active_series: list[int] = []
    series: dict[str, list[Fraction]] = {a.policy: [] for a in assignments}

    live_count: dict[str, int] = {}  # address -> live utxo count
    tainted_count: dict[str, dict[str, int]] = {
        a.policy: {} for a in assignments}  # policy -> address -> tainted live count
    ever_tainted_outputs = {a.policy: 0 for a in assignments}
    ever_tainted_addresses: dict[str, set[str]] = {a.policy: set() for a in assignments}
    live: dict[OutPoint, str] = {}  # outpoint -> address

    def add_output(outpoint: OutPoint, address: str) -> None:
        live[outpoint] = address
        live_count[address] = live_count.get(address, 0) + 1
        for assignment in assignments:
            if assignment.is_tainted(outpoint):
                counts = tainted_count[assignment.policy]
                counts[address] = counts.get(address, 0) + 1
                ever_tainted_outputs[assignment.policy] += 1
                ever_tainted_addresses[assignment.policy].add(address)

    def remove_output(outpoint: OutPoint) -> None:
        address = live.pop(outpoint)
        live_count[address] -= 1
        if live_count[address] == 0:
            del live_count[address]
        for assignment in assignments:
            if assignment.is_tainted(outpoint):
                counts = tainted_count[assignment.policy]
                counts[address] -= 1
                if counts[address] == 0:
                    del counts[address]

    for block in chain.blocks:
        for tx in block.transactions:
            for op in tx.inputs:
                remove_output(op)
            for vout, out in enumerate(tx.outputs):
                add_output(OutPoint(tx.txid, vout), out.address)
        heights.append(block.height)
        active = len(live_count)
        active_series.append(active)
        for assignment in assignments:
            tainted = len(tainted_count[assignment.policy])
            series[assignment.policy].append(
                Fraction(tainted, active) if active else Fraction(0))

    policies: dict[str, PolicyDiffusion] = {}
    for assignment in assignments:
        mass: dict[str, object] = {}
        for outpoint, address in live.items():
            value = assignment.outputs[outpoint]
            if assignment.policy == POLICY_FIFO:
                for label, sats in value.mass_by_label().items():
                    mass[label] = mass.get(label, 0) + sats
            elif assignment.policy == "poison":
                for label in value:
                    mass[label] = mass.get(label, 0) + index.resolve(outpoint).value
            else:
                for label, frac in value.items():
                    mass[label] = mass.get(label, Fraction(0)) + frac * index.resolve(outpoint).value
        policies[assignment.policy] = PolicyDiffusion(
            assignment.policy,
            ever_tainted_outputs[assignment.policy],
            len(ever_tainted_addresses[assignment.policy]),
            {label: mass[label] for label in sorted(mass)},
        )

    return DiffusionReport(heights, active_series, series, policies)


# ---------------------------------------------------------------------------
# Detectors
# ---------------------------------------------------------------------------


def _tainted_input_mass(tx, assignment: TaintAssignment) -> dict[str, int]:
    mass: dict[str, int] = {}
    for op in tx.inputs:
        for label, sats in assignment.outputs[op].mass_by_label().items():
            mass[label] = mass.get(label, 0) + sats
    return mass


def detect_splitting(
    chain: Chain,
    assignment: TaintAssignment,
    min_fan: int = 10,
    min_tainted_sats: int = 1,
    index: ChainIndex | None = None,
) -> list[PatternMatch]:
    """Transactions fanning at least min_tainted_sats of taint across min_fan outputs."""
    _require_fifo(assignment, "detect_splitting")
    index = index if index is not None else ChainIndex.build(chain)[0]
    matches: list[PatternMatch] = []
    for block in chain.blocks:
        for tx in block.transactions[1:]:
            if len(tx.outputs) < min_fan:
                continue
            in_mass = _tainted_input_mass(tx, assignment)
            tainted_in = sum(in_mass.values())
            if tainted_in < min_tainted_sats:
                continue
            tainted_outputs = sum(
                1 for vout in range(len(tx.outputs))
                if assignment.outputs[OutPoint(tx.txid, vout)].tainted_total() > 0)
            if tainted_outputs < min_fan:
                continue
            total_in = sum(index.resolve(op).value for op in tx.inputs)
            matches.append(PatternMatch(
                "splitting", (tx.txid,), _dominant_label(in_mass),
                Fraction(tainted_in, total_in)))
    return matches


def detect_collection(
    chain: Chain,
    assignment: TaintAssignment,
    min_converging: int = 5,
    window_blocks: int = 144,
    index: ChainIndex | None = None,
) -> list[PatternMatch]:
    """Addresses collecting taint from min_converging distinct transactions
    within a window of window_blocks blocks."""
    _require_fifo(assignment, "detect_collection")
    # per-address receipt events in chain order
    events: dict[str, list[tuple[int, str, dict[str, int], int]]] = {}
    order: list[str] = []
    for block in chain.blocks:
        for tx in block.transactions:
            for vout, out in enumerate(tx.outputs):
                seglist = assignment.outputs[OutPoint(tx.txid, vout)]
                if seglist.tainted_total() == 0:
                    continue
                if out.address not in events:
                    events[out.address] = []
                    order.append(out.address)
                events[out.address].append(
                    (block.height, tx.txid, seglist.mass_by_label(), out.value))

    matches: list[PatternMatch] = []
    for address in order:
        addr_events = events[address]
        best: tuple[int, int, int] | None = None  # (distinct, -start_index) best window
        lo = 0
        for hi in range(len(addr_events)):
            while addr_events[hi][0] - addr_events[lo][0] >= window_blocks:
                lo += 1
            distinct = len({txid for _, txid, _, _ in addr_events[lo:hi + 1]})
            if best is None or distinct > best[0]:
                best = (distinct, lo, hi)
        if best is None or best[0] < min_converging:
            continue
        _, lo, hi = best
        window = addr_events[lo:hi + 1]
        txids: dict[str, None] = {}
        label_mass: dict[str, int] = {}
        tainted_total = 0
        value_total = 0
        for _, txid, mass, value in window:
            txids.setdefault(txid)
            for label, sats in mass.items():
                label_mass[label] = label_mass.get(label, 0) + sats
            tainted_total += sum(mass.values())
            value_total += value
        matches.append(PatternMatch(
            "collection", tuple(txids), _dominant_label(label_mass),
            Fraction(tainted_total, value_total), address=address))
    return matches


def detect_peeling_chain(
    chain: Chain,
    assignment: TaintAssignment,
    min_length: int = 4,
    peel_fraction: Fraction = Fraction(3, 4),
    index: ChainIndex | None = None,
) -> list[PatternMatch]:
    """Maximal tainted paths of two-output transactions whose larger branch
    carries at least peel_fraction of the value and feeds the next hop."""
    _require_fifo(assignment, "detect_peeling_chain")
    index = index if index is not None else ChainIndex.build(chain)[0]

    peel_info: dict[str, tuple[OutPoint, Fraction, dict[str, int]]] = {}
    order: list[str] = []
    for block in chain.blocks:
        for tx in block.transactions[1:]:
            if len(tx.outputs) != 2:
                continue
            in_mass = _tainted_input_mass(tx, assignment)
            if sum(in_mass.values()) < 1:
                continue
            larger_vout = 0 if tx.outputs[0].value >= tx.outputs[1].value else 1
            total_out = tx.output_total()
            ratio = Fraction(tx.outputs[larger_vout].value, total_out)
            if ratio < peel_fraction:
                continue
            peel_info[tx.txid] = (OutPoint(tx.txid, larger_vout), ratio, in_mass)
            order.append(tx.txid)

    next_hop: dict[str, str] = {}
    has_peel_pred: set[str] = set()
    for txid in order:
        larger, _, _ = peel_info[txid]
        spender = index.spender_of(larger)
        if spender is not None and spender[0] in peel_info:
            next_hop[txid] = spender[0]
            has_peel_pred.add(spender[0])

    matches: list[PatternMatch] = []
    for txid in order:
        if txid in has_peel_pred:
            continue
        path = [txid]
        while path[-1] in next_hop:
            path.append(next_hop[path[-1]])
        if len(path) < min_length:
            continue
        label_mass: dict[str, int] = {}
        worst_ratio = Fraction(1)
        for hop in path:
            _, ratio, in_mass = peel_info[hop]
            worst_ratio = min(worst_ratio, ratio)
            for label, sats in in_mass.items():
                label_mass[label] = label_mass.get(label, 0) + sats
        matches.append(PatternMatch(
            "peeling_chain", tuple(path), _dominant_label(label_mass), worst_ratio))
    return matches


def run_detectors(
    chain: Chain,
    assignment: TaintAssignment,
    thresholds: DetectorThresholds = DetectorThresholds(),
    index: ChainIndex | None = None,
) -> list[PatternMatch]:
    index = index if index is not None else ChainIndex.build(chain)[0]
    matches = detect_splitting(chain, assignment, thresholds.min_fan,
                               thresholds.min_tainted_sats, index)
    matches += detect_collection(chain, assignment, thresholds.min_converging,
                                 thresholds.window_blocks, index)
    matches += detect_peeling_chain(chain, assignment, thresholds.min_length,
                                    thresholds.peel_fraction, index)
    return matches


# ---------------------------------------------------------------------------
# Wire formats
# ---------------------------------------------------------------------------


def matches_to_doc(matches: list[PatternMatch],
                   thresholds: DetectorThresholds | None = None) -> dict:
    doc: dict = {}
    if thresholds is not None:
        doc["thresholds"] = thresholds.to_doc()
    doc["matches"] = [
        {
            "kind": match.kind,
            "label": match.label,
            "score": format_fraction(match.score),
            "txids": list(match.txids),
            **({"address": match.address} if match.address else {}),
        }
        for match in matches
    ]
    return doc


def report_to_doc(report: DiffusionReport) -> dict:
    return {
        "policies": {
            policy: {
                "tainted_outputs": pd.tainted_output_count,
                "tainted_addresses": pd.tainted_address_count,
                "mass_per_label": {
                    label: (format_fraction(mass) if isinstance(mass, Fraction)
                            else mass)
                    for label, mass in pd.mass_per_label.items()
                },
            }
            for policy, pd in report.policies.items()
        },
        "series": [
            {
                "height": height,
                "active_addresses": report.active_addresses[i],
                **{policy: format_fraction(report.series[policy][i])
                   for policy in report.series},
            }
            for i, height in enumerate(report.heights)
        ],
    }


def series_csv_lines(report: DiffusionReport) -> Iterator[str]:
    """Delimited time series: height,policy,fraction."""
    yield "height,policy,fraction"
    for i, height in enumerate(report.heights):
        for policy in report.series:
            fraction = report.series[policy][i]
            yield f"{height},{policy},{float(fraction):.10g}"
