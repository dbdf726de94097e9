"""Chain and taint-source file formats, plus the synthetic chain generator.

Chain files are JSONL, one block per line, with a fixed key order so that
write -> parse is the identity and equal generator specs produce
byte-identical files. All values are integer satoshis.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .chain_model import (
    DEFAULT_SUBSIDY,
    Block,
    Chain,
    ChainStructureError,
    OutPoint,
    Transaction,
    TxOutput,
)
from .intervals import CLEAN

# Label palette used by the generator and as the default display colors.
LABEL_PALETTE: tuple[tuple[str, str], ...] = (
    ("RED", "#d62728"),
    ("BLUE", "#1f77b4"),
    ("GREEN", "#2ca02c"),
    ("YELLOW", "#bcbd22"),
    ("PURPLE", "#9467bd"),
    ("ORANGE", "#ff7f0e"),
    ("CYAN", "#17becf"),
    ("PINK", "#e377c2"),
    ("BROWN", "#8c564b"),
    ("GRAY", "#7f7f7f"),
)

MAX_LABEL_LEN = 32


class ChainFormatError(ValueError):
    """Malformed chain file; message names the offending line."""


class TaintSourceError(ValueError):
    """Malformed or inconsistent taint-source file."""


class GeneratorError(ValueError):
    """Generator spec cannot be satisfied."""


@dataclass(frozen=True, slots=True)
class TaintSource:
    """An externally reported theft/crime event seeding propagation.

    `vout` None is the sentinel covering all outputs of the transaction.
    """

    txid: str
    vout: int | None
    label: str
    display_color: str | None = None


@dataclass(frozen=True, slots=True)
class PatternSpec:
    kind: str  # splitting | collection | peeling_chain | mix
    params: dict[str, int] = field(default_factory=dict, hash=False)

    KINDS = ("splitting", "collection", "peeling_chain", "mix")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise GeneratorError(f"unknown pattern kind {self.kind!r}")

    def get(self, key: str, default: int) -> int:
        return int(self.params.get(key, default))


@dataclass(frozen=True, slots=True)
class GeneratorSpec:
    seed: int
    n_blocks: int
    txs_per_block: int = 3
    n_taint_sources: int = 0
    patterns: tuple[PatternSpec, ...] = ()
    subsidy: int = DEFAULT_SUBSIDY

    def __post_init__(self) -> None:
        if self.n_blocks < 1:
            raise GeneratorError("n_blocks must be >= 1")
        if self.txs_per_block < 0:
            raise GeneratorError("txs_per_block must be >= 0")
        if self.n_taint_sources < 0:
            raise GeneratorError("n_taint_sources must be >= 0")
        if self.subsidy < 1:
            raise GeneratorError("subsidy must be >= 1")
        if self.patterns and self.n_taint_sources < len(self.patterns):
            raise GeneratorError("each pattern needs its own taint source: "
                                 f"{len(self.patterns)} patterns but {self.n_taint_sources} sources")


@dataclass(frozen=True, slots=True)
class PatternRecord:
    """Ground truth for one injected pattern: the exact txids involved."""

    kind: str
    label: str
    txids: tuple[str, ...]
    address: str | None = None  # collection target address
    params: dict[str, int] = field(default_factory=dict, hash=False)


@dataclass(slots=True)
class PatternLedger:
    records: list[PatternRecord] = field(default_factory=list)

    def by_kind(self, kind: str) -> list[PatternRecord]:
        return [rec for rec in self.records if rec.kind == kind]

    def to_doc(self) -> dict:
        return {
            "patterns": [
                {
                    "kind": rec.kind,
                    "label": rec.label,
                    "txids": list(rec.txids),
                    **({"address": rec.address} if rec.address else {}),
                    "params": dict(rec.params),
                }
                for rec in self.records
            ]
        }


# ---------------------------------------------------------------------------
# Chain file format
# ---------------------------------------------------------------------------


def _require(doc: dict, key: str, line_no: int):
    if key not in doc:
        raise ChainFormatError(f"line {line_no}: missing required field {key!r}")
    return doc[key]


def _require_int(doc: dict, key: str, line_no: int, minimum: int) -> int:
    value = _require(doc, key, line_no)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ChainFormatError(f"line {line_no}: field {key!r} must be an integer")
    if value < minimum:
        raise ChainFormatError(f"line {line_no}: field {key!r} must be >= {minimum}, got {value}")
    return value


def parse_chain(lines: Iterable[str], subsidy: int = DEFAULT_SUBSIDY) -> Chain:
    """Parse the JSONL chain format into a Chain.

    Raises ChainFormatError naming the line for malformed JSON, missing or
    ill-typed fields, non-consecutive heights and duplicate txids.
    """
    blocks: list[Block] = []
    seen_txids: set[str] = set()
    expected_height = 0
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ChainFormatError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
        if not isinstance(doc, dict):
            raise ChainFormatError(f"line {line_no}: block must be a JSON object")

        height = _require_int(doc, "height", line_no, 0)
        if height != expected_height:
            raise ChainFormatError(
                f"line {line_no}: non-consecutive height {height}, expected {expected_height}")
        block_hash = _require(doc, "hash", line_no)
        if not isinstance(block_hash, str) or not block_hash:
            raise ChainFormatError(f"line {line_no}: field 'hash' must be a non-empty string")
        txs_doc = _require(doc, "txs", line_no)
        if not isinstance(txs_doc, list) or not txs_doc:
            raise ChainFormatError(f"line {line_no}: field 'txs' must be a non-empty array")

        transactions: list[Transaction] = []
        for tx_doc in txs_doc:
            if not isinstance(tx_doc, dict):
                raise ChainFormatError(f"line {line_no}: transaction must be a JSON object")
            txid = _require(tx_doc, "txid", line_no)
            if txid in seen_txids:
                raise ChainFormatError(f"line {line_no}: duplicate txid {txid}")
            is_coinbase = bool(tx_doc.get("coinbase", False))
            inputs_doc = _require(tx_doc, "inputs", line_no)
            outputs_doc = _require(tx_doc, "outputs", line_no)
            if not isinstance(inputs_doc, list) or not isinstance(outputs_doc, list):
                raise ChainFormatError(
                    f"line {line_no}: fields 'inputs'/'outputs' must be arrays")
            try:
                inputs = tuple(
                    OutPoint(_require(inp, "txid", line_no),
                             _require_int(inp, "vout", line_no, 0))
                    for inp in inputs_doc
                )
                outputs = tuple(
                    TxOutput(_require_int(out, "value", line_no, 1),
                             _require(out, "address", line_no))
                    for out in outputs_doc
                )
                transactions.append(Transaction(txid, is_coinbase, inputs, outputs))
            except ChainStructureError as exc:
                raise ChainFormatError(f"line {line_no}: {exc}") from exc
            seen_txids.add(txid)

        try:
            blocks.append(Block(height, block_hash, tuple(transactions)))
        except ChainStructureError as exc:
            raise ChainFormatError(f"line {line_no}: {exc}") from exc
        expected_height += 1

    return Chain(tuple(blocks), subsidy=subsidy)


def block_to_doc(block: Block) -> dict:
    """Canonical dict form of one block, keys in wire order."""
    return {
        "height": block.height,
        "hash": block.hash,
        "txs": [
            {
                "txid": tx.txid,
                "coinbase": tx.is_coinbase,
                "inputs": [{"txid": op.txid, "vout": op.vout} for op in tx.inputs],
                "outputs": [{"value": out.value, "address": out.address} for out in tx.outputs],
            }
            for tx in block.transactions
        ],
    }


def write_chain(chain: Chain) -> Iterator[str]:
    """Canonical JSONL lines (no trailing newline per line)."""
    for block in chain.blocks:
        yield json.dumps(block_to_doc(block), separators=(",", ":"), ensure_ascii=False)


def write_chain_file(chain: Chain, fp: IO[str]) -> None:
    for line in write_chain(chain):
        fp.write(line)
        fp.write("\n")


def load_chain_file(path: str, subsidy: int = DEFAULT_SUBSIDY) -> Chain:
    with open(path, "r", encoding="utf-8") as fp:
        return parse_chain(fp, subsidy=subsidy)


# ---------------------------------------------------------------------------
# Taint-source file format
# ---------------------------------------------------------------------------


def load_taint_sources(lines: Iterable[str]) -> list[TaintSource]:
    """Parse the JSONL taint-source format.

    Unknown txids are accepted (resolution happens at propagation time), but
    duplicate or conflicting entries for the same output are rejected, as is
    the reserved CLEAN label.
    """
    sources: list[TaintSource] = []
    by_txid: dict[str, list[TaintSource]] = {}
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TaintSourceError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
        if not isinstance(doc, dict):
            raise TaintSourceError(f"line {line_no}: taint source must be a JSON object")
        for key in ("txid", "vout", "label"):
            if key not in doc:
                raise TaintSourceError(f"line {line_no}: missing required field {key!r}")
        txid = doc["txid"]
        if not isinstance(txid, str) or len(txid) != 64:
            raise TaintSourceError(f"line {line_no}: field 'txid' must be a 64-char hex string")
        vout = doc["vout"]
        if vout is not None and (isinstance(vout, bool) or not isinstance(vout, int) or vout < 0):
            raise TaintSourceError(f"line {line_no}: field 'vout' must be null or a non-negative integer")
        label = doc["label"]
        if not isinstance(label, str) or not label:
            raise TaintSourceError(f"line {line_no}: field 'label' must be a non-empty string")
        if len(label) > MAX_LABEL_LEN:
            raise TaintSourceError(f"line {line_no}: label longer than {MAX_LABEL_LEN} chars")
        if label == CLEAN:
            raise TaintSourceError(f"line {line_no}: label {CLEAN!r} is reserved")
        color = doc.get("color")
        if color is not None and not isinstance(color, str):
            raise TaintSourceError(f"line {line_no}: field 'color' must be a string")

        source = TaintSource(txid, vout, label, color)
        for earlier in by_txid.get(txid, ()):
            overlaps = earlier.vout is None or vout is None or earlier.vout == vout
            if not overlaps:
                continue
            if earlier.vout == vout and earlier.label == label:
                raise TaintSourceError(f"line {line_no}: duplicate taint source {txid}:{vout}")
            raise TaintSourceError(
                f"line {line_no}: conflicting taint source for {txid} "
                f"(labels {earlier.label!r} and {label!r} overlap)")
        by_txid.setdefault(txid, []).append(source)
        sources.append(source)
    return sources


def write_taint_sources(sources: Iterable[TaintSource]) -> Iterator[str]:
    for src in sources:
        doc = {"txid": src.txid, "vout": src.vout, "label": src.label}
        if src.display_color is not None:
            doc["color"] = src.display_color
        yield json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def load_taint_file(path: str) -> list[TaintSource]:
    with open(path, "r", encoding="utf-8") as fp:
        return load_taint_sources(fp)


# ---------------------------------------------------------------------------
# Generator spec file format
# ---------------------------------------------------------------------------


def parse_generator_spec(doc: dict) -> GeneratorSpec:
    if not isinstance(doc, dict):
        raise GeneratorError("generator spec must be a JSON object")
    for key in ("seed", "n_blocks"):
        if key not in doc:
            raise GeneratorError(f"generator spec missing field {key!r}")
    patterns = []
    for pat_doc in doc.get("patterns", []):
        if not isinstance(pat_doc, dict) or "kind" not in pat_doc:
            raise GeneratorError("pattern entry must be an object with a 'kind' field")
        params = {k: int(v) for k, v in pat_doc.items() if k != "kind"}
        patterns.append(PatternSpec(str(pat_doc["kind"]), params))
    return GeneratorSpec(
        seed=int(doc["seed"]),
        n_blocks=int(doc["n_blocks"]),
        txs_per_block=int(doc.get("txs_per_block", 3)),
        n_taint_sources=int(doc.get("n_taint_sources", 0)),
        patterns=tuple(patterns),
        subsidy=int(doc.get("subsidy", DEFAULT_SUBSIDY)),
    )


def generator_spec_to_doc(spec: GeneratorSpec) -> dict:
    return {
        "seed": spec.seed,
        "n_blocks": spec.n_blocks,
        "txs_per_block": spec.txs_per_block,
        "n_taint_sources": spec.n_taint_sources,
        "subsidy": spec.subsidy,
        "patterns": [{"kind": pat.kind, **pat.params} for pat in spec.patterns],
    }


# ---------------------------------------------------------------------------
# Synthetic chain generator
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class _Utxo:
    outpoint: OutPoint
    value: int
    address: str


class _Generator:
    """Deterministic chain builder; one instance per generate call.

    Every random draw goes through a single seeded Random in a fixed order,
    so identical specs produce byte-identical files.
    """

    # background class mix: many_to_two / one_to_one / many_to_many / one_to_many
    CLASS_WEIGHTS = ((0.70, "m2"), (0.85, "11"), (0.95, "mm"), (1.0, "1m"))
    FORWARDS_PER_BLOCK = 5  # collection forwarding txs per block
    PRESPLIT_FAN = 8  # below the default splitting detector threshold

    def __init__(self, spec: GeneratorSpec) -> None:
        self.spec = spec
        self.rng = random.Random(spec.seed)
        self.pool: list[_Utxo] = []
        self.deferred: list[_Utxo] = []  # coinbase outputs, spendable next block
        self.recent_addresses: list[str] = []
        self.addr_counter = 0
        self.txid_counter = 0
        self.sources: list[TaintSource] = []
        self.ledger = PatternLedger()
        self.reserved: dict[int, _Utxo] = {}  # pattern index -> loot to consume
        # schedule: height -> list of actions; actions are (tag, payload)
        self.schedule: dict[int, list[tuple]] = {}
        self.block_txs: list[Transaction] = []
        self.block_fees = 0

    # -- identifiers --------------------------------------------------------

    def next_txid(self) -> str:
        self.txid_counter += 1
        return hashlib.sha256(f"{self.spec.seed}:tx:{self.txid_counter}".encode()).hexdigest()

    def block_hash(self, height: int) -> str:
        return hashlib.sha256(f"{self.spec.seed}:block:{height}".encode()).hexdigest()

    def fresh_address(self, prefix: str = "a") -> str:
        self.addr_counter += 1
        addr = f"{prefix}{self.addr_counter}"
        self.recent_addresses.append(addr)
        if len(self.recent_addresses) > 64:
            self.recent_addresses.pop(0)
        return addr

    def payment_address(self) -> str:
        # occasional reuse so address-level diffusion is nontrivial
        if self.recent_addresses and self.rng.random() < 0.2:
            return self.rng.choice(self.recent_addresses)
        return self.fresh_address()

    # -- arithmetic helpers ---------------------------------------------------

    def partition(self, total: int, parts: int) -> list[int]:
        """Split `total` into `parts` positive integers, order deterministic."""
        if parts < 1 or total < parts:
            raise GeneratorError(f"cannot split {total} satoshis into {parts} outputs")
        if parts == 1:
            return [total]
        if total == parts:
            return [1] * parts
        cuts = sorted(self.rng.sample(range(1, total), parts - 1))
        bounds = [0, *cuts, total]
        return [bounds[i + 1] - bounds[i] for i in range(parts)]

    def small_fee(self, total: int, n_outputs: int) -> int:
        headroom = total - n_outputs
        if headroom <= 0:
            return 0
        return self.rng.randint(0, min(headroom, max(1, total // 100)))

    # -- transaction emission -------------------------------------------------

    def emit(self, inputs: list[_Utxo], values: list[int], addresses: list[str],
             fee: int) -> Transaction:
        assert sum(u.value for u in inputs) == sum(values) + fee
        txid = self.next_txid()
        tx = Transaction(
            txid,
            False,
            tuple(u.outpoint for u in inputs),
            tuple(TxOutput(v, a) for v, a in zip(values, addresses)),
        )
        self.block_txs.append(tx)
        self.block_fees += fee
        return tx

    def add_to_pool(self, tx: Transaction, vouts: Iterable[int]) -> list[_Utxo]:
        utxos = []
        for vout in vouts:
            out = tx.outputs[vout]
            utxo = _Utxo(OutPoint(tx.txid, vout), out.value, out.address)
            self.pool.append(utxo)
            utxos.append(utxo)
        return utxos

    def take_from_pool(self, count: int) -> list[_Utxo]:
        count = min(count, len(self.pool))
        picks = sorted(self.rng.sample(range(len(self.pool)), count), reverse=True)
        return [self.pool.pop(i) for i in picks]

    def take_largest(self, minimum: int) -> _Utxo:
        if not self.pool:
            raise GeneratorError("spec demands more value than subsidies provide "
                                 "(no spendable output available)")
        best = max(range(len(self.pool)), key=lambda i: (self.pool[i].value, -i))
        if self.pool[best].value < minimum:
            raise GeneratorError("spec demands more value than subsidies provide "
                                 f"(need an output of {minimum} sat, largest is "
                                 f"{self.pool[best].value})")
        return self.pool.pop(best)

    # -- planning -------------------------------------------------------------

    def plan(self) -> None:
        spec = self.spec
        n_sources = spec.n_taint_sources
        if n_sources == 0:
            return
        if spec.n_blocks < 3 and n_sources:
            raise GeneratorError("need at least 3 blocks to place taint sources")
        # thefts early so taint has room to move
        theft_span = max(1, spec.n_blocks // 3)
        for i in range(n_sources):
            height = 1 + (i * theft_span) // max(1, n_sources)
            height = min(height, spec.n_blocks - 2)
            label, color = self.label_for(i)
            self.schedule.setdefault(height, []).append(("theft", i, label, color))
        for pat_index, pattern in enumerate(spec.patterns):
            self.plan_pattern(pat_index, pattern)

    def label_for(self, i: int) -> tuple[str, str]:
        if i < len(LABEL_PALETTE):
            return LABEL_PALETTE[i]
        return f"TAINT{i}", LABEL_PALETTE[i % len(LABEL_PALETTE)][1]

    def source_height(self, source_index: int) -> int:
        for height, actions in self.schedule.items():
            for action in actions:
                if action[0] == "theft" and action[1] == source_index:
                    return height
        raise AssertionError("source not scheduled")

    def plan_pattern(self, pat_index: int, pattern: PatternSpec) -> None:
        spec = self.spec
        earliest = self.source_height(pat_index) + 1
        if pattern.kind == "splitting":
            span = 1
        elif pattern.kind == "collection":
            fan_in = pattern.get("fan_in", 20)
            span = 1 + math.ceil(fan_in / self.FORWARDS_PER_BLOCK)
        elif pattern.kind == "peeling_chain":
            span = pattern.get("length", 8)
        else:  # mix
            span = 1 + pattern.get("rounds", 3)
        latest_start = spec.n_blocks - span
        if latest_start < earliest:
            raise GeneratorError(
                f"pattern {pattern.kind} needs {span} blocks after height {earliest - 1}; "
                f"chain of {spec.n_blocks} blocks is too short")
        start = self.rng.randint(earliest, latest_start)
        if pattern.kind == "splitting":
            self.schedule.setdefault(start, []).append(("splitting", pat_index, pattern))
        elif pattern.kind == "collection":
            fan_in = pattern.get("fan_in", 20)
            self.schedule.setdefault(start, []).append(("presplit", pat_index, pattern))
            done = 0
            offset = 1
            while done < fan_in:
                batch = min(self.FORWARDS_PER_BLOCK, fan_in - done)
                self.schedule.setdefault(start + offset, []).append(
                    ("forward", pat_index, batch))
                done += batch
                offset += 1
        elif pattern.kind == "peeling_chain":
            length = pattern.get("length", 8)
            for step in range(length):
                self.schedule.setdefault(start + step, []).append(
                    ("peel", pat_index, step, length))
        else:  # mix
            rounds = pattern.get("rounds", 3)
            self.schedule.setdefault(start, []).append(("mixsplit", pat_index, pattern))
            for r in range(rounds):
                self.schedule.setdefault(start + 1 + r, []).append(("mixround", pat_index))

    # -- pattern execution ------------------------------------------------------

    def run_theft(self, source_index: int, label: str, color: str) -> None:
        victim = self.take_largest(3)
        fee = min(self.small_fee(victim.value, 2), victim.value - 2)
        spendable = victim.value - fee
        loot = (spendable * self.rng.randint(60, 80)) // 100
        loot = max(1, min(loot, spendable - 1))
        change = spendable - loot
        tx = self.emit([victim], [loot, change],
                       [self.fresh_address("loot"), self.payment_address()], fee)
        self.sources.append(TaintSource(tx.txid, 0, label, color))
        loot_utxo = _Utxo(OutPoint(tx.txid, 0), loot, tx.outputs[0].address)
        # change returns to circulation; loot is reserved when a pattern needs it
        self.add_to_pool(tx, [1])
        if source_index < len(self.spec.patterns):
            self.reserved[source_index] = loot_utxo
            self._pattern_state.setdefault(source_index, {})["label"] = label
        else:
            self.pool.append(loot_utxo)

    def run_splitting(self, pat_index: int, pattern: PatternSpec) -> None:
        fan = pattern.get("fan", 50)
        loot = self.reserved.pop(pat_index)
        if loot.value < fan:
            raise GeneratorError("spec demands more value than subsidies provide "
                                 f"(splitting fan {fan} needs {fan} sat, loot is {loot.value})")
        fee = min(self.small_fee(loot.value, fan), loot.value - fan)
        values = self.partition(loot.value - fee, fan)
        addresses = [self.fresh_address() for _ in values]
        tx = self.emit([loot], values, addresses, fee)
        self.add_to_pool(tx, range(fan))
        label = self._pattern_state[pat_index]["label"]
        self.ledger.records.append(PatternRecord(
            "splitting", label, (tx.txid,), params={"fan": fan}))

    def run_presplit(self, pat_index: int, pattern: PatternSpec) -> None:
        fan_in = pattern.get("fan_in", 20)
        loot = self.reserved.pop(pat_index)
        if loot.value < fan_in:
            raise GeneratorError("spec demands more value than subsidies provide "
                                 f"(collection fan_in {fan_in} needs {fan_in} sat, "
                                 f"loot is {loot.value})")
        pieces: list[_Utxo] = []
        working = loot
        remaining = fan_in
        while remaining > 0:
            if remaining <= self.PRESPLIT_FAN:
                values = self.partition(working.value, remaining)
                tx = self.emit([working], values,
                               [self.fresh_address() for _ in values], 0)
                for vout in range(remaining):
                    pieces.append(_Utxo(OutPoint(tx.txid, vout), values[vout],
                                        tx.outputs[vout].address))
                remaining = 0
            else:
                n_pieces = self.PRESPLIT_FAN - 1
                piece_value = working.value // remaining
                if piece_value < 1 or working.value - n_pieces * piece_value < 1:
                    raise GeneratorError("spec demands more value than subsidies provide "
                                         "(collection pre-split ran out of value)")
                carry = working.value - n_pieces * piece_value
                values = [piece_value] * n_pieces + [carry]
                tx = self.emit([working], values,
                               [self.fresh_address() for _ in values], 0)
                for vout in range(n_pieces):
                    pieces.append(_Utxo(OutPoint(tx.txid, vout), piece_value,
                                        tx.outputs[vout].address))
                working = _Utxo(OutPoint(tx.txid, n_pieces), carry,
                                tx.outputs[n_pieces].address)
                remaining -= n_pieces
        state = self._pattern_state[pat_index]
        state["pieces"] = pieces
        state["collect_address"] = self.fresh_address("collect")
        state["forward_txids"] = []

    def run_forward(self, pat_index: int, batch: int) -> None:
        state = self._pattern_state[pat_index]
        pieces: list[_Utxo] = state["pieces"]
        address = state["collect_address"]
        for _ in range(min(batch, len(pieces))):
            piece = pieces.pop(0)
            fee = min(self.small_fee(piece.value, 1), piece.value - 1)
            tx = self.emit([piece], [piece.value - fee], [address], fee)
            state["forward_txids"].append(tx.txid)
            self.add_to_pool(tx, [0])
        if not pieces and state["forward_txids"]:
            pattern = self.spec.patterns[pat_index]
            self.ledger.records.append(PatternRecord(
                "collection", state["label"], tuple(state["forward_txids"]),
                address=address, params={"fan_in": pattern.get("fan_in", 20)}))

    def run_peel(self, pat_index: int, step: int, length: int) -> None:
        state = self._pattern_state[pat_index]
        current = self.reserved.pop(pat_index, None) or state.pop("peel_current")
        if current.value < 10:
            raise GeneratorError("spec demands more value than subsidies provide "
                                 f"(peeling chain step {step} has only {current.value} sat left)")
        out_total = current.value  # fee-free hops keep the 9/10 ratio exact
        change = (out_total * 9) // 10
        peel = out_total - change
        tx = self.emit([current], [change, peel],
                       [self.fresh_address("peelchange"), self.payment_address()], 0)
        self.add_to_pool(tx, [1])
        state.setdefault("peel_txids", []).append(tx.txid)
        next_utxo = _Utxo(OutPoint(tx.txid, 0), change, tx.outputs[0].address)
        if step == length - 1:
            self.pool.append(next_utxo)
            self.ledger.records.append(PatternRecord(
                "peeling_chain", state["label"], tuple(state["peel_txids"]),
                params={"length": length}))
        else:
            state["peel_current"] = next_utxo

    def run_mixsplit(self, pat_index: int, pattern: PatternSpec) -> None:
        width = min(pattern.get("width", 6), self.PRESPLIT_FAN)
        loot = self.reserved.pop(pat_index)
        if loot.value < width:
            raise GeneratorError("spec demands more value than subsidies provide "
                                 f"(mix width {width} needs {width} sat, loot is {loot.value})")
        values = self.partition(loot.value, width)
        tx = self.emit([loot], values, [self.fresh_address() for _ in values], 0)
        state = self._pattern_state[pat_index]
        state["mix_work"] = [
            _Utxo(OutPoint(tx.txid, vout), values[vout], tx.outputs[vout].address)
            for vout in range(width)
        ]
        state["mix_txids"] = [tx.txid]

    def run_mixround(self, pat_index: int) -> None:
        state = self._pattern_state[pat_index]
        work: list[_Utxo] = state["mix_work"]
        new_work: list[_Utxo] = []
        while work:
            tainted = [work.pop(0) for _ in range(min(3, len(work)))]
            clean = self.take_from_pool(self.rng.randint(1, 2))
            inputs = tainted + clean
            total = sum(u.value for u in inputs)
            n_out = min(self.rng.randint(3, 5), total)
            fee = self.small_fee(total, n_out)
            values = self.partition(total - fee, n_out)
            tx = self.emit(inputs, values, [self.payment_address() for _ in values], fee)
            state["mix_txids"].append(tx.txid)
            created = [
                _Utxo(OutPoint(tx.txid, vout), values[vout], tx.outputs[vout].address)
                for vout in range(n_out)
            ]
            # keep roughly half in the mix, release the rest into circulation
            keep = len(created) // 2
            new_work.extend(created[:keep])
            self.pool.extend(created[keep:])
        state["mix_work"] = new_work
        state["rounds_left"] = state.get("rounds_left",
                                         self._mix_rounds(pat_index)) - 1
        if state["rounds_left"] == 0:
            self.pool.extend(new_work)
            state["mix_work"] = []
            self.ledger.records.append(PatternRecord(
                "mix", state["label"], tuple(state["mix_txids"]),
                params={"width": self._mix_width(pat_index),
                        "rounds": self._mix_rounds(pat_index)}))

    def _mix_rounds(self, pat_index: int) -> int:
        return self.spec.patterns[pat_index].get("rounds", 3)

    def _mix_width(self, pat_index: int) -> int:
        return min(self.spec.patterns[pat_index].get("width", 6), self.PRESPLIT_FAN)

    # -- background traffic -----------------------------------------------------

    def run_background(self) -> None:
        if not self.pool:
            return
        r = self.rng.random()
        for cutoff, kind in self.CLASS_WEIGHTS:
            if r < cutoff:
                break
        if kind == "m2":
            n_in, n_out = self.rng.randint(1, 3), 2
        elif kind == "11":
            n_in, n_out = 1, 1
        elif kind == "mm":
            n_in, n_out = self.rng.randint(2, 4), self.rng.randint(3, 6)
        else:
            n_in, n_out = 1, self.rng.randint(3, 8)
        inputs = self.take_from_pool(n_in)
        if not inputs:
            return
        total = sum(u.value for u in inputs)
        n_out = min(n_out, total)
        fee = self.small_fee(total, n_out)
        values = self.partition(total - fee, n_out)
        tx = self.emit(inputs, values, [self.payment_address() for _ in values], fee)
        self.add_to_pool(tx, range(n_out))

    # -- main loop ----------------------------------------------------------------

    def generate(self) -> tuple[Chain, list[TaintSource], PatternLedger]:
        self._pattern_state: dict[int, dict] = {}
        self.plan()
        blocks: list[Block] = []
        for height in range(self.spec.n_blocks):
            self.pool.extend(self.deferred)
            self.deferred = []
            self.block_txs = []
            self.block_fees = 0
            for action in self.schedule.get(height, ()):
                tag = action[0]
                if tag == "theft":
                    self.run_theft(action[1], action[2], action[3])
                elif tag == "splitting":
                    self.run_splitting(action[1], action[2])
                elif tag == "presplit":
                    self.run_presplit(action[1], action[2])
                elif tag == "forward":
                    self.run_forward(action[1], action[2])
                elif tag == "peel":
                    self.run_peel(action[1], action[2], action[3])
                elif tag == "mixsplit":
                    self.run_mixsplit(action[1], action[2])
                elif tag == "mixround":
                    self.run_mixround(action[1])
            if height > 0:
                for _ in range(self.spec.txs_per_block):
                    self.run_background()

            coinbase_value = self.spec.subsidy + self.block_fees
            miner = self.fresh_address("m")
            if coinbase_value >= 2 and self.rng.random() < 0.1:
                split = self.rng.randint(1, coinbase_value - 1)
                outputs = (TxOutput(split, miner),
                           TxOutput(coinbase_value - split, self.fresh_address("m")))
            else:
                outputs = (TxOutput(coinbase_value, miner),)
            coinbase = Transaction(self.next_txid(), True, (), outputs)
            for vout, out in enumerate(coinbase.outputs):
                self.deferred.append(_Utxo(OutPoint(coinbase.txid, vout), out.value,
                                           out.address))
            blocks.append(Block(height, self.block_hash(height),
                                (coinbase, *self.block_txs)))
        return Chain(tuple(blocks), subsidy=self.spec.subsidy), self.sources, self.ledger


def generate_synthetic_chain(spec: GeneratorSpec) -> tuple[Chain, list[TaintSource], PatternLedger]:
    """Generate a deterministic synthetic chain with injected laundering patterns.

    The returned PatternLedger names the exact transactions of every injected
    pattern, giving detector tests their ground truth.
    """
    return _Generator(spec).generate()
