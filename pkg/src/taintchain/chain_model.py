"""UTXO chain data model, structural validation and transaction taxonomy.

Chains here are linear (no forks), append-only, and desk-scale: blocks hold
ordered transactions, the first of which is always the coinbase claiming the
block subsidy plus the fees of the block's other transactions.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

COIN = 100_000_000
DEFAULT_SUBSIDY = 50 * COIN
DEFAULT_FAN_THRESHOLD = 3

_TXID_RE = re.compile(r"^[0-9a-f]{64}$")


class ChainStructureError(ValueError):
    """Raised when a chain object cannot even be constructed (ingest error)."""


@dataclass(frozen=True, slots=True)
class OutPoint:
    """Reference to one output of one transaction."""

    txid: str
    vout: int

    def __post_init__(self) -> None:
        if not _TXID_RE.match(self.txid):
            raise ChainStructureError(f"txid must be 64 lowercase hex chars: {self.txid!r}")
        if self.vout < 0:
            raise ChainStructureError(f"vout must be non-negative: {self.vout}")

    def __str__(self) -> str:
        return f"{self.txid}:{self.vout}"


@dataclass(frozen=True, slots=True)
class TxOutput:
    value: int
    address: str

    def __post_init__(self) -> None:
        if self.value < 1:
            raise ChainStructureError(f"output value must be >= 1 satoshi: {self.value}")
        if not self.address:
            raise ChainStructureError("output address must be non-empty")


@dataclass(frozen=True, slots=True)
class Transaction:
    txid: str
    is_coinbase: bool
    inputs: tuple[OutPoint, ...]
    outputs: tuple[TxOutput, ...]

    def __post_init__(self) -> None:
        if not _TXID_RE.match(self.txid):
            raise ChainStructureError(f"txid must be 64 lowercase hex chars: {self.txid!r}")
        if self.is_coinbase and self.inputs:
            raise ChainStructureError(f"coinbase {self.txid} must have no inputs")
        if not self.is_coinbase and not self.inputs:
            raise ChainStructureError(f"non-coinbase {self.txid} must have inputs")
        if not self.outputs:
            raise ChainStructureError(f"transaction {self.txid} must have outputs")

    def output_total(self) -> int:
        return sum(out.value for out in self.outputs)


@dataclass(frozen=True, slots=True)
class Block:
    height: int
    hash: str
    transactions: tuple[Transaction, ...]

    def __post_init__(self) -> None:
        if self.height < 0:
            raise ChainStructureError(f"block height must be non-negative: {self.height}")
        if not self.transactions:
            raise ChainStructureError(f"block {self.height} has no transactions")
        if not self.transactions[0].is_coinbase:
            raise ChainStructureError(f"block {self.height} transaction 0 is not a coinbase")
        for tx in self.transactions[1:]:
            if tx.is_coinbase:
                raise ChainStructureError(f"block {self.height} has a second coinbase {tx.txid}")


@dataclass(frozen=True, slots=True)
class Chain:
    """A linear chain of blocks plus the per-chain subsidy constant."""

    blocks: tuple[Block, ...]
    subsidy: int = DEFAULT_SUBSIDY

    def __post_init__(self) -> None:
        if self.subsidy < 1:
            raise ChainStructureError(f"subsidy must be >= 1 satoshi: {self.subsidy}")

    def __len__(self) -> int:
        return len(self.blocks)

    def tip(self) -> Block | None:
        return self.blocks[-1] if self.blocks else None


class TxClass(enum.Enum):
    COINBASE = "coinbase"
    ONE_TO_ONE = "one_to_one"
    MANY_TO_TWO = "many_to_two"
    ONE_TO_MANY = "one_to_many"
    MANY_TO_MANY = "many_to_many"


def classify_transaction(tx: Transaction, fan_threshold: int = DEFAULT_FAN_THRESHOLD) -> TxClass:
    """Assign a transaction to exactly one taxonomy class.

    Two-output payments (the change-output workhorse shape) are MANY_TO_TWO
    regardless of input count; single-input fan-outs of at least
    `fan_threshold` outputs are ONE_TO_MANY; everything wider is MANY_TO_MANY.
    """
    if fan_threshold < 3:
        raise ValueError(f"fan_threshold must be >= 3, got {fan_threshold}")
    if tx.is_coinbase:
        return TxClass.COINBASE
    n_in, n_out = len(tx.inputs), len(tx.outputs)
    if n_in == 1 and n_out == 1:
        return TxClass.ONE_TO_ONE
    if n_out <= 2:
        return TxClass.MANY_TO_TWO
    if n_in == 1 and n_out >= fan_threshold:
        return TxClass.ONE_TO_MANY
    return TxClass.MANY_TO_MANY


@dataclass(frozen=True, slots=True)
class Violation:
    height: int
    txid: str
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"block {self.height} tx {self.txid}: {self.rule} ({self.detail})"


@dataclass(slots=True)
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def ok(self) -> bool:
        return not self.violations

    def add(self, height: int, txid: str, rule: str, detail: str) -> None:
        self.violations.append(Violation(height, txid, rule, detail))


@dataclass(frozen=True, slots=True)
class TxLocation:
    tx: Transaction
    height: int
    index: int  # position within the block, 0 = coinbase


class ChainIndex:
    """Single-pass index over a chain: tx lookup, UTXO resolution, fees, spenders.

    Building the index and validating the chain are the same walk, so
    `ChainIndex.build` returns both the index and the validation report.
    The index is only trustworthy when the report is clean.
    """

    def __init__(self, chain: Chain) -> None:
        self.chain = chain
        self.locations: dict[str, TxLocation] = {}
        self.fees: dict[str, int] = {}
        self.spender: dict[OutPoint, tuple[str, int]] = {}

    @classmethod
    def build(cls, chain: Chain) -> tuple["ChainIndex", ValidationReport]:
        index = cls(chain)
        report = ValidationReport()
        utxo: dict[OutPoint, int] = {}  # live outpoint -> value
        n_outputs: dict[str, int] = {}

        for expected_height, block in enumerate(chain.blocks):
            if block.height != expected_height:
                report.add(block.height, block.transactions[0].txid, "height-order",
                           f"expected height {expected_height}, found {block.height}")
            coinbase = block.transactions[0]
            block_fees = 0

            for tx_index, tx in enumerate(block.transactions):
                if tx.txid in index.locations:
                    report.add(block.height, tx.txid, "duplicate-txid",
                               "txid already appeared earlier in the chain")
                    continue
                index.locations[tx.txid] = TxLocation(tx, block.height, tx_index)

                if tx.is_coinbase:
                    # value check deferred until the block's fees are known
                    n_outputs[tx.txid] = len(tx.outputs)
                    continue

                input_total = 0
                resolvable = True
                for input_index, outpoint in enumerate(tx.inputs):
                    if outpoint.txid == coinbase.txid:
                        report.add(block.height, tx.txid, "same-block-coinbase-spend",
                                   f"input {input_index} spends this block's coinbase")
                        resolvable = False
                        continue
                    if outpoint not in utxo:
                        if outpoint.txid in n_outputs and outpoint.vout >= n_outputs[outpoint.txid]:
                            report.add(block.height, tx.txid, "bad-vout",
                                       f"input {input_index} references {outpoint}, "
                                       f"but that transaction has {n_outputs[outpoint.txid]} outputs")
                        elif outpoint in index.spender:
                            spent_by, _ = index.spender[outpoint]
                            report.add(block.height, tx.txid, "double-spend",
                                       f"input {input_index} respends {outpoint}, "
                                       f"already consumed by {spent_by}")
                        else:
                            report.add(block.height, tx.txid, "unknown-input",
                                       f"input {input_index} references unknown output {outpoint}")
                        resolvable = False
                        continue
                    input_total += utxo.pop(outpoint)
                    index.spender[outpoint] = (tx.txid, input_index)

                if resolvable:
                    fee = input_total - tx.output_total()
                    if fee < 0:
                        report.add(block.height, tx.txid, "value-inflation",
                                   f"outputs total {tx.output_total()} exceeds inputs total {input_total}")
                        fee = 0
                    index.fees[tx.txid] = fee
                    block_fees += fee
                else:
                    index.fees[tx.txid] = 0

                n_outputs[tx.txid] = len(tx.outputs)
                for vout, out in enumerate(tx.outputs):
                    utxo[OutPoint(tx.txid, vout)] = out.value

            expected_coinbase = chain.subsidy + block_fees
            if coinbase.output_total() != expected_coinbase:
                report.add(block.height, coinbase.txid, "coinbase-value",
                           f"coinbase outputs total {coinbase.output_total()}, "
                           f"expected subsidy + fees = {expected_coinbase}")
            index.fees[coinbase.txid] = 0
            for vout, out in enumerate(coinbase.outputs):
                utxo[OutPoint(coinbase.txid, vout)] = out.value

        return index, report

    # -- lookups ------------------------------------------------------------

    def locate(self, txid: str) -> TxLocation:
        loc = self.locations.get(txid)
        if loc is None:
            raise KeyError(f"unknown txid {txid}")
        return loc

    def has_tx(self, txid: str) -> bool:
        return txid in self.locations

    def resolve(self, outpoint: OutPoint) -> TxOutput:
        loc = self.locate(outpoint.txid)
        if outpoint.vout >= len(loc.tx.outputs):
            raise KeyError(f"{outpoint.txid} has no output {outpoint.vout}")
        return loc.tx.outputs[outpoint.vout]

    def fee(self, txid: str) -> int:
        return self.fees[txid]

    def spender_of(self, outpoint: OutPoint) -> tuple[str, int] | None:
        """The (txid, input index) consuming this outpoint, if it was spent."""
        return self.spender.get(outpoint)

    def block_of(self, txid: str) -> Block:
        return self.chain.blocks[self.locate(txid).height]

    def all_outpoints(self):
        """Every output of every transaction, in chain order."""
        for block in self.chain.blocks:
            for tx in block.transactions:
                for vout in range(len(tx.outputs)):
                    yield OutPoint(tx.txid, vout), tx.outputs[vout]


def validate_chain(chain: Chain) -> ValidationReport:
    """Check every cross-transaction invariant; violations are data, not errors."""
    _, report = ChainIndex.build(chain)
    return report
