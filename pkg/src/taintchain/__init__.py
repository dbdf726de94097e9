"""Satoshi-granularity taint tracking for UTXO chains."""

from .chain_model import (
    Block,
    Chain,
    ChainIndex,
    OutPoint,
    Transaction,
    TxClass,
    TxOutput,
    classify_transaction,
    validate_chain,
)
from .intervals import CLEAN, Segment, SegmentList
from .ingest import (
    GeneratorSpec,
    PatternLedger,
    PatternSpec,
    TaintSource,
    generate_synthetic_chain,
    load_taint_sources,
    parse_chain,
    write_chain,
)
from .taint_engine import (
    TaintAssignment,
    fifo_propagate,
    fifo_slice,
    haircut_propagate,
    poison_propagate,
    trace_back,
)
from .analysis import (
    DetectorThresholds,
    detect_collection,
    detect_peeling_chain,
    detect_splitting,
    diffusion_report,
)
from .taint_graph import build_graph, expand, export_svg_columnar

__version__ = "0.1.0"

__all__ = [
    "Block", "Chain", "ChainIndex", "OutPoint", "Transaction", "TxClass",
    "TxOutput", "classify_transaction", "validate_chain",
    "CLEAN", "Segment", "SegmentList",
    "GeneratorSpec", "PatternLedger", "PatternSpec", "TaintSource",
    "generate_synthetic_chain", "load_taint_sources", "parse_chain", "write_chain",
    "TaintAssignment", "fifo_propagate", "fifo_slice", "haircut_propagate",
    "poison_propagate", "trace_back",
    "DetectorThresholds", "detect_collection", "detect_peeling_chain",
    "detect_splitting", "diffusion_report",
    "build_graph", "expand", "export_svg_columnar",
]
