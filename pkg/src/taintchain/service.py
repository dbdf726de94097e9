"""Read-only HTTP JSON API serving the taint graph to the explorer UI.

Propagation runs once at startup; every endpoint is a pure read over the
resulting immutable state. Handlers do nothing but parse the query and return
the canonical serialization the library produces, so HTTP responses are
byte-equal to direct library calls.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .analysis import (
    DetectorThresholds,
    diffusion_report,
    matches_to_doc,
    report_to_doc,
    run_detectors,
)
from .chain_model import DEFAULT_FAN_THRESHOLD, DEFAULT_SUBSIDY, Chain, ChainIndex, OutPoint
from .ingest import TaintSource, load_taint_file, load_chain_file
from .taint_engine import (
    POLICIES,
    TaintEngineError,
    fifo_propagate,
    format_fraction,
    haircut_propagate,
    poison_propagate,
    provenance_json,
    trace_back,
)
from .taint_graph import (
    SvgStyle,
    TaintGraph,
    UnknownTxidError,
    build_color_map,
    build_graph,
    expand,
    export_svg_columnar,
)

LOCALHOST_ORIGIN_REGEX = r"^https?://(localhost|127\.0\.0\.1)(:\d+)?$"


class ConfigError(ValueError):
    pass


def dumps_canonical(doc) -> str:
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True, slots=True)
class ServiceConfig:
    chain_path: str
    taints_path: str | None = None
    policies: tuple[str, ...] = POLICIES
    host: str = "127.0.0.1"
    port: int = 8787
    subsidy: int = DEFAULT_SUBSIDY
    fan_threshold: int = DEFAULT_FAN_THRESHOLD
    thresholds: DetectorThresholds = field(default_factory=DetectorThresholds)
    colors: dict[str, str] = field(default_factory=dict, hash=False)
    cors_origins: tuple[str, ...] = ()
    pixels_per_sat: float = 0.02

    def validate(self) -> None:
        if not os.path.exists(self.chain_path):
            raise ConfigError(f"chain file does not exist: {self.chain_path}")
        if self.taints_path is not None and not os.path.exists(self.taints_path):
            raise ConfigError(f"taint-source file does not exist: {self.taints_path}")
        if not 1 <= self.port <= 65535:
            raise ConfigError(f"port must be in [1, 65535], got {self.port}")
        if "fifo" not in self.policies:
            raise ConfigError("the fifo policy is required (the graph is built from it)")
        for policy in self.policies:
            if policy not in POLICIES:
                raise ConfigError(f"unknown policy {policy!r}")

    @classmethod
    def from_doc(cls, doc: dict) -> "ServiceConfig":
        if "chain" not in doc:
            raise ConfigError("config must name a 'chain' file")
        thresholds_doc = doc.get("thresholds", {})
        thresholds = DetectorThresholds(
            min_fan=int(thresholds_doc.get("min_fan", 10)),
            min_tainted_sats=int(thresholds_doc.get("min_tainted_sats", 1)),
            min_converging=int(thresholds_doc.get("min_converging", 5)),
            window_blocks=int(thresholds_doc.get("window_blocks", 144)),
            min_length=int(thresholds_doc.get("min_length", 4)),
            peel_fraction=(
                Fraction(thresholds_doc["peel_fraction"])
                if "peel_fraction" in thresholds_doc else Fraction(3, 4)),
        )
        return cls(
            chain_path=str(doc["chain"]),
            taints_path=str(doc["taints"]) if doc.get("taints") else None,
            policies=tuple(doc.get("policies", POLICIES)),
            host=str(doc.get("host", "127.0.0.1")),
            port=int(doc.get("port", 8787)),
            subsidy=int(doc.get("subsidy", DEFAULT_SUBSIDY)),
            fan_threshold=int(doc.get("fan_threshold", DEFAULT_FAN_THRESHOLD)),
            thresholds=thresholds,
            colors=dict(doc.get("colors", {})),
            cors_origins=tuple(doc.get("cors_origins", ())),
            pixels_per_sat=float(doc.get("pixels_per_sat", 0.02)),
        )

    @classmethod
    def from_file(cls, path: str) -> "ServiceConfig":
        with open(path, "r", encoding="utf-8") as fp:
            try:
                doc = json.load(fp)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path}: malformed JSON ({exc.msg})") from exc
        return cls.from_doc(doc)


class ServiceState:
    """Everything the endpoints read: chain, assignments, graph, reports."""

    def __init__(self, config: ServiceConfig, chain: Chain, index: ChainIndex,
                 sources: list[TaintSource]) -> None:
        self.config = config
        self.chain = chain
        self.index = index
        self.sources = sources
        propagators = {
            "fifo": fifo_propagate,
            "haircut": haircut_propagate,
            "poison": poison_propagate,
        }
        self.assignments = {
            policy: propagators[policy](chain, sources, index)
            for policy in config.policies
        }
        fifo = self.assignments["fifo"]
        self.labels = fifo.labels
        self.colors = build_color_map(self.labels, sources, config.colors)
        self.graph: TaintGraph = build_graph(chain, fifo, index, config.fan_threshold)
        self.patterns = run_detectors(chain, fifo, config.thresholds, index)
        self.report = diffusion_report(chain, list(self.assignments.values()), index)

    @classmethod
    def build(cls, config: ServiceConfig) -> "ServiceState":
        config.validate()
        chain = load_chain_file(config.chain_path, subsidy=config.subsidy)
        index, report = ChainIndex.build(chain)
        if not report.ok():
            raise ConfigError(
                f"chain fails validation ({len(report.violations)} violations); "
                f"first: {report.violations[0]}")
        sources = load_taint_file(config.taints_path) if config.taints_path else []
        return cls(config, chain, index, sources)


# ---------------------------------------------------------------------------
# Canonical endpoint documents (contract-tested against HTTP responses)
# ---------------------------------------------------------------------------


def summary_doc(state: ServiceState) -> dict:
    chain = state.chain
    n_txs = sum(len(b.transactions) for b in chain.blocks)
    n_outputs = sum(len(t.outputs) for b in chain.blocks for t in b.transactions)
    return {
        "blocks": len(chain.blocks),
        "transactions": n_txs,
        "outputs": n_outputs,
        "subsidy": chain.subsidy,
        "tip_height": chain.blocks[-1].height,
        "tip_hash": chain.blocks[-1].hash,
        "labels": list(state.labels),
        "policies": list(state.assignments),
        "graph_vertices": len(state.graph.vertices),
        "graph_edges": state.graph.n_edges,
    }


def labels_doc(state: ServiceState) -> list:
    return [{"label": label, "color": state.colors[label]} for label in state.labels]


def _vertex_doc(state: ServiceState, txid: str) -> dict:
    vertex = state.graph.vertex(txid)
    return {
        "txid": vertex.txid,
        "height": vertex.height,
        "block_hash": vertex.block_hash,
        "tx_class": vertex.tx_class.value,
        "tainted_out": vertex.tainted_out,
        "tainted_in": vertex.tainted_in,
    }


def tx_doc(state: ServiceState, txid: str) -> dict:
    loc = state.index.locations.get(txid)
    if loc is None:
        raise UnknownTxidError(txid)
    tx = loc.tx
    fifo = state.assignments["fifo"]
    inputs = []
    for op in tx.inputs:
        out = state.index.resolve(op)
        inputs.append({
            "txid": op.txid,
            "vout": op.vout,
            "value": out.value,
            "address": out.address,
            "segments": fifo.outputs[op].to_pairs(),
        })
    outputs = []
    for vout, out in enumerate(tx.outputs):
        outpoint = OutPoint(tx.txid, vout)
        spender = state.index.spender_of(outpoint)
        outputs.append({
            "vout": vout,
            "value": out.value,
            "address": out.address,
            "segments": fifo.outputs[outpoint].to_pairs(),
            "spent_by": ({"txid": spender[0], "input": spender[1]}
                         if spender else None),
        })
    block = state.chain.blocks[loc.height]
    in_graph = tx.txid in state.graph.vertices
    return {
        "txid": tx.txid,
        "height": loc.height,
        "block_hash": block.hash,
        "coinbase": tx.is_coinbase,
        "tx_class": state.graph.vertex(txid).tx_class.value if in_graph else None,
        "fee": state.index.fee(tx.txid),
        "inputs": inputs,
        "outputs": outputs,
        "tainted_out": state.graph.vertex(txid).tainted_out if in_graph else {},
        "in_graph": in_graph,
    }


def expand_doc(state: ServiceState, txid: str, direction: str,
               label: str | None, min_sats: int) -> dict:
    pairs, collapsed = expand(state.graph, txid, direction, label, min_sats)
    edges = []
    for edge, vertex in pairs:
        edges.append({
            "from_txid": edge.from_txid,
            "from_vout": edge.from_vout,
            "to_txid": edge.to_txid,
            "to_input": edge.to_input,
            "value": edge.value,
            "tainted": edge.tainted,
            "proportion": format_fraction(edge.proportion),
            "vertex": _vertex_doc(state, vertex.txid),
        })
    return {"txid": txid, "direction": direction, "edges": edges,
            "collapsed": collapsed}


def trace_json(state: ServiceState, txid: str, vout: int, start: int, end: int) -> str:
    node = trace_back(state.chain, state.sources, OutPoint(txid, vout),
                      start, end, state.index)
    return provenance_json(node)


def patterns_doc(state: ServiceState) -> dict:
    return matches_to_doc(state.patterns, state.config.thresholds)


def diffusion_doc(state: ServiceState) -> dict:
    return report_to_doc(state.report)


def svg_document(state: ServiceState, start_height: int, end_height: int) -> str:
    return export_svg_columnar(
        state.chain, state.assignments["fifo"], start_height, end_height,
        state.colors, SvgStyle(pixels_per_sat=state.config.pixels_per_sat),
        state.index)


# ---------------------------------------------------------------------------
# HTTP app
# ---------------------------------------------------------------------------


def _json_response(doc, status_code: int = 200) -> Response:
    return Response(content=dumps_canonical(doc), status_code=status_code,
                    media_type="application/json")


def _error(status_code: int, message: str) -> Response:
    return _json_response({"error": message}, status_code)


def _query_int(request: Request, name: str, default: int | None = None) -> int:
    raw = request.query_params.get(name)
    if raw is None:
        if default is None:
            raise _BadQuery(f"missing query parameter {name!r}")
        return default
    try:
        return int(raw)
    except ValueError:
        raise _BadQuery(f"query parameter {name!r} must be an integer") from None


class _BadQuery(Exception):
    def __init__(self, message: str) -> None:
        self.message = message


def create_app(state: ServiceState | None) -> FastAPI:
    """Build the API app; a None state answers 503 everywhere (still loading)."""
    app = FastAPI(title="taintchain", docs_url=None, redoc_url=None)
    app.state.engine = state

    extra_origins = list(state.config.cors_origins) if state else []
    app.add_middleware(
        CORSMiddleware,
        allow_origins=extra_origins,
        allow_origin_regex=LOCALHOST_ORIGIN_REGEX,
        allow_methods=["GET"],
        allow_headers=["*"],
    )

    def engine() -> ServiceState | None:
        return app.state.engine

    @app.get("/v1/chain/summary")
    def get_summary() -> Response:
        state = engine()
        if state is None:
            return _error(503, "propagation in progress")
        return _json_response(summary_doc(state))

    @app.get("/v1/labels")
    def get_labels() -> Response:
        state = engine()
        if state is None:
            return _error(503, "propagation in progress")
        return _json_response(labels_doc(state))

    @app.get("/v1/tx/{txid}")
    def get_tx(txid: str) -> Response:
        state = engine()
        if state is None:
            return _error(503, "propagation in progress")
        try:
            return _json_response(tx_doc(state, txid))
        except UnknownTxidError:
            return _error(404, "unknown txid")

    @app.get("/v1/tx/{txid}/expand")
    def get_expand(txid: str, request: Request) -> Response:
        state = engine()
        if state is None:
            return _error(503, "propagation in progress")
        direction = request.query_params.get("direction", "forward")
        if direction not in ("forward", "backward"):
            return _error(400, "direction must be forward or backward")
        label = request.query_params.get("label")
        if label is not None and label not in state.labels:
            return _error(404, "unknown label")
        try:
            min_sats = _query_int(request, "min_sats", 0)
        except _BadQuery as exc:
            return _error(400, exc.message)
        try:
            return _json_response(expand_doc(state, txid, direction, label, min_sats))
        except UnknownTxidError:
            return _error(404, "unknown txid")

    @app.get("/v1/trace")
    def get_trace(request: Request) -> Response:
        state = engine()
        if state is None:
            return _error(503, "propagation in progress")
        txid = request.query_params.get("txid")
        if txid is None:
            return _error(400, "missing query parameter 'txid'")
        if not state.index.has_tx(txid):
            return _error(404, "unknown txid")
        try:
            vout = _query_int(request, "vout")
            start = _query_int(request, "from")
            end = _query_int(request, "to")
        except _BadQuery as exc:
            return _error(400, exc.message)
        try:
            body = trace_json(state, txid, vout, start, end)
        except (TaintEngineError, KeyError) as exc:
            return _error(400, str(exc))
        return Response(content=body, media_type="application/json")

    @app.get("/v1/patterns")
    def get_patterns() -> Response:
        state = engine()
        if state is None:
            return _error(503, "propagation in progress")
        return _json_response(patterns_doc(state))

    @app.get("/v1/diffusion")
    def get_diffusion() -> Response:
        state = engine()
        if state is None:
            return _error(503, "propagation in progress")
        return _json_response(diffusion_doc(state))

    @app.get("/v1/svg")
    def get_svg(request: Request) -> Response:
        state = engine()
        if state is None:
            return _error(503, "propagation in progress")
        try:
            start = _query_int(request, "from", 0)
            end = _query_int(request, "to", len(state.chain.blocks) - 1)
        except _BadQuery as exc:
            return _error(400, exc.message)
        try:
            body = svg_document(state, start, end)
        except ValueError as exc:
            return _error(400, str(exc))
        return Response(content=body, media_type="image/svg+xml")

    return app


def serve(config: ServiceConfig) -> None:
    """Load, propagate, then serve; blocks until interrupted."""
    import uvicorn

    state = ServiceState.build(config)
    app = create_app(state)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")


def load_service_config(path: str | None, overrides: dict) -> ServiceConfig:
    """Config precedence: explicit CLI values > config file > built-in defaults.

    `path` may come from --config or the TAINTCHAIN_CONFIG environment variable.
    """
    if path is None:
        path = os.environ.get("TAINTCHAIN_CONFIG")
    if path:
        config = ServiceConfig.from_file(path)
    else:
        chain_path = overrides.get("chain_path")
        if not chain_path:
            raise ConfigError("no chain file given (use --chain or a config file)")
        config = ServiceConfig(chain_path=chain_path)
    cleaned = {key: value for key, value in overrides.items() if value is not None}
    return replace(config, **cleaned)
