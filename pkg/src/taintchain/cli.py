"""Command-line driver for the full pipeline.

Exit codes: 0 success, 1 domain error (message on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from .analysis import (
    DetectorThresholds,
    diffusion_report,
    matches_to_doc,
    report_to_doc,
    run_detectors,
    series_csv_lines,
)
from .chain_model import (
    DEFAULT_FAN_THRESHOLD,
    DEFAULT_SUBSIDY,
    ChainIndex,
    OutPoint,
)
from .ingest import (
    ChainFormatError,
    GeneratorError,
    GeneratorSpec,
    PatternSpec,
    TaintSourceError,
    generate_synthetic_chain,
    load_chain_file,
    load_taint_file,
    parse_generator_spec,
    write_chain_file,
    write_taint_sources,
)
from .service import ConfigError, ServiceConfig, dumps_canonical, load_service_config, serve
from .taint_engine import (
    TaintEngineError,
    fifo_propagate,
    haircut_propagate,
    poison_propagate,
    provenance_json,
    trace_back,
    write_assignment_file,
)
from .taint_graph import SvgStyle, build_color_map, export_svg_columnar

DOMAIN_ERRORS = (ChainFormatError, TaintSourceError, GeneratorError,
                 TaintEngineError, ConfigError, ValueError, OSError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taintchain",
        description="Taint tracking for UTXO chains: propagation, tracing, "
                    "pattern detection and a graph explorer service.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_chain_args(p, taints_required=False):
        p.add_argument("--chain", required=True, help="chain file (JSONL)")
        p.add_argument("--taints", required=taints_required,
                       help="taint-source file (JSONL)")
        p.add_argument("--subsidy", type=int, default=DEFAULT_SUBSIDY,
                       help="per-block subsidy in satoshis")

    p = sub.add_parser("generate", help="generate a synthetic chain")
    p.add_argument("--spec", help="generator spec file (JSON)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blocks", type=int, default=50)
    p.add_argument("--txs-per-block", type=int, default=3)
    p.add_argument("--sources", type=int, default=0)
    p.add_argument("--subsidy", type=int, default=DEFAULT_SUBSIDY)
    p.add_argument("--pattern", action="append", default=[],
                   metavar="KIND:K=V,...",
                   help="inject a pattern, e.g. splitting:fan=50 (repeatable)")
    p.add_argument("--out-chain", required=True)
    p.add_argument("--out-taints")
    p.add_argument("--out-ledger")

    p = sub.add_parser("validate", help="validate a chain file")
    p.add_argument("--chain", required=True)
    p.add_argument("--subsidy", type=int, default=DEFAULT_SUBSIDY)

    p = sub.add_parser("propagate", help="propagate taint under one policy")
    add_chain_args(p, taints_required=True)
    p.add_argument("--policy", required=True, choices=["fifo", "poison", "haircut"])
    p.add_argument("--out", required=True, help="assignment output file (JSONL)")

    p = sub.add_parser("trace-back", help="trace an output interval backwards")
    add_chain_args(p, taints_required=True)
    p.add_argument("--txid", required=True)
    p.add_argument("--vout", type=int, required=True)
    p.add_argument("--from", dest="start", type=int, required=True,
                   help="interval start (satoshi offset, inclusive)")
    p.add_argument("--to", dest="end", type=int, required=True,
                   help="interval end (satoshi offset, exclusive)")
    p.add_argument("--out", help="write the JSON tree here instead of stdout")

    p = sub.add_parser("diffusion", help="diffusion report across policies")
    add_chain_args(p, taints_required=True)
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--csv", help="time-series CSV path")
    p.add_argument("--plot", help="render the time series to this PNG")

    p = sub.add_parser("patterns", help="detect laundering patterns")
    add_chain_args(p, taints_required=True)
    p.add_argument("--out", help="matches JSON path (default stdout)")
    p.add_argument("--min-fan", type=int, default=10)
    p.add_argument("--min-tainted-sats", type=int, default=1)
    p.add_argument("--min-converging", type=int, default=5)
    p.add_argument("--window-blocks", type=int, default=144)
    p.add_argument("--min-length", type=int, default=4)
    p.add_argument("--peel-fraction", default="3/4", help="rational like 3/4")

    p = sub.add_parser("export-svg", help="render the columnar taint view")
    add_chain_args(p, taints_required=True)
    p.add_argument("--from-height", type=int, default=0)
    p.add_argument("--to-height", type=int, default=-1,
                   help="inclusive; -1 means the chain tip")
    p.add_argument("--colors", help="JSON file mapping labels to CSS colors")
    p.add_argument("--pixels-per-sat", type=float, default=0.02)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="serve the taint graph API")
    p.add_argument("--chain")
    p.add_argument("--taints")
    p.add_argument("--subsidy", type=int)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--config", help="service config JSON "
                   "(falls back to $TAINTCHAIN_CONFIG)")

    return parser


def parse_pattern_arg(text: str) -> PatternSpec:
    kind, _, params_text = text.partition(":")
    params = {}
    if params_text:
        for item in params_text.split(","):
            key, _, value = item.partition("=")
            if not value:
                raise GeneratorError(f"bad pattern parameter {item!r} (expected k=v)")
            params[key.strip()] = int(value)
    return PatternSpec(kind.strip(), params)


def cmd_generate(args) -> int:
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fp:
            spec = parse_generator_spec(json.load(fp))
    else:
        spec = GeneratorSpec(
            seed=args.seed,
            n_blocks=args.blocks,
            txs_per_block=args.txs_per_block,
            n_taint_sources=args.sources,
            patterns=tuple(parse_pattern_arg(text) for text in args.pattern),
            subsidy=args.subsidy,
        )
    chain, sources, ledger = generate_synthetic_chain(spec)
    with open(args.out_chain, "w", encoding="utf-8") as fp:
        write_chain_file(chain, fp)
    if args.out_taints:
        with open(args.out_taints, "w", encoding="utf-8") as fp:
            for line in write_taint_sources(sources):
                fp.write(line + "\n")
    if args.out_ledger:
        with open(args.out_ledger, "w", encoding="utf-8") as fp:
            fp.write(dumps_canonical(ledger.to_doc()) + "\n")
    print(f"generated {len(chain.blocks)} blocks, {len(sources)} taint sources, "
          f"{len(ledger.records)} injected patterns")
    return 0


def cmd_validate(args) -> int:
    chain = load_chain_file(args.chain, subsidy=args.subsidy)
    report = ChainIndex.build(chain)[1]
    print(f"{len(report.violations)} violations")
    for violation in report.violations:
        print(str(violation), file=sys.stderr)
    return 0 if report.ok() else 1


def _load(args):
    chain = load_chain_file(args.chain, subsidy=args.subsidy)
    sources = load_taint_file(args.taints) if args.taints else []
    index, report = ChainIndex.build(chain)
    if not report.ok():
        raise TaintEngineError(
            f"chain fails validation ({len(report.violations)} violations); "
            f"first: {report.violations[0]}")
    return chain, sources, index


def cmd_propagate(args) -> int:
    chain, sources, index = _load(args)
    propagator = {"fifo": fifo_propagate, "poison": poison_propagate,
                  "haircut": haircut_propagate}[args.policy]
    assignment = propagator(chain, sources, index)
    with open(args.out, "w", encoding="utf-8") as fp:
        write_assignment_file(chain, assignment, fp)
    tainted = sum(1 for _ in assignment.tainted_outpoints())
    print(f"{args.policy}: {tainted} tainted outputs across "
          f"{len(assignment.outputs)} outputs")
    return 0


def cmd_trace_back(args) -> int:
    chain, sources, index = _load(args)
    node = trace_back(chain, sources, OutPoint(args.txid, args.vout),
                      args.start, args.end, index)
    body = provenance_json(node)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fp:
            fp.write(body + "\n")
    else:
        print(body)
    return 0


def cmd_diffusion(args) -> int:
    chain, sources, index = _load(args)
    assignments = [
        fifo_propagate(chain, sources, index),
        haircut_propagate(chain, sources, index),
        poison_propagate(chain, sources, index),
    ]
    report = diffusion_report(chain, assignments, index)
    doc = report_to_doc(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fp:
            fp.write(dumps_canonical(doc) + "\n")
    else:
        print(dumps_canonical(doc))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fp:
            for line in series_csv_lines(report):
                fp.write(line + "\n")
    if args.plot:
        from .plotting import render_diffusion_figure

        render_diffusion_figure(report, args.plot)
    return 0


def cmd_patterns(args) -> int:
    chain, sources, index = _load(args)
    thresholds = DetectorThresholds(
        min_fan=args.min_fan,
        min_tainted_sats=args.min_tainted_sats,
        min_converging=args.min_converging,
        window_blocks=args.window_blocks,
        min_length=args.min_length,
        peel_fraction=Fraction(args.peel_fraction),
    )
    assignment = fifo_propagate(chain, sources, index)
    matches = run_detectors(chain, assignment, thresholds, index)
    doc = matches_to_doc(matches, thresholds)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fp:
            fp.write(dumps_canonical(doc) + "\n")
    else:
        print(dumps_canonical(doc))
    print(f"{len(matches)} pattern matches", file=sys.stderr)
    return 0


def cmd_export_svg(args) -> int:
    chain, sources, index = _load(args)
    assignment = fifo_propagate(chain, sources, index)
    overrides = {}
    if args.colors:
        with open(args.colors, "r", encoding="utf-8") as fp:
            overrides = json.load(fp)
    colors = build_color_map(assignment.labels, sources, overrides)
    end = args.to_height if args.to_height >= 0 else len(chain.blocks) - 1
    svg = export_svg_columnar(chain, assignment, args.from_height, end, colors,
                              SvgStyle(pixels_per_sat=args.pixels_per_sat), index)
    with open(args.out, "w", encoding="utf-8") as fp:
        fp.write(svg)
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    overrides = {
        "chain_path": args.chain,
        "taints_path": args.taints,
        "subsidy": args.subsidy,
        "host": args.host,
        "port": args.port,
    }
    config = load_service_config(args.config, overrides)
    serve(config)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "validate": cmd_validate,
    "propagate": cmd_propagate,
    "trace-back": cmd_trace_back,
    "diffusion": cmd_diffusion,
    "patterns": cmd_patterns,
    "export-svg": cmd_export_svg,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return COMMANDS[args.command](args)
    except DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
