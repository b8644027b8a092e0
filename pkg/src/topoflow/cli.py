"""Command-line front end.

Subcommands: generate-graph, run, analyze, plot. Exit codes: 0 success,
2 configuration error, 3 data/format error, 4 numerical failure during a
run. TOPOFLOW_SEED, when set, overrides the recipe's master_seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import analysis, config, decavg, graphs, svgplot
from .errors import ConfigError, FormatError, NumericsError, ParameterError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topoflow",
        description="Decentralized averaging over complex network topologies.")
    sub = parser.add_subparsers(dest="command", required=True)

    gg = sub.add_parser("generate-graph", help="generate a graph from a spec file")
    gg.add_argument("--spec", required=True, help="graph spec JSON file")
    gg.add_argument("--out", required=True, help="output directory")

    run = sub.add_parser("run", help="run an experiment recipe")
    run.add_argument("--config", required=True, help="experiment recipe JSON file")
    run.add_argument("--out", help="output directory (falls back to the recipe's output.dir)")
    run.add_argument("--threads", type=int, default=1,
                     help="worker threads for per-node training (default 1)")
    run.add_argument("--quiet", action="store_true", help="suppress progress lines")

    an = sub.add_parser("analyze", help="derive statistics from a finished run")
    an.add_argument("--in", dest="in_dir", required=True, help="run output directory")
    an.add_argument("--subset", choices=["g1", "community"], default="g1")

    pl = sub.add_parser("plot", help="render a CSV as an SVG line chart")
    pl.add_argument("--in", dest="in_csv", required=True, help="input CSV")
    pl.add_argument("--out", dest="out_svg", required=True, help="output SVG path")
    pl.add_argument("--title", default="")
    pl.add_argument("--x-col", type=int, default=0)
    pl.add_argument("--series-col", type=int, default=1)
    pl.add_argument("--y-col", type=int, default=None)
    return parser


def _cmd_generate_graph(args) -> int:
    spec = config.parse_graph_spec(args.spec)
    g = graphs.generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graphs.write_edge_list(g, out / "graph.edges")
    graphs.write_summary_json(graphs.graph_summary(g), out / "graph.json")
    print(f"wrote {g.node_count} nodes, {g.edge_count} edges to {out}")
    return 0


def _cmd_run(args) -> int:
    override = os.environ.get("TOPOFLOW_SEED")
    cfg = config.parse_config(args.config,
                              int(override) if override is not None else None)
    out_dir = args.out or config.recipe_output_dir(args.config)
    if out_dir is None:
        raise ConfigError("no output directory: pass --out or set output.dir in the recipe")

    def progress(t, total):
        print(f"round {t}/{total}", file=sys.stderr)

    output = decavg.run_experiment(cfg, threads=max(1, args.threads),
                                   progress=None if args.quiet else progress)
    decavg.write_experiment_output(output, out_dir)
    print(f"wrote run artifacts to {out_dir}")
    return 0


def _cmd_analyze(args) -> int:
    written = analysis.analyze_run_dir(args.in_dir, subset=args.subset)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_plot(args) -> int:
    try:
        svgplot.plot_csv(args.in_csv, args.out_svg, x_col=args.x_col,
                         series_col=args.series_col, y_col=args.y_col,
                         title=args.title)
    except OSError as exc:
        raise FormatError(f"cannot read {args.in_csv}: {exc}") from exc
    print(f"wrote {args.out_svg}")
    return 0


_COMMANDS = {
    "generate-graph": _cmd_generate_graph,
    "run": _cmd_run,
    "analyze": _cmd_analyze,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
