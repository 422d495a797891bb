"""Command-line entry point.

Exit codes: 0 success, 1 bad arguments or configuration, 2 failure while running.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .bench import TrialConfig, emit, run_suite
from .ed import EdConfig, EdTrace, ed_hierarchical, ed_linear
from .errors import DegenerateDataError, NumericalError, ParameterError, StructureError
from .graph import Dag, LinearOrder, erdos_renyi_dag, linearize, order_from_json
from .lhts import lhts
from .nhts import nhts
from .stats import TestConfig
from .suites import SUITES, run_oracle_suites
from .synth import IdentifiabilityWarning, ScmConfig, Dataset, sample, standardize

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int, default=10, help="number of vertices")
    p.add_argument("--n", type=int, default=1000, help="samples per dataset")
    p.add_argument("--density", type=float, default=1.0, help="expected edges per vertex")
    p.add_argument("--mechanism", choices=["linear", "quadratic"], default="linear")
    p.add_argument("--noise", choices=["gaussian", "laplace", "uniform"], default="uniform")
    p.add_argument("--seed", type=int, default=0)


def _build_parser() -> _Parser:
    parser = _Parser(prog="causal-hts", description="Hierarchical topological sorts and edge discovery.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = {"--config": dict(type=Path, help="JSON file whose keys override the flags")}

    gen = sub.add_parser("generate", help="draw a random DAG and a dataset from it")
    _add_grid(gen)
    gen.add_argument("--out", type=Path, help="dataset CSV (stdout if omitted)")
    gen.add_argument("--graph-out", type=Path, help="write the DAG as JSON here")
    gen.add_argument("--config", **common["--config"])

    srt = sub.add_parser("sort", help="learn a hierarchical order from a dataset CSV")
    srt.add_argument("--data", type=Path, required=True)
    srt.add_argument("--method", choices=["lhts", "nhts"], default="lhts")
    srt.add_argument("--alpha", type=float, default=0.05)
    srt.add_argument("--seed", type=int, default=0)
    srt.add_argument("--linear", action="store_true", help="emit a permutation instead of layers")
    srt.add_argument("--out", type=Path)
    srt.add_argument("--config", **common["--config"])

    prn = sub.add_parser("prune", help="find parent sets given a dataset and an order")
    prn.add_argument("--data", type=Path)
    prn.add_argument("--order", type=Path, required=True, help='JSON {"layers": ...} or {"perm": ...}')
    prn.add_argument("--oracle-graph", type=Path, help="answer tests by d-separation in this DAG")
    prn.add_argument("--alpha", type=float, default=0.05)
    prn.add_argument("--seed", type=int, default=0)
    prn.add_argument("--no-refine", action="store_true", help="skip the confirmation pass")
    prn.add_argument("--out", type=Path)
    prn.add_argument("--config", **common["--config"])

    bench = sub.add_parser("bench", help="run seeded trials and write per-trial rows")
    _add_grid(bench)
    bench.add_argument("--method", default="lhts", help="sorter[+pruner], e.g. nhts or true+ed_linear")
    bench.add_argument("--trials", type=int, default=20)
    bench.add_argument("--alpha", type=float, default=0.05)
    bench.add_argument("--oracle", action="store_true", help="graph-truth verdicts instead of data")
    bench.add_argument("--no-refine", action="store_true")
    bench.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 for reproducible files")
    bench.add_argument("--format", choices=["csv", "json"], default=None)
    bench.add_argument("--out", type=Path, required=False)
    bench.add_argument("--config", **common["--config"])

    orc = sub.add_parser("oracle-check", help="check the algorithms against graph truth on graph suites")
    orc.add_argument("--dmax", type=int, default=6, help="enumerate every DAG up to this size")
    orc.add_argument("--random", type=int, default=200, help="number of extra random DAGs")
    orc.add_argument("--random-d", type=int, default=8)
    orc.add_argument("--suites", default="ed,lhts,nhts", help=f"comma list from {sorted(SUITES)}")
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--config", **common["--config"])
    return parser


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    if args.config is None:
        return args
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise _ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(doc, dict):
        raise _ConfigError("config file must hold a JSON object")
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest in ("command", "config") or not hasattr(args, dest):
            raise _ConfigError(f"unknown config key {key!r} for {args.command}")
        setattr(args, dest, Path(value) if isinstance(getattr(args, dest), Path) else value)
    return args


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _generate(args) -> int:
    dag_seed, data_seed = np.random.SeedSequence(args.seed).generate_state(2).tolist()
    g = erdos_renyi_dag(args.d, args.density * args.d, dag_seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IdentifiabilityWarning)
        ds = sample(g, args.n, ScmConfig(args.mechanism, args.noise, seed=data_seed))
    if args.out is None:
        np.savetxt(sys.stdout, ds.values, delimiter=",", header=",".join(ds.names), comments="", fmt="%.17g")
    else:
        ds.to_csv(args.out)
    if args.graph_out is not None:
        Path(args.graph_out).write_text(g.to_json() + "\n")
    return EXIT_OK


def _load(path) -> Dataset:
    # standardizing up front rejects constant columns before any test runs
    return standardize(Dataset.from_csv(path))


def _sort(args) -> int:
    ds = _load(args.data)
    cfg = TestConfig(alpha=args.alpha, seed=args.seed)
    order = lhts(ds, cfg).order if args.method == "lhts" else nhts(ds, cfg).order
    doc = linearize(order, args.seed).to_dict() if args.linear else order.to_dict()
    _write(json.dumps(doc) + "\n", args.out)
    return EXIT_OK


def _prune(args) -> int:
    order = order_from_json(Path(args.order).read_text())
    oracle = Dag.from_json(Path(args.oracle_graph).read_text()) if args.oracle_graph else None
    if args.data is None and oracle is None:
        raise ParameterError("prune needs --data or --oracle-graph")
    ds = _load(args.data) if args.data else None
    cfg = EdConfig(TestConfig(alpha=args.alpha, seed=args.seed), oracle=oracle, refine=not args.no_refine)
    trace = EdTrace()
    run = ed_linear if isinstance(order, LinearOrder) else ed_hierarchical
    parents = run(ds, order, cfg, trace)
    doc = parents.to_dict() | {"trace": trace.to_dict()}
    _write(json.dumps(doc) + "\n", args.out)
    return EXIT_OK


def _bench(args) -> int:
    cfg = TrialConfig(
        d=args.d,
        n=args.n,
        density=args.density,
        mechanism=args.mechanism,
        noise=args.noise,
        method=args.method,
        trials=args.trials,
        seed=args.seed,
        alpha=args.alpha,
        oracle=args.oracle,
        refine=not args.no_refine,
        record_time=not args.no_timing,
    )
    if cfg.nonstandard_density:
        print(f"note: density {cfg.density:g} is outside the standard grid 1-4", file=sys.stderr)
    result = run_suite(cfg)
    fmt = args.format or ("json" if args.out is not None and Path(args.out).suffix == ".json" else "csv")
    if args.out is not None:
        emit(result, fmt, args.out)
    for name, agg in result.aggregates.items():
        print(f"{name}: median {agg['median']:.6f} [q1 {agg['q1']:.6f}, q3 {agg['q3']:.6f}] n={agg['count']}")
    failed = sum(bool(r.error) for r in result.rows)
    if failed:
        print(f"{failed} of {len(result.rows)} trials failed", file=sys.stderr)
    return EXIT_OK


def _oracle_check(args) -> int:
    names = [s.strip() for s in args.suites.split(",") if s.strip()]
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise ParameterError(f"unknown suites {unknown}; choose from {sorted(SUITES)}")
    if args.dmax < 1:
        raise ParameterError("--dmax must be >= 1")
    reports = run_oracle_suites(names, args.dmax, args.random, args.random_d, args.seed)
    for r in reports:
        print(r.summary())
    if all(r.exact for r in reports):
        print("all exact")
        return EXIT_OK
    print("mismatches found")
    return EXIT_RUNTIME


COMMANDS = {
    "generate": _generate,
    "sort": _sort,
    "prune": _prune,
    "bench": _bench,
    "oracle-check": _oracle_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args = _apply_config(args)
        return COMMANDS[args.command](args)
    except (_ConfigError, ParameterError, StructureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateDataError, NumericalError, OSError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
