"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error.  Every run writes a
manifest (argv, resolved options, input hashes, output hashes, timing) next
to its main output; ``replay`` re-executes a manifest.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import CSV_FIELDS, SyntheticSpec, generate, run_ring_experiment, run_sensitivity_experiment, summarize
from .core import Graph, StructureError
from .curvature import CURVATURE_KINDS, UndefinedCurvature, curvature_reports
from .influence import aggregate_influence, collapsed_adjacency, influence_graph
from .io import (DataError, file_digest, graph_to_dict, read_edge_list, read_features, read_json, write_csv,
                 write_json)
from .lift import LiftConfig, lift, lift_stats
from .mpnn import (ModelConfig, SchemeError, TrainConfig, UnsupportedScheme, init_params, make_shifts,
                   relation_signature, verify_sensitivity)
from .rewire import REWIRE_ALGOS, RewireConfig, relational_rewire

log = logging.getLogger("relmp")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
_LIFT_NAMES = {"none": "none", "clique": "clique", "ring": "ring", "higher": "higher_order"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # the copy attached to subcommands must not reset values given before the subcommand
    def d(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=d(0), help="seed for every random choice (default 0)")
    g.add_argument("--threads", type=int, default=d(1), help="worker processes for bench sweeps")
    g.add_argument("--out-dir", default=d("."), help="directory that relative --out paths resolve against")
    g.add_argument("--format", choices=("json", "csv"), default=d(None), help="format of tabular outputs")
    g.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_options(suppress=True)
    p = _Parser(prog="relmp", description="Relational message passing toolkit.",
                parents=[_global_options(suppress=False)])
    p.add_argument("--version", action="version", version=f"relmp {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    s = sub.add_parser("lift", parents=[common], help="lift an edge list into a relational structure")
    s.add_argument("--method", choices=tuple(_LIFT_NAMES), default="clique")
    s.add_argument("--max-dim", type=int, default=2)
    s.add_argument("--max-ring", type=int, default=7)
    s.add_argument("--order", type=int, default=2)
    s.add_argument("--relations", type=_str_list, default=None, help="comma-separated adjacency kinds to keep")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--features", default=None, help="comma-separated node features, one line per node")
    s.add_argument("--out", required=True)

    s = sub.add_parser("stats", parents=[common], help="entity, cell and tuple counts of a structure")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", default=None)

    s = sub.add_parser("influence", parents=[common], help="influence matrices and graphs")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--shifts", choices=("indicator", "row-normalized"), default="indicator")
    s.add_argument("--emit", choices=("atilde", "b", "graph", "collapsed"), default="b")
    s.add_argument("--out", required=True)

    s = sub.add_parser("curvature", parents=[common], help="edge curvature of a graph or structure")
    s.add_argument("--kind", choices=CURVATURE_KINDS, default="orc")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("rewire", parents=[common], help="add (or prune) connections of a structure")
    s.add_argument("--algo", choices=REWIRE_ALGOS, default="fosr")
    s.add_argument("--iterations", type=int, default=40)
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--power-iters", type=int, default=50)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--log", default=None, help="step log CSV (default: <out stem>_log.csv)")

    s = sub.add_parser("sensitivity", parents=[common], help="check Jacobian norms against the influence bound")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--scheme", default="rgcn")
    s.add_argument("--layers", type=int, default=4)
    s.add_argument("--hidden", type=int, default=4)
    s.add_argument("--in-dim", type=int, default=2, help="input width when the structure has no features")
    s.add_argument("--nonlinearity", choices=("relu", "tanh"), default="relu")
    s.add_argument("--weight-clip", type=float, default=0.5)
    s.add_argument("--shifts", choices=("indicator", "row-normalized"), default="indicator")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--tight", action="store_true", help="use constants from the sampled weights")
    s.add_argument("--alpha", type=float, default=None, help="update constant for every layer")
    s.add_argument("--beta", type=float, default=None, help="message constant for every layer")
    s.add_argument("--out", required=True)

    s = sub.add_parser("bench", parents=[common], help="synthetic benchmarks")
    s.add_argument("--task", choices=("ring_transfer", "neighbors_match", "dumbbell", "tree_cycles"),
                   default="ring_transfer")
    s.add_argument("--experiment", choices=("accuracy", "sensitivity", "generate"), default="accuracy")
    s.add_argument("--ks", type=_int_list, default=[5])
    s.add_argument("--lifts", type=_str_list, default=["none"])
    s.add_argument("--schemes", type=_str_list, default=["rgcn"])
    s.add_argument("--hidden", type=_int_list, default=[16])
    s.add_argument("--rewire-iters", type=_int_list, default=[0])
    s.add_argument("--rewire-algo", choices=REWIRE_ALGOS, default="fosr")
    s.add_argument("--layers", type=int, default=None, help="fixed depth instead of 2k+1")
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--num-graphs", type=int, default=1000)
    s.add_argument("--classes", type=int, default=5)
    s.add_argument("--epochs", type=int, default=500)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--cliques", type=int, default=3)
    s.add_argument("--clique-size", type=int, default=5)
    s.add_argument("--path-len", type=int, default=3)
    s.add_argument("--depth", type=int, default=2)
    s.add_argument("--branching", type=int, default=2)
    s.add_argument("--attach", choices=("none", "line", "cycle"), default="cycle")
    s.add_argument("--out", required=True)

    s = sub.add_parser("replay", parents=[common], help="re-run the command recorded in a manifest")
    s.add_argument("manifest")
    return p


def _resolve(args, path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else Path(args.out_dir) / p


def _load_structure(path):
    obj = read_json(path)
    if not isinstance(obj, tuple):
        raise DataError(f"{path}: expected a relational structure document")
    return obj


def _load_graph_or_structure(path):
    if str(path).endswith(".json"):
        obj = read_json(path)
        if isinstance(obj, tuple):
            return obj[0]
        if isinstance(obj, Graph):
            return obj
        raise DataError(f"{path}: expected a graph or structure document")
    return read_edge_list(path)


def _emit_table(rows, path: Path, fmt: str | None, fields=None):
    if (fmt or ("json" if path.suffix == ".json" else "csv")) == "json":
        write_json(rows, path)
    else:
        write_csv(rows, path, fields)


def cmd_lift(args, ctx):
    graph = read_edge_list(args.inp)
    ctx.inputs.append(args.inp)
    if args.features:
        graph = graph.with_features(read_features(args.features, graph.node_count))
        ctx.inputs.append(args.features)
    kw = {}
    if args.relations:
        kw["relation_selection"] = tuple(args.relations)
    config = LiftConfig(_LIFT_NAMES[args.method], args.max_dim, args.max_ring, args.order, **kw)
    lifted = lift(graph, config)
    out = _resolve(args, args.out)
    write_json(lifted.structure, out, lifted.features)
    ctx.outputs.append(out)
    st = lift_stats(lifted.structure)
    print(f"entities: {st.entity_count}", file=ctx.stdout)


def cmd_stats(args, ctx):
    structure, _ = _load_structure(args.inp)
    ctx.inputs.append(args.inp)
    st = lift_stats(structure)
    rows = [{"metric": "cells", "value": st.entity_count}]
    rows += [{"metric": f"cells_dim{d}", "value": c} for d, c in st.cells_per_dim.items()]
    rows += [{"metric": f"tuples_{name}", "value": c} for name, c in st.tuple_counts.items()]
    rows.append({"metric": "tuples_adjacency", "value": st.adjacency_tuples()})
    for r in rows:
        print(f"{r['metric']}: {r['value']}", file=ctx.stdout)
    if args.out:
        out = _resolve(args, args.out)
        _emit_table(rows, out, args.format)
        ctx.outputs.append(out)


def cmd_influence(args, ctx):
    structure, _ = _load_structure(args.inp)
    ctx.inputs.append(args.inp)
    shifts = make_shifts(structure, args.shifts)
    n = structure.n_entities
    out = _resolve(args, args.out)
    if args.emit == "graph":
        G = influence_graph(aggregate_influence(shifts, n))
        rows = [{"src": s, "dst": d, "weight": w} for (s, d), w in sorted(G.edges.items())]
        _emit_table(rows, out, args.format, ("src", "dst", "weight"))
    else:
        if args.emit == "collapsed":
            M = collapsed_adjacency(structure)
        else:
            M = aggregate_influence(shifts, n).dense("aggregated" if args.emit == "atilde" else "augmented")
        if (args.format or ("json" if out.suffix == ".json" else "csv")) == "json":
            write_json({"entities": list(range(n)), "matrix": M.tolist()}, out)
        else:
            ids = [str(i) for i in range(n)]
            write_csv([dict(zip(ids, row)) for row in M.tolist()], out, ids)
    ctx.outputs.append(out)


def cmd_curvature(args, ctx):
    obj = _load_graph_or_structure(args.inp)
    ctx.inputs.append(args.inp)
    reports = curvature_reports(obj, args.kind)
    comp = sorted({k for r in reports for k in r.components})
    rows = [{"src": r.edge[0], "dst": r.edge[1], "value": r.value, **r.components} for r in reports]
    out = _resolve(args, args.out)
    _emit_table(rows, out, args.format, ["src", "dst", "value"] + comp)
    ctx.outputs.append(out)


def cmd_rewire(args, ctx):
    structure, features = _load_structure(args.inp)
    ctx.inputs.append(args.inp)
    config = RewireConfig(args.algo, args.iterations, args.temperature, args.power_iters, seed=args.seed)
    steps: list = []
    result = relational_rewire(structure, config, steps)
    out = _resolve(args, args.out)
    write_json(result, out, features)
    log_path = _resolve(args, args.log) if args.log else out.with_name(out.stem + "_log.csv")
    rows = [{"iteration": s.iteration, "action": s.action, "u": s.pair[0], "v": s.pair[1], "score": s.score,
             "lambda2_before": s.lambda2_before, "lambda2_after": s.lambda2_after} for s in steps]
    write_csv(rows, log_path, ("iteration", "action", "u", "v", "score", "lambda2_before", "lambda2_after"))
    ctx.outputs += [out, log_path]
    print(f"{len(steps)} steps", file=ctx.stdout)


def cmd_sensitivity(args, ctx):
    structure, features = _load_structure(args.inp)
    ctx.inputs.append(args.inp)
    if args.scheme == "rgcn" and not any(r.arity == 1 for r in structure.relations):
        structure = structure.with_identity()
    in_dim = features.shape[1] if features is not None else args.in_dim
    config = ModelConfig.build(args.scheme, args.layers, in_dim, args.hidden, nonlinearity=args.nonlinearity,
                               weight_clip=args.weight_clip)
    shifts = make_shifts(structure, args.shifts)
    rng = np.random.Generator(np.random.Philox(args.seed))
    params = init_params(config, relation_signature(shifts), rng)
    constants = None
    if (args.alpha is None) != (args.beta is None):
        raise UsageError("--alpha and --beta go together")
    if args.alpha is not None:
        constants = [(args.alpha, args.beta)] * args.layers
    try:
        report = verify_sensitivity(structure, shifts, params, config, args.trials, rng, constants, args.tight)
    except UnsupportedScheme as e:
        raise UsageError(f"{e} (use --alpha/--beta)") from e
    out = _resolve(args, args.out)
    write_json(report.to_dict(), out)
    ctx.outputs.append(out)
    print(f"probes: {report.probes} max_ratio: {report.max_ratio:.6g} violations: {len(report.violations)}",
          file=ctx.stdout)


def cmd_bench(args, ctx):
    spec = SyntheticSpec(task=args.task, k=args.ks[0], cliques=args.cliques, clique_size=args.clique_size,
                         path_len=args.path_len, depth=args.depth, branching=args.branching, attach=args.attach,
                         classes=args.classes, num_graphs=args.num_graphs, seed=args.seed)
    out = _resolve(args, args.out)
    if args.experiment == "generate":
        data = generate(spec)
        docs = []
        for item in data.graphs:
            if isinstance(item, Graph):
                docs.append(graph_to_dict(item))
            else:
                doc = graph_to_dict(item.graph)
                doc.update(root=item.root, label=item.label)
                docs.append(doc)
        write_json({"spec": vars(args).get("task"), "seed": args.seed, "graphs": docs}, out)
        ctx.outputs.append(out)
        return
    if args.task != "ring_transfer":
        raise UsageError(f"experiment {args.experiment!r} is only defined for ring_transfer")
    if args.experiment == "sensitivity":
        rows = run_sensitivity_experiment(spec, args.lifts, args.rewire_iters, args.ks, args.rewire_algo)
    else:
        tc = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
        rows = run_ring_experiment(spec, args.lifts, args.schemes, args.hidden, args.rewire_iters, args.ks,
                                   args.trials, tc, args.rewire_algo, args.layers, args.threads)
    _emit_table(rows, out, args.format, CSV_FIELDS)
    ctx.outputs.append(out)
    if args.experiment == "accuracy":
        summary = out.with_name(out.stem + "_summary" + out.suffix)
        _emit_table(summarize(rows), summary, args.format)
        ctx.outputs.append(summary)
        for r in summarize(rows):
            print(f"k={r['ring_k']} lift={r['lift']} scheme={r['scheme']} hidden={r['hidden']} "
                  f"rewire={r['rewire_iters']}: {r['mean']:.3f} +- {r['stderr']:.3f}", file=ctx.stdout)


def cmd_replay(args, ctx):
    data = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    if "argv" not in data:
        raise DataError(f"{args.manifest}: not a run manifest")
    ctx.replayed = main(data["argv"], stdout=ctx.stdout, stderr=ctx.stderr)


_COMMANDS = {"lift": cmd_lift, "stats": cmd_stats, "influence": cmd_influence, "curvature": cmd_curvature,
             "rewire": cmd_rewire, "sensitivity": cmd_sensitivity, "bench": cmd_bench, "replay": cmd_replay}


class _Context:
    def __init__(self, stdout, stderr):
        self.stdout, self.stderr = stdout, stderr
        self.inputs: list = []
        self.outputs: list = []
        self.replayed = None


def _write_manifest(argv, args, ctx, elapsed):
    if not ctx.outputs:
        return
    first = Path(ctx.outputs[0])
    manifest = {
        "argv": list(argv),
        "command": args.command,
        "config": {k: v for k, v in vars(args).items() if k != "command"},
        "seed": args.seed,
        "version": __version__,
        "inputs": {str(p): file_digest(p) for p in ctx.inputs},
        "outputs": {str(p): file_digest(p) for p in ctx.outputs},
        "wall_clock_seconds": elapsed,
    }
    write_json(manifest, first.with_name(first.name + ".manifest.json"))


def main(argv=None, stdout=None, stderr=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "relmp: error: a command is required")
    except UsageError as e:
        print(e, file=stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=stderr)
    if args.threads < 1:
        print("relmp: error: --threads must be >= 1", file=stderr)
        return EXIT_USAGE
    ctx = _Context(stdout, stderr)
    start = time.perf_counter()
    try:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](args, ctx)
    except UsageError as e:
        print(f"relmp {args.command}: error: {e}", file=stderr)
        return EXIT_USAGE
    except (DataError, StructureError, SchemeError, UndefinedCurvature, FileNotFoundError,
            IsADirectoryError, ValueError) as e:
        print(f"relmp {args.command}: {e}", file=stderr)
        return EXIT_DATA
    if ctx.replayed is not None:
        return ctx.replayed
    _write_manifest(argv, args, ctx, time.perf_counter() - start)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
