"""Command-line front end: ``gocart generate|fit|eval|export``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, exact, greedy, simdata
from .data import (DimensionMismatch, EmptyDataset, MinMaxScaler, SchemaError, Dataset,
                   format_float, match_schema, write_dataset, atomic_write_text)
from .dpt import Hyperrectangle, Node, OutOfDomain, Partition, TooLarge
from .evalmetrics import edge_metrics, exact_recovery, partition_recovered
from .formats import (GRAPHS_FILE, LAYOUT_FILE, ConfigError, load_model, read_config,
                      read_graph_runs, read_json, save_model, write_csv, write_graph_runs,
                      write_json, write_layout, dumps, leaf_to_dict)
from .glasso import Infeasible
from .numerics import DEFAULT_NUMERICS, NoConvergence, NotPositiveDefinite
from .risk import FittedTree, LeafModel, heldout_risk, root_only

log = logging.getLogger("gocart")

USAGE, DATA, NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# settings

def _settings(args) -> dict:
    """Config file < GOCART_SEED < explicit flags."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    env = os.environ.get("GOCART_SEED")
    if env is not None:
        try:
            cfg["seed"] = int(env)
        except ValueError as exc:
            raise ConfigError(f"GOCART_SEED must be an integer, got {env!r}") from exc
    for key in ("seed", "K", "min_leaf", "num_lambdas", "lambda_ratio", "gamma", "l1_bound",
                "lam", "lambda_x", "lambda_y", "bandwidth", "n", "d", "p", "side"):
        v = getattr(args, key, None)
        if v is not None:
            cfg["lambda" if key == "lam" else key] = v
    if getattr(args, "no_refit", False):
        cfg["refit"] = False
    return cfg


def _numerics(cfg: dict):
    over = {k: cfg[k] for k in ("glasso_tol", "glasso_max_iter", "lasso_tol", "refit_tol") if k in cfg}
    return dataclasses.replace(DEFAULT_NUMERICS, **over)


def _greedy_config(cfg: dict) -> greedy.GreedyConfig:
    keys = ("K", "min_leaf", "num_lambdas", "lambda_ratio", "refit", "seed")
    return greedy.GreedyConfig(**{k: cfg[k] for k in keys if k in cfg}, numerics=_numerics(cfg))


# ---------------------------------------------------------------------------
# generate

def cmd_generate(args) -> None:
    cfg = _settings(args)
    rng = np.random.default_rng(cfg.get("seed", 0))
    out = Path(args.out)
    p = cfg.get("p", 20)
    if p * (p - 1) // 2 < 10 or p * 4 < 20:
        raise UsageError(f"p={p} cannot hold 10 edges with maximum degree 4")
    if args.kind == "regions22":
        d = cfg.get("d", 10)
        rects = simdata.load_layout(args.layout) if args.layout else None
        train, held, layout = simdata.gen_regions22(cfg.get("n", 10_000), d, rng, p=p, rects=rects)
        write_layout(out / LAYOUT_FILE, layout, d)
    elif args.kind == "chain":
        train, held, graphs = simdata.gen_chain(cfg.get("n", 10_000), p, rng)
        write_graph_runs(out / GRAPHS_FILE, "chain", graphs, p, train.x)
    else:
        side = cfg.get("side", 100)
        train, held, grid = simdata.gen_grid(side, p, rng)
        flat = [grid[i][j] for i in range(side) for j in range(side)]
        write_graph_runs(out / GRAPHS_FILE, "grid", flat, p, train.x)
    write_dataset(train, out / "train.csv")
    write_dataset(held, out / "heldout.csv")
    log.info("wrote %d + %d rows to %s", train.n, held.n, out)


# ---------------------------------------------------------------------------
# fit

def _trace_rows(trace):
    for r in trace:
        yield [r.node_id, r.dim, float(r.gain), int(r.accepted)]


def _history_rows(ft: FittedTree):
    yield [0, 0, -1, 0.0, float(ft.root_heldout_risk)]
    for step, (node, dim, gain, risk) in enumerate(ft.split_history, start=1):
        yield [step, node, dim, float(gain), float(risk)]


HISTORY_COLUMNS = ["step", "node_id", "split_dim", "gain", "heldout_risk"]
TRACE_COLUMNS = ["node_id", "split_dim", "gain", "accepted"]


def cmd_fit(args) -> None:
    cfg = _settings(args)
    train, held = match_schema(args.train, args.heldout)
    scaler = None
    if args.rescale == "minmax":
        scaler = MinMaxScaler.fit(train.x, held.x)
        train = Dataset(scaler.transform(train.x), train.y)
        held = Dataset(scaler.transform(held.x), held.y)
    out = Path(args.out)
    method = args.method
    meta = {"method": method, "d": train.d, "p": train.p,
            "config": {k: cfg[k] for k in sorted(cfg)}}
    gcfg = _greedy_config(cfg)
    trace: list = []

    if method == "kernel":
        if args.x0 is None or cfg.get("bandwidth") is None:
            raise UsageError("kernel fitting requires --x0 and --bandwidth")
        x0 = np.asarray(args.x0, dtype=float)
        if scaler is not None:
            x0 = scaler.transform(x0[None, :])[0]
        mu, _ = baselines.kernel_moments(train, x0, cfg["bandwidth"])
        prec = baselines.kernel_fit(train, x0, cfg["bandwidth"], cfg.get("lambda", 0.1), gcfg.numerics)
        meta["x0"] = list(args.x0)
        write_json(out / "leaves" / "leaf_0000.json",
                   leaf_to_dict(LeafModel(mu, prec, train.n)))
        write_json(out / "model.json", meta)
        return

    if method == "greedy":
        ft = greedy.grow(train, held, gcfg, trace)
        history = list(_history_rows(ft))
        write_csv(out / "risk_report.csv", HISTORY_COLUMNS, history)
    elif method in ("exact-heldout", "exact-penalized"):
        ecfg = exact.ExactConfig.from_greedy(gcfg)
        if "l1_bound" in cfg:
            ecfg = dataclasses.replace(ecfg, l1_bound=cfg["l1_bound"])
        if method == "exact-heldout":
            ft, report = exact.fit_heldout(train, held, train.d, gcfg.K, ecfg)
        else:
            ft, report = exact.fit_penalized(train, train.d, gcfg.K, cfg.get("gamma", 1.0), ecfg)
        meta["n_trees_evaluated"] = report.n_candidates
        atomic_write_text(out / "risk_report.csv", report.to_csv())
    else:
        if method == "glasso-pooled":
            model = baselines.pooled_glasso(train, held, gcfg.fitter())
        else:
            prec = baselines.parametric_fit(train, cfg.get("lambda_x", 0.1),
                                            cfg.get("lambda_y", 0.1), gcfg.numerics)
            model = LeafModel(train.y.mean(axis=0), prec, train.n)
        ft = root_only(model, train.d, gcfg.K)
        ft.root_heldout_risk = heldout_risk(ft, held)
        write_csv(out / "risk_report.csv", HISTORY_COLUMNS, _history_rows(ft))
    meta["heldout_risk"] = heldout_risk(ft, held)
    meta["root_heldout_risk"] = ft.root_heldout_risk
    meta["split_history"] = [list(h) for h in ft.split_history]
    write_csv(out / "growth_trace.csv", TRACE_COLUMNS, _trace_rows(trace))
    save_model(out, ft, meta, scaler)
    log.info("fitted %d leaves; held-out risk %.6g", ft.tree.n_leaves, meta["heldout_risk"])


# ---------------------------------------------------------------------------
# eval

def _to_model_space(x, scaler):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return scaler.transform(x) if scaler is not None else x


def cmd_eval(args) -> None:
    ft, scaler, meta = load_model(args.model)
    truth_dir = Path(args.truth)
    run_id = args.run_id
    rows = []
    summary: dict = {"n_leaves": ft.tree.n_leaves}
    dims = ft.tree.dim
    counts = [0] * dims
    for k in ft.tree.split_dims():
        counts[k] += 1
    summary["splits_per_dim"] = counts
    if (truth_dir / LAYOUT_FILE).exists():
        obj = read_json(truth_dir / LAYOUT_FILE)
        d = int(obj["d"])
        if d != dims:
            raise DimensionMismatch(f"truth has d={d}, model has d={dims}")
        regions = obj["regions"]
        for reg in regions:
            rect = Hyperrectangle.from_dict(reg["rect"])
            centre = [(a + b) / 2 for a, b in zip(rect.lower, rect.upper)] + [0.5] * (d - 2)
            j = ft.tree.assign(_to_model_space(centre, scaler))[0]
            truth = frozenset(tuple(e) for e in reg["edges"])
            rows.append([run_id, int(reg["id"]), *edge_metrics(ft.leaf_models[j].edges, truth)])
        if scaler is None:
            cells = tuple(Hyperrectangle(r.lower + (0.0,) * (d - 2), r.upper + (1.0,) * (d - 2))
                          for r in (Hyperrectangle.from_dict(g["rect"]) for g in regions))
            tp = Partition(cells)
            summary["exact_recovery"] = exact_recovery(tp, ft.partition)
            summary["partition_recovered"] = partition_recovered(tp, ft.partition)
    elif (truth_dir / GRAPHS_FILE).exists():
        obj = read_json(truth_dir / GRAPHS_FILE)
        graphs = read_graph_runs(obj)
        x = np.asarray(obj["x"], dtype=float)
        if x.shape[1] != dims:
            raise DimensionMismatch(f"truth has d={x.shape[1]}, model has d={dims}")
        leaf = ft.tree.assign(_to_model_space(x, scaler))
        for i, (j, g) in enumerate(zip(leaf, graphs)):
            rows.append([run_id, i + 1, *edge_metrics(ft.leaf_models[j].edges, g.edges)])
    else:
        raise FileNotFoundError(f"no {LAYOUT_FILE} or {GRAPHS_FILE} in {truth_dir}")
    f1 = [r[4] for r in rows]
    summary["mean_f1"] = math.fsum(f1) / len(f1)
    out = Path(args.out) if args.out else Path(args.model) / "metrics.csv"
    write_csv(out, ["run_id", "region_id", "precision", "recall", "f1"], rows)
    write_json(out.with_name(out.stem + "_summary.json"), summary)


# ---------------------------------------------------------------------------
# export

def tree_to_dot(ft: FittedTree) -> str:
    lines = ["digraph gocart {", "  node [shape=box];"]
    counter = {"node": 0, "leaf": 0}

    def visit(node: Node) -> str:
        name = f"n{counter['node']}"
        counter["node"] += 1
        if node.is_leaf:
            j = counter["leaf"]
            counter["leaf"] += 1
            m = ft.leaf_models[j]
            lines.append(f'  {name} [label="leaf_{j:04d}\\n|E| = {len(m.edges)}"];')
            return name
        k = node.split_dim
        mid = node.left.rect.upper[k]
        lines.append(f'  {name} [label="x{k + 1} < {format_float(mid)}"];')
        left, right = visit(node.left), visit(node.right)
        lines.append(f'  {name} -> {left} [label="yes"];')
        lines.append(f'  {name} -> {right} [label="no"];')
        return name

    visit(ft.tree.root)
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_export(args) -> None:
    model_dir = Path(args.model)
    ft, scaler, meta = load_model(model_dir)
    out = Path(args.out) if args.out else model_dir
    if args.format == "dot":
        atomic_write_text(out / "tree.dot", tree_to_dot(ft))
    elif args.format == "json":
        obj = ft.tree.to_dict()
        obj["rescale"] = scaler.to_dict() if scaler is not None else None
        obj["leaves"] = [leaf_to_dict(m) for m in ft.leaf_models]
        obj["method"] = meta.get("method")
        atomic_write_text(out / "model_export.json", dumps(obj))
    else:
        d = ft.tree.dim
        cols = ["leaf"] + [f"x{k + 1}_{s}" for k in range(d) for s in ("lower", "upper")]
        cols += ["n_edges", "lambda"]
        rows = []
        for j, (cell, m) in enumerate(zip(ft.partition.cells, ft.leaf_models)):
            bounds = [v for k in range(d) for v in (cell.lower[k], cell.upper[k])]
            if scaler is not None:
                lo, hi = np.asarray(scaler.lower), np.asarray(scaler.upper)
                bounds = [float(lo[k // 2] + v * (hi[k // 2] - lo[k // 2]))
                          for k, v in enumerate(bounds)]
            rows.append([j, *map(float, bounds), len(m.edges), float(m.prec.lam)])
        write_csv(out / "plot_leaves.csv", cols, rows)
        if ft.root_heldout_risk is not None:
            write_csv(out / "plot_splits.csv", HISTORY_COLUMNS, _history_rows(ft))
        else:
            write_csv(out / "plot_splits.csv", HISTORY_COLUMNS, [])


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gocart", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--seed", type=int)

    g = sub.add_parser("generate", help="simulate a dataset")
    g.add_argument("kind", choices=["regions22", "chain", "grid"])
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--side", type=int)
    g.add_argument("--layout", help="layout JSON overriding the built-in 22-cell layout")
    common(g)

    f = sub.add_parser("fit", help="fit a model")
    f.add_argument("method", choices=["greedy", "exact-heldout", "exact-penalized",
                                      "glasso-pooled", "parametric", "kernel"])
    f.add_argument("--train", required=True)
    f.add_argument("--heldout", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--K", type=int)
    f.add_argument("--min-leaf", dest="min_leaf", type=int)
    f.add_argument("--num-lambdas", dest="num_lambdas", type=int)
    f.add_argument("--lambda-ratio", dest="lambda_ratio", type=float)
    f.add_argument("--no-refit", action="store_true")
    f.add_argument("--gamma", type=float)
    f.add_argument("--l1-bound", dest="l1_bound", type=float)
    f.add_argument("--lambda", dest="lam", type=float)
    f.add_argument("--lambda-x", dest="lambda_x", type=float)
    f.add_argument("--lambda-y", dest="lambda_y", type=float)
    f.add_argument("--x0", type=float, nargs="+")
    f.add_argument("--bandwidth", type=float)
    f.add_argument("--rescale", choices=["none", "minmax"], default="none")
    common(f)

    e = sub.add_parser("eval", help="score a model against a truth directory")
    e.add_argument("--model", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out")
    e.add_argument("--run-id", dest="run_id", default="run")

    x = sub.add_parser("export", help="render a model as DOT, JSON or plot tables")
    x.add_argument("--model", required=True)
    x.add_argument("--format", choices=["dot", "json", "plotdata"], required=True)
    x.add_argument("--out")
    return ap


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "eval": cmd_eval, "export": cmd_export}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        COMMANDS[args.command](args)
    except (UsageError, ConfigError, TooLarge) as exc:
        print(f"gocart: error: {exc}", file=sys.stderr)
        return USAGE
    except (NotPositiveDefinite, NoConvergence, Infeasible, baselines.DegenerateWeights) as exc:
        print(f"gocart: numerical failure: {exc}", file=sys.stderr)
        return NUMERIC
    except (SchemaError, DimensionMismatch, EmptyDataset, OutOfDomain, OSError, ValueError,
            KeyError) as exc:
        print(f"gocart: data error: {exc}", file=sys.stderr)
        return DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
