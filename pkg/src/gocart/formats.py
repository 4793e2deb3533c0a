"""On-disk formats: model directories, truth files and flat config files."""
from __future__ import annotations

import configparser
import json
import os
from pathlib import Path

import numpy as np

from .data import MinMaxScaler, SchemaError, atomic_write_text, format_float
from .dpt import DyadicTree
from .glasso import PrecisionEstimate
from .risk import FittedTree, LeafModel
from .simdata import GraphTruth

TREE_FILE = "tree.json"
MODEL_FILE = "model.json"
LEAF_DIR = "leaves"
LAYOUT_FILE = "layout.json"
GRAPHS_FILE = "graphs.json"


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    atomic_write_text(path, dumps(obj))


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing file {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc


def write_csv(path, columns, rows) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(format_float(v) if isinstance(v, float) else str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# leaf models

def leaf_to_dict(m: LeafModel) -> dict:
    return {"mu": m.mu.tolist(), "omega": m.prec.omega.tolist(), "lambda": m.prec.lam,
            "edges": [list(e) for e in sorted(m.prec.edges)], "n_train": m.n_train}


def leaf_from_dict(obj) -> LeafModel:
    omega = np.asarray(obj["omega"], dtype=float)
    prec = PrecisionEstimate.from_omega(omega, obj["lambda"])
    return LeafModel(np.asarray(obj["mu"], dtype=float), prec, int(obj.get("n_train", 0)))


def save_model(out_dir, ft: FittedTree, meta: dict, scaler: MinMaxScaler | None = None) -> None:
    """Write ``tree.json``, ``model.json`` and one ``leaves/leaf_NNNN.json`` per leaf."""
    out_dir = Path(out_dir)
    tree = ft.tree.to_dict()
    tree["rescale"] = scaler.to_dict() if scaler is not None else None
    leaf_dir = out_dir / LEAF_DIR
    leaf_dir.mkdir(parents=True, exist_ok=True)
    keep = set()
    for j, m in enumerate(ft.leaf_models):
        name = f"leaf_{j:04d}.json"
        keep.add(name)
        write_json(leaf_dir / name, leaf_to_dict(m))
    for stale in leaf_dir.glob("leaf_*.json"):
        if stale.name not in keep:
            os.unlink(stale)
    write_json(out_dir / MODEL_FILE, meta)
    write_json(out_dir / TREE_FILE, tree)


def load_model(model_dir):
    """``(FittedTree, scaler or None, meta)`` from a model directory."""
    model_dir = Path(model_dir)
    tree_obj = read_json(model_dir / TREE_FILE)
    meta = read_json(model_dir / MODEL_FILE)
    try:
        tree = DyadicTree.from_dict(tree_obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{model_dir / TREE_FILE}: malformed tree ({exc})") from exc
    leaves = []
    for j in range(tree.n_leaves):
        leaves.append(leaf_from_dict(read_json(model_dir / LEAF_DIR / f"leaf_{j:04d}.json")))
    resc = tree_obj.get("rescale")
    scaler = MinMaxScaler.from_dict(resc) if resc else None
    history = [tuple(h) for h in meta.get("split_history", [])]
    return FittedTree(tree, leaves, history, meta.get("root_heldout_risk")), scaler, meta


# ---------------------------------------------------------------------------
# truth files

def write_layout(path, layout, d: int) -> None:
    obj = layout.to_dict()
    obj.update({"kind": "regions22", "d": d})
    write_json(path, obj)


def write_graph_runs(path, kind: str, graphs, p: int, x) -> None:
    """Per-row truth graphs (run-length encoded) and covariates, in data-row order."""
    runs = []
    for i, g in enumerate(graphs):
        if runs and runs[-1][1] == g.edges:
            runs[-1][2] += 1
        else:
            runs.append([i, g.edges, 1])
    write_json(path, {"kind": kind, "p": p, "x": np.asarray(x).tolist(), "runs": [
        {"start": s, "count": c, "edges": [list(e) for e in sorted(es)]} for s, es, c in runs]})


def read_graph_runs(obj) -> list:
    p = int(obj["p"])
    out = []
    for run in obj["runs"]:
        g = GraphTruth(p, frozenset(tuple(e) for e in run["edges"]), max_deg=p)
        out.extend([g] * int(run["count"]))
    return out


# ---------------------------------------------------------------------------
# config

CONFIG_KEYS = {
    "K": int, "min_leaf": int, "num_lambdas": int, "lambda_ratio": float, "refit": bool,
    "seed": int, "gamma": float, "l1_bound": float, "lambda": float, "lambda_x": float,
    "lambda_y": float, "bandwidth": float, "n": int, "d": int, "p": int, "side": int,
    "glasso_tol": float, "glasso_max_iter": int, "lasso_tol": float, "refit_tol": float,
}


class ConfigError(ValueError):
    pass


def _parse_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[gocart]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    out = {}
    for key, raw in parser["gocart"].items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}: unknown key {key!r}")
        conv = CONFIG_KEYS[key]
        try:
            out[key] = _parse_bool(raw) if conv is bool else conv(raw)
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {key}: {exc}") from exc
    return out
