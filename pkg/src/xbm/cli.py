"""Command-line experiment driver.

Subcommands
-----------
``topology``  generate a graph and its diagnostics
``train``     train one model family and write checkpoint, manifest, trace
``eval``      evaluate a checkpoint into a JSON report
``table``     merge reports into one CSV table

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
divergence, 5 topology generation warning, 6 refused overwrite.
"""
from __future__ import annotations

import argparse
import copy
import csv
import glob
import hashlib
import io
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from . import data as data_mod
from ._io import dumps_json, save_npz
from .errors import FormatError, ParameterError, TopologyWarning, TrainingDivergence
from .evaluation import EvalReport, evaluate_model
from .graph import BipartiteGraph
from .models import BINARY, GAUSSIAN, BoltzmannMachine
from .topology import (TopologyParams, bipartite_clustering_coefficient, degree_histogram,
                       fit_to_data, generate_topology, shortest_path_stats)
from .training import (TrainConfig, load_checkpoint, make_fixprob_mask, save_checkpoint,
                       train, train_prune_train)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_TOPOLOGY_WARNING = 5
EXIT_OVERWRITE = 6

MANIFEST_VERSION = 1
FAMILIES = ("rbm", "xbm", "fixprob", "trprtr")
KINDS = (BINARY, GAUSSIAN)

TABLE_COLUMNS = [
    "Dataset",
    "No. of CD steps during learning",
    "No. of weights",
    "Model",
    "No. of hidden units",
    "Average shortest path",
    "Average cluster coefficient",
    "No. of pruning iterations",
    "Average train log-probabilities",
    "Average test log-probabilities",
    "RMSE",
    "PCC",
]

DEFAULT_CONFIG = {
    "experiment": {
        "family": "xbm",
        "kind": GAUSSIAN,
        "n_hidden": 100,
        "n_visible": None,
        "target_edges": None,
        "counterpart_hidden": None,
        "weight_std": 0.01,
    },
    "dataset": {
        "source": "synthetic_gaussian",
        "path": None,
        "labels_path": None,
        "n_samples": 1000,
        "n_features": 100,
        "limit": None,
        "train_fraction": 0.7,
        "test_path": None,
        "binarize": 0.5,
        "normalize": False,
        "has_header": False,
        "delimiter": ",",
        "kfold": None,
        "fold": 0,
    },
    "topology": TopologyParams().to_dict(),
    "train": {k: v for k, v in TrainConfig().to_dict().items() if k != "seed"},
    "trprtr": {"max_prune_iters": 50, "prune_fraction": 0.2},
    "evaluation": {"ais": None, "exact": False},
}
DEFAULT_CONFIG["topology"].pop("seed")


class ConfigError(Exception):
    pass


class OverwriteError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in out:
            raise ConfigError(f"unknown config key {path}{key}")
        if isinstance(out[key], dict) and out[key] and isinstance(value, dict):
            out[key] = _merge(out[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def load_config(path):
    """Read a YAML config (or a manifest written by ``train``). Returns
    ``(resolved_config, seed_or_None)``."""
    if path is None:
        return resolve_config({}), None
    try:
        with open(path) as f:
            doc = yaml.safe_load(f) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    seed = None
    if "manifest_version" in doc:
        seed = doc.get("seed")
        doc = doc.get("config", {})
    else:
        seed = doc.pop("seed", None)
    return resolve_config(doc), seed


def resolve_config(doc):
    cfg = _merge(DEFAULT_CONFIG, doc)
    exp = cfg["experiment"]
    if exp["family"] not in FAMILIES:
        raise ConfigError(f"experiment.family must be one of {FAMILIES}, got {exp['family']!r}")
    if exp["kind"] not in KINDS:
        raise ConfigError(f"experiment.kind must be one of {KINDS}, got {exp['kind']!r}")
    ds = cfg["dataset"]
    if ds["source"] not in ("synthetic_gaussian", "synthetic_binary", "idx", "csv"):
        raise ConfigError(f"unknown dataset.source {ds['source']!r}")
    if ds["source"] in ("idx", "csv"):
        for key in ("path", "labels_path", "test_path"):
            p = ds[key]
            if (key == "path" and not p) or (p and not os.path.exists(p)):
                raise ConfigError(f"dataset.{key} does not exist: {p!r}")
    want = "real" if exp["kind"] == GAUSSIAN else "binary"
    produced = {"synthetic_gaussian": "real", "synthetic_binary": "binary",
                "idx": "binary" if ds["binarize"] is not None else "real", "csv": "real"}[ds["source"]]
    if produced != want:
        raise ConfigError(f"{ds['source']} data ({produced}) cannot feed a {exp['kind']} model")
    try:
        TopologyParams.from_dict(cfg["topology"])
        TrainConfig.from_dict(cfg["train"])
    except (TypeError, ParameterError) as exc:
        raise ConfigError(str(exc)) from exc
    ev = cfg["evaluation"]
    if ev["ais"] is not None and exp["kind"] == GAUSSIAN:
        raise ConfigError("AIS evaluation is only defined for binary models")
    return cfg


def config_hash(cfg):
    return hashlib.sha256(dumps_json(cfg).encode()).hexdigest()


def derived_seed(master, index):
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1, np.uint64)[0])


def stream_seed(seed, name):
    """Independent sub-stream seed for a named pipeline stage."""
    tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")
    return np.random.SeedSequence([int(seed), tag])


# ---------------------------------------------------------------------------
# artifacts


def write_artifact(path, payload, force=False):
    """Write bytes, refusing to replace a differing file unless ``force``."""
    if isinstance(payload, str):
        payload = payload.encode()
    if os.path.exists(path):
        with open(path, "rb") as f:
            if f.read() == payload:
                return
        if not force:
            raise OverwriteError(f"{path} exists with different content (use --force)")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(payload)


def _npz_bytes(arrays):
    buf = io.BytesIO()
    save_npz(buf, arrays)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# data


def build_dataset(cfg, seed):
    dcfg = cfg["dataset"]
    rng = np.random.default_rng(stream_seed(seed, "dataset"))
    try:
        src = dcfg["source"]
        if src == "synthetic_gaussian":
            ds = data_mod.synthetic_gaussian(dcfg["n_samples"], dcfg["n_features"], rng,
                                             dcfg["train_fraction"])
        elif src == "synthetic_binary":
            ds = data_mod.synthetic_binary(dcfg["n_samples"], dcfg["n_features"], rng,
                                           train_fraction=dcfg["train_fraction"])
        elif src == "idx":
            ds = data_mod.load_idx(dcfg["path"], dcfg["labels_path"])
            if dcfg["limit"]:
                ds = ds.subset(int(dcfg["limit"]))
            if dcfg["binarize"] is not None:
                ds = data_mod.binarize(ds, dcfg["binarize"])
            if dcfg["test_path"]:
                test = data_mod.load_idx(dcfg["test_path"])
                if dcfg["binarize"] is not None:
                    test = data_mod.binarize(test, dcfg["binarize"])
                ds = _concat(ds, test)
        else:
            ds = data_mod.load_csv(dcfg["path"], dcfg["has_header"], dcfg["delimiter"])
        if dcfg["normalize"]:
            ds = data_mod.normalize(ds)
        if dcfg["kfold"]:
            ds = data_mod.with_folds(ds, int(dcfg["kfold"]), rng).fold_split(int(dcfg["fold"]))
        elif src in ("idx", "csv") and not dcfg["test_path"] and dcfg["train_fraction"] < 1:
            ds = ds.with_split(*data_mod.random_split(len(ds), dcfg["train_fraction"], rng))
    except (FormatError, OSError, UnicodeDecodeError) as exc:
        raise DataError(str(exc)) from exc
    except ParameterError as exc:
        raise DataError(str(exc)) from exc
    return ds


def _concat(train_ds, test_ds):
    x = np.vstack([train_ds.samples, test_ds.samples])
    n = len(train_ds)
    sha = hashlib.sha256(f"{train_ds.sha256}+{test_ds.sha256}".encode()).hexdigest()
    return data_mod.Dataset(x, train_ds.kind, train_idx=np.arange(n),
                            test_idx=np.arange(n, len(x)), source=train_ds.source, sha256=sha)


# ---------------------------------------------------------------------------
# topology


def topology_diagnostics(result_or_graph, rng=None):
    g = getattr(result_or_graph, "graph", result_or_graph)
    stats = shortest_path_stats(g, rng=rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TopologyWarning)
        cc = bipartite_clustering_coefficient(g)
    deg = np.concatenate([g.visible_degrees(), g.hidden_degrees()])
    ks, counts = degree_histogram(deg)
    nz = ks > 0
    diag = {
        "n_visible": g.n_v,
        "n_hidden": g.n_h,
        "n_edges": g.n_edges,
        "edge_ratio": g.n_v * g.n_h / g.n_edges if g.n_edges else math.inf,
        "avg_shortest_path": stats.mean,
        "diameter": stats.diameter,
        "connected": stats.connected,
        "path_exact": stats.exact,
        "clustering_coefficient": cc,
        "degree_histogram": {
            "degree": ks.tolist(),
            "count": counts.tolist(),
            "log_degree": np.log(ks[nz]).tolist(),
            "log_frequency": np.log(counts[nz] / counts.sum()).tolist(),
        },
    }
    if hasattr(result_or_graph, "iterations"):
        diag.update(iterations=result_or_graph.iterations,
                    threshold=result_or_graph.threshold,
                    warning=result_or_graph.warning)
    return diag


def _generate(n_v, n_h, cfg, seed, stage):
    params = TopologyParams.from_dict(cfg["topology"])
    rng = np.random.default_rng(stream_seed(seed, stage))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TopologyWarning)
        return generate_topology(n_v, n_h, params, rng)


def run_topology(cfg, seed, out, force=False):
    exp = cfg["experiment"]
    n_v = exp["n_visible"] or cfg["dataset"]["n_features"]
    if exp["n_visible"] is None and cfg["dataset"]["source"] in ("idx", "csv"):
        n_v = build_dataset(cfg, seed).n_features
    res = _generate(int(n_v), int(exp["n_hidden"]), cfg, seed, "topology")
    chash = config_hash(cfg)
    comments = [f"seed {seed}", f"config_sha256 {chash}"]
    write_artifact(os.path.join(out, "graph.txt"), res.graph.to_text(comments), force)
    arrays = res.graph.to_arrays()
    arrays.update(seed=np.array(np.uint64(seed)), config_sha256=np.array(chash))
    write_artifact(os.path.join(out, "graph.npz"), _npz_bytes(arrays), force)
    diag = topology_diagnostics(res, np.random.default_rng(stream_seed(seed, "paths")))
    diag.update(seed=seed, config_sha256=chash)
    write_artifact(os.path.join(out, "topology.json"), dumps_json(diag), force)
    return EXIT_TOPOLOGY_WARNING if res.warning else EXIT_OK


# ---------------------------------------------------------------------------
# training


def build_model(cfg, ds, seed):
    """Returns ``(initial_model, info_dict, topology_warning)``."""
    exp = cfg["experiment"]
    kind = exp["kind"]
    n_v = ds.n_features
    n_h = int(exp["n_hidden"])
    family = exp["family"]
    rng = np.random.default_rng(stream_seed(seed, "init"))
    info = {}
    warn = False
    if family == "rbm" or (family == "trprtr"):
        graph = BipartiteGraph.complete(n_v, n_h)
    elif family == "xbm":
        res = _generate(n_v, n_h, cfg, seed, "topology")
        warn = res.warning
        perm = fit_to_data(res.graph, ds.train.std(axis=0))
        graph = res.graph.relabel_visible(perm)
        info["topology_iterations"] = res.iterations
    else:
        target = _target_edges(cfg, n_v, seed)
        graph = make_fixprob_mask(n_v, n_h, target, np.random.default_rng(stream_seed(seed, "mask")))
        info["target_edges"] = target
    if family == "trprtr":
        info["target_edges"] = _target_edges(cfg, n_v, seed)
    model = BoltzmannMachine.initialize(kind, graph, rng, weight_std=exp["weight_std"])
    return model, info, warn


def _target_edges(cfg, n_v, seed):
    exp = cfg["experiment"]
    if exp["target_edges"]:
        return int(exp["target_edges"])
    n_h = int(exp["counterpart_hidden"] or exp["n_hidden"])
    return _generate(n_v, n_h, cfg, seed, "topology").graph.n_edges


def run_train(cfg, seed, out, force=False):
    ds = build_dataset(cfg, seed)
    model, info, warn = build_model(cfg, ds, seed)
    tcfg = TrainConfig.from_dict({**cfg["train"], "seed": 0})
    rng = np.random.default_rng(stream_seed(seed, "train"))
    family = cfg["experiment"]["family"]
    pruning = None
    if family == "trprtr":
        tp = cfg["trprtr"]
        pruning = train_prune_train(model, ds, tcfg, info["target_edges"], tp["max_prune_iters"],
                                    tp["prune_fraction"], rng)
        model, trace = pruning.model, pruning.trace
        info["pruning_iterations"] = pruning.iterations
        info["target_reached"] = pruning.reached
    else:
        res = train(model, ds, tcfg, rng)
        model, trace = res.model, res.trace
    chash = config_hash(cfg)
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "seed": seed,
        "config_sha256": chash,
        "config": cfg,
        "dataset_sha256": ds.sha256,
        "dataset_source": ds.source,
        "n_edges": model.graph.n_edges,
        "info": info,
    }
    meta = {k: manifest[k] for k in ("seed", "config_sha256", "config", "dataset_sha256", "info")}
    buf = io.BytesIO()
    save_checkpoint(buf, model, None, epoch=tcfg.epochs, meta=meta)
    write_artifact(os.path.join(out, "model.npz"), buf.getvalue(), force)
    write_artifact(os.path.join(out, "manifest.json"), dumps_json(manifest), force)
    write_artifact(os.path.join(out, "trace.csv"), _csv_text(trace), force)
    if pruning is not None:
        rows = [{"iteration": t["iteration"], "n_edges": t["n_edges"]} for t in pruning.trace]
        write_artifact(os.path.join(out, "pruning.csv"), _csv_text(rows), force)
    return EXIT_TOPOLOGY_WARNING if warn else EXIT_OK


def _csv_text(rows):
    buf = io.StringIO()
    if rows:
        names = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


# ---------------------------------------------------------------------------
# evaluation and tables


def run_eval(model_path, cfg, seed, out, force=False):
    try:
        model, _, _, meta = load_checkpoint(model_path)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read model {model_path}: {exc}") from exc
    if cfg is None:
        if "config" not in meta:
            raise ConfigError("model carries no config; pass --config")
        cfg = resolve_config(meta["config"])
    if seed is None:
        seed = meta.get("seed", 0)
    if model.visible_kind != cfg["experiment"]["kind"]:
        raise ConfigError(f"model is {model.visible_kind} but config says {cfg['experiment']['kind']}")
    ev = cfg["evaluation"]
    if model.is_gaussian and ev["ais"]:
        raise ConfigError("AIS evaluation refused for a gaussian model")
    ds = build_dataset(cfg, seed)
    if ds.n_features != model.n_visible:
        raise DataError(f"dataset has {ds.n_features} features, model expects {model.n_visible}")
    test = ds.test if len(ds.test_idx) else None
    tcfg = TrainConfig.from_dict({**cfg["train"], "seed": 0})
    cd = tcfg.cd_steps
    cd_label = cd.stop if hasattr(cd, "stop") else int(cd)
    report = evaluate_model(
        model, ds.train, test,
        ais=ev["ais"], exact=bool(ev["exact"]),
        rng=np.random.default_rng(stream_seed(seed, "ais")),
        path_rng=np.random.default_rng(stream_seed(seed, "paths")),
        family=cfg["experiment"]["family"],
        pruning_iterations=meta.get("info", {}).get("pruning_iterations", 0),
        dataset_hash=ds.sha256, seed=seed, config_hash=config_hash(cfg),
    )
    report.dataset = os.path.basename(ds.source) if ds.source else ""
    report.cd_steps = cd_label
    write_artifact(os.path.join(out, "report.json"), report.to_json(), force)
    return EXIT_OK


def model_label(family, kind):
    base = "GRBM" if kind == GAUSSIAN else "RBM"
    return {"rbm": base, "xbm": "GXBM" if kind == GAUSSIAN else "XBM",
            "fixprob": f"{base}_FixProb", "trprtr": f"{base}_TrPrTr"}.get(family, family)


def report_row(r):
    return {
        "Dataset": r.dataset,
        "No. of CD steps during learning": r.cd_steps,
        "No. of weights": r.edge_count,
        "Model": model_label(r.model_family, r.visible_kind),
        "No. of hidden units": r.n_hidden,
        "Average shortest path": r.avg_shortest_path,
        "Average cluster coefficient": r.clustering_coefficient,
        "No. of pruning iterations": r.pruning_iterations,
        "Average train log-probabilities": r.avg_train_logprob,
        "Average test log-probabilities": r.avg_test_logprob,
        "RMSE": r.rmse,
        "PCC": r.pcc,
    }


def run_table(patterns, out, force=False):
    paths = sorted({p for pat in patterns for p in (glob.glob(pat, recursive=True) or [pat])})
    rows = []
    for p in paths:
        try:
            with open(p) as f:
                rows.append(report_row(EvalReport.from_json(f.read())))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise DataError(f"cannot read report {p}: {exc}") from exc
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    if out:
        target = out if out.endswith(".csv") else os.path.join(out, "table.csv")
        write_artifact(target, buf.getvalue(), force)
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _run_one(job):
    command, cfg, seed, out, force, model_path = job
    if command == "topology":
        return run_topology(cfg, seed, out, force)
    if command == "train":
        return run_train(cfg, seed, out, force)
    return run_eval(model_path, cfg, seed, out, force)


def _guarded(job):
    try:
        return _run_one(job)
    except (ConfigError, ParameterError) as exc:
        _err(exc)
        return EXIT_CONFIG
    except DataError as exc:
        _err(exc)
        return EXIT_DATA
    except TrainingDivergence as exc:
        _err(exc)
        return EXIT_DIVERGENCE
    except OverwriteError as exc:
        _err(exc)
        return EXIT_OVERWRITE


def _err(exc):
    print(f"xbm: error: {exc}", file=sys.stderr)


def build_parser():
    parser = argparse.ArgumentParser(prog="xbm", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_config=True):
        if with_config:
            p.add_argument("--config", help="YAML experiment config or a train manifest")
            p.add_argument("--seed", type=int, help="master seed (u64)")
            p.add_argument("--jobs", type=int, default=1, help="parallel processes")
            p.add_argument("--repeats", type=int, default=1,
                           help="number of derived seeds to run (outputs in seed-NN/)")
        if with_config:
            p.add_argument("--out", required=True, help="output directory")
        else:
            p.add_argument("--out", help="CSV file or directory (default: stdout)")
        p.add_argument("--force", action="store_true", help="overwrite differing artifacts")

    common(sub.add_parser("topology", help="generate a topology and diagnostics"))
    common(sub.add_parser("train", help="train a model family"))
    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("model", help="model.npz written by train")
    common(p)
    p = sub.add_parser("table", help="aggregate report.json files into CSV")
    p.add_argument("reports", nargs="+", help="report files or glob patterns")
    common(p, with_config=False)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "table":
            return run_table(args.reports, args.out, args.force)
        if args.command == "eval" and args.config is None:
            cfg, cfg_seed = None, None
        else:
            cfg, cfg_seed = load_config(args.config)
        seed = args.seed if args.seed is not None else cfg_seed
        if args.command != "eval" and seed is None:
            seed = 0
        if seed is not None and not 0 <= seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.repeats < 1 or args.jobs < 1:
            raise ConfigError("--repeats and --jobs must be >= 1")
    except ConfigError as exc:
        _err(exc)
        return EXIT_CONFIG
    except DataError as exc:
        _err(exc)
        return EXIT_DATA
    except OverwriteError as exc:
        _err(exc)
        return EXIT_OVERWRITE
    model_path = getattr(args, "model", None)
    if args.repeats == 1:
        jobs = [(args.command, cfg, seed, args.out, args.force, model_path)]
    else:
        base = seed if seed is not None else 0
        jobs = [(args.command, cfg, derived_seed(base, k),
                 os.path.join(args.out, f"seed-{k:02d}"), args.force, model_path)
                for k in range(args.repeats)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_guarded, jobs))
    else:
        codes = [_guarded(j) for j in jobs]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
