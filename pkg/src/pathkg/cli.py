"""``pathkg`` command line: train, eval, explain, bench, oracle-check.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import tracemalloc
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, dump_config, load_config, override
from .explain import explain, format_listing, to_dot
from .kg import SplitBundle, TsvParseError, VocabularyError, load_split
from .model import AStarModel, ModelConfig
from .nn import tape as T
from .nn.params import ParameterStore
from .oracle import run_suite
from .training import (KnownTriplets, TrainingError, count_messages, evaluate, fit, train_epoch)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class MetricsLog:
    """Append-only ``key=value`` lines, echoed to stdout."""

    def __init__(self, path: Path | None, echo: bool = True):
        self.path, self.echo = path, echo

    def __call__(self, line: str):
        if self.echo:
            print(line, flush=True)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fout:
                fout.write(line + "\n")


def graph_delta(bundle: SplitBundle) -> float:
    deg = bundle.train_graph.degrees.astype(np.float64)
    return float(np.log(deg + 1.0).mean()) if len(deg) else 1.0


def relation_names(bundle: SplitBundle) -> list[str]:
    names = list(bundle.relations.names)
    return names + [f"{n}^-1" for n in names]


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    override(cfg, "data", dataset=getattr(args, "dataset", None), mode=getattr(args, "mode", None))
    override(cfg, "model", node_ratio=getattr(args, "alpha", None), degree_ratio=getattr(args, "beta", None),
             num_steps=getattr(args, "steps", None))
    override(cfg, "train", seed=getattr(args, "seed", None), epochs=getattr(args, "epochs", None))
    override(cfg, "run", out=getattr(args, "out", None), threads=getattr(args, "threads", None))
    return cfg


def _load_bundle(cfg: RunConfig) -> SplitBundle:
    if not cfg.data.dataset:
        raise ConfigError("no dataset given (set data.dataset or pass --dataset)")
    return load_split(cfg.data.dataset, cfg.data.mode)


def _load_checkpoint(path: str, cfg: RunConfig | None = None) -> tuple[AStarModel, dict]:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"checkpoint {p} does not exist")
    store, extra = ParameterStore.load(p)
    mc = dict(store.meta.get("config", {}))
    model_cfg = ModelConfig(**mc)
    if cfg is not None:
        model_cfg.node_ratio, model_cfg.degree_ratio = cfg.model.node_ratio, cfg.model.degree_ratio
        model_cfg.__post_init__()
    return AStarModel(model_cfg, int(store.meta["num_relations"]), store=store), extra


def _model_args_given(args) -> bool:
    return getattr(args, "alpha", None) is not None or getattr(args, "beta", None) is not None


# -- commands -----------------------------------------------------------------
def cmd_train(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    bundle = _load_bundle(cfg)
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg), encoding="utf-8")
    log = MetricsLog(out / "metrics.log", echo=not args.quiet)
    start_epoch, rng, best = 0, None, -1.0
    if args.resume:
        model, extra = _load_checkpoint(args.resume)
        start_epoch = int(extra.get("epoch", -1)) + 1
        best = float(extra.get("best_score", -1.0))
        rng = np.random.default_rng()
        rng.bit_generator.state = extra["rng"]
        log(f"resume={args.resume} start_epoch={start_epoch}")
    else:
        model = AStarModel(cfg.model, 2 * bundle.num_relations, seed=cfg.train.seed, delta=graph_delta(bundle))
    model.store.meta["run"] = {"dataset": str(cfg.data.dataset), "mode": cfg.data.mode}
    log(f"dataset={cfg.data.dataset} mode={cfg.data.mode} entities={bundle.train_graph.num_entities} "
        f"edges={bundle.train_graph.num_edges} parameters={model.store.num_parameters()}")
    t0 = time.perf_counter()
    result = fit(model, bundle, cfg.train, out, log, start_epoch, rng, best)
    model.store = result.best_store
    test = evaluate(model, bundle.test, bundle.test_graph, bundle.test_filter, cfg.train.eval_batch_size)
    log("split=test " + " ".join(f"{k}={v:.6g}" for k, v in test.summary().items()))
    summary = {
        "best_epoch": result.best_epoch,
        "epochs": [vars(e) for e in result.epochs],
        "valid": [v.summary() for v in result.valid],
        "test": test.summary(),
        "train_messages": count_messages(np.array([e.messages for e in result.epochs])),
        "seconds": time.perf_counter() - t0,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    model, _ = _load_checkpoint(args.checkpoint, cfg if _model_args_given(args) else None)
    run = model.store.meta.get("run", {})
    if not cfg.data.dataset:
        override(cfg, "data", dataset=run.get("dataset"), mode=run.get("mode"))
    bundle = _load_bundle(cfg)
    if args.split == "test":
        triplets, graph, flt = bundle.test, bundle.test_graph, bundle.test_filter
    else:
        triplets, graph, flt = bundle.valid, bundle.train_graph, bundle.valid_filter
    rep = evaluate(model, triplets, graph, flt, cfg.train.eval_batch_size, filtered=not args.unfiltered)
    summary = {"split": args.split, "filtered": not args.unfiltered, **rep.summary()}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        MetricsLog(out / "metrics.log", echo=False)(" ".join(f"{k}={v}" for k, v in summary.items()))
        (out / f"eval_{args.split}.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _resolve(vocab, name: str, what: str) -> int:
    if name in vocab:
        return vocab.index[name]
    if name.isdigit() and int(name) < len(vocab):
        return int(name)
    raise UsageError(f"unknown {what} {name!r}")


def cmd_explain(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    model, _ = _load_checkpoint(args.checkpoint, cfg if _model_args_given(args) else None)
    run = model.store.meta.get("run", {})
    if not cfg.data.dataset:
        override(cfg, "data", dataset=run.get("dataset"), mode=run.get("mode"))
    bundle = _load_bundle(cfg)
    if args.graph == "test":
        graph, ents = bundle.test_graph, bundle.test_entities
    else:
        graph, ents = bundle.train_graph, bundle.train_entities
    rels = relation_names(bundle)
    u = _resolve(ents, args.head, "entity")
    v = _resolve(ents, args.answer, "entity")
    if args.relation in rels:
        q = rels.index(args.relation)
    else:
        q = _resolve(bundle.relations, args.relation, "relation")
    paths = explain(model, graph, u, q, v, args.beam)
    if paths:
        print(format_listing(paths, ents.names, rels))
    else:
        print(f"no path from {args.head} to {args.answer} within {model.config.num_steps} steps", file=sys.stderr)
    if args.dot:
        Path(args.dot).write_text(to_dot(paths, ents.names, rels) + "\n", encoding="utf-8")
    return EXIT_OK


def _parse_ratios(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad ratio list {text!r}") from None
    if not vals or any(not 0 < v <= 1 for v in vals):
        raise UsageError("ratios must lie in (0, 1]")
    return sorted(vals)


def cmd_bench(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    if args.checkpoint:
        model, _ = _load_checkpoint(args.checkpoint)
        run = model.store.meta.get("run", {})
        if not cfg.data.dataset:
            override(cfg, "data", dataset=run.get("dataset"), mode=run.get("mode"))
    else:
        model = None
    bundle = _load_bundle(cfg)
    if model is None:
        model = AStarModel(cfg.model, 2 * bundle.num_relations, seed=cfg.train.seed, delta=graph_delta(bundle))
    graph = bundle.test_graph
    queries = bundle.test[: args.max_queries]
    log = MetricsLog(Path(args.out) / "bench.log" if args.out else None)
    rows = []
    for ratio in _parse_ratios(args.ratios):
        mc = ModelConfig(**{**vars(model.config), "node_ratio": ratio})
        m = AStarModel(mc, model.num_relations, store=model.store)
        t0 = time.perf_counter()
        rep = evaluate(m, queries, graph, bundle.test_filter, cfg.train.eval_batch_size)
        eval_s = time.perf_counter() - t0
        tracemalloc.start()
        with T.no_grad():
            m.forward(graph, [t.head for t in queries[: cfg.train.eval_batch_size]],
                      [t.relation for t in queries[: cfg.train.eval_batch_size]], record=False)
        peak = tracemalloc.get_traced_memory()[1]
        tracemalloc.stop()
        row = {"alpha": ratio, "messages": rep.messages, "full_messages": graph.num_edges,
               "ratio": rep.messages / max(graph.num_edges, 1), "eval_seconds": eval_s,
               "peak_forward_bytes": peak, "mrr": rep.mrr}
        if args.epoch_time:
            probe = AStarModel(mc, model.num_relations, store=model.store.copy())
            tc = cfg.train
            known = KnownTriplets(bundle.train, bundle.train_graph.num_entities, bundle.train_graph.num_base_relations)
            ep = train_epoch(probe, bundle.train_graph, bundle.train, tc, np.random.default_rng(tc.seed), known)
            row["epoch_seconds"] = ep.seconds
            row["train_messages"] = ep.messages
        rows.append(row)
        log(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "bench.json").write_text(json.dumps(rows, indent=2), encoding="utf-8")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    reports = run_suite(args.seed, args.trials, fault=args.fault)
    failed = 0
    for name, rep in reports.items():
        print(f"{name} passed={rep.passed} failed={rep.failed}")
        for f in rep.failures[:3]:
            print(f"  failure {f}")
        failed += rep.failed
    print(f"total passed={sum(r.passed for r in reports.values())} failed={failed}")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


# -- argument parsing -------------------------------------------------------------
def _common(p: argparse.ArgumentParser, budget: bool = True):
    p.add_argument("--config", help="key = value config file with [data] [model] [train] [run] sections")
    p.add_argument("--dataset", help="dataset directory (overrides data.dataset)")
    p.add_argument("--mode", choices=("transductive", "inductive"))
    if budget:
        p.add_argument("--alpha", type=float, help="node ratio")
        p.add_argument("--beta", type=float, help="degree ratio")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="upper bound on BLAS worker threads")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathkg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train with periodic validation and checkpoints")
    _common(p)
    p.add_argument("--steps", type=int, help="propagation steps T")
    p.add_argument("--epochs", type=int)
    p.add_argument("--resume", help="continue from a last.ckpt")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="filtered ranking of a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--unfiltered", action="store_true", help="rank against every entity")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="list the most important paths for one query")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--relation", required=True, help="relation name; append ^-1 for the inverse")
    p.add_argument("--answer", required=True)
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--graph", choices=("train", "test"), default="test")
    p.add_argument("--dot", help="also write a DOT graph here")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("bench", help="message counts and timings across node ratios")
    _common(p, budget=False)
    p.add_argument("--checkpoint")
    p.add_argument("--ratios", default="0.01,0.1,0.5,1.0")
    p.add_argument("--max-queries", type=int, default=200)
    p.add_argument("--epoch-time", action="store_true", help="also time one training epoch per ratio")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle-check", help="brute-force equivalence checks on random graphs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--fault", action="store_true", help="inject an off-by-one boundary to see failures")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = getattr(args, "threads", None)
        if threads is None and getattr(args, "config", None):
            threads = load_config(args.config).run.threads
        if threads is not None and threads < 1:
            raise UsageError("--threads must be at least 1")
        if threads:
            from threadpoolctl import threadpool_limits
            limit = threadpool_limits(limits=threads)
        else:
            limit = nullcontext()
        with limit:
            return args.func(args)
    except (ConfigError, UsageError, FileNotFoundError, TsvParseError, VocabularyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report, exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
