"""Command-line surface.

Subcommands: index, train-scorer, search, eval, sweep-lambda. JSON config
files mirror the SearchConfig / TrainConfig field names ("lambda" is
accepted as an alias for "lam"). Environment: COGTREE_BASE_URL selects the
default HTTP backend, COGTREE_API_KEY authenticates it.

Exit codes: 0 success, 2 configuration error, 3 backend failure, 4 data
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from .backends import BackendUnavailable, MalformedResponse, make_backend
from .core import Mode, Query
from .datasets import load_logic, load_math, top_decomposition
from .errors import (
    CogTreeError,
    ConfigError,
    EmptyDataset,
    InvariantViolation,
    NoNegativesAvailable,
    ParseError,
)
from .evaluation import evaluate, lambda_sweep, sweep_to_csv
from .reflective import HeadScorer, ScorerParams
from .retrieval import ExampleIndex
from .search import SearchConfig, SearchDeps, decide_provable, run_rollouts, try_solve_math
from .synthetic import build_contrastive_data
from .trainer import (
    TrainConfig,
    ingest_negatives_math,
    load_items,
    save_items,
    trace_to_csv,
    train,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_DATA = 4


def _load_config(path, cls):
    """Instantiate a config dataclass from a JSON file, key-checked."""
    if path is None:
        return cls()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    if "lambda" in raw:
        raw["lam"] = raw.pop("lambda")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}; expected {sorted(known)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_backend(spec):
    """--backend flag, else COGTREE_BASE_URL, else the scripted double."""
    if spec:
        return make_backend(spec)
    return make_backend(os.environ.get("COGTREE_BASE_URL") or "scripted")


def _scorer_from(path, backend) -> HeadScorer:
    if path:
        return HeadScorer(ScorerParams.load(path))
    log.warning("no --scorer given; using randomly initialized parameters")
    try:
        dim = backend.dim
    except CogTreeError:
        dim = len(backend.embed("dimension probe"))
    return HeadScorer(ScorerParams.random(d=dim, seed=0))


def _cmd_index(args) -> int:
    backend = _resolve_backend(args.backend)
    if Mode(args.mode) is Mode.LOGIC:
        samples, _ = load_logic(args.train)
        pairs = [
            (s.goal, "\n".join(top_decomposition(s)))
            for s in samples
            if s.provable
        ]
    else:
        samples, _ = load_math(args.train)
        pairs = [(s.question, "\n".join(s.solution_steps)) for s in samples]
    index = ExampleIndex.build(pairs, backend)
    index.save(args.out)
    print(f"indexed {len(index)} examples -> {args.out}")
    return EXIT_OK


def _cmd_train_scorer(args) -> int:
    cfg = _load_config(args.config, TrainConfig)
    for name, value in (
        ("lam", args.lam),
        ("learning_rate", args.lr),
        ("epochs", args.epochs),
        ("batch_size", args.batch_size),
        ("seed", args.seed),
    ):
        if value is not None:
            setattr(cfg, name, value)
    cfg = TrainConfig(**{f.name: getattr(cfg, f.name) for f in fields(TrainConfig)})

    if args.items:
        items = load_items(args.items)
    elif args.prm:
        items = ingest_negatives_math(args.prm, _resolve_backend(args.backend))
        if args.save_items:
            save_items(items, args.save_items)
    else:
        raise ConfigError("train-scorer needs --items or --prm")
    if not items:
        raise EmptyDataset("no training items")
    val_items = load_items(args.val) if args.val else None

    dim = items[0].anchor.shape[0]
    init = ScorerParams.random(d=dim, h=args.hidden, seed=cfg.seed)
    params, trace = train(init, items, cfg, val_items=val_items)
    params.save(args.out)
    if args.trace:
        trace_to_csv(trace, args.trace)
    final = trace[-1]
    print(
        f"trained {len(trace)} epochs; final train loss {final.train_loss:.6f}"
        + (f", val loss {final.val_loss:.6f}" if final.val_loss is not None else "")
        + f" -> {args.out}"
    )
    return EXIT_OK


def _search_deps(args) -> SearchDeps:
    backend = _resolve_backend(args.backend)
    index = ExampleIndex.load(args.index)
    scorer = _scorer_from(args.scorer, backend)
    return SearchDeps(index=index, backend=backend, scorer=scorer)


def _cmd_search(args) -> int:
    cfg = _load_config(args.config, SearchConfig)
    cfg.mode = Mode(args.mode)
    if args.seed is not None:
        cfg.seed = args.seed
    deps = _search_deps(args)
    if cfg.mode is Mode.LOGIC:
        if not args.theory:
            raise ConfigError("logic mode needs at least one --theory sentence")
        query = Query(id="cli", text=args.query, mode=Mode.LOGIC, theory=tuple(args.theory))
        results = run_rollouts(query, deps, cfg)
        out = {
            "query": query.text,
            "provable": decide_provable(results),
            "rollouts": [
                {
                    "terminal_reason": r.terminal_reason.value,
                    "overall": None if r.overall is None else r.overall.label.name.lower(),
                    "steps": [s.decomposition.raw_text for s in r.chain.steps[1:]],
                }
                for r in results
            ],
        }
    else:
        query = Query(id="cli", text=args.query, mode=Mode.MATH)
        answer, results = try_solve_math(query, deps, cfg)
        out = {
            "query": query.text,
            "answer": answer,
            "rollouts": [
                {
                    "terminal_reason": r.terminal_reason.value,
                    "answer": r.answer,
                    "plan": [s.decomposition.raw_text for s in r.chain.steps[1:]],
                }
                for r in results
            ],
        }
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _load_config(args.config, SearchConfig)
    cfg.mode = Mode(args.mode)
    if args.seed is not None:
        cfg.seed = args.seed
    deps = _search_deps(args)
    if cfg.mode is Mode.LOGIC:
        samples, stats = load_logic(args.dataset)
    else:
        samples, stats = load_math(args.dataset)
    if args.limit:
        samples = samples[: args.limit]
    report = evaluate(
        samples,
        deps,
        cfg,
        dataset_name=Path(args.dataset).name,
        with_traces=not args.no_traces,
        workers=args.workers,
    )
    report.save(args.report)
    print(
        f"{stats.split}: {report.n} tasks, accuracy {report.accuracy:.4f}"
        + (f", paired {report.paired_accuracy:.4f}" if report.paired_accuracy is not None else "")
        + f" -> {args.report}"
    )
    return EXIT_BACKEND if report.partial else EXIT_OK


def _cmd_sweep(args) -> int:
    try:
        values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad --values list: {exc}") from exc
    if args.config is None and args.synthetic:
        # the small synthetic world needs a hotter schedule than the
        # full-scale defaults to separate within the epoch budget
        cfg = TrainConfig(learning_rate=5e-3, epochs=60)
    else:
        cfg = _load_config(args.config, TrainConfig)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.items and args.val:
        train_items, val_items = load_items(args.items), load_items(args.val)
    elif args.synthetic:
        train_items, val_items = build_contrastive_data(seed=cfg.seed)
    else:
        raise ConfigError("sweep-lambda needs --items/--val or --synthetic")
    dim = train_items[0].anchor.shape[0]
    init = ScorerParams.random(d=dim, h=args.hidden, seed=cfg.seed)
    rows = lambda_sweep(values, init, train_items, val_items, cfg)
    sweep_to_csv(rows, args.report)
    for lam, acc in rows:
        print(f"lambda={lam:g} val_accuracy={acc:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogtree",
        description="Iterative decomposition search with a trained sure/likely/impossible judge.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="embed a training corpus into a retrieval index")
    p.add_argument("--train", required=True, help="training corpus JSONL")
    p.add_argument("--mode", choices=["logic", "math"], required=True)
    p.add_argument("--backend", default=None, help="base URL, 'scripted[:seed]' or 'script:<file>'; default from COGTREE_BASE_URL, else scripted")
    p.add_argument("--out", required=True, help="index JSONL path")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("train-scorer", help="train the verdict head")
    p.add_argument("--items", help="training items JSONL (anchor/label/negatives)")
    p.add_argument("--prm", help="step-supervision JSONL to ingest instead of --items")
    p.add_argument("--val", help="validation items JSONL (enables early stopping)")
    p.add_argument("--save-items", help="where to store items ingested from --prm")
    p.add_argument("--backend", default=None, help="embedding backend for --prm")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--config", help="TrainConfig JSON (flags override)")
    p.add_argument("--trace", help="write epoch,train_loss,val_loss CSV here")
    p.add_argument("--out", required=True, help="scorer JSON path")
    p.set_defaults(func=_cmd_train_scorer)

    p = sub.add_parser("search", help="answer one query")
    p.add_argument("--query", required=True)
    p.add_argument("--mode", choices=["logic", "math"], required=True)
    p.add_argument("--theory", action="append", default=[], help="theory sentence (repeatable)")
    p.add_argument("--index", required=True)
    p.add_argument("--scorer")
    p.add_argument("--backend", default=None)
    p.add_argument("--config", help="SearchConfig JSON")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("eval", help="evaluate a corpus and write a report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=["logic", "math"], required=True)
    p.add_argument("--scorer")
    p.add_argument("--index", required=True)
    p.add_argument("--backend", default=None)
    p.add_argument("--config", help="SearchConfig JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--limit", type=int, default=0, help="evaluate only the first N samples")
    p.add_argument("--workers", type=int, default=1, help="parallel sample workers")
    p.add_argument("--no-traces", action="store_true", help="trim per-step texts from records")
    p.add_argument("--report", required=True, help="report JSON path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep-lambda", help="train at several mixing weights, report accuracy")
    p.add_argument("--values", required=True, help="comma-separated weights in [0,1]")
    p.add_argument("--items", help="training items JSONL")
    p.add_argument("--val", help="validation items JSONL")
    p.add_argument("--synthetic", action="store_true", help="use the built-in contrastive world")
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="TrainConfig JSON")
    p.add_argument("--report", required=True, help="CSV path")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendUnavailable, MalformedResponse) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ParseError, InvariantViolation, EmptyDataset, NoNegativesAvailable) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CogTreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
