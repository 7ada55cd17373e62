"""
Command-line interface.

Subcommands: ``gen-data``, ``train``, ``eval``, ``report`` and ``sweep``.
Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Diagnostics go to stderr; stdout only carries summaries.
"""

from __future__ import annotations

import argparse
import dataclasses
import functools
import hashlib
import json
import logging
import os
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .agent import TRAIN_LOG_HEADER, norm_constants, train
from .baselines import METHODS, run_baseline
from .config import ConfigError, RunConfig, config_echo, load_config, with_overrides
from .dataset import PoolFormatError, generate_pool, load_pool, save_pool, split_pool, stratified_split
from .env import ACTIONS
from .evaluation import (DEFAULT_EPS_LIST, ResultsFormatError, exploration_sweep, format_summary_table,
                         read_results, run_agent, summary_stats,
                         write_report, write_results)
from .nn import ModelFileError, NonFiniteGradientError, load_weights, save_weights

log = logging.getLogger("lntune")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    """Bad invocation detected after argument parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _config(args) -> RunConfig:
    cfg = load_config(args.config, toy=args.toy)
    over = {k: getattr(args, k, None) for k in
            ("seed", "episodes", "max_iters", "pool", "model", "train_log", "results", "reports")}
    return with_overrides(cfg, **over)


def _load_split(cfg: RunConfig, split: str):
    if not cfg.paths.pool.exists():
        raise UsageError(f"pool file {cfg.paths.pool} not found; run 'lntune gen-data' first")
    pool = load_pool(cfg.paths.pool, rs=cfg.env.rs)
    return pool if split == "all" else split_pool(pool, split)


def _load_model(cfg: RunConfig):
    path = cfg.paths.model
    if not path.exists():
        raise UsageError(f"model file {path} not found; train one with 'lntune train' "
                         f"or pass --model")
    weights, norm, actions = load_weights(path, expect_layers=len(cfg.net.layer_sizes) - 1)
    if actions is not None and [tuple(a) for a in actions] != list(ACTIONS):
        raise ModelFileError(f"{path}: action table does not match this version")
    expected = norm_constants(cfg.env)
    if norm != expected:
        raise ModelFileError(f"{path}: normalisation constants {norm} differ from config {expected}")
    return weights


# ---------------------------------------------------------------- commands

def cmd_gen_data(args) -> int:
    cfg = _config(args)
    pool = stratified_split(generate_pool(cfg.grid, cfg.env.rs), cfg.grid)
    cfg.paths.pool.parent.mkdir(parents=True, exist_ok=True)
    save_pool(pool, cfg.paths.pool)
    counts = Counter(s.split for s in pool)
    manifest = {
        "pool": str(cfg.paths.pool),
        "sha256": _sha256(cfg.paths.pool),
        "total": len(pool),
        "train": counts["train"],
        "test": counts["test"],
        "seed": cfg.seed,
        "grid": config_echo(cfg)["grid"],
        "version": __version__,
    }
    _write_atomic(cfg.paths.pool.with_name(cfg.paths.pool.name + ".manifest.json"),
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"pool: {len(pool)} samples ({counts['train']} train / {counts['test']} test) "
          f"-> {cfg.paths.pool}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    pool = _load_split(cfg, "train")
    log_path = cfg.paths.train_log
    rows = [TRAIN_LOG_HEADER]

    def progress(row):
        rows.append(row.csv_row())
        if row.episode % 10 == 0:
            log.info("episode %d |G| %.4g steps %d eps %.3f", row.episode, row.final_gamma,
                     row.steps, row.epsilon)

    weights, history = train(pool, cfg.env, cfg.train, cfg.net, callback=progress)
    cfg.paths.model.parent.mkdir(parents=True, exist_ok=True)
    save_weights(weights, norm_constants(cfg.env), cfg.paths.model, actions=list(ACTIONS))
    _write_atomic(log_path, "\n".join(rows) + "\n")
    last = history[-1]
    print(f"trained {len(history)} episodes; last episode: reward {last.cum_reward:.2f}, "
          f"|G| {last.final_gamma:.4g}, steps {last.steps}, eps {last.epsilon:.3f}")
    print(f"model -> {cfg.paths.model} (sha256 {_sha256(cfg.paths.model)[:16]})")
    return EXIT_OK


def _run_baselines(samples, bcfg, jobs: int):
    fn = functools.partial(run_baseline, cfg=bcfg)
    if jobs <= 1:
        return [fn(s) for s in samples]
    with ProcessPoolExecutor(jobs) as ex:
        return list(ex.map(fn, samples, chunksize=max(1, len(samples) // (4 * jobs))))


def _print_eval_summary(results) -> None:
    g = [r.final_gamma for r in results]
    mean, median, sd = summary_stats(g)
    ok = sum(x < 0.01 for x in g) / len(g)
    ok2 = sum(x < 0.2 for x in g) / len(g)
    print(f"n={len(g)} mean={mean:.6f} median={median:.6f} sd={sd:.6f} "
          f"success@0.01={100 * ok:.2f}% success@0.2={100 * ok2:.2f}%")


def cmd_eval(args) -> int:
    cfg = _config(args)
    samples = _load_split(cfg, args.split)
    if args.limit is not None:
        samples = samples[:args.limit]
    if not samples:
        raise UsageError("no samples selected")
    if args.method == "agent":
        weights = _load_model(cfg)
        results = run_agent(samples, weights, args.eps_test, cfg.seed, 0,
                            cfg.env.max_steps_test, cfg.env, args.jobs)
    else:
        bcfg = dataclasses.replace(cfg.baselines, method=args.method)
        results = _run_baselines(samples, bcfg, args.jobs)
    cfg.paths.results.parent.mkdir(parents=True, exist_ok=True)
    write_results(results, cfg.paths.results, append=not args.overwrite)
    _print_eval_summary(results)
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _config(args)
    files = args.inputs or [cfg.paths.results]
    results = []
    for f in files:
        if not Path(f).exists():
            raise UsageError(f"results file {f} not found")
        results.extend(read_results(f))
    if not results:
        raise UsageError("results files contain no rows")
    pool = None
    if cfg.paths.pool.exists():
        pool = load_pool(cfg.paths.pool, rs=cfg.env.rs)
    elif args.pool is not None:
        raise UsageError(f"pool file {cfg.paths.pool} not found")
    summary = write_report(results, cfg.paths.reports, pool)
    print(format_summary_table(summary["groups"]))
    print(f"report -> {cfg.paths.reports}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    samples = _load_split(cfg, args.split)
    if args.limit is not None:
        samples = samples[:args.limit]
    weights = _load_model(cfg)
    rows, results = exploration_sweep(weights, samples, args.eps, cfg.seed,
                                      cfg.env.max_steps_test, cfg.env, args.jobs)
    cfg.paths.results.parent.mkdir(parents=True, exist_ok=True)
    write_results(results, cfg.paths.results, append=not args.overwrite)
    print(f"{'eps_test':>8} {'n':>6} {'mean':>10} {'sd':>10} {'success%':>9} {'time_s':>9}")
    for r in rows:
        print(f"{r.eps_test:>8.2f} {r.n:>6d} {r.mean:>10.6f} {r.sd:>10.6f} "
              f"{r.success_pct:>9.2f} {r.total_time_s:>9.3f}")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file (default: $LNTUNE_CONFIG)")
    common.add_argument("--toy", action="store_true", help="small pool preset for quick runs")
    common.add_argument("--seed", type=int)
    common.add_argument("--pool", help="pool CSV path")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="lntune", description="Impedance-tuning agent and baselines.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", parents=[common], help="generate the load pool")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train the agent")
    t.add_argument("--model")
    t.add_argument("--train-log", dest="train_log")
    t.add_argument("--episodes", type=int)
    t.set_defaults(func=cmd_train)

    def add_eval_args(sp):
        sp.add_argument("--model")
        sp.add_argument("--results")
        sp.add_argument("--split", choices=("train", "test", "all"), default="test")
        sp.add_argument("--limit", type=int, help="only the first N samples of the split")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--overwrite", action="store_true",
                        help="replace the results file instead of appending")

    e = sub.add_parser("eval", parents=[common], help="run one tuner over a pool split")
    e.add_argument("--method", choices=("agent",) + METHODS, default="agent")
    e.add_argument("--eps-test", dest="eps_test", type=float, default=0.0)
    e.add_argument("--max-iters", dest="max_iters", type=int)
    add_eval_args(e)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", parents=[common], help="build the report bundle")
    r.add_argument("inputs", nargs="*", help="results CSV files (default: configured path)")
    r.add_argument("--out", dest="reports")
    r.set_defaults(func=cmd_report)

    s = sub.add_parser("sweep", parents=[common], help="test-phase exploration sweep")
    s.add_argument("--eps", type=float, nargs="+", default=list(DEFAULT_EPS_LIST))
    add_eval_args(s)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    for name in ("jobs", "limit", "episodes", "max_iters"):
        v = getattr(args, name, None)
        if v is not None and v <= 0:
            parser.error(f"--{name.replace('_', '-')} must be positive")
    if getattr(args, "eps_test", 0.0) is not None and not 0.0 <= getattr(args, "eps_test", 0.0) <= 1.0:
        parser.error("--eps-test must lie in [0, 1]")
    if any(not 0.0 <= e <= 1.0 for e in getattr(args, "eps", None) or ()):
        parser.error("--eps values must lie in [0, 1]")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"lntune: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PoolFormatError, ModelFileError, ResultsFormatError, NonFiniteGradientError,
            OSError, ValueError) as exc:
        print(f"lntune: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
