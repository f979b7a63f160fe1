"""Command-line pipeline: prep, synth, train, extend, eval, sweep, inspect.

Every command is deterministic given its flags and seed.  A config file of
key=value lines (flag names without the leading dashes) supplies defaults
that explicit flags override.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import interpret
from .centering import center, rank_baseline, restrict, select_subset
from .datasets import DataFormatError, load_csv, load_netflix, write_csv
from .model import BarModel, assemble, config_hash, evaluate, export_bits_csv, export_weights_csv, fit_weights
from .serialize import (FileFormatError, load_cache, load_model, load_solve_result,
                        read_container, save_cache, save_model, save_solve_result)
from .solver import SolverConfig, solve, write_stats_csv
from .synth import SyntheticSpec, synthesize


def _comma_floats(text: str):
    return [float(x) for x in text.split(",") if x.strip()]


def _comma_ints(text: str):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="binattr",
        description="Learn binary viewer attributes and movie weights from sparse ratings.")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value file of flag defaults")
        subparsers[name] = p
        return p

    p = add("prep", "parse ratings, center, rank, write a cache file")
    p.add_argument("--source", required=True,
                   help="Netflix-style directory of per-movie files, or a CSV file")
    p.add_argument("--probe", help="Netflix-style probe file (directory sources only)")
    p.add_argument("--cache", required=True, help="output cache path")

    p = add("synth", "generate a planted-model dataset")
    p.add_argument("--viewers", type=int, required=True)
    p.add_argument("--movies", type=int, required=True)
    p.add_argument("--bits", type=int, required=True, help="planted attribute count")
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--bit-prob", type=float, default=0.5)
    p.add_argument("--weight-scale", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.25, help="rating noise sigma (stars)")
    p.add_argument("--quantize", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-model", required=True, help="planted-model output path")
    p.add_argument("--out-cache", help="optionally also write a ready-to-train cache")

    p = add("train", "select a movie subset and train viewer bits on it")
    p.add_argument("--cache", required=True)
    p.add_argument("--fraction", type=float, default=0.2,
                   help="baseline-error coverage of the training subset")
    p.add_argument("--bits", type=int, required=True, help="attribute count d")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--restart-threshold", type=float, default=1.1)
    p.add_argument("--mode", choices=["dense", "sparse"], default="dense")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--root-tolerance", type=float, default=1e-12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count())
    p.add_argument("--out-model", required=True, help="solve-result output path")
    p.add_argument("--out-stats", required=True, help="iteration stats CSV path")

    p = add("extend", "fit weights for every movie with the trained bits")
    p.add_argument("--cache", required=True)
    p.add_argument("--model-in", required=True, help="solve-result from train")
    p.add_argument("--model-out", required=True, help="full model output path")
    p.add_argument("--threads", type=int, default=os.cpu_count())

    p = add("eval", "report RMSE of a model on one partition")
    p.add_argument("--model", required=True, help="model or solve-result file")
    p.add_argument("--cache", required=True)
    p.add_argument("--partition", choices=["train", "probe"], default="train")
    p.add_argument("--out", help="write the report CSV here instead of stdout")

    p = add("sweep", "train/extend/eval over subset fractions and bit counts")
    p.add_argument("--cache", required=True)
    p.add_argument("--fractions", type=_comma_floats, required=True,
                   help="comma-separated coverage fractions, e.g. 0.1,0.2,0.3")
    p.add_argument("--bits", type=_comma_ints, required=True,
                   help="comma-separated attribute counts, e.g. 2,4,8")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--restart-threshold", type=float, default=1.1)
    p.add_argument("--mode", choices=["dense", "sparse"], default="dense")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count())
    p.add_argument("--out", required=True, help="result table CSV path")

    p = add("inspect", "histograms, extreme-title lists, and bit prevalence")
    p.add_argument("--model", required=True, help="full model file")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--bins", type=int, default=interpret.DEFAULT_BINS)
    p.add_argument("--out-dir", required=True)

    return parser, subparsers


def _apply_config_file(argv, subparsers):
    """Load key=value defaults for the invoked subcommand."""
    if "--config" not in argv:
        return
    path = argv[argv.index("--config") + 1]
    command = next((tok for tok in argv if not tok.startswith("-")), None)
    if command not in subparsers:
        return
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    p = subparsers[command]
    converted = {}
    for action in p._actions:
        if action.dest in values:
            raw = values[action.dest]
            if isinstance(action, argparse.BooleanOptionalAction):
                converted[action.dest] = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                converted[action.dest] = action.type(raw)
            else:
                converted[action.dest] = raw
    p.set_defaults(**converted)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(d=args.bits, beta=args.beta, max_iterations=args.iterations,
                        restart_rmse_threshold=args.restart_threshold, seed=args.seed,
                        mode=args.mode, gamma=args.gamma,
                        root_find_tolerance=getattr(args, "root_tolerance", 1e-12))


def cmd_prep(args) -> int:
    source = Path(args.source)
    if source.is_dir():
        dataset = load_netflix(source, probe_path=args.probe)
    else:
        dataset = load_csv(source)
    if dataset.n_entries == 0:
        print("prep: source contains no ratings", file=sys.stderr)
        return 1
    centered = center(dataset)
    ranking = rank_baseline(centered)
    save_cache(centered, ranking, args.cache)
    print(f"prep: cached {dataset.n_entries} entries "
          f"({dataset.viewer_count} viewers, {dataset.movie_count} movies) -> {args.cache}")
    return 0


def cmd_synth(args) -> int:
    spec = SyntheticSpec(viewers=args.viewers, movies=args.movies, d=args.bits,
                         density=args.density, bit_prob=args.bit_prob,
                         weight_scale=args.weight_scale, noise_sigma=args.noise,
                         quantize=args.quantize, seed=args.seed)
    dataset, planted = synthesize(spec)
    write_csv(dataset, args.out_csv)
    save_model(planted, args.out_model)
    if args.out_cache:
        centered = center(dataset)
        save_cache(centered, rank_baseline(centered), args.out_cache)
    print(f"synth: {dataset.n_entries} ratings -> {args.out_csv}; "
          f"planted model -> {args.out_model}")
    return 0


def cmd_train(args) -> int:
    centered, ranking = load_cache(args.cache)
    subset = select_subset(ranking, args.fraction)
    view = restrict(centered, subset)
    config = _solver_config(args)
    result = solve(config, view, threads=args.threads)
    save_solve_result(result, args.out_model)
    write_stats_csv(result.stats, args.out_stats)
    flag = " (warning: every iteration restarted)" if result.all_restarts else ""
    print(f"train: subset {subset.size} movies, best RMSE {result.best_rmse:.6f} "
          f"at iteration {result.best_iteration}{flag} -> {args.out_model}")
    return 0


def cmd_extend(args) -> int:
    centered, _ = load_cache(args.cache)
    result = load_solve_result(args.model_in)
    if result.bits.shape[0] != centered.viewer_count:
        print("extend: model and cache disagree on viewer count", file=sys.stderr)
        return 1
    from concurrent.futures import ThreadPoolExecutor
    pool = ThreadPoolExecutor(max_workers=args.threads) if args.threads > 1 else None
    try:
        weights = fit_weights(result.bits, centered, pool=pool)
    finally:
        if pool is not None:
            pool.shutdown()
    provenance = {
        "trained_subset": [int(m) for m in result.movies],
        "config_hash": config_hash(result.config.to_dict()),
        "solver_config": result.config.to_dict(),
        "best_iteration": result.best_iteration,
        "best_rmse": result.best_rmse,
    }
    model = assemble(result.bits, weights, centered, provenance=provenance)
    save_model(model, args.model_out)
    print(f"extend: weights fitted for {model.movie_count} movies -> {args.model_out}")
    return 0


def _model_for_eval(path, centered) -> BarModel:
    kind, _ = read_container(path)
    if kind == "model":
        return load_model(path)
    result = load_solve_result(path)
    return BarModel(result.bits, result.weights, centered.movie_means,
                    centered.viewer_means, weight_movies=result.movies,
                    viewer_ids=centered.dataset.viewer_ids,
                    movie_ids=centered.dataset.movie_ids,
                    titles=centered.dataset.titles,
                    global_mean=centered.global_train_mean,
                    provenance={"kind": "solve_result", "path": str(path)})


def cmd_eval(args) -> int:
    centered, _ = load_cache(args.cache)
    model = _model_for_eval(args.model, centered)
    report = evaluate(model, centered.dataset, args.partition)
    lines = ["#schema=1", "partition,edges,rmse", report.csv_row()]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    centered, ranking = load_cache(args.cache)
    has_probe = centered.probe_entries.size > 0
    rows = []
    for fi, fraction in enumerate(args.fractions):
        subset = select_subset(ranking, fraction)
        view = restrict(centered, subset)
        for di, d in enumerate(args.bits):
            for trial in range(args.trials):
                cell_seed = int(np.random.SeedSequence(
                    [args.seed, fi, di, trial]).generate_state(1)[0])
                config = SolverConfig(d=d, beta=args.beta, max_iterations=args.iterations,
                                      restart_rmse_threshold=args.restart_threshold,
                                      seed=cell_seed, mode=args.mode, gamma=args.gamma)
                result = solve(config, view, threads=args.threads)
                weights = fit_weights(result.bits, centered)
                model = assemble(result.bits, weights, centered)
                entire = evaluate(model, centered.dataset, "train").rmse
                probe = (evaluate(model, centered.dataset, "probe").rmse
                         if has_probe else float("nan"))
                rows.append((fraction, d, trial, result.best_rmse, entire, probe))
                print(f"sweep: fraction={fraction} d={d} trial={trial} "
                      f"subset={result.best_rmse:.6f} entire={entire:.6f}")
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#schema=1\n")
        fh.write("fraction,d,trial,subset_rmse,entire_rmse,probe_rmse\n")
        for fraction, d, trial, sub, entire, probe in rows:
            fh.write(f"{fraction!r},{d},{trial},{sub!r},{entire!r},{probe!r}\n")
    return 0


def cmd_inspect(args) -> int:
    model = load_model(args.model)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    interpret.write_histograms_csv(model, out / "histograms.csv", bins=args.bins)
    for a in range(model.d):
        interpret.write_ranking_csv(model, a, args.top_k, out / f"ranking_attr_{a:03d}.csv")
    interpret.write_prevalence_csv(model, out / "prevalence.csv")
    export_weights_csv(model, out / "weights.csv")
    export_bits_csv(model, out / "bits.csv")
    print(f"inspect: wrote {3 + model.d} report files to {out}")
    return 0


_COMMANDS = {
    "prep": cmd_prep,
    "synth": cmd_synth,
    "train": cmd_train,
    "extend": cmd_extend,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    try:
        _apply_config_file(argv, subparsers)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (DataFormatError, FileFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
