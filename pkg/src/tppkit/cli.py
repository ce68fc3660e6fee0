"""Command-line entry point: ``tppkit <command> [options]``."""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import TPPError


def _common(p):
    p.add_argument("--config", help="JSON experiment file")
    p.add_argument("--experiment-id", help="experiment to select from the config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--output", help="output directory for this run")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, e.g. model.hidden_size=16 (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(prog="tppkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic Hawkes train/dev/test files")
    g.add_argument("--output", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mu", type=float, default=0.2)
    g.add_argument("--alpha", type=float, default=0.8)
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--t-end", type=float, default=100.0)
    g.add_argument("--sizes", default="1200,200,400", help="train,dev,test sequence counts")

    t = sub.add_parser("train", help="train one model with early stopping")
    _common(t)
    t.add_argument("--verbose", action="store_true")

    e = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _common(e)
    e.add_argument("--checkpoint", help="checkpoint dir (default <output>/checkpoint)")
    e.add_argument("--tasks", help="comma list from loglik,next_event,horizon")

    p = sub.add_parser("predict", help="dump per-sequence next-event predictions")
    _common(p)
    p.add_argument("--checkpoint", help="checkpoint dir (default <output>/checkpoint)")
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])

    b = sub.add_parser("benchmark", help="train and evaluate several models, write leaderboards")
    _common(b)
    b.add_argument("--models", help="comma list of model ids (default from config)")
    b.add_argument("--verbose", action="store_true")

    s = sub.add_parser("gridsearch", help="grid search over config values, ranked by dev LL")
    _common(s)
    s.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                   help="grid axis (repeatable); adds to any grid in the config")
    s.add_argument("--verbose", action="store_true")
    return parser


def _config(args):
    from .pipeline import load_config

    return load_config(args.config, args.experiment_id, args.overrides, args.seed, None)


def _run_dir(args, config):
    return Path(args.output) if args.output else Path(config.output_dir) / config.experiment_id


def _load(args, config):
    from .pipeline import load_checkpoint
    from .pipeline.train import load_split

    train_set = load_split(config, "train")
    ckpt = Path(args.checkpoint) if args.checkpoint else _run_dir(args, config) / "checkpoint"
    model, manifest = load_checkpoint(ckpt, config, num_types=train_set.num_types)
    return model, manifest, train_set


def cmd_generate(args):
    from .pipeline import generate_synthetic

    sizes = tuple(int(x) for x in args.sizes.split(","))
    paths = generate_synthetic(args.output, args.seed, args.mu, args.alpha, args.beta, args.t_end, sizes)
    for split, path in paths.items():
        print(f"{split}: {path}")


def cmd_train(args):
    from .pipeline import train

    config = _config(args)
    out = _run_dir(args, config)
    res = train(config, out_dir=out, verbose=args.verbose)
    print(f"best epoch {res.best_epoch} dev_ll {res.best_dev_ll:.6f}; checkpoint {res.checkpoint}")


def cmd_eval(args):
    from .pipeline import evaluate

    config = _config(args)
    model, manifest, train_set = _load(args, config)
    tasks = args.tasks.split(",") if args.tasks else None
    report = evaluate(config, model, tasks, train_set=train_set, out_dir=_run_dir(args, config), manifest=manifest)
    print(json.dumps(report["metrics"], indent=2))


def cmd_predict(args):
    from .pipeline.evaluate import thinning_for
    from .pipeline.train import load_split
    from .sampler import predict_next_events

    config = _config(args)
    model, _, train_set = _load(args, config)
    data = load_split(config, args.split)
    seqs = list(data.sequences)
    if config.eval_max_sequences is not None:
        seqs = seqs[: config.eval_max_sequences]
    pred = predict_next_events(model, seqs, thinning_for(config, train_set))
    out = _run_dir(args, config) / f"predictions_{args.split}.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for i, (pt, pk, tt, tk) in enumerate(zip(pred.pred_times, pred.pred_types, pred.true_times, pred.true_types)):
            rec = {
                "sequence": i,
                "pred_times": [None if not np.isfinite(x) else float(x) for x in pt],
                "pred_types": [int(x) for x in pk],
                "true_times": [float(x) for x in tt],
                "true_types": [int(x) for x in tk],
            }
            fh.write(json.dumps(rec) + "\n")
    print(f"wrote {out} (censoring rate {pred.censoring_rate:.4g})")


def cmd_benchmark(args):
    from .pipeline import benchmark

    config = _config(args)
    models = args.models.split(",") if args.models else None
    _, paths = benchmark(config, models, out_dir=_run_dir(args, config), verbose=args.verbose)
    for p in paths:
        print(p)


def cmd_gridsearch(args):
    from dataclasses import replace

    from .pipeline import GridSpec, grid_search
    from .pipeline.config import parse_value

    config = _config(args)
    params = dict(config.grid.params) if config.grid else {}
    for item in args.grid:
        key, _, vals = item.partition("=")
        params[key] = [parse_value(v) for v in vals.split(",")]
    grid = GridSpec(params)
    out = _run_dir(args, config)
    res = grid_search(replace(config, grid=grid), grid, out_dir=out, verbose=args.verbose)
    print(f"best cell {res.best['cell']} {res.best['params']} dev_ll {res.best['dev_ll']:.6f}")
    print(f"leaderboard: {out / 'leaderboard.csv'}")


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
    "gridsearch": cmd_gridsearch,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except TPPError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
