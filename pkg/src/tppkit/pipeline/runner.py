"""End-to-end runs: train then evaluate, and multi-model benchmarks."""

import json
from dataclasses import replace
from pathlib import Path

from ..data import split_dataset, write_dataset
from ..hawkes import HawkesParams, generate_hawkes
from .config import switch_model
from .evaluate import evaluate
from .report import write_report
from .train import load_split, train

SYNTHETIC = {"mu": 0.2, "alpha": 0.8, "beta": 1.0, "t_end": 100.0, "num_seqs": 1800}
SYNTHETIC_SIZES = (1200, 200, 400)


def generate_synthetic(out_dir, seed=0, mu=0.2, alpha=0.8, beta=1.0, t_end=100.0, sizes=SYNTHETIC_SIZES, name="hawkes_1d"):
    """Univariate Hawkes sequences split into train/dev/test JSON Lines files."""
    params = HawkesParams.univariate(mu, alpha, beta)
    n = sum(sizes)
    seqs = generate_hawkes(params, t_end, n, seed)
    ratios = [s / n for s in sizes]
    splits = split_dataset(seqs, ratios, seed, num_types=1, name=name)
    out_dir = Path(out_dir)
    paths = {}
    for ds in splits:
        paths[ds.split] = str(write_dataset(out_dir / f"{ds.split}.jsonl", ds))
    (out_dir / "generator.json").write_text(
        json.dumps({"params": params.to_dict(), "t_end": t_end, "sizes": list(sizes), "seed": seed}, indent=2),
        encoding="utf-8",
    )
    return paths


def run_experiment(config, tasks=None, out_dir=None, verbose=False):
    """Train ``config`` and evaluate the best-dev checkpoint."""
    out_dir = Path(out_dir or Path(config.output_dir) / config.experiment_id)
    train_set = load_split(config, "train")
    dev_set = load_split(config, "dev")
    res = train(config, train_set, dev_set, out_dir=out_dir, verbose=verbose)
    manifest = json.loads((res.checkpoint / "manifest.json").read_text(encoding="utf-8"))
    report = evaluate(config, res.model, tasks, train_set=train_set, out_dir=out_dir, manifest=manifest)
    return res, report


def benchmark(config, models=None, out_dir=None, verbose=False):
    """Train and evaluate each model id on the same data; write leaderboards."""
    models = list(models or config.models)
    out_dir = Path(out_dir or Path(config.output_dir) / config.experiment_id)
    reports = {}
    for mid in models:
        cfg = switch_model(config, mid)
        cfg = replace(cfg, experiment_id=f"{config.experiment_id}/{mid}")
        if verbose:
            print(f"== {mid}", flush=True)
        _, reports[mid] = run_experiment(cfg, out_dir=out_dir / mid, verbose=verbose)
    paths = write_report(out_dir, reports)
    (out_dir / "benchmark.json").write_text(json.dumps(reports, indent=2), encoding="utf-8")
    return reports, paths
