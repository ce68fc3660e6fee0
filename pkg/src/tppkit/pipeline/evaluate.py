"""Held-out evaluation: log-likelihood, next-event MBR and horizon OTD."""

import hashlib
import json
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, MaxRoundsExceeded
from ..likelihood import eval_loglik
from ..metrics import error_rate_type, otd, rmse_time
from ..sampler import predict_next_events, rollout_batch
from .train import load_split


def git_blob_sha1(path):
    """Content hash as ``git hash-object`` computes it."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def dataset_hashes(config):
    return {split: git_blob_sha1(p) for split, p in config.data.paths().items() if Path(p).is_file()}


def thinning_for(config, train_set):
    """Thinning config whose probe grid is scaled by the mean training gap."""
    return replace(config.thinning, dtime_scale=train_set.mean_dtime(), rng_seed=config.seed)


def horizon_windows(seq, length):
    """Split ``seq`` for horizon prediction: prefix up to ``T`` and the true
    events on ``(T, T']`` where ``T'`` is the last event and ``T = T' - length``."""
    t_last = float(seq.times[-1]) if len(seq) else seq.t_end
    T = max(t_last - length, 0.0)
    return seq.prefix(T), seq.window(T, t_last)


def eval_next_event(model, sequences, tcfg, batch_size, seq_ids=None):
    pred = predict_next_events(model, sequences, tcfg, batch_size=batch_size, seq_ids=seq_ids)
    pt = np.concatenate(pred.pred_times) if pred.pred_times else np.zeros(0)
    tt = np.concatenate(pred.true_times) if pred.true_times else np.zeros(0)
    pk = np.concatenate(pred.pred_types) if pred.pred_types else np.zeros(0)
    tk = np.concatenate(pred.true_types) if pred.true_types else np.zeros(0)
    ok = np.isfinite(pt)
    return {
        "rmse": rmse_time(pt, tt, ok),
        "error_rate": error_rate_type(pk, tk),
        "num_events": int(tt.size),
        "num_unpredicted": pred.num_unpredicted,
        "censoring_rate": pred.censoring_rate,
        "bound_violations": pred.violations,
    }


def eval_horizon(model, sequences, tcfg, horizons_time, otd_params, seq_ids=None):
    seq_ids = list(range(len(sequences))) if seq_ids is None else list(seq_ids)
    out = {}
    for h_idx, length in enumerate(horizons_time):
        splits = [horizon_windows(s, length) for s in sequences]
        prefixes = [p for p, _ in splits]
        ends = [t.t_end for _, t in splits]
        keys = [(tcfg.rng_seed, 1000 + h_idx, i) for i in seq_ids]
        failed = 0
        try:
            preds = rollout_batch(model, prefixes, ends, tcfg, keys)
        except MaxRoundsExceeded:
            # fall back to one rollout at a time so one stuck sequence only
            # costs itself
            preds = []
            for p, e, k in zip(prefixes, ends, keys):
                try:
                    preds.extend(rollout_batch(model, [p], [e], tcfg, [k]))
                except MaxRoundsExceeded:
                    preds.append(None)
                    failed += 1
        dists = [otd(p, t, otd_params) for p, (_, t) in zip(preds, splits) if p is not None]
        out[f"{length:.6g}"] = {
            "mean_otd": float(np.mean(dists)) if dists else float("nan"),
            "length": float(length),
            "mean_true_events": float(np.mean([len(t) for _, t in splits])) if splits else 0.0,
            "mean_pred_events": float(np.mean([len(p) for p in preds if p is not None])) if dists else float("nan"),
            "num_sequences": len(dists),
            "num_censored": failed,
        }
    return out


def evaluate(config, model, tasks=None, train_set=None, test_set=None, out_dir=None, manifest=None):
    """Run the requested tasks on the test split and return a report dict."""
    tasks = list(tasks or config.tasks)
    train_set = train_set if train_set is not None else load_split(config, "train")
    test_set = test_set if test_set is not None else load_split(config, "test")
    if test_set.num_types != model.num_types:
        from ..errors import IncompatibleCheckpoint

        raise IncompatibleCheckpoint(f"model has {model.num_types} types, test data {test_set.num_types}")
    tcfg = thinning_for(config, train_set)
    n_eval = len(test_set) if config.eval_max_sequences is None else min(len(test_set), config.eval_max_sequences)
    seqs = list(test_set.sequences[:n_eval])
    metrics, timings = {}, {}
    for task in tasks:
        t0 = time.perf_counter()
        if task == "loglik":
            rng = np.random.default_rng([config.seed, 3])
            metrics["loglik"] = eval_loglik(model, test_set, config.mc, config.batch_size, rng).to_dict()
        elif task == "next_event":
            metrics["next_event"] = eval_next_event(model, seqs, tcfg, min(config.batch_size, 64))
        elif task == "horizon":
            lengths = [h * train_set.mean_dtime() for h in config.horizons]
            metrics["horizon"] = eval_horizon(model, seqs, tcfg, lengths, config.otd)
        else:
            raise ConfigError(f"unknown task {task!r}")
        timings[task] = time.perf_counter() - t0
    report = {
        "experiment_id": config.experiment_id,
        "model_id": config.model.model_id,
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "dataset_hashes": dataset_hashes(config),
        "optimizer": asdict(config.optim),
        "mc": asdict(config.mc),
        "thinning": asdict(tcfg),
        "otd": asdict(config.otd),
        "num_test_sequences": len(test_set),
        "num_eval_sequences": n_eval,
        "metrics": metrics,
        "timings": timings,
    }
    if manifest is not None:
        report["checkpoint"] = {k: manifest.get(k) for k in ("best_epoch", "best_dev_ll", "params_sha256")}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "results.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    return report
