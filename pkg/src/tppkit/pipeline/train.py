"""Training loop with dev-set early stopping, plus checkpoint I/O."""

import hashlib
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..data import Schema, iter_batches, load_dataset
from ..errors import ConfigError, DivergedLoss, DomainError, IncompatibleCheckpoint
from ..likelihood import eval_loglik
from ..models import build_model
from .optim import Adam

CHECKPOINT_FORMAT = "tppkit-checkpoint-1"


def load_split(config, split):
    path = getattr(config.data, split)
    if path is None:
        raise ConfigError(f"config has no {split} dataset path")
    return load_dataset(path, Schema(split=split))


def model_config_for(config, train_set):
    """Model config with the event vocabulary and seed filled in."""
    return replace(config.model, num_event_types=train_set.num_types, seed=config.seed)


def build_for(config, train_set):
    model = build_model(model_config_for(config, train_set))
    model.fit_data_stats(train_set)
    return model


@dataclass
class TrainResult:
    model: object
    log: list
    best_epoch: int
    best_dev_ll: float
    checkpoint: Path = None


def _rng(config, stream):
    # separate, reproducible streams for shuffling/MC and dev evaluation
    return np.random.default_rng([config.seed, stream])


def dev_loglik(model, dev, config):
    # the same dev MC draws every epoch, so epochs are compared on equal terms
    return eval_loglik(model, dev, config.mc, config.batch_size, _rng(config, 2)).ll_per_event


def train(config, train_set=None, dev_set=None, out_dir=None, log_path=None, verbose=False):
    """Fit ``config.model`` by Adam on the per-event NLL.

    After each epoch the dev log-likelihood is computed; training stops once
    it has not improved for ``patience`` consecutive epochs (or after
    ``max_epochs``). The best-dev parameters are restored at the end.
    """
    config.validate()
    train_set = train_set if train_set is not None else load_split(config, "train")
    dev_set = dev_set if dev_set is not None else load_split(config, "dev")
    model = build_for(config, train_set)
    opt = Adam(model.parameters(), config.optim.lr, config.optim.beta1, config.optim.beta2, config.optim.eps)
    rng = _rng(config, 1)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = log_path or out_dir / "training_log.jsonl"
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    log = []
    best_ll, best_epoch, best_flat = -np.inf, 0, model.get_flat()
    stale = 0
    try:
        for epoch in range(1, config.max_epochs + 1):
            t_start = time.perf_counter()
            tot_nll, tot_events = 0.0, 0
            for batch in iter_batches(train_set, config.batch_size, rng):
                opt.zero_grad()
                try:
                    out = model.loglike_loss(batch, config.mc, rng=rng, train=True)
                    loss = out.nll.item()
                except DomainError:
                    # an intensity collapsed to zero at an observed event
                    loss = np.inf
                if not np.isfinite(loss):
                    dump = save_checkpoint(out_dir / "diverged", model, config) if out_dir else None
                    raise DivergedLoss(f"non-finite NLL at epoch {epoch}" + (f"; state in {dump}" if dump else ""))
                out.nll.backward()
                opt.step()
                tot_nll += loss * out.num_events
                tot_events += out.num_events
            try:
                dev_ll = dev_loglik(model, dev_set, config)
            except DomainError:
                dev_ll = -np.inf
            if not np.isfinite(dev_ll):
                raise DivergedLoss(f"non-finite dev log-likelihood at epoch {epoch}")
            improved = dev_ll > best_ll
            if improved:
                best_ll, best_epoch, best_flat, stale = dev_ll, epoch, model.get_flat(), 0
            else:
                stale += 1
            rec = {
                "epoch": epoch,
                "train_nll": tot_nll / max(tot_events, 1),
                "dev_ll": dev_ll,
                "improved": improved,
                "seed": config.seed,
                "wall_time": time.perf_counter() - t_start,
            }
            log.append(rec)
            if log_fh:
                log_fh.write(json.dumps(rec) + "\n")
                log_fh.flush()
            if verbose:
                print(f"epoch {epoch}: train_nll={rec['train_nll']:.5f} dev_ll={dev_ll:.5f}", flush=True)
            if stale >= config.patience:
                break
    finally:
        if log_fh:
            log_fh.close()
    model.set_flat(best_flat)
    ckpt = save_checkpoint(out_dir / "checkpoint", model, config, best_epoch, best_ll) if out_dir else None
    return TrainResult(model, log, best_epoch, best_ll, ckpt)


def save_checkpoint(path, model, config, best_epoch=None, best_dev_ll=None):
    """Write ``manifest.json`` and ``params.bin`` (little-endian float64) under ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    flat = model.get_flat().astype("<f8")
    blob = flat.tobytes()
    (path / "params.bin").write_bytes(blob)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "model_config": model.config.to_dict(),
        "params": [{"name": n, "shape": list(p.shape)} for n, p in model.named_parameters()],
        "num_params": int(flat.size),
        "params_sha256": hashlib.sha256(blob).hexdigest(),
        "config_hash": config.config_hash(),
        "best_epoch": best_epoch,
        "best_dev_ll": best_dev_ll,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def load_checkpoint(path, config=None, num_types=None):
    """Rebuild a model from a checkpoint directory.

    With ``config`` the stored model must match its model id (and
    ``num_types`` when given), otherwise :class:`IncompatibleCheckpoint`.
    """
    from ..models import ModelConfig

    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        blob = (path / "params.bin").read_bytes()
    except FileNotFoundError as exc:
        raise IncompatibleCheckpoint(f"incomplete checkpoint at {path}: {exc}") from None
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise IncompatibleCheckpoint(f"unknown checkpoint format {manifest.get('format')!r}")
    if hashlib.sha256(blob).hexdigest() != manifest["params_sha256"]:
        raise IncompatibleCheckpoint("parameter blob does not match its recorded hash")
    mcfg = ModelConfig.from_dict(manifest["model_config"])
    if config is not None and mcfg.model_id != config.model.model_id:
        raise IncompatibleCheckpoint(
            f"checkpoint holds {mcfg.model_id!r} but config asks for {config.model.model_id!r}"
        )
    if num_types is not None and mcfg.num_event_types != num_types:
        raise IncompatibleCheckpoint(
            f"checkpoint has {mcfg.num_event_types} event types, data has {num_types}"
        )
    model = build_model(mcfg)
    shapes = [(n, list(p.shape)) for n, p in model.named_parameters()]
    if shapes != [(p["name"], p["shape"]) for p in manifest["params"]]:
        raise IncompatibleCheckpoint("parameter layout differs from the model definition")
    model.set_flat(np.frombuffer(blob, dtype="<f8"))
    return model, manifest
