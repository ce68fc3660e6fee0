"""Monte-Carlo compensator estimates and held-out log-likelihood evaluation."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import iter_batches
from .errors import EmptyDataset


@dataclass
class MCConfig:
    """Samples per observed event: ``train`` while fitting, ``eval`` when
    reporting or selecting hyperparameters."""

    samples_per_event_train: int = 1
    samples_per_event_eval: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if self.samples_per_event_train < 1 or self.samples_per_event_eval < 1:
            raise ValueError("MC sample multipliers must be >= 1")


def interval_sample_times(batch, m, rng):
    """(B, L+1, m) uniform draws inside each anchor's interval, plus lengths."""
    starts = batch.anchor_times()
    lengths = batch.interval_ends() - starts
    u = rng.uniform(size=starts.shape + (m,))
    return starts[..., None] + lengths[..., None] * u, lengths


def mc_integral(intensity_fn, batch, cfg, rng=None, train=False):
    """Unbiased per-sequence estimate of ``int_0^T sum_k lambda_k dt``.

    Each interval between consecutive anchors (window start, events, ``t_end``)
    gets ``m`` i.i.d. uniform points; the mean total intensity there times the
    interval length estimates that interval's share. Returns a (B,) tensor,
    differentiable through ``intensity_fn``.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    m = cfg.samples_per_event_train if train else cfg.samples_per_event_eval
    times, lengths = interval_sample_times(batch, m, rng)
    # one sample column at a time keeps the (B, L+1, m, D) grid out of memory
    acc = None
    for j in range(m):
        lam = intensity_fn(times[..., j:j + 1])  # (B, L+1, 1, K)
        total = ad.sum_(lam, axis=(-2, -1))
        acc = total if acc is None else acc + total
    return ad.sum_(acc * (lengths / m), axis=-1)


@dataclass
class LogLikResult:
    total_ll: float
    num_events: int
    num_sequences: int
    time_ll: float
    type_ll: float

    @property
    def ll_per_event(self):
        return self.total_ll / max(self.num_events, 1)

    @property
    def time_ll_per_event(self):
        return self.time_ll / max(self.num_events, 1)

    @property
    def type_ll_per_event(self):
        return self.type_ll / max(self.num_events, 1)

    def to_dict(self):
        return {
            "ll_per_event": self.ll_per_event,
            "total_ll": self.total_ll,
            "time_ll_per_event": self.time_ll_per_event,
            "type_ll_per_event": self.type_ll_per_event,
            "num_events": self.num_events,
            "num_sequences": self.num_sequences,
        }


def eval_loglik(model, dataset, cfg=None, batch_size=256, rng=None):
    """Held-out log-likelihood using the eval sample multiplier.

    The split into time and type parts is ``log lambda(t_i) - integral`` and
    ``log(lambda_k / lambda)`` respectively.
    """
    cfg = cfg or MCConfig()
    if len(dataset) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    total = time_ll = type_ll = 0.0
    n_events = 0
    with ad.no_grad():
        for batch in iter_batches(dataset, batch_size):
            out = model.loglike_loss(batch, cfg, rng=rng, train=False)
            total += float(out.seq_ll.sum())
            time_ll += float(out.time_ll.sum())
            type_ll += float(out.type_ll.sum())
            n_events += out.num_events
    return LogLikResult(total, n_events, len(dataset), time_ll, type_ll)
