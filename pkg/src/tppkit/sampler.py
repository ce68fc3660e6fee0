"""Batch-wise thinning sampler, MBR next-event prediction and rollouts.

Every sampled row (a history plus a start time) owns a generator seeded by a
key such as ``(seed, sequence, position)``; the draws of that row are the
columns of the arrays it produces. A row's results therefore do not depend on
which other rows share its batch.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import EventSequence, pad_batch
from .errors import AllDrawsCensored, MaxRoundsExceeded, TimeBeforeHistory
from .hawkes import HawkesParams
from .models.base import TPPModel

# query points evaluated per model call; bounds peak memory
POINT_BUDGET = 1 << 17


@dataclass
class ThinningConfig:
    num_samples: int = 100
    num_exp: int = 10
    max_rounds: int = 1000
    over_sample_factor: float = 2.0
    rng_seed: int = 0
    # probe grid for models without an exact bound: probe_points over
    # (t, t + probe_span * dtime_scale]
    probe_points: int = 100
    probe_span: float = 10.0
    dtime_scale: float = 1.0
    # rollout cap on predicted events per horizon
    max_events: int = 1000

    def __post_init__(self):
        for name in ("num_samples", "num_exp", "max_rounds", "probe_points", "max_events"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.over_sample_factor < 1:
            raise ValueError("over_sample_factor must be >= 1")
        if self.dtime_scale <= 0 or self.probe_span <= 0:
            raise ValueError("dtime_scale and probe_span must be positive")


@dataclass
class DrawResult:
    """Draws for one or more rows; arrays have shape (rows, draws)."""

    times: np.ndarray
    types: np.ndarray
    censored: np.ndarray
    rounds: np.ndarray
    candidates: np.ndarray
    violations: int


@dataclass
class NextEvent:
    time: float
    type: int
    censored: bool


@dataclass
class TimePrediction:
    time: float
    censoring_rate: float
    num_draws: int
    violations: int

    def __float__(self):
        return float(self.time)


def as_model(target):
    """Accept a model or raw Hawkes parameters."""
    if isinstance(target, HawkesParams):
        from .models.hawkes_model import HawkesModel

        return HawkesModel.from_params(target)
    if not isinstance(target, TPPModel):
        raise TypeError(f"expected a TPPModel or HawkesParams, got {type(target).__name__}")
    return target


def has_exact_bound(model):
    return type(model).upper_bound is not TPPModel.upper_bound


def _tensors(anchors, rows=None, expand=True):
    out = {}
    for k, v in anchors.items():
        v = v if rows is None else v[rows]
        out[k] = ad.Tensor(v[:, None] if expand else v)
    return out


def _total_intensity(model, anchors, rows, elapsed):
    """Intensities (n, Q, K) at ``elapsed`` (n, Q) after the given anchor rows."""
    with ad.no_grad():
        return model.intensity_from_anchor(_tensors(anchors, rows), elapsed).data


def _probe_bounds(model, anchors, rows, starts, cfg):
    width = cfg.probe_span * cfg.dtime_scale
    grid = starts[:, None] + width * np.arange(1, cfg.probe_points + 1) / cfg.probe_points
    lam = _total_intensity(model, anchors, rows, grid).sum(-1)
    return cfg.over_sample_factor * lam.max(axis=1)


def sample_rows(model, anchors, anchor_times, t0, keys, cfg, num_draws=1):
    """Thinning draws of the next event after ``t0`` for each anchor row.

    ``anchors`` maps names to arrays with a leading row axis; ``t0`` must not
    precede ``anchor_times``. Draws that exhaust ``cfg.max_rounds`` rounds
    are returned as censored (time NaN, type -1).
    """
    model = as_model(model)
    N = len(anchor_times)
    per_row = max(1, POINT_BUDGET // (num_draws * max(cfg.num_exp, cfg.probe_points)))
    parts = []
    for lo in range(0, N, per_row):
        sl = slice(lo, min(N, lo + per_row))
        sub = {k: v[sl] for k, v in anchors.items()}
        parts.append(_sample_chunk(model, sub, anchor_times[sl], t0[sl], keys[sl], cfg, num_draws))
    if not parts:
        e = np.zeros((0, num_draws))
        return DrawResult(e, e.astype(np.int64), e.astype(bool), e.astype(np.int64), e.astype(np.int64), 0)
    return DrawResult(
        *(np.concatenate([getattr(p, f) for p in parts]) for f in ("times", "types", "censored", "rounds", "candidates")),
        violations=sum(p.violations for p in parts),
    )


def _sample_chunk(model, anchors, anchor_times, t0, keys, cfg, D):
    N, C = len(anchor_times), cfg.num_exp
    anchor_times = np.asarray(anchor_times, dtype=np.float64)
    start = np.asarray(t0, dtype=np.float64) - anchor_times
    if np.any(start < 0):
        raise TimeBeforeHistory("sampling start precedes the last history event")
    rngs = [np.random.default_rng(list(k)) for k in keys]
    exact = has_exact_bound(model)
    width = cfg.probe_span * cfg.dtime_scale
    pos = np.repeat(start[:, None], D, axis=1)  # elapsed since anchor
    win = np.zeros((N, D), dtype=np.int64)
    table = np.full((N, 1), np.nan)  # probe bound per (row, window)
    done = np.zeros((N, D), dtype=bool)
    censored = np.zeros((N, D), dtype=bool)
    rounds = np.zeros((N, D), dtype=np.int64)
    used = np.zeros((N, D), dtype=np.int64)
    out_t = np.full((N, D), np.nan)
    out_k = np.full((N, D), -1, dtype=np.int64)
    violations = 0
    while True:
        active = ~done & ~censored
        rows = np.nonzero(active.any(axis=1))[0]
        if len(rows) == 0:
            break
        n = len(rows)
        gaps = np.stack([rngs[r].standard_exponential((D, C)) for r in rows])
        u = np.stack([rngs[r].uniform(size=(D, C)) for r in rows])
        v = np.stack([rngs[r].uniform(size=D) for r in rows])
        p0 = pos[rows]
        if exact:
            with ad.no_grad():
                bound = np.asarray(model.upper_bound(_tensors(anchors, rows), p0), dtype=np.float64)
            win_end = np.full((n, D), np.inf)
        else:
            top = int(win[active].max()) + 1
            if top > table.shape[1]:
                table = np.pad(table, ((0, 0), (0, top - table.shape[1])), constant_values=np.nan)
            ar, ac = np.nonzero(active)
            pairs = np.unique(np.stack([ar, win[ar, ac]], axis=1), axis=0)
            pairs = pairs[np.isnan(table[pairs[:, 0], pairs[:, 1]])]
            if len(pairs):
                rr, ws = pairs[:, 0], pairs[:, 1]
                table[rr, ws] = _probe_bounds(model, anchors, rr, start[rr] + ws * width, cfg)
            bound = np.nan_to_num(table[rows[:, None], win[rows]], nan=0.0)
            win_end = start[rows][:, None] + (win[rows] + 1) * width
        with np.errstate(divide="ignore", over="ignore"):
            cand = p0[..., None] + np.cumsum(gaps, axis=-1) / bound[..., None]
        inside = np.isfinite(cand) & (cand <= win_end[..., None])
        safe = np.where(inside, cand, p0[..., None])
        lam = _total_intensity(model, anchors, rows, safe.reshape(n, D * C)).reshape(n, D, C, -1)
        total = lam.sum(-1)
        hit = inside & (u * bound[..., None] <= total) & active[rows][..., None]
        first = np.where(hit.any(-1), hit.argmax(-1), C)
        considered = inside & (np.arange(C) <= first[..., None]) & active[rows][..., None]
        violations += int(np.sum(considered & (total > bound[..., None] * (1 + 1e-12))))
        act = active[rows]
        used[rows] += np.where(act, np.minimum(first + 1, inside.sum(-1)), 0)
        rounds[rows] += act
        acc = act & (first < C)
        ai, dd = np.nonzero(acc)
        if len(ai):
            c = first[ai, dd]
            lk = lam[ai, dd, c]
            cs = np.cumsum(lk, axis=-1)
            k = np.sum(cs <= (v[ai, dd] * cs[:, -1])[:, None], axis=-1)
            ri = rows[ai]
            out_t[ri, dd] = anchor_times[ri] + cand[ai, dd, c]
            out_k[ri, dd] = np.minimum(k, lk.shape[-1] - 1)
            done[ri, dd] = True
        last = cand[..., -1]
        miss = act & ~acc
        if exact:
            dead = miss & ~np.isfinite(last)  # zero intensity from here on
            censored[rows] |= dead
            step = miss & ~dead
            pos[rows] = np.where(step, last, p0)
        else:
            within = inside.all(-1)
            pos[rows] = np.where(miss & within, last, np.where(miss, win_end, p0))
            win[rows] += miss & ~within
        censored |= ~done & (rounds >= cfg.max_rounds)
    return DrawResult(out_t, out_k, censored, rounds, used, violations)


def _history_anchor(model, history):
    history = history if isinstance(history, EventSequence) else EventSequence(*history)
    anchor, t_last = model.anchor_for(history)
    return {k: v.data for k, v in anchor.items()}, t_last


def sample_next(model, history, t0=None, cfg=None, num_draws=1, key=None):
    """``num_draws`` i.i.d. draws of the next event after ``t0`` given ``history``."""
    model = as_model(model)
    cfg = cfg or ThinningConfig()
    anchors, t_last = _history_anchor(model, history)
    t0 = t_last if t0 is None else float(t0)
    if t0 < t_last:
        raise TimeBeforeHistory(f"t0={t0} precedes last history event {t_last}")
    key = (cfg.rng_seed,) if key is None else tuple(key)
    res = sample_rows(model, anchors, np.array([t_last]), np.array([t0]), [key], cfg, num_draws)
    return res


def thinning_sample_next(model, history, t0=None, cfg=None, key=None):
    """One draw of the next ``(time, type)``; censored draws carry NaN / -1."""
    res = sample_next(model, history, t0, cfg, 1, key)
    return NextEvent(float(res.times[0, 0]), int(res.types[0, 0]), bool(res.censored[0, 0]))


def mbr_predict_time(model, history, cfg=None, t0=None, key=None):
    """Mean of ``cfg.num_samples`` thinning draws of the next event time."""
    cfg = cfg or ThinningConfig()
    res = sample_next(model, history, t0, cfg, cfg.num_samples, key)
    ok = ~res.censored[0]
    if not ok.any():
        raise AllDrawsCensored(f"all {cfg.num_samples} draws hit max_rounds={cfg.max_rounds}")
    return TimePrediction(
        float(res.times[0, ok].mean()), float(1.0 - ok.mean()), cfg.num_samples, res.violations
    )


def mbr_predict_type(model, history, t_true):
    """``argmax_k lambda_k(t_true | history)``; ties go to the smallest id."""
    model = as_model(model)
    anchors, t_last = _history_anchor(model, history)
    if t_true <= t_last and len(history):
        raise TimeBeforeHistory(f"t_true={t_true} not after last history event {t_last}")
    lam = _total_intensity(model, anchors, np.array([0]), np.array([[t_true - t_last]]))
    return int(np.argmax(lam[0, 0]))


@dataclass
class NextEventPredictions:
    """Per-sequence MBR predictions for every event of a dataset."""

    pred_times: list
    pred_types: list
    true_times: list
    true_types: list
    num_censored_draws: int
    num_draws: int
    num_unpredicted: int
    violations: int

    @property
    def censoring_rate(self):
        return self.num_censored_draws / max(self.num_draws, 1)


def predict_next_events(model, sequences, cfg=None, batch_size=64, seq_ids=None):
    """MBR time and type predictions for each event given its true history.

    The time of event ``i`` is the mean of thinning draws started at event
    ``i-1`` (or 0); its type is the argmax intensity at the true time. Events
    whose draws are all censored get a NaN time and count as unpredicted.
    """
    model = as_model(model)
    cfg = cfg or ThinningConfig()
    seqs = list(sequences)
    seq_ids = list(range(len(seqs))) if seq_ids is None else list(seq_ids)
    pred_t = [None] * len(seqs)
    pred_k = [None] * len(seqs)
    n_cens = n_draws = n_unpred = viol = 0
    order = sorted((i for i in range(len(seqs)) if len(seqs[i])), key=lambda i: len(seqs[i]))
    for i in range(len(seqs)):
        if not len(seqs[i]):
            pred_t[i], pred_k[i] = np.zeros(0), np.zeros(0, dtype=np.int64)
    for lo in range(0, len(order), batch_size):
        idx = order[lo:lo + batch_size]
        batch = pad_batch([seqs[i] for i in idx], model.num_types)
        with ad.no_grad():
            state = model.forward(batch)
            L = batch.max_len
            lam = model.intensities_at_elapsed(state, batch.dtimes[..., None], rows=slice(0, L)).data
        types_hat = np.argmax(lam[:, :, 0], axis=-1)
        bb, ii = np.nonzero(batch.seq_mask)
        anchors = {k: v.data[bb, ii] for k, v in state.anchors.items()}
        a_times = state.anchor_times[bb, ii]
        keys = [(cfg.rng_seed, seq_ids[idx[b]], i) for b, i in zip(bb, ii)]
        res = sample_rows(model, anchors, a_times, a_times, keys, cfg, cfg.num_samples)
        ok = ~res.censored
        with np.errstate(invalid="ignore"):
            means = np.where(ok.any(1), np.nansum(np.where(ok, res.times, 0.0), 1) / np.maximum(ok.sum(1), 1), np.nan)
        n_cens += int(res.censored.sum())
        n_draws += res.censored.size
        n_unpred += int((~ok.any(1)).sum())
        viol += res.violations
        tt = np.full(batch.times.shape, np.nan)
        tt[bb, ii] = means
        for b, i in enumerate(idx):
            n = len(seqs[i])
            pred_t[i] = tt[b, :n]
            pred_k[i] = types_hat[b, :n]
    return NextEventPredictions(
        pred_t, pred_k, [s.times for s in seqs], [s.types for s in seqs], n_cens, n_draws, n_unpred, viol
    )


def rollout_horizon(model, prefix, horizon_end, cfg=None, key=None):
    """Autoregressive prediction of all events on ``(T, T']`` after ``prefix``.

    ``T`` is ``prefix.t_end``. Stops at the first sampled time beyond ``T'``
    (that event is discarded) or after ``cfg.max_events`` events.
    """
    cfg = cfg or ThinningConfig()
    key = (cfg.rng_seed,) if key is None else tuple(key)
    return rollout_batch(model, [prefix], [horizon_end], cfg, [key])[0]


def rollout_batch(model, prefixes, horizon_ends, cfg=None, keys=None):
    """Rollouts for many prefixes in lockstep; step ``j`` of row ``r`` draws
    from the substream ``keys[r] + (j,)``."""
    model = as_model(model)
    cfg = cfg or ThinningConfig()
    prefixes = list(prefixes)
    ends = np.asarray(horizon_ends, dtype=np.float64)
    keys = [(cfg.rng_seed, r) for r in range(len(prefixes))] if keys is None else [tuple(k) for k in keys]
    starts = np.array([p.t_end for p in prefixes], dtype=np.float64)
    if np.any(ends < starts):
        raise ValueError("horizon end precedes the prefix end")
    out_t = [[] for _ in prefixes]
    out_k = [[] for _ in prefixes]
    if not prefixes:
        return []
    batch = pad_batch(prefixes, model.num_types)
    with ad.no_grad():
        state = model.forward(batch)
    rows = np.arange(len(prefixes))
    anchors = {k: v.data[rows, batch.seq_lens] for k, v in state.anchors.items()}
    a_times = state.anchor_times[rows, batch.seq_lens]
    cur = starts.copy()
    active = ends > starts
    step = 0
    while active.any():
        act = np.nonzero(active)[0]
        sub = {k: v[act] for k, v in anchors.items()}
        res = sample_rows(model, sub, a_times[act], cur[act], [keys[r] + (step,) for r in act], cfg, 1)
        if res.censored.any():
            r = act[int(np.argmax(res.censored[:, 0]))]
            raise MaxRoundsExceeded(f"rollout {r} hit max_rounds={cfg.max_rounds} at t={cur[r]:.6g}")
        t_new, k_new = res.times[:, 0], res.types[:, 0]
        keep = t_new <= ends[act]
        for j, r in enumerate(act):
            if keep[j]:
                out_t[r].append(t_new[j])
                out_k[r].append(k_new[j])
        grow = act[keep]
        if len(grow):
            with ad.no_grad():
                dt = t_new[keep] - a_times[grow]
                emb = model.embed(dt[:, None], k_new[keep][:, None])
                e = None if emb is None else emb[:, 0]
                new = model.advance(_tensors(anchors, grow, expand=False), dt, k_new[keep], e)
            for k, v in new.items():
                anchors[k][grow] = v.data
            a_times[grow] = t_new[keep]
            cur[grow] = t_new[keep]
        active[act[~keep]] = False
        active &= np.array([len(t) < cfg.max_events for t in out_t])
        step += 1
    return [
        EventSequence(np.array(t), np.array(k, dtype=np.int64), t_end=float(e))
        for t, k, e in zip(out_t, out_k, ends)
    ]
