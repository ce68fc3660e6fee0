"""IFTPP: intensity-free model with a log-normal mixture over inter-event times.

With ``y = (log tau - m) / s`` standardised by training-set statistics,

    p(tau | h) = sum_c w_c N(y; mu_c, sigma_c) / (s tau),
    P(k | h)   = softmax(U h + c)_k,

so the log-likelihood needs no integral. The hazard ``p / S`` times
``P(k | h)`` gives an equivalent intensity for thinning.
"""

import numpy as np

from .. import autodiff as ad
from .base import LossOutput, TPPModel, add_rnn_params, rnn_stack

LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)
# guards log(0) only; any positive float64 gap keeps its exact density
MIN_TAU = 1e-300


class IFTPP(TPPModel):
    model_id = "iftpp"
    analytic_likelihood = True

    def build(self):
        D, K, C = self.config.hidden_size, self.num_types, self.config.num_mix_components
        n = self.config.num_layers
        add_rnn_params(self, "rnn", D, D, n)
        for l in range(n):
            self.add_param(f"h_init{l}", (D,), zeros=True)
        for head in ("mix_logit", "mix_mean", "mix_logscale"):
            self.add_param(f"{head}_w", (D, C))
            self.add_param(f"{head}_b", (C,), zeros=True)
        self.add_param("type_w", (D, K))
        self.add_param("type_b", (K,), zeros=True)

    def fit_data_stats(self, dataset):
        gaps = np.concatenate([s.dtimes for s in dataset.sequences if len(s)] or [np.ones(1)])
        logs = np.log(np.maximum(gaps, MIN_TAU))
        self.config.log_dtime_mean = float(logs.mean())
        self.config.log_dtime_std = float(max(logs.std(), 1e-3))

    def _layers(self):
        return [f"h{l}" for l in range(self.config.num_layers)]

    def initial_anchor(self, batch_size):
        anchor = {}
        for l, name in enumerate(self._layers()):
            anchor[name] = ad.broadcast_to(self.p(f"h_init{l}"), (batch_size, self.config.hidden_size))
        anchor["h"] = anchor[self._layers()[-1]]
        return anchor

    def advance(self, anchor, dt, types, emb):
        hs = rnn_stack(self, "rnn", emb, [anchor[n] for n in self._layers()])
        out = dict(zip(self._layers(), hs))
        out["h"] = hs[-1]
        return out

    def mixture(self, h):
        """(log weights, means, log scales) over the standardised log-time."""
        logw = ad.log_softmax(ad.linear(h, self.p("mix_logit_w"), self.p("mix_logit_b")), axis=-1)
        mean = ad.linear(h, self.p("mix_mean_w"), self.p("mix_mean_b"))
        logscale = ad.linear(h, self.p("mix_logscale_w"), self.p("mix_logscale_b"))
        return logw, mean, logscale

    def _standardise(self, tau):
        tau = np.maximum(np.asarray(tau, dtype=np.float64), MIN_TAU)
        m, s = self.config.log_dtime_mean, self.config.log_dtime_std
        return (np.log(tau) - m) / s, np.log(tau) + np.log(s)

    def log_density(self, h, tau):
        """log p(tau | h); ``tau`` broadcasts against h's leading dims."""
        logw, mean, logscale = self.mixture(h)
        y, jac = self._standardise(tau)
        z = (y[..., None] - mean) * ad.exp(ad.neg(logscale))
        comp = logw - ad.square(z) * 0.5 - logscale - LOG_SQRT_2PI
        return ad.logsumexp(comp, axis=-1) - jac

    def log_survival(self, h, tau):
        """log P(next gap > tau | h)."""
        logw, mean, logscale = self.mixture(h)
        y, _ = self._standardise(tau)
        z = (y[..., None] - mean) * ad.exp(ad.neg(logscale))
        return ad.logsumexp(logw + ad.log_ndtr(ad.neg(z)), axis=-1)

    def log_type_probs(self, h):
        return ad.log_softmax(ad.linear(h, self.p("type_w"), self.p("type_b")), axis=-1)

    def intensity_from_anchor(self, anchor, elapsed):
        h = anchor["h"]
        elapsed = np.asarray(elapsed, dtype=np.float64)
        hazard = self.log_density(h, elapsed) - self.log_survival(h, elapsed)
        return ad.exp(ad.expand_dims(hazard, -1) + self.log_type_probs(h))

    def loglike_loss(self, batch, mc_cfg=None, rng=None, train=True):
        state = self.forward(batch)
        B, L = batch.times.shape
        K = self.num_types
        h_all = state.anchors["h"]
        mask = batch.seq_mask
        if L:
            h_prev = h_all[:, :L]
            tau = np.where(mask, batch.dtimes, 1.0)
            time_terms = ad.where(mask, self.log_density(h_prev, tau), 0.0)
            onehot = np.eye(K + 1)[np.minimum(batch.types, K)][..., :K]
            type_terms = ad.sum_(self.log_type_probs(h_prev) * onehot, axis=-1)
            ev_time = ad.sum_(time_terms, axis=1)
            ev_type = ad.sum_(type_terms, axis=1)
        else:
            ev_time = ev_type = ad.Tensor(np.zeros(B))
        # no event in (t_I, T]
        rows = np.arange(B)
        h_last = ad.getitem(h_all, (rows, batch.seq_lens))
        last_t = state.anchor_times[rows, batch.seq_lens]
        tail = batch.t_end - last_t
        has_tail = tail > 0
        surv = ad.where(has_tail, self.log_survival(h_last, np.where(has_tail, tail, 1.0)), 0.0)
        time_ll = ev_time + surv
        seq_ll = time_ll + ev_type
        n = max(batch.num_events, 1)
        nll = ad.neg(ad.sum_(seq_ll)) / float(n)
        return LossOutput(nll, seq_ll.data.copy(), time_ll.data.copy(), ev_type.data.copy(), batch.num_events)
