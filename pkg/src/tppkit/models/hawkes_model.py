"""Trainable exponential-kernel Hawkes process behind the model interface."""

import numpy as np

from .. import autodiff as ad
from ..hawkes import HawkesParams
from .base import TPPModel


def _inv_softplus(x):
    x = np.maximum(np.asarray(x, dtype=np.float64), 1e-300)
    return np.where(x > 30, x, np.log(np.expm1(np.minimum(x, 30))))


class HawkesModel(TPPModel):
    """Parameters are softplus-transformed so gradient steps stay feasible.

    The anchor ``R[k, j]`` holds ``sum_i exp(-beta[k, j] (t - t_i))`` over past
    events of source type ``j``.
    """

    model_id = "hawkes"
    closed_form_integral = True
    uses_embeddings = False

    def build(self):
        K = self.num_types
        self.add_param("raw_mu", (K,), zeros=True)
        self.add_param("raw_alpha", (K, K), zeros=True)
        self.add_param("raw_beta", (K, K), zeros=True)

    @classmethod
    def from_params(cls, params, config=None, closed_form=True):
        from .base import ModelConfig

        config = config or ModelConfig(model_id="hawkes", num_event_types=params.num_types)
        model = cls(config)
        model.p("raw_mu").data = _inv_softplus(params.mu)
        model.p("raw_alpha").data = _inv_softplus(params.alpha)
        model.p("raw_beta").data = _inv_softplus(params.beta)
        model.closed_form_integral = closed_form
        return model

    def mu(self):
        return ad.softplus(self.p("raw_mu"))

    def alpha(self):
        return ad.softplus(self.p("raw_alpha"))

    def beta(self):
        return ad.softplus(self.p("raw_beta"))

    def hawkes_params(self):
        with ad.no_grad():
            return HawkesParams(self.mu().data, self.alpha().data, self.beta().data)

    def initial_anchor(self, batch_size):
        K = self.num_types
        return {"R": ad.Tensor(np.zeros((batch_size, K, K)))}

    def advance(self, anchor, dt, types, emb):
        K = self.num_types
        dt = np.asarray(dt, dtype=np.float64)[:, None, None]
        jump = np.eye(K + 1)[np.minimum(types, K)][:, None, :K]  # pad type adds nothing
        return {"R": anchor["R"] * ad.exp(ad.neg(self.beta()) * dt) + jump}

    def intensity_from_anchor(self, anchor, elapsed):
        elapsed = np.asarray(elapsed, dtype=np.float64)[..., None, None]
        beta = self.beta()
        exc = ad.sum_(self.alpha() * beta * anchor["R"] * ad.exp(ad.neg(beta) * elapsed), axis=-1)
        return exc + self.mu()

    def interval_integral(self, state, lengths):
        lengths = np.asarray(lengths, dtype=np.float64)
        beta = self.beta()
        decay = 1.0 - ad.exp(ad.neg(beta) * lengths[..., None, None])
        exc = ad.sum_(self.alpha() * state.anchors["R"] * decay, axis=(-2, -1))
        return exc + ad.sum_(self.mu()) * lengths

    def upper_bound(self, anchor, elapsed):
        with ad.no_grad():
            lam = self.intensity_from_anchor(anchor, np.asarray(elapsed, dtype=np.float64))
        return lam.data.sum(axis=-1)
