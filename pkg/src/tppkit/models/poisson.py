"""Homogeneous Poisson baseline: constant per-type rates."""

import numpy as np

from .. import autodiff as ad
from .base import TPPModel


class PoissonModel(TPPModel):
    model_id = "poisson"
    closed_form_integral = True
    uses_embeddings = False

    def build(self):
        self.add_param("raw_rate", (self.num_types,), zeros=True)

    @classmethod
    def with_rates(cls, rates):
        from .base import ModelConfig

        rates = np.atleast_1d(np.asarray(rates, dtype=np.float64))
        model = cls(ModelConfig(model_id="poisson", num_event_types=len(rates)))
        model.p("raw_rate").data = np.log(rates)
        return model

    def rates(self):
        return ad.exp(self.p("raw_rate"))

    def initial_anchor(self, batch_size):
        return {}

    def advance(self, anchor, dt, types, emb):
        return {}

    def intensity_from_anchor(self, anchor, elapsed):
        shape = np.shape(elapsed) + (self.num_types,)
        return ad.broadcast_to(self.rates(), shape)

    def interval_integral(self, state, lengths):
        return ad.sum_(self.rates()) * np.asarray(lengths, dtype=np.float64)

    def upper_bound(self, anchor, elapsed):
        return np.full(np.shape(elapsed), self.rates().data.sum())
