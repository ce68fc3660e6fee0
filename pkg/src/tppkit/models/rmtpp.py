"""RMTPP: tanh RNN history encoder with an exponential-affine intensity.

Between events ``lambda_k(t) = exp(v_k . h_i + w_k (t - t_i) + b_k)``.
"""

import numpy as np

from .. import autodiff as ad
from .base import TPPModel, add_rnn_params, rnn_stack


class RMTPP(TPPModel):
    model_id = "rmtpp"

    def build(self):
        D, K, n = self.config.hidden_size, self.num_types, self.config.num_layers
        add_rnn_params(self, "rnn", D, D, n)
        for l in range(n):
            self.add_param(f"h_init{l}", (D,), zeros=True)
        self.add_param("head_v", (D, K))
        self.add_param("head_w", (K,), zeros=True)
        self.add_param("head_b", (K,), zeros=True)

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

    def _base(self, h):
        return ad.linear(h, self.p("head_v"), self.p("head_b"))

    def intensity_from_anchor(self, anchor, elapsed):
        elapsed = np.asarray(elapsed, dtype=np.float64)[..., None]
        return ad.exp(self._base(anchor["h"]) + self.p("head_w") * elapsed)

    def interval_integral(self, state, lengths):
        """Closed form ``sum_k (lambda_k(t) - lambda_k(t_i)) / w_k`` per anchor."""
        base = ad.exp(self._base(state.anchors["h"]))  # (B, L+1, K)
        w = self.p("head_w")
        wl = w * lengths[..., None]
        # expm1(w l) / w, continued to l at w = 0
        wd = w.data
        small = np.abs(wd) < 1e-8
        safe_w = np.where(small, 1.0, wd)
        ratio_data = np.where(small[None, None], lengths[..., None], np.expm1(wl.data) / safe_w)
        # derivative of expm1(w l)/w in w: (l e^{wl} w - expm1(wl)) / w^2 ; l^2/2 at w = 0
        dratio = np.where(
            small[None, None],
            0.5 * lengths[..., None] ** 2,
            (lengths[..., None] * np.exp(wl.data) * safe_w - np.expm1(wl.data)) / safe_w**2,
        )
        ratio = ad.custom(ratio_data, (w,), lambda g: (ad.unbroadcast(g * dratio, w.shape),))
        return ad.sum_(base * ratio, axis=-1)
