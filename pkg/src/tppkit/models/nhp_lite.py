"""NHP-lite: continuous-time state that decays toward a learned target.

At event ``i`` the update network reads the event embedding and the decayed
state ``h(t_i-)`` and emits a new state ``h_i``, a target ``hbar_i`` and a
positive rate ``delta_i``. Until the next event

    h(t) = hbar_i + (h_i - hbar_i) * exp(-delta_i (t - t_i)),

and ``lambda_k(t) = softplus(w_k . h(t) + b_k)``.
"""

import numpy as np

from .. import autodiff as ad
from .base import TPPModel


class NHPLite(TPPModel):
    model_id = "nhp_lite"

    def build(self):
        D, K, n = self.config.hidden_size, self.num_types, self.config.num_layers
        for l in range(n - 1):
            self.add_param(f"mlp_w{l}", (2 * D if l == 0 else D, D))
            self.add_param(f"mlp_b{l}", (D,), zeros=True)
        in_size = 2 * D if n == 1 else D
        for head in ("state", "target", "decay"):
            self.add_param(f"{head}_w", (in_size, D))
            self.add_param(f"{head}_b", (D,), zeros=True)
        for name in ("h_init", "target_init", "decay_init"):
            self.add_param(name, (D,), zeros=True)
        self.add_param("out_w", (D, K))
        self.add_param("out_b", (K,), zeros=True)

    def initial_anchor(self, batch_size):
        D = self.config.hidden_size
        return {
            "h": ad.broadcast_to(ad.tanh(self.p("h_init")), (batch_size, D)),
            "target": ad.broadcast_to(ad.tanh(self.p("target_init")), (batch_size, D)),
            "decay": ad.broadcast_to(ad.softplus(self.p("decay_init")), (batch_size, D)),
        }

    @staticmethod
    def _decayed(anchor, elapsed):
        # elapsed broadcasts against the leading dims of the anchor tensors
        factor = ad.exp(ad.neg(anchor["decay"]) * elapsed)
        # written so that zero elapsed time returns h exactly
        return anchor["h"] * factor + anchor["target"] * (1.0 - factor)

    def advance(self, anchor, dt, types, emb):
        h_minus = self._decayed(anchor, np.asarray(dt, dtype=np.float64)[:, None])
        x = ad.concat([emb, h_minus], axis=-1)
        for l in range(self.config.num_layers - 1):
            x = ad.tanh(ad.linear(x, self.p(f"mlp_w{l}"), self.p(f"mlp_b{l}")))
        return {
            "h": ad.tanh(ad.linear(x, self.p("state_w"), self.p("state_b"))),
            "target": ad.tanh(ad.linear(x, self.p("target_w"), self.p("target_b"))),
            "decay": ad.softplus(ad.linear(x, self.p("decay_w"), self.p("decay_b"))),
        }

    def state_at(self, anchor, elapsed):
        return self._decayed(anchor, np.asarray(elapsed, dtype=np.float64)[..., None])

    def intensity_from_anchor(self, anchor, elapsed):
        h = self.state_at(anchor, elapsed)
        return ad.softplus(ad.linear(h, self.p("out_w"), self.p("out_b")))
