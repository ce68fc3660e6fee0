"""ODETPP: hidden state flows under a learned ODE between events.

``dh/dt = tanh(W2 tanh(W1 h + b1) + b2)``, integrated with fixed-step
classical RK4 (``ode_steps`` steps per interval); events apply a jump network.
Intensity head is softplus.

The whole integration is one tape node: the forward pass keeps only its input
state and the backward pass recomputes the trajectory and runs the discrete
adjoint of RK4, which keeps memory flat in the number of steps.
"""

import numpy as np

from .. import autodiff as ad
from .base import TPPModel


def _field(h, w1, b1, w2, b2):
    z = np.tanh(h @ w1 + b1)
    return np.tanh(z @ w2 + b2), z


def _field_vjp(h, z, out, g, w1, w2, acc):
    ga2 = g * (1.0 - out * out)
    gz = ga2 @ w2.T
    ga1 = gz * (1.0 - z * z)
    acc[2] += z.reshape(-1, z.shape[-1]).T @ ga2.reshape(-1, ga2.shape[-1])
    acc[3] += ga2.reshape(-1, ga2.shape[-1]).sum(axis=0)
    acc[0] += h.reshape(-1, h.shape[-1]).T @ ga1.reshape(-1, ga1.shape[-1])
    acc[1] += ga1.reshape(-1, ga1.shape[-1]).sum(axis=0)
    return ga1 @ w1.T


def _rk4_step(h, dt, w):
    k1, z1 = _field(h, *w)
    x2 = h + k1 * (dt / 2)
    k2, z2 = _field(x2, *w)
    x3 = h + k2 * (dt / 2)
    k3, z3 = _field(x3, *w)
    x4 = h + k3 * dt
    k4, z4 = _field(x4, *w)
    h_next = h + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6)
    return h_next, ((h, z1, k1), (x2, z2, k2), (x3, z3, k3), (x4, z4, k4))


def ode_flow(h, duration, w1, b1, w2, b2, steps):
    """RK4 flow of ``h`` over ``duration`` (broadcast over leading dims)."""
    h = ad.as_tensor(h)
    dt = np.asarray(duration, dtype=np.float64)[..., None] / steps
    shape = np.broadcast_shapes(h.shape, dt.shape[:-1] + (h.shape[-1],))
    h0 = np.broadcast_to(h.data, shape).copy()
    params = (w1, b1, w2, b2)
    wd = tuple(p.data for p in params)
    x = h0
    for _ in range(steps):
        x, _ = _rk4_step(x, dt, wd)

    def vjp(g):
        traj = [h0]
        for _ in range(steps - 1):
            traj.append(_rk4_step(traj[-1], dt, wd)[0])
        acc = [np.zeros_like(a) for a in wd]
        gh = g
        for s in reversed(range(steps)):
            _, stages = _rk4_step(traj[s], dt, wd)
            gk = [gh * (dt / 6), gh * (dt / 3), gh * (dt / 3), gh * (dt / 6)]
            g_next = gh.copy()
            for j in (3, 2, 1, 0):
                xin, z, k = stages[j]
                gx = _field_vjp(xin, z, k, gk[j], wd[0], wd[2], acc)
                g_next += gx
                if j == 3:
                    gk[2] = gk[2] + gx * dt
                elif j > 0:
                    gk[j - 1] = gk[j - 1] + gx * (dt / 2)
            gh = g_next
        return (ad.unbroadcast(gh, h.shape),) + tuple(acc)

    return ad.custom(x, (h,) + params, vjp)


class ODETPP(TPPModel):
    model_id = "odetpp"

    def build(self):
        D, K, n = self.config.hidden_size, self.num_types, self.config.num_layers
        self.add_param("ode_w1", (D, D))
        self.add_param("ode_b1", (D,), zeros=True)
        self.add_param("ode_w2", (D, D))
        self.add_param("ode_b2", (D,), zeros=True)
        for l in range(n):
            self.add_param(f"jump_w{l}", (2 * D if l == 0 else D, D))
            self.add_param(f"jump_b{l}", (D,), zeros=True)
        self.add_param("h_init", (D,), zeros=True)
        self.add_param("out_w", (D, K))
        self.add_param("out_b", (K,), zeros=True)

    def flow(self, h, duration, steps=None):
        """Integrate from ``h`` over ``duration`` with ``steps`` RK4 steps."""
        steps = steps or self.config.ode_steps
        return ode_flow(h, duration, self.p("ode_w1"), self.p("ode_b1"),
                        self.p("ode_w2"), self.p("ode_b2"), steps)

    def initial_anchor(self, batch_size):
        return {"h": ad.broadcast_to(ad.tanh(self.p("h_init")), (batch_size, self.config.hidden_size))}

    def advance(self, anchor, dt, types, emb):
        h_minus = self.flow(anchor["h"], dt)
        x = ad.concat([emb, h_minus], axis=-1)
        for l in range(self.config.num_layers):
            x = ad.tanh(ad.linear(x, self.p(f"jump_w{l}"), self.p(f"jump_b{l}")))
        return {"h": x}

    def intensity_from_anchor(self, anchor, elapsed):
        h = self.flow(anchor["h"], elapsed)
        return ad.softplus(ad.linear(h, self.p("out_w"), self.p("out_b")))
