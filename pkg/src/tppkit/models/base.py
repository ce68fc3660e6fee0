"""Common machinery for autoregressive TPP models.

A model processes a padded batch left to right. After each event it holds an
*anchor*: whatever state it needs to evaluate intensities at any later time
until the next event. Anchor 0 sits at the window start (t = 0), anchor ``i``
at event ``i``, so a batch of max length ``L`` carries ``L + 1`` anchors.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from .. import autodiff as ad
from ..data import pad_batch
from ..errors import SampleTimeBeforeAnchor, TypeOutOfRange

TABLE5_HIDDEN = {"nhp_lite": 64}


@dataclass
class ModelConfig:
    model_id: str = "rmtpp"
    num_event_types: int = 1
    hidden_size: int = 32
    time_emb_size: int = 16
    num_layers: int = 2
    num_mix_components: int = 8
    ode_steps: int = 10
    seed: int = 0
    # log inter-event time statistics; IFTPP standardises log(tau) with them
    log_dtime_mean: float = 0.0
    log_dtime_std: float = 1.0

    def __post_init__(self):
        for name in ("hidden_size", "time_emb_size", "num_layers", "num_event_types",
                     "num_mix_components", "ode_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.log_dtime_std <= 0:
            raise ValueError("log_dtime_std must be positive")

    @classmethod
    def for_model(cls, model_id, **kw):
        kw.setdefault("hidden_size", TABLE5_HIDDEN.get(model_id, 32))
        return cls(model_id=model_id, **kw)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self):
        return asdict(self)


@dataclass
class ModelState:
    """Per-anchor model state for a padded batch.

    ``anchors`` maps names (``"h"``, ``"target"``, ``"decay"``, ...) to tensors
    of shape (B, L+1, ...); padded anchors are zero.
    """

    anchors: dict
    anchor_times: np.ndarray
    anchor_mask: np.ndarray
    embeddings: object = None

    @property
    def hidden(self):
        return self.anchors.get("h")

    def row(self, b, i):
        """Anchor ``i`` of sequence ``b`` as constant (1, ...) arrays."""
        return {k: ad.Tensor(v.data[b, i][None]) for k, v in self.anchors.items()}


@dataclass
class LossOutput:
    nll: ad.Tensor
    seq_ll: np.ndarray
    time_ll: np.ndarray
    type_ll: np.ndarray
    num_events: int


def sinusoidal_encoding(x, size):
    """Fixed sin/cos features of ``x`` with geometrically spaced frequencies."""
    half = size // 2
    freqs = 1.0 / (10.0 ** (np.arange(half) * 4.0 / max(half, 1)))
    ang = np.asarray(x)[..., None] * freqs
    enc = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)
    if enc.shape[-1] < size:
        enc = np.concatenate([enc, np.asarray(x)[..., None]], axis=-1)
    return enc


class TPPModel:
    """Base class; subclasses define the anchor recursion and intensity head."""

    model_id = None
    #: True when the model computes the likelihood without intensities (IFTPP)
    analytic_likelihood = False
    #: True when the compensator has a closed form used for training
    closed_form_integral = False
    #: True when the model embeds events (type table + time encoding)
    uses_embeddings = True

    def __init__(self, config):
        self.config = config
        self.num_types = config.num_event_types
        self._params = {}
        self._rng = np.random.default_rng(config.seed)
        if self.uses_embeddings:
            E = config.time_emb_size
            # row K is the pad type
            self.add_param("type_emb", (self.num_types + 1, E), fan_in=E)
            self.add_param("emb_proj_w", (2 * E, config.hidden_size))
            self.add_param("emb_proj_b", (config.hidden_size,), zeros=True)
        self.build()

    # -- parameters ------------------------------------------------------------
    def add_param(self, name, shape, zeros=False, fan_in=None):
        if zeros:
            data = np.zeros(shape)
        else:
            fan_in = fan_in or shape[0]
            a = 1.0 / np.sqrt(fan_in)
            data = self._rng.uniform(-a, a, size=shape)
        p = ad.parameter(data)
        self._params[name] = p
        return p

    def p(self, name):
        return self._params[name]

    def named_parameters(self):
        return list(self._params.items())

    def parameters(self):
        return list(self._params.values())

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters()))

    def get_flat(self):
        return np.concatenate([p.data.ravel() for p in self.parameters()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.num_parameters():
            raise ValueError(f"expected {self.num_parameters()} values, got {flat.size}")
        i = 0
        for p in self.parameters():
            p.data = flat[i:i + p.size].reshape(p.shape).copy()
            i += p.size

    def zero_grad(self):
        ad.zero_grad(self.parameters())

    def fit_data_stats(self, dataset):
        """Hook for models that normalise with training-set statistics."""

    # -- subclass API ------------------------------------------------------------
    def build(self):
        raise NotImplementedError

    def initial_anchor(self, batch_size):
        raise NotImplementedError

    def advance(self, anchor, dt, types, emb):
        """Evolve ``anchor`` over ``dt`` (B,) and absorb events of ``types``."""
        raise NotImplementedError

    def intensity_from_anchor(self, anchor, elapsed):
        """Intensities (..., K) at ``elapsed`` time after an anchor."""
        raise NotImplementedError

    def interval_integral(self, state, lengths):
        """Closed-form compensator of each anchor's interval, (B, L+1)."""
        raise NotImplementedError

    def upper_bound(self, anchor, elapsed):
        """Exact bound on total intensity after ``elapsed``, or None."""
        return None

    # -- shared pipeline ---------------------------------------------------------
    def check_batch(self, batch):
        real = batch.types[batch.seq_mask]
        if real.size and (real.min() < 0 or real.max() >= self.num_types):
            raise TypeOutOfRange(f"event types must lie in [0, {self.num_types})")

    def embed(self, dtimes, types):
        """Event embedding: type vector and time encoding, projected to D."""
        if not self.uses_embeddings:
            return None
        types = np.minimum(np.asarray(types), self.num_types)
        te = ad.getitem(self.p("type_emb"), types)
        enc = ad.Tensor(sinusoidal_encoding(dtimes, self.config.time_emb_size))
        x = ad.concat([te, enc], axis=-1)
        return ad.linear(x, self.p("emb_proj_w"), self.p("emb_proj_b"))

    def forward(self, batch):
        self.check_batch(batch)
        B, L = batch.times.shape
        emb = self.embed(batch.dtimes, batch.types)
        anchor = self.initial_anchor(B)
        steps = [anchor]
        for i in range(L):
            e_i = None if emb is None else emb[:, i]
            anchor = self.advance(anchor, batch.dtimes[:, i], batch.types[:, i], e_i)
            steps.append(anchor)
        mask = batch.anchor_mask()
        anchors = {}
        for name in steps[0]:
            stacked = ad.stack([s[name] for s in steps], axis=1)
            m = mask.reshape(mask.shape + (1,) * (stacked.ndim - 2))
            anchors[name] = stacked * m
        return ModelState(anchors, batch.anchor_times(), mask, emb)

    def intensities_at_elapsed(self, state, elapsed, rows=None):
        """Intensities (B, R, S, K) at ``elapsed`` (B, R, S) after anchors ``rows``."""
        sl = slice(None) if rows is None else rows
        anchor = {k: ad.expand_dims(v[:, sl], 2) for k, v in state.anchors.items()}
        return self.intensity_from_anchor(anchor, elapsed)

    def compute_intensities_at_sample_times(self, batch, sample_times, state=None):
        """Intensities (B, L+1, S, K) at absolute ``sample_times`` (B, L+1, S).

        Row ``i`` is evaluated from anchor ``i``, i.e. conditioned on events 1..i.
        """
        if state is None:
            state = self.forward(batch)
        sample_times = np.asarray(sample_times, dtype=np.float64)
        elapsed = sample_times - state.anchor_times[..., None]
        if np.any((elapsed < 0) & state.anchor_mask[..., None]):
            raise SampleTimeBeforeAnchor("sample time precedes its anchor event")
        return self.intensities_at_elapsed(state, np.maximum(elapsed, 0.0))

    def loglike_loss(self, batch, mc_cfg=None, rng=None, train=True):
        """NLL per event (differentiable) and per-sequence log-likelihoods."""
        from ..likelihood import MCConfig, mc_integral

        state = self.forward(batch)
        L, K = batch.max_len, self.num_types
        if L:
            lam = self.intensities_at_elapsed(state, batch.dtimes[..., None], rows=slice(0, L))
            lam = ad.reshape(lam, (batch.batch_size, L, K))
            onehot = np.eye(K + 1)[np.minimum(batch.types, K)][..., :K]
            lam_sel = ad.sum_(lam * onehot, axis=-1)
            lam_tot = ad.sum_(lam, axis=-1)
            mask = batch.seq_mask
            log_sel = ad.log(ad.where(mask, lam_sel, 1.0))
            log_tot = ad.log(ad.where(mask, lam_tot, 1.0))
            ev_sel = ad.sum_(log_sel, axis=1)
            ev_tot = ad.sum_(log_tot, axis=1)
        else:
            ev_sel = ev_tot = ad.Tensor(np.zeros(batch.batch_size))
        if self.closed_form_integral:
            lengths = batch.interval_ends() - batch.anchor_times()
            integral = ad.sum_(self.interval_integral(state, lengths), axis=1)
        else:
            mc_cfg = mc_cfg or MCConfig()
            fn = lambda st: self.intensities_at_elapsed(state, st - state.anchor_times[..., None])
            integral = mc_integral(fn, batch, mc_cfg, rng=rng, train=train)
        seq_ll = ev_sel - integral
        n = max(batch.num_events, 1)
        nll = ad.neg(ad.sum_(seq_ll)) / float(n)
        time_ll = ev_tot.data - integral.data
        return LossOutput(nll, seq_ll.data.copy(), time_ll, ev_sel.data - ev_tot.data, batch.num_events)

    # -- single-history queries (sampling) -----------------------------------------
    def anchor_for(self, history):
        """State after the last event of ``history`` and that event's time."""
        with ad.no_grad():
            batch = pad_batch([history], self.num_types)
            state = self.forward(batch)
        n = len(history)
        t = float(history.times[-1]) if n else 0.0
        return state.row(0, n), t

    def extend_anchor(self, anchor, anchor_time, t, k):
        """Anchor after appending event ``(t, k)`` to a history."""
        with ad.no_grad():
            dt = np.array([t - anchor_time])
            types = np.array([k])
            emb = self.embed(dt[:, None], types[:, None])
            e = None if emb is None else emb[:, 0]
            new = self.advance(anchor, dt, types, e)
        return {k_: ad.Tensor(v.data) for k_, v in new.items()}

    def query(self, anchor, anchor_time, times):
        """Intensities (n, K) at absolute ``times`` after an anchor (no grad)."""
        elapsed = np.asarray(times, dtype=np.float64) - anchor_time
        if np.any(elapsed < 0):
            raise SampleTimeBeforeAnchor("query time precedes the anchor event")
        with ad.no_grad():
            return self.intensity_from_anchor(anchor, elapsed).data


def rnn_stack(model, prefix, x, h_prev_layers):
    """Stacked tanh RNN cell; returns the list of new per-layer states."""
    out, inp = [], x
    for l, h in enumerate(h_prev_layers):
        z = ad.linear(inp, model.p(f"{prefix}_wx{l}"), model.p(f"{prefix}_b{l}"))
        z = z + ad.matmul(h, model.p(f"{prefix}_wh{l}"))
        h_new = ad.tanh(z)
        out.append(h_new)
        inp = h_new
    return out


def add_rnn_params(model, prefix, in_size, hidden, layers):
    for l in range(layers):
        model.add_param(f"{prefix}_wx{l}", (in_size if l == 0 else hidden, hidden))
        model.add_param(f"{prefix}_wh{l}", (hidden, hidden))
        model.add_param(f"{prefix}_b{l}", (hidden,), zeros=True)
