"""Multivariate Hawkes process with exponential kernels.

The kernel from source type ``j`` to target type ``k`` is
``alpha[k, j] * beta[k, j] * exp(-beta[k, j] * dt)`` so that ``alpha[k, j]``
is the branching weight (the kernel integrates to it).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .data import EventSequence
from .errors import ExplosiveParams, TimeBeforeHistory, ZeroIntensityAtEvent


@dataclass(frozen=True, eq=False)
class HawkesParams:
    mu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        K = len(mu)
        alpha = np.asarray(self.alpha, dtype=np.float64).reshape(K, K)
        beta = np.asarray(self.beta, dtype=np.float64).reshape(K, K)
        for name, arr in (("mu", mu), ("alpha", alpha), ("beta", beta)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        if np.any(mu < 0) or np.any(alpha < 0):
            raise ValueError("mu and alpha must be nonnegative")
        if np.any(beta <= 0):
            raise ValueError("beta must be positive")
        for name, arr in (("mu", mu), ("alpha", alpha), ("beta", beta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.spectral_radius >= 1:
            warnings.warn(
                f"Hawkes params are non-stationary (spectral radius {self.spectral_radius:.3g})",
                RuntimeWarning,
                stacklevel=3,
            )

    @classmethod
    def univariate(cls, mu, alpha, beta):
        return cls([mu], [[alpha]], [[beta]])

    @property
    def num_types(self):
        return len(self.mu)

    @property
    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.alpha))))

    def stationary_rates(self):
        """Per-type stationary rates ``(I - alpha)^-1 mu`` (requires rho < 1)."""
        return np.linalg.solve(np.eye(self.num_types) - self.alpha, self.mu)

    def to_dict(self):
        return {"mu": self.mu.tolist(), "alpha": self.alpha.tolist(), "beta": self.beta.tolist()}


def _history_arrays(history):
    if history is None:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    if isinstance(history, EventSequence):
        return history.times, history.types
    times, types = history
    return np.asarray(times, dtype=np.float64), np.asarray(types, dtype=np.int64)


def intensity_at(params, times, types, t):
    """Vectorised intensities at query times ``t`` (shape (n,)) -> (n, K).

    Only history events strictly before each query time contribute.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    out = np.broadcast_to(params.mu, (len(t), params.num_types)).copy()
    if len(times) == 0:
        return out
    dt = t[:, None] - times[None, :]  # (n, I)
    live = dt > 0
    a = params.alpha[:, types]  # (K, I)
    b = params.beta[:, types]
    contrib = a[None] * b[None] * np.exp(-b[None] * np.where(live, dt, 0.0)[:, None, :])
    out += np.sum(np.where(live[:, None, :], contrib, 0.0), axis=2)
    return out


def hawkes_intensity(params, history, t):
    """Intensity vector at time ``t`` given a history prefix."""
    times, types = _history_arrays(history)
    if len(times) and t <= times[-1]:
        raise TimeBeforeHistory(f"query time {t} not after last history event {times[-1]}")
    return intensity_at(params, times, types, t)[0]


def hawkes_upper_bound(params, history, t0):
    """Total intensity just after ``t0``; bounds the total on ``[t0, inf)``
    until the next event because every kernel is non-increasing."""
    times, types = _history_arrays(history)
    if len(times) and t0 < times[-1]:
        raise TimeBeforeHistory(f"t0={t0} precedes last history event {times[-1]}")
    # events at exactly t0 count as history: evaluate at t0 with dt >= 0
    total = params.mu.sum()
    if len(times):
        dt = t0 - times
        b = params.beta[:, types]
        total += np.sum(params.alpha[:, types] * b * np.exp(-b * dt[None, :]))
    return float(total)


def event_intensities(params, seq):
    """Intensity of each observed event's own type at its time, via the
    decay recursion (O(I K^2))."""
    K = params.num_types
    state = np.zeros((K, K))  # sum_i exp(-beta (t - t_i)) split by (target, source)
    ab = params.alpha * params.beta
    out = np.empty(len(seq))
    prev = 0.0
    for i, (t, k) in enumerate(zip(seq.times, seq.types)):
        state *= np.exp(-params.beta * (t - prev))
        out[i] = params.mu[k] + np.dot(ab[k], state[k])
        state[:, k] += 1.0
        prev = t
    return out


def event_intensities_bruteforce(params, seq):
    """Direct O(I^2) sum; used to cross-check the recursion."""
    out = np.empty(len(seq))
    for i in range(len(seq)):
        t, k = seq.times[i], seq.types[i]
        src = seq.types[:i]
        b = params.beta[k, src]
        out[i] = params.mu[k] + np.sum(params.alpha[k, src] * b * np.exp(-b * (t - seq.times[:i])))
    return out


def hawkes_compensator(params, seq, t=None):
    """Total compensator ``int_0^t sum_k lambda_k`` for each ``t`` (default t_end)."""
    t = np.atleast_1d(seq.t_end if t is None else np.asarray(t, dtype=np.float64))
    out = params.mu.sum() * t
    if len(seq):
        # sum over targets of alpha[k, src] (1 - exp(-beta[k, src] (t - t_i)))
        dt = np.clip(t[:, None] - seq.times[None, :], 0.0, None)  # (n, I)
        a = params.alpha[:, seq.types]  # (K, I)
        b = params.beta[:, seq.types]
        out = out + np.sum(a[None] * -np.expm1(-b[None] * dt[:, None, :]), axis=(1, 2))
    return out


def hawkes_loglik(params, seq):
    """Exact log-likelihood (nats) of ``seq`` on ``[0, seq.t_end]``."""
    lam = event_intensities(params, seq)
    if np.any(lam <= 0):
        i = int(np.argmax(lam <= 0))
        raise ZeroIntensityAtEvent(f"zero intensity at event {i} (t={seq.times[i]})")
    return float(np.sum(np.log(lam)) - hawkes_compensator(params, seq)[0])


def rescaled_interarrivals(params, seq):
    """Compensator increments between consecutive events; i.i.d. Exp(1) under
    the true model."""
    if len(seq) == 0:
        return np.zeros(0)
    return np.diff(hawkes_compensator(params, seq, seq.times), prepend=0.0)


def event_cap(params, t_end):
    rho = params.spectral_radius
    if rho < 1:
        return int(np.ceil(10 * params.mu.sum() * t_end / (1 - rho)))
    return 10_000


def _simulate_one(params, t_end, rng, cap):
    K = params.num_types
    ab = params.alpha * params.beta
    state = np.zeros((K, K))
    t = 0.0
    times, types = [], []
    while True:
        lam_bar = params.mu.sum() + np.sum(ab * state)
        if lam_bar <= 0:
            break
        dt = rng.exponential(1.0 / lam_bar)
        if t + dt > t_end:
            break
        state *= np.exp(-params.beta * dt)
        t += dt
        lam = params.mu + np.sum(ab * state, axis=1)
        u = rng.uniform() * lam_bar
        total = lam.sum()
        if u > total:
            continue
        k = int(np.searchsorted(np.cumsum(lam), u, side="right"))
        k = min(k, K - 1)
        times.append(t)
        types.append(k)
        state[:, k] += 1.0
        if len(times) > cap:
            raise ExplosiveParams(
                f"generated more than {cap} events on [0, {t_end}] "
                f"(spectral radius {params.spectral_radius:.3g})"
            )
    return EventSequence(times, types, t_end=t_end)


def generate_hawkes(params, t_end, n_seqs, seed, cap=None):
    """Sample ``n_seqs`` i.i.d. sequences on ``[0, t_end]`` by Ogata thinning.

    Sequence ``i`` uses its own generator seeded by ``(seed, i)``.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if n_seqs < 1:
        raise ValueError("n_seqs must be >= 1")
    cap = event_cap(params, t_end) if cap is None else cap
    return [
        _simulate_one(params, t_end, np.random.default_rng([seed, i]), cap)
        for i in range(n_seqs)
    ]
