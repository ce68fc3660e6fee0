import numpy as np
import pytest

from tppkit.data import EventSequence, pad_batch
from tppkit.hawkes import HawkesParams

HAWKES_1D = HawkesParams.univariate(0.2, 0.8, 1.0)


@pytest.fixture
def hawkes_1d():
    return HAWKES_1D


@pytest.fixture
def toy_batch():
    """Three short two-type sequences with different lengths and windows."""
    seqs = [
        EventSequence([0.5, 1.2, 2.0], [0, 1, 0], 3.0),
        EventSequence([0.3, 0.9], [1, 1], 2.0),
        EventSequence([1.5], [0], 1.5),
    ]
    return pad_batch(seqs, 2)


def random_sequence(rng, n_max=8, num_types=3, t_max=10.0):
    n = int(rng.integers(0, n_max + 1))
    times = np.sort(rng.uniform(0.01, t_max, n))
    while n > 1 and np.any(np.diff(times) <= 0):
        times = np.sort(rng.uniform(0.01, t_max, n))
    return EventSequence(times, rng.integers(0, num_types, n), t_max)


def iftpp_density_mass(model, h):
    """Quadrature of the IFTPP inter-event density over (0, inf).

    Integrates in u = log(tau), splitting at the mixture components'
    locations and a few scales either side so every bump is resolved.
    """
    from scipy import integrate

    from tppkit import autodiff as ad

    with ad.no_grad():
        _, mean, logscale = model.mixture(h)
        m, s = model.config.log_dtime_mean, model.config.log_dtime_std
        locs = m + s * mean.data.reshape(-1)
        scales = s * np.exp(logscale.data.reshape(-1))

        def f(u):
            # gaps outside float64 range carry no representable mass
            if not -690.0 < u < 709.0:
                return 0.0
            return float(np.exp(model.log_density(h, np.array(np.exp(u))).data + u))

    knots = np.unique(np.concatenate([locs + k * scales for k in (-12, -4, -1, 0, 1, 4, 12)]))
    total = integrate.quad(f, -np.inf, knots[0], epsabs=1e-13)[0]
    total += integrate.quad(f, knots[-1], np.inf, epsabs=1e-13)[0]
    for lo, hi in zip(knots[:-1], knots[1:]):
        total += integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return total


def complete_gaps(params, seqs, margin):
    """Rescaled gaps whose start lies at least ``margin`` before t_end."""
    from tppkit.hawkes import rescaled_interarrivals

    out = []
    for s in seqs:
        if len(s) == 0:
            continue
        starts = np.concatenate([[0.0], s.times[:-1]])
        g = rescaled_interarrivals(params, s)
        out.append(g[starts <= s.t_end - margin])
    return np.concatenate(out)
