"""Next-event and long-horizon evaluation metrics."""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import NoEvents, TooLarge

BRUTEFORCE_MAX_LEN = 6


def _masked(pred, truth, mask):
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    mask = np.ones(pred.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise NoEvents("no unmasked events to score")
    return pred[mask], truth[mask]


def rmse_time(pred, truth, mask=None):
    """Root mean squared error over unmasked events."""
    p, t = _masked(pred, truth, mask)
    return float(np.sqrt(np.mean((np.asarray(p, float) - t) ** 2)))


def error_rate_type(pred, truth, mask=None):
    """Fraction of unmasked events whose type is mispredicted."""
    p, t = _masked(pred, truth, mask)
    return float(np.mean(p != t))


@dataclass(frozen=True)
class OTDParams:
    delete_cost: float = 1.0

    def __post_init__(self):
        if not (self.delete_cost >= 0 and np.isfinite(self.delete_cost)):
            raise ValueError("delete_cost must be a finite nonnegative number")


def _events(seq):
    return np.asarray(seq.times, dtype=np.float64), np.asarray(seq.types)


def _alignment_cost(ta, tb, pairs, n, m, C):
    # fsum is exactly rounded, so the cost of an alignment does not depend on
    # the order its terms are visited
    return math.fsum([abs(ta[i] - tb[j]) for i, j in pairs] + [C] * (n + m - 2 * len(pairs)))


def otd(a, b, params=OTDParams()):
    """Edit distance between marked sequences.

    Same-type events may be aligned at cost ``|t_a - t_b|``; every unaligned
    event costs ``delete_cost``. The optimal monotone alignment is found by
    the usual O(|a| |b|) dynamic programme and then re-scored exactly.
    """
    C = float(params.delete_cost)
    ta, ka = _events(a)
    tb, kb = _events(b)
    n, m = len(ta), len(tb)
    D = np.empty((n + 1, m + 1))
    D[0] = C * np.arange(m + 1)
    D[:, 0] = C * np.arange(n + 1)
    for i in range(1, n + 1):
        match = np.where(kb == ka[i - 1], np.abs(tb - ta[i - 1]), np.inf)
        best = np.minimum(D[i - 1, :-1] + match, D[i - 1, 1:] + C)
        for j in range(1, m + 1):
            D[i, j] = min(best[j - 1], D[i, j - 1] + C)
    pairs = []
    i, j = n, m
    while i > 0 and j > 0:
        if ka[i - 1] == kb[j - 1] and D[i, j] == D[i - 1, j - 1] + abs(ta[i - 1] - tb[j - 1]):
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif D[i, j] == D[i - 1, j] + C:
            i -= 1
        else:
            j -= 1
    return _alignment_cost(ta, tb, pairs, n, m, C)


def otd_bruteforce(a, b, params=OTDParams()):
    """Exhaustive minimum over monotone type-respecting alignments (test oracle)."""
    ta, ka = _events(a)
    tb, kb = _events(b)
    n, m = len(ta), len(tb)
    if n > BRUTEFORCE_MAX_LEN or m > BRUTEFORCE_MAX_LEN:
        raise TooLarge(f"brute force supports lengths <= {BRUTEFORCE_MAX_LEN}, got {n} and {m}")
    C = float(params.delete_cost)
    best = _alignment_cost(ta, tb, [], n, m, C)
    for r in range(1, min(n, m) + 1):
        for ia in itertools.combinations(range(n), r):
            for ib in itertools.combinations(range(m), r):
                if any(ka[i] != kb[j] for i, j in zip(ia, ib)):
                    continue
                best = min(best, _alignment_cost(ta, tb, list(zip(ia, ib)), n, m, C))
    return float(best)


def mean_otd(preds, truths, params=OTDParams()):
    if len(preds) != len(truths):
        raise ValueError("prediction and truth lists differ in length")
    if not preds:
        raise NoEvents("no sequence pairs to score")
    return float(np.mean([otd(p, t, params) for p, t in zip(preds, truths)]))
