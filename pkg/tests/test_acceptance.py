"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``CRITERION <n> PASS|FAIL: ...`` line. Criteria 3
and 7 train models on the full 1200/200/400 synthetic split and take several
minutes each.
"""

import csv
import time

import numpy as np
import pytest
from scipy import stats

from conftest import HAWKES_1D, complete_gaps, iftpp_density_mass
from tppkit import autodiff as ad
from tppkit.data import EventSequence, pad_batch
from tppkit.hawkes import (
    HawkesParams,
    generate_hawkes,
    hawkes_compensator,
    hawkes_intensity,
    hawkes_loglik,
    rescaled_interarrivals,
)
from tppkit.likelihood import MCConfig, eval_loglik, mc_integral
from tppkit.metrics import OTDParams, otd, otd_bruteforce
from tppkit.models import NEURAL_MODELS, HawkesModel, ModelConfig, build_model
from tppkit.models.poisson import PoissonModel
from tppkit.pipeline import benchmark, config_from_dict, generate_synthetic, train
from tppkit.pipeline.train import load_split
from tppkit.sampler import ThinningConfig, mbr_predict_time, mbr_predict_type

# per-model training settings for criterion 7, chosen by pilot runs on the
# same synthetic data. ODETPP costs ~75 s per epoch, so it gets smaller
# batches (more steps per epoch) and an epoch cap that fits the time budget.
TRAINING = {
    "rmtpp": {"optim": {"lr": 1e-2}},
    "nhp_lite": {"optim": {"lr": 1e-2}},
    "odetpp": {"optim": {"lr": 5e-3}, "batch_size": 64, "max_epochs": 22},
    "iftpp": {"optim": {"lr": 1e-2}},
}


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def synthetic(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthetic")
    paths = generate_synthetic(out, seed=0)
    return paths


@pytest.fixture(scope="module")
def true_test_ll(synthetic):
    test = load_split(config_from_dict({"data": synthetic}), "test")
    return sum(hawkes_loglik(HAWKES_1D, s) for s in test) / test.num_events


def test_criterion_1_mc_vs_closed_form(capsys):
    t0 = time.perf_counter()
    seqs = generate_hawkes(HAWKES_1D, 100.0, 50, seed=0)
    model = HawkesModel.from_params(HAWKES_1D)
    batch = pad_batch(seqs, 1)
    with ad.no_grad():
        state = model.forward(batch)
        fn = lambda ts: model.intensities_at_elapsed(state, ts - state.anchor_times[..., None])
        est = mc_integral(fn, batch, MCConfig(samples_per_event_eval=10), np.random.default_rng(0)).data
    exact = np.array([hawkes_compensator(HAWKES_1D, s)[0] for s in seqs])
    rel = np.abs(est - exact) / exact
    elapsed = time.perf_counter() - t0
    agg = abs(est.sum() - exact.sum()) / exact.sum()
    ok = bool(np.all(rel < 0.01)) and elapsed < 10
    verdict(capsys, 1, ok, f"per-sequence rel err max {rel.max():.4f} mean {rel.mean():.4f} "
            f"({np.sum(rel < 0.01)}/50 within 1%), aggregate {agg:.4f}, {elapsed:.2f}s")


def test_criterion_2_sampler_exactness(capsys):
    t0 = time.perf_counter()
    seqs = generate_hawkes(HAWKES_1D, 100.0, 1000, seed=1)
    counts = np.array([len(s) for s in seqs])
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    # gaps still open near t_end are right-censored; keeping only gaps that
    # start at least 12 / mu before t_end is a stopping-time selection
    z = complete_gaps(HAWKES_1D, seqs, margin=12.0 / 0.2)
    p = stats.kstest(z, "expon").pvalue
    naive = np.concatenate([rescaled_interarrivals(HAWKES_1D, s) for s in seqs])
    p_naive = stats.kstest(naive, "expon").pvalue
    elapsed = time.perf_counter() - t0
    ok = abs(counts.mean() - 100.0) < 3 * se and p > 0.01 and elapsed < 60
    verdict(capsys, 2, ok, f"mean count {counts.mean():.2f} (SE {se:.2f}, |diff|/SE "
            f"{abs(counts.mean() - 100) / se:.2f}), KS p={p:.3f} on {len(z)} complete gaps "
            f"(all gaps incl. censored tail: p={p_naive:.3g}), {elapsed:.1f}s")


def test_criterion_3_parameter_recovery(capsys, synthetic, true_test_ll):
    t0 = time.perf_counter()
    cfg = config_from_dict({
        "data": synthetic, "model": {"model_id": "hawkes"},
        "max_epochs": 2000, "patience": 10, "tasks": ["loglik"],
    })
    res = train(cfg)
    got = res.model.hawkes_params()
    err = {
        "mu": abs(got.mu[0] - 0.2) / 0.2,
        "alpha": abs(got.alpha[0, 0] - 0.8) / 0.8,
        "beta": abs(got.beta[0, 0] - 1.0) / 1.0,
    }
    ll = eval_loglik(res.model, load_split(cfg, "test")).ll_per_event
    gap = abs(ll - true_test_ll)
    elapsed = time.perf_counter() - t0
    ok = max(err.values()) < 0.10 and gap < 0.02 and elapsed < 600
    detail = ", ".join(f"{k} rel err {v:.4f}" for k, v in err.items())
    verdict(capsys, 3, ok, f"{detail}; test LL gap {gap:.4f} nats; {len(res.log)} epochs, {elapsed:.0f}s")


def test_criterion_4_gradients(capsys):
    t0 = time.perf_counter()
    seqs = [
        EventSequence([0.5, 1.2, 2.0], [0, 1, 0], 3.0),
        EventSequence([0.3, 0.9], [1, 1], 2.0),
        EventSequence([1.5], [0], 1.5),
    ]
    batch = pad_batch(seqs, 2)
    worst = {}
    for mid in NEURAL_MODELS:
        model = build_model(ModelConfig.for_model(mid, num_event_types=2, hidden_size=8, time_emb_size=4))
        f = lambda ps: model.loglike_loss(batch, MCConfig(), np.random.default_rng(0)).nll
        rep = ad.grad_check(f, model.parameters(), step=1e-5, tol=1e-4)
        worst[mid] = float(rep.rel_error.max())
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 60
    verdict(capsys, 4, ok, ", ".join(f"{k} max rel err {v:.2e}" for k, v in worst.items()) + f"; {elapsed:.1f}s")


def test_criterion_5_otd_oracle(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(1000):
        K = int(rng.integers(1, 4))
        pair = []
        for _ in range(2):
            n = int(rng.integers(0, 7))
            times = np.sort(rng.uniform(0.01, 10.0, n))
            pair.append(EventSequence(times, rng.integers(0, K, n), 10.0))
        p = OTDParams(float(rng.uniform(0.1, 10.0)))
        mismatches += otd(*pair, p) != otd_bruteforce(*pair, p)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10
    verdict(capsys, 5, ok, f"{mismatches} mismatches over 1000 instances, {elapsed:.2f}s")


def test_criterion_6_mbr(capsys):
    model = PoissonModel.with_rates([0.8, 1.2])
    empty = EventSequence([], [], 0.0)
    devs = {}
    for n in (100, 1000):
        pred = mbr_predict_time(model, empty, ThinningConfig(num_samples=n, rng_seed=6)).time
        devs[n] = abs(pred - 0.5) / (0.5 / np.sqrt(n))
    rng = np.random.default_rng(6)
    wrong = 0
    for _ in range(100):
        params = HawkesParams(rng.uniform(0.05, 1.0, 2), rng.uniform(0, 0.45, (2, 2)), rng.uniform(0.5, 3, (2, 2)))
        n = int(rng.integers(0, 8))
        hist = EventSequence(np.sort(rng.uniform(0.1, 10, n)), rng.integers(0, 2, n))
        t_true = (hist.times[-1] if n else 0.0) + rng.exponential(1.0)
        want = int(np.argmax(hawkes_intensity(params, hist, t_true)))
        wrong += mbr_predict_type(params, hist, t_true) != want
    ok = all(d < 3 for d in devs.values()) and wrong == 0
    verdict(capsys, 6, ok, f"time error in SE units: n=100 {devs[100]:.2f}, n=1000 {devs[1000]:.2f}; "
            f"type mismatches {wrong}/100")


@pytest.mark.parametrize("model_id", NEURAL_MODELS)
def test_criterion_7_learning_signal(capsys, synthetic, true_test_ll, model_id):
    t0 = time.perf_counter()
    cfg = config_from_dict({
        "data": synthetic, "model": {"model_id": model_id},
        "max_epochs": 400, "patience": 10, **TRAINING[model_id],
    })
    res = train(cfg)
    ll = eval_loglik(res.model, load_split(cfg, "test"), cfg.mc, rng=np.random.default_rng(0)).ll_per_event
    gap = true_test_ll - ll
    elapsed = time.perf_counter() - t0
    ok = abs(gap) < 0.05 and elapsed < 1800
    verdict(capsys, 7, ok, f"{model_id}: test LL {ll:.4f} vs true {true_test_ll:.4f}, gap {gap:.4f} nats; "
            f"{len(res.log)} epochs, {elapsed:.0f}s")


def test_criterion_8_smoke_benchmark(capsys, synthetic, tmp_path):
    t0 = time.perf_counter()
    cfg = config_from_dict({
        "experiment_id": "smoke", "data": synthetic, "model": {"model_id": "rmtpp"},
        "max_epochs": 1, "patience": 1, "eval_max_sequences": 20,
        # one-epoch models can stall in near-zero intensity; a lower round
        # cap censors those draws sooner
        "thinning": {"num_samples": 10, "max_rounds": 100}, "horizons": [5],
    })
    reports, _ = benchmark(cfg, out_dir=tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "leaderboard.csv", encoding="utf-8")))
    models = [r["model"] for r in rows]
    cols = ["loglik", "rmse", "error_rate"] + [c for c in rows[0] if c.startswith("otd@")]
    finite = len(cols) == 4 and all(np.isfinite(float(r[c])) for r in rows for c in cols)
    pngs = all((tmp_path / f"{m}.png").is_file() for m in ("loglik", "rmse", "error_rate", "otd"))
    elapsed = time.perf_counter() - t0
    ok = models == list(NEURAL_MODELS) and finite and pngs
    verdict(capsys, 8, ok, f"leaderboard rows {models}, finite metrics {finite}, figures {pngs}, {elapsed:.0f}s")


def test_criterion_9_iftpp_normalisation(capsys):
    rng = np.random.default_rng(9)
    errs = []
    for i in range(20):
        model = build_model(ModelConfig.for_model("iftpp", num_event_types=3, seed=i))
        model.config.log_dtime_mean = rng.normal(0, 2)
        model.config.log_dtime_std = rng.uniform(0.3, 3)
        for p in model.parameters():
            p.data = p.data + rng.normal(0, 0.2, p.shape)
        n = int(rng.integers(0, 8))
        hist = EventSequence(np.cumsum(rng.exponential(1, n)), rng.integers(0, 3, n))
        anchor, _ = model.anchor_for(hist)
        errs.append(abs(iftpp_density_mass(model, ad.Tensor(anchor["h"].data.reshape(-1))) - 1.0))
    ok = max(errs) < 1e-4
    verdict(capsys, 9, ok, f"max |mass - 1| over 20 parameterizations {max(errs):.2e}")
