import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from tppkit.cli import main
from tppkit.data import EventSequence
from tppkit.errors import ConfigError, IncompatibleCheckpoint
from tppkit.metrics import OTDParams, otd
from tppkit.models.poisson import PoissonModel
from tppkit.pipeline import (
    GridSpec,
    config_from_dict,
    config_with,
    evaluate,
    generate_synthetic,
    git_blob_sha1,
    grid_cells,
    grid_search,
    horizon_windows,
    load_checkpoint,
    load_config,
    run_experiment,
    switch_model,
    train,
)
from tppkit.pipeline.evaluate import eval_next_event
from tppkit.pipeline.train import dev_loglik, load_split


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    paths = generate_synthetic(out, seed=4, t_end=30.0, sizes=(60, 20, 20))
    return paths


def base_dict(paths, **kw):
    d = {
        "experiment_id": "t",
        "data": dict(paths),
        "model": {"model_id": "hawkes"},
        "max_epochs": 3,
        "patience": 3,
        "batch_size": 32,
        "optim": {"lr": 0.05},
    }
    d.update(kw)
    return d


def test_generate_writes_splits(synth, tmp_path):
    for split in ("train", "dev", "test"):
        assert len(load_split(config_from_dict(base_dict(synth)), split)) == {"train": 60, "dev": 20, "test": 20}[split]
    again = generate_synthetic(tmp_path, seed=4, t_end=30.0, sizes=(60, 20, 20))
    assert all(git_blob_sha1(again[s]) == git_blob_sha1(synth[s]) for s in synth)
    gen = json.loads((tmp_path / "generator.json").read_text())
    assert gen["seed"] == 4


def test_config_defaults_and_overrides(tmp_path):
    cfg = config_from_dict({})
    assert (cfg.optim.lr, cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps) == (1e-3, 0.9, 0.999, 1e-8)
    assert cfg.batch_size == 256 and cfg.patience == 5
    f = tmp_path / "exp.json"
    f.write_text(json.dumps({"experiments": {"a": {"model": "nhp_lite"}, "b": {"seed": 3}}}))
    a = load_config(f, "a", ["model.hidden_size=8", "optim.lr=0.01", "tasks=[\"loglik\"]"], seed=7)
    assert a.model.model_id == "nhp_lite" and a.model.hidden_size == 8
    assert a.optim.lr == 0.01 and a.tasks == ["loglik"] and a.seed == 7
    assert load_config(f, "b").seed == 3
    with pytest.raises(ConfigError):
        load_config(f)  # two experiments, none chosen
    with pytest.raises(ConfigError):
        load_config(f, "zzz")
    with pytest.raises(ConfigError):
        load_config(f, "a", ["model.nonsense=1"])
    with pytest.raises(ConfigError):
        config_from_dict({"patience": 9, "max_epochs": 3})
    with pytest.raises(ConfigError):
        config_from_dict({"optim": {"lr": -1}})
    with pytest.raises(ConfigError):
        config_from_dict({"model": "sahp"})


def test_config_hash_ignores_output_dir():
    a = config_from_dict({"output_dir": "x"})
    b = config_from_dict({"output_dir": "y"})
    assert a.config_hash() == b.config_hash()
    assert config_with(a, {"seed": 1}).config_hash() != a.config_hash()


def test_switch_model_keeps_user_changes():
    cfg = config_from_dict({"model": {"model_id": "nhp_lite", "time_emb_size": 8}})
    rm = switch_model(cfg, "rmtpp")
    assert rm.model.hidden_size == 32 and rm.model.time_emb_size == 8


def test_zero_lr_keeps_params(synth):
    cfg = config_from_dict(base_dict(synth, optim={"lr": 0.0}, model={"model_id": "rmtpp", "hidden_size": 4}))
    from tppkit.pipeline.train import build_for

    init = build_for(cfg, load_split(cfg, "train")).get_flat()
    res = train(cfg)
    assert np.array_equal(res.model.get_flat(), init)


def test_patience_zero_one_epoch(synth):
    res = train(config_from_dict(base_dict(synth, patience=0, max_epochs=10)))
    assert len(res.log) == 1


def test_early_stopping_restores_best(synth):
    cfg = config_from_dict(base_dict(synth, max_epochs=6, optim={"lr": 0.3}))
    res = train(cfg)
    lls = [r["dev_ll"] for r in res.log]
    assert res.best_dev_ll == max(lls)
    assert res.best_epoch == 1 + int(np.argmax(lls))
    assert dev_loglik(res.model, load_split(cfg, "dev"), cfg) == res.best_dev_ll


def test_training_deterministic(synth, tmp_path):
    cfg = config_from_dict(base_dict(synth, model={"model_id": "nhp_lite", "hidden_size": 4, "time_emb_size": 4}))
    a = train(cfg, out_dir=tmp_path / "a")
    b = train(cfg, out_dir=tmp_path / "b")
    strip = lambda log: [{k: v for k, v in r.items() if k != "wall_time"} for r in log]
    assert strip(a.log) == strip(b.log)
    assert np.array_equal(a.model.get_flat(), b.model.get_flat())
    la = [json.loads(l) for l in (tmp_path / "a" / "training_log.jsonl").read_text().splitlines()]
    assert {"epoch", "train_nll", "dev_ll", "wall_time", "seed"} <= set(la[0])
    ma = json.loads((a.checkpoint / "manifest.json").read_text())
    mb = json.loads((b.checkpoint / "manifest.json").read_text())
    assert ma["params_sha256"] == mb["params_sha256"]


def test_checkpoint_roundtrip_and_errors(synth, tmp_path):
    cfg = config_from_dict(base_dict(synth, model={"model_id": "iftpp", "hidden_size": 4, "time_emb_size": 4}))
    res = train(cfg, out_dir=tmp_path)
    model, manifest = load_checkpoint(res.checkpoint, cfg, num_types=1)
    assert np.array_equal(model.get_flat(), res.model.get_flat())
    assert model.config.log_dtime_mean == res.model.config.log_dtime_mean
    assert manifest["best_epoch"] == res.best_epoch
    assert (res.checkpoint / "params.bin").stat().st_size == 8 * manifest["num_params"]
    with pytest.raises(IncompatibleCheckpoint):
        load_checkpoint(res.checkpoint, switch_model(cfg, "rmtpp"))
    with pytest.raises(IncompatibleCheckpoint):
        load_checkpoint(res.checkpoint, cfg, num_types=3)
    with pytest.raises(IncompatibleCheckpoint):
        load_checkpoint(tmp_path / "missing")
    blob = bytearray((res.checkpoint / "params.bin").read_bytes())
    blob[0] ^= 1
    (res.checkpoint / "params.bin").write_bytes(bytes(blob))
    with pytest.raises(IncompatibleCheckpoint):
        load_checkpoint(res.checkpoint)


def test_diverged_state_dump(synth, tmp_path):
    from tppkit.errors import DivergedLoss

    with pytest.raises(DivergedLoss):
        train(config_from_dict(base_dict(synth, optim={"lr": 1e6})), out_dir=tmp_path)
    assert (tmp_path / "diverged" / "manifest.json").is_file()


def test_evaluate_report(synth, tmp_path):
    cfg = config_from_dict(base_dict(synth, eval_max_sequences=5, horizons=[0, 2],
                                     thinning={"num_samples": 10}))
    res, report = run_experiment(cfg, out_dir=tmp_path)
    saved = json.loads((tmp_path / "results.json").read_text())
    assert saved["config_hash"] == cfg.config_hash()
    assert saved["dataset_hashes"]["test"] == git_blob_sha1(synth["test"])
    assert saved["seed"] == 0 and saved["optimizer"]["lr"] == 0.05
    m = saved["metrics"]
    assert set(m) == {"loglik", "next_event", "horizon"}
    assert np.isfinite(m["loglik"]["ll_per_event"])
    assert m["next_event"]["rmse"] > 0 and 0 <= m["next_event"]["error_rate"] <= 1
    assert m["next_event"]["error_rate"] == 0.0  # one event type
    assert m["horizon"]["0"]["mean_otd"] == 0.0
    assert saved["checkpoint"]["best_epoch"] == res.best_epoch
    with pytest.raises(IncompatibleCheckpoint):
        evaluate(cfg, PoissonModel.with_rates([1.0, 1.0]), ["loglik"])
    with pytest.raises(ConfigError):
        evaluate(cfg, res.model, ["bogus"])


def test_true_hawkes_eval_matches_closed_form(synth):
    from tppkit.hawkes import HawkesParams, hawkes_loglik
    from tppkit.models import HawkesModel

    cfg = config_from_dict(base_dict(synth))
    params = HawkesParams.univariate(0.2, 0.8, 1.0)
    test = load_split(cfg, "test")
    exact = sum(hawkes_loglik(params, s) for s in test) / test.num_events
    report = evaluate(cfg, HawkesModel.from_params(params), ["loglik"])
    assert report["metrics"]["loglik"]["ll_per_event"] == pytest.approx(exact, rel=1e-12)
    mc = evaluate(cfg, HawkesModel.from_params(params, closed_form=False), ["loglik"])
    assert mc["metrics"]["loglik"]["ll_per_event"] == pytest.approx(exact, abs=0.02)


def test_chance_level_type_error():
    rng = np.random.default_rng(0)
    seqs = [EventSequence(np.cumsum(rng.exponential(1, 50)), rng.integers(0, 10, 50)) for _ in range(40)]
    # equal rates: every type is equally likely, the argmax tie goes to type 0
    model = PoissonModel.with_rates(np.ones(10))
    from tppkit.sampler import ThinningConfig

    res = eval_next_event(model, seqs, ThinningConfig(num_samples=2), 64)
    assert res["error_rate"] == pytest.approx(0.9, abs=3 * np.sqrt(0.09 / 2000))
    random_pred = rng.integers(0, 10, 2000)
    truth = rng.integers(0, 10, 2000)
    from tppkit.metrics import error_rate_type

    assert error_rate_type(random_pred, truth) == pytest.approx(0.9, abs=0.03)


def test_horizon_windows():
    s = EventSequence([1.0, 2.0, 3.0, 4.0], [0, 1, 0, 1], 5.0)
    prefix, truth = horizon_windows(s, 2.5)
    assert prefix.t_end == 1.5 and list(prefix.times) == [1.0]
    assert list(truth.times) == [2.0, 3.0, 4.0] and truth.t_end == 4.0
    p0, t0 = horizon_windows(s, 0.0)
    assert len(t0) == 0 and len(p0) == 4
    # an empty prediction costs C per true event
    C = 1.7
    assert otd(EventSequence([], [], 4.0), truth, OTDParams(C)) == pytest.approx(3 * C)


def test_grid_cells_order():
    cells = grid_cells(GridSpec({"optim.lr": [1e-3, 1e-1], "model.hidden_size": [32, 16]}))
    assert cells[0] == {"model.hidden_size": 16, "optim.lr": 1e-3}
    assert len(cells) == 4
    with pytest.raises(ConfigError):
        GridSpec({"optim.lr": []}).validate()


def test_grid_single_point_and_tie(synth, tmp_path):
    base = config_from_dict(base_dict(synth, max_epochs=2, patience=2))
    one = grid_search(base, GridSpec({"optim.lr": [0.05]}))
    assert one.best["params"] == {"optim.lr": 0.05}
    # hidden size does not enter the Hawkes model: identical cells, tie to 16
    tie = grid_search(base, GridSpec({"model.hidden_size": [32, 16]}), out_dir=tmp_path)
    assert tie.leaderboard[0]["dev_ll"] == tie.leaderboard[1]["dev_ll"]
    assert tie.best["params"] == {"model.hidden_size": 16}
    assert tie.best_config.model.hidden_size == 16
    rows = list(csv.DictReader(open(tmp_path / "leaderboard.csv")))
    assert [r["rank"] for r in rows] == ["1", "2"]
    assert json.loads((tmp_path / "best_config.json").read_text())["model"]["hidden_size"] == 16


def test_grid_learning_rates_and_divergence(synth):
    base = config_from_dict(base_dict(synth, max_epochs=5, patience=5))
    res = grid_search(base, GridSpec({"optim.lr": [1e-3, 1e-1]}))
    assert [r["params"]["optim.lr"] for r in res.leaderboard] == [1e-1, 1e-3]
    assert all(np.isfinite(r["dev_ll"]) for r in res.leaderboard)
    bad = grid_search(base, GridSpec({"optim.lr": [1e6, 1e-1]}))
    assert bad.best["params"]["optim.lr"] == 1e-1
    last = bad.leaderboard[-1]
    assert last["dev_ll"] == -np.inf and "DivergedLoss" in last["error"]


def test_cli_end_to_end(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["generate", "--output", str(data), "--seed", "1", "--t-end", "20", "--sizes", "30,10,10"]) == 0
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"experiments": {"hk": {
        "data": {s: str(data / f"{s}.jsonl") for s in ("train", "dev", "test")},
        "model": {"model_id": "hawkes"}, "max_epochs": 2, "patience": 2,
        "eval_max_sequences": 3, "thinning": {"num_samples": 5}, "horizons": [2],
    }}}))
    run = tmp_path / "run"
    common = ["--config", str(cfg), "--output", str(run)]
    assert main(["train", *common, "--set", "optim.lr=0.05"]) == 0
    assert (run / "checkpoint" / "params.bin").is_file()
    assert (run / "training_log.jsonl").is_file()
    assert main(["eval", *common, "--tasks", "loglik,horizon"]) == 0
    assert set(json.loads((run / "results.json").read_text())["metrics"]) == {"loglik", "horizon"}
    assert main(["predict", *common]) == 0
    recs = [json.loads(l) for l in (run / "predictions_test.jsonl").read_text().splitlines()]
    assert len(recs) == 3 and len(recs[0]["pred_times"]) == len(recs[0]["true_times"])
    bench = tmp_path / "bench"
    assert main(["benchmark", "--config", str(cfg), "--output", str(bench), "--models", "hawkes",
                 "--set", "tasks=[\"loglik\"]"]) == 0
    assert (bench / "leaderboard.csv").is_file() and (bench / "loglik.png").is_file()
    grid = tmp_path / "grid"
    assert main(["gridsearch", "--config", str(cfg), "--output", str(grid), "--grid", "optim.lr=0.05,0.1"]) == 0
    assert (grid / "leaderboard.csv").is_file()
    capsys.readouterr()
    assert main(["eval", "--config", str(cfg), "--output", str(tmp_path / "nothing")]) == 2
    assert "IncompatibleCheckpoint" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "tppkit", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("generate", "train", "eval", "predict", "benchmark", "gridsearch"):
        assert cmd in out.stdout
