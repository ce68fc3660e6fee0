"""Runner configuration: JSON experiment files with dotted-path overrides."""

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import ConfigError
from ..likelihood import MCConfig
from ..metrics import OTDParams
from ..models import MODELS, ModelConfig
from ..sampler import ThinningConfig

TASKS = ("loglik", "next_event", "horizon")


@dataclass
class OptimConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self):
        if self.lr < 0 or self.eps <= 0:
            raise ConfigError("lr must be >= 0 and eps > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")


@dataclass
class DataConfig:
    train: str = None
    dev: str = None
    test: str = None

    def paths(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class GridSpec:
    """Candidate lists keyed by dotted config path; ranked by dev LL."""

    params: dict = field(default_factory=dict)
    metric: str = "dev_ll"

    def validate(self):
        if not self.params or any(len(v) == 0 for v in self.params.values()):
            raise ConfigError("grid must list at least one value for every parameter")
        if self.metric != "dev_ll":
            raise ConfigError(f"unsupported grid metric {self.metric!r}; only 'dev_ll'")


@dataclass
class RunnerConfig:
    experiment_id: str = "default"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 5
    mc: MCConfig = field(default_factory=MCConfig)
    thinning: ThinningConfig = field(default_factory=ThinningConfig)
    otd: OTDParams = field(default_factory=OTDParams)
    # horizons in expected events; the window length is n * mean train gap
    horizons: list = field(default_factory=lambda: [5, 10])
    tasks: list = field(default_factory=lambda: list(TASKS))
    # cap on test sequences used for next_event / horizon (None = all)
    eval_max_sequences: int = None
    models: list = field(default_factory=lambda: ["rmtpp", "nhp_lite", "odetpp", "iftpp"])
    grid: GridSpec = None
    seed: int = 0
    output_dir: str = "runs"

    def validate(self, check_paths=False):
        if self.model.model_id not in MODELS:
            raise ConfigError(f"unknown model id {self.model.model_id!r}")
        self.optim.validate()
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise ConfigError("patience must lie in [0, max_epochs]")
        bad = set(self.tasks) - set(TASKS)
        if bad:
            raise ConfigError(f"unknown tasks {sorted(bad)}")
        if any(h < 0 for h in self.horizons):
            raise ConfigError("horizons must be nonnegative")
        if self.grid is not None:
            self.grid.validate()
        if check_paths:
            for split, p in self.data.paths().items():
                if not Path(p).is_file():
                    raise ConfigError(f"{split} dataset not found: {p}")
        return self

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


_NESTED = {
    "data": DataConfig,
    "model": ModelConfig,
    "optim": OptimConfig,
    "mc": MCConfig,
    "thinning": ThinningConfig,
    "otd": OTDParams,
    "grid": GridSpec,
}


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(d):
    d = copy.deepcopy(d)
    model = d.get("model", {})
    if isinstance(model, str):
        model = {"model_id": model}
    model_id = model.get("model_id", "rmtpp")
    defaults = ModelConfig.for_model(model_id).to_dict()
    d["model"] = {**defaults, **model}
    for key, cls in _NESTED.items():
        if d.get(key) is not None:
            d[key] = _build(cls, d[key], key)
    return _build(RunnerConfig, d, "config").validate()


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(d, overrides):
    """Apply ``key.path=value`` strings (values parsed as JSON when possible)."""
    d = copy.deepcopy(d)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node = d
        for k in keys[:-1]:
            if node.get(k) is None:
                node[k] = {}
            node = node[k]
            if not isinstance(node, dict):
                raise ConfigError(f"cannot descend into {path!r}")
        node[keys[-1]] = parse_value(raw)
    return d


def load_config(path=None, experiment_id=None, overrides=None, seed=None, output_dir=None):
    """Load a JSON experiment file.

    The file is either a single experiment or ``{"experiments": {id: {...}}}``;
    with several experiments ``experiment_id`` selects one.
    """
    raw = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        raw = json.loads(p.read_text(encoding="utf-8"))
    if "experiments" in raw:
        exps = raw["experiments"]
        if experiment_id is None:
            if len(exps) != 1:
                raise ConfigError(f"choose --experiment-id from {sorted(exps)}")
            experiment_id = next(iter(exps))
        if experiment_id not in exps:
            raise ConfigError(f"experiment {experiment_id!r} not in {sorted(exps)}")
        raw = dict(exps[experiment_id])
        raw.setdefault("experiment_id", experiment_id)
    elif experiment_id is not None:
        raw["experiment_id"] = experiment_id
    if isinstance(raw.get("model"), str):
        raw["model"] = {"model_id": raw["model"]}
    raw = apply_overrides(raw, overrides)
    if seed is not None:
        raw["seed"] = seed
    if output_dir is not None:
        raw["output_dir"] = str(output_dir)
    return config_from_dict(raw)


def config_with(config, overrides):
    """Copy of ``config`` with dotted overrides given as a mapping."""
    d = config.to_dict()
    for path, value in overrides.items():
        d = apply_overrides(d, [f"{path}={json.dumps(value)}"])
    return config_from_dict(d)


def switch_model(config, model_id):
    """Copy of ``config`` for another model id.

    Fields the user changed from the old model's defaults carry over; the
    rest take the new model's defaults.
    """
    old = ModelConfig.for_model(config.model.model_id).to_dict()
    cur = config.model.to_dict()
    changed = {k: v for k, v in cur.items() if k != "model_id" and v != old[k]}
    d = config.to_dict()
    d["model"] = {**ModelConfig.for_model(model_id).to_dict(), **changed, "model_id": model_id}
    return config_from_dict(d)
