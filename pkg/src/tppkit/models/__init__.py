"""TPP models sharing the forward / loglike_loss / intensity interface."""

from .base import LossOutput, ModelConfig, ModelState, TPPModel
from .hawkes_model import HawkesModel
from .iftpp import IFTPP
from .nhp_lite import NHPLite
from .odetpp import ODETPP
from .poisson import PoissonModel
from .rmtpp import RMTPP

MODELS = {
    "hawkes": HawkesModel,
    "rmtpp": RMTPP,
    "nhp_lite": NHPLite,
    "odetpp": ODETPP,
    "iftpp": IFTPP,
    "poisson": PoissonModel,
}
NEURAL_MODELS = ("rmtpp", "nhp_lite", "odetpp", "iftpp")


def build_model(config):
    try:
        cls = MODELS[config.model_id]
    except KeyError:
        raise ValueError(f"unknown model id {config.model_id!r}; choose from {sorted(MODELS)}") from None
    return cls(config)


__all__ = [
    "MODELS", "NEURAL_MODELS", "build_model", "LossOutput", "ModelConfig", "ModelState",
    "TPPModel", "HawkesModel", "IFTPP", "NHPLite", "ODETPP", "PoissonModel", "RMTPP",
]
