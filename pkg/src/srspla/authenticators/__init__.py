from srspla.authenticators.pearson import (
    PearsonAuthenticator,
    DegenerateReference,
    enroll,
    pearson_score,
)
from srspla.authenticators.network import (
    SeResNet1dConfig,
    SeResNet1d,
    NonFiniteActivation,
)
from srspla.authenticators.training import (
    TrainConfig,
    TrainedModel,
    Diverged,
    EmptySplit,
    train,
    score_batch,
    DimensionMismatch,
)
from srspla.authenticators.model_io import save_model, load_model

__all__ = [
    "PearsonAuthenticator", "DegenerateReference", "enroll", "pearson_score",
    "SeResNet1dConfig", "SeResNet1d", "NonFiniteActivation",
    "TrainConfig", "TrainedModel", "Diverged", "EmptySplit", "train",
    "score_batch", "DimensionMismatch",
    "save_model", "load_model",
]
