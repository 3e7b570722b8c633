"""Algorithm roster: PopRec, Bias-only, MF and NeuMF-lite."""
from .metrics import (ALL_METRICS, EvaluationError, Metric, evaluate, evaluate_all,
                      headline_metric, higher_is_better, pertinent_metrics)
from .models import (ALL_ALGORITHMS, Algorithm, ModelParams, init_params, pertinent_algorithms,
                     predict, score, score_users)
from .training import (DEFAULT_GRID, TrainConfig, TrainingDiverged, TrainResult, grid_configs,
                       popularity, train, tune)

__all__ = [
    "ALL_ALGORITHMS", "ALL_METRICS", "Algorithm", "DEFAULT_GRID", "EvaluationError", "Metric",
    "ModelParams", "TrainConfig", "TrainResult", "TrainingDiverged", "evaluate", "evaluate_all",
    "grid_configs", "headline_metric", "higher_is_better", "init_params", "pertinent_algorithms",
    "pertinent_metrics", "popularity", "predict", "score", "score_users", "train", "tune",
]
