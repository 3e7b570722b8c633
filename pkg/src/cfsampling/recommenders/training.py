"""SGD training with early stopping and grid tuning on validation."""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .. import kernels
from ..data import Dataset, Scenario, SplitDataset
from .metrics import evaluate_all, headline_metric, higher_is_better
from .models import Algorithm, ModelParams, init_params, pertinent_algorithms

_log = logging.getLogger(__name__)

DEFAULT_GRID = {
    "dim": (4, 8, 16, 32, 50),
    "dropout": (0.0, 0.3, 0.5),
    "lr": (0.001, 0.006, 0.02),
}


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 16
    lr: float = 0.02
    reg: float = 1e-4
    dropout: float = 0.0
    max_epochs: int = 50
    patience: int = 5
    init_scale: float = 0.1


@dataclass
class TrainResult:
    params: ModelParams
    config: TrainConfig
    best_epoch: int
    epochs_trained: int
    val_history: list[float] = field(default_factory=list)
    loss_history: list[float] = field(default_factory=list)

    @property
    def best_val(self) -> float:
        return self.val_history[self.best_epoch - 1] if self.val_history else float("nan")


def sample_negatives(train: Dataset, rng: np.random.Generator, users=None) -> np.ndarray:
    """One uniform non-interacted item per entry of ``users`` (default: every interaction)."""
    users = train.users if users is None else np.asarray(users, dtype=np.int64)
    n_items = train.num_items
    if np.any(train.user_degree[users] >= n_items):
        raise ValueError("a user interacted with every item; no negatives exist")
    neg = rng.integers(0, n_items, size=len(users))
    bad = np.flatnonzero(train.contains_pairs(users, neg))
    while len(bad):
        neg[bad] = rng.integers(0, n_items, size=len(bad))
        bad = bad[train.contains_pairs(users[bad], neg[bad])]
    return neg


def popularity(train: Dataset, num_items: int | None = None) -> ModelParams:
    """PopRec: one global ranking by train-set interaction counts."""
    n_items = num_items or train.num_items
    p = init_params(Algorithm.POPREC, train.num_users, n_items)
    p.beta_i[:] = np.bincount(train.items, minlength=n_items)[:n_items]
    return p


class EpochTrainer:
    """Runs single SGD epochs of one algorithm on one train set."""

    def __init__(self, algorithm: Algorithm, train: Dataset, scenario: Scenario,
                 config: TrainConfig, seed: int):
        self.algorithm = Algorithm(algorithm)
        if self.algorithm is Algorithm.POPREC:
            raise ValueError("PopRec is not trained by SGD")
        self.train = train
        self.scenario = Scenario(scenario)
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.explicit = self.scenario is Scenario.EXPLICIT
        alpha = float(train.ratings.mean()) if self.explicit and len(train) else 0.0
        self.params = init_params(self.algorithm, train.num_users, train.num_items, config.dim,
                                  self.rng, alpha, config.init_scale)
        # factors nobody will ever update start (and stay) at zero
        self.params.gamma_u[train.user_degree == 0] = 0.0
        if self.explicit:
            self.params.gamma_i[train.item_degree == 0] = 0.0
        self.epoch = 0

    def _mask(self, n: int) -> np.ndarray:
        H = self.params.W1.shape[0] if self.params.has_mlp else 0
        if self.params.has_mlp and self.config.dropout > 0:
            keep = 1.0 - self.config.dropout
            return (self.rng.random((n, H)) < keep) / keep
        return np.zeros((0, H))

    def step(self) -> float:
        """One epoch; returns mean training loss (before each sample's update)."""
        ds = self.train
        p = self.params
        c = self.config
        n = len(ds)
        self.epoch += 1
        order = self.rng.permutation(n).astype(np.int64)
        if self.explicit:
            if p.has_mlp:
                total = kernels.neumf_mse_epoch(ds.users, ds.items, ds.ratings, order, p.alpha,
                                                p.beta_u, p.beta_i, p.gamma_u, p.gamma_i, p.W1,
                                                p.b1, p.w2, p.b2, self._mask(n), c.lr, c.reg)
            else:
                total = kernels.mse_epoch(ds.users, ds.items, ds.ratings, order, p.alpha,
                                          p.beta_u, p.beta_i, p.gamma_u, p.gamma_i, c.lr, c.reg)
        else:
            neg = sample_negatives(ds, self.rng)
            if p.has_mlp:
                total = kernels.neumf_bpr_epoch(ds.users, ds.items, neg, order, p.beta_i,
                                                p.gamma_u, p.gamma_i, p.W1, p.b1, p.w2, p.b2,
                                                self._mask(n), self._mask(n), c.lr, c.reg)
            else:
                total = kernels.bpr_epoch(ds.users, ds.items, neg, order, p.beta_i,
                                          p.gamma_u, p.gamma_i, c.lr, c.reg)
        loss = total / max(n, 1)
        if not np.isfinite(loss) or not p.check_finite():
            raise TrainingDiverged(self.epoch)
        return loss


def train(algorithm: Algorithm | str, split: SplitDataset, config: TrainConfig | None = None,
          seed: int = 0) -> TrainResult:
    """Train with per-epoch validation and return the best-validation checkpoint."""
    algorithm = Algorithm(algorithm)
    config = config or TrainConfig()
    if algorithm not in pertinent_algorithms(split.scenario):
        raise ValueError(f"{algorithm.value} is not pertinent to {split.scenario.value} feedback")
    metric = headline_metric(split.scenario)
    if algorithm is Algorithm.POPREC:
        params = popularity(split.train)
        val = evaluate_all(params, split, "validation", [metric])[metric]
        return TrainResult(params, config, 1, 0, [val])
    trainer = EpochTrainer(algorithm, split.train, split.scenario, config, seed)
    sign = 1.0 if higher_is_better(metric) else -1.0
    best, best_epoch, best_params = -np.inf, 0, trainer.params.copy()
    vals, losses = [], []
    for epoch in range(1, config.max_epochs + 1):
        losses.append(trainer.step())
        val = evaluate_all(trainer.params, split, "validation", [metric])[metric]
        vals.append(val)
        if sign * val > best:
            best, best_epoch, best_params = sign * val, epoch, trainer.params.copy()
        elif epoch - best_epoch >= config.patience:
            break
    _log.debug("%s: best epoch %d of %d (%s=%.4f)", algorithm.value, best_epoch, len(vals),
               metric.value, sign * best)
    best_params.extra["epochs"] = best_epoch
    return TrainResult(best_params, config, best_epoch, len(vals), vals, losses)


def grid_configs(algorithm: Algorithm | str, grid: dict | None = None,
                 base: TrainConfig | None = None) -> list[TrainConfig]:
    """Hyperparameter combinations that matter for ``algorithm``."""
    algorithm = Algorithm(algorithm)
    base = base or TrainConfig()
    grid = DEFAULT_GRID if grid is None else grid
    if algorithm is Algorithm.POPREC:
        return [base]
    keys = ["lr"]
    if algorithm in (Algorithm.MF, Algorithm.NEUMF):
        keys.append("dim")
    if algorithm is Algorithm.NEUMF:
        keys.append("dropout")
    values = [tuple(grid.get(k, (getattr(base, k),))) for k in keys]
    return [replace(base, **dict(zip(keys, combo))) for combo in itertools.product(*values)]


def tune(algorithm: Algorithm | str, split: SplitDataset, grid: dict | None = None,
         base: TrainConfig | None = None, seed: int = 0) -> TrainResult:
    """Train every grid configuration; keep the best on validation (first wins ties)."""
    metric = headline_metric(split.scenario)
    sign = 1.0 if higher_is_better(metric) else -1.0
    best = None
    for cfg in grid_configs(algorithm, grid, base):
        res = train(algorithm, split, cfg, seed)
        if best is None or sign * res.best_val > sign * best.best_val:
            best = res
    return best


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
