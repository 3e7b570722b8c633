"""Model parameters and scoring for the algorithm roster."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ..data import Scenario


class Algorithm(str, Enum):
    POPREC = "PopRec"
    BIAS = "BiasOnly"
    MF = "MF"
    NEUMF = "NeuMFLite"


ALL_ALGORITHMS = (Algorithm.POPREC, Algorithm.BIAS, Algorithm.MF, Algorithm.NEUMF)


def pertinent_algorithms(scenario: Scenario | str) -> tuple[Algorithm, ...]:
    if Scenario(scenario) is Scenario.EXPLICIT:
        return (Algorithm.BIAS, Algorithm.MF, Algorithm.NEUMF)
    return ALL_ALGORITHMS


@dataclass
class ModelParams:
    """Parameters of every roster member.

    ``alpha`` and ``b2`` are one-element arrays so kernels can update them in
    place. Bias-only models carry zero-width latent matrices; PopRec stores its
    train-set popularity counts in ``beta_i``.
    """

    algorithm: Algorithm
    alpha: np.ndarray
    beta_u: np.ndarray
    beta_i: np.ndarray
    gamma_u: np.ndarray
    gamma_i: np.ndarray
    W1: np.ndarray | None = None
    b1: np.ndarray | None = None
    w2: np.ndarray | None = None
    b2: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.gamma_u.shape[1]

    @property
    def num_users(self) -> int:
        return len(self.beta_u)

    @property
    def num_items(self) -> int:
        return len(self.beta_i)

    @property
    def has_mlp(self) -> bool:
        return self.W1 is not None

    def arrays(self) -> dict[str, np.ndarray]:
        names = ["alpha", "beta_u", "beta_i", "gamma_u", "gamma_i"]
        if self.has_mlp:
            names += ["W1", "b1", "w2", "b2"]
        return {k: getattr(self, k) for k in names}

    def copy(self) -> ModelParams:
        kw = {k: v.copy() for k, v in self.arrays().items()}
        return replace(self, extra=dict(self.extra), **kw)

    def check_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays().values())


def init_params(algorithm: Algorithm | str, num_users: int, num_items: int, d: int = 16,
                rng: np.random.Generator | None = None, alpha: float = 0.0,
                init_scale: float = 0.1) -> ModelParams:
    algorithm = Algorithm(algorithm)
    rng = rng if rng is not None else np.random.default_rng(0)
    if algorithm in (Algorithm.POPREC, Algorithm.BIAS):
        d = 0
    gu = rng.normal(0.0, init_scale, (num_users, d))
    gi = rng.normal(0.0, init_scale, (num_items, d))
    params = ModelParams(algorithm, np.array([alpha], dtype=np.float64), np.zeros(num_users),
                         np.zeros(num_items), gu, gi)
    if algorithm is Algorithm.NEUMF:
        H = 2 * d
        params.W1 = rng.normal(0.0, 1.0 / np.sqrt(3 * d), (H, 3 * d))
        params.b1 = np.zeros(H)
        params.w2 = rng.normal(0.0, 1.0 / np.sqrt(H), H)
        params.b2 = np.zeros(1)
    return params


def mlp_forward(params: ModelParams, pu: np.ndarray, qi: np.ndarray) -> np.ndarray:
    """MLP output for rows of user/item factors (matching leading shapes)."""
    x = np.concatenate([pu, qi, pu * qi], axis=-1)
    z = np.maximum(x @ params.W1.T + params.b1, 0.0)
    return z @ params.w2 + params.b2[0]


def _gather(params: ModelParams, users, items):
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    ku = (users >= 0) & (users < params.num_users)
    ki = (items >= 0) & (items < params.num_items)
    uu = np.where(ku, users, 0)
    ii = np.where(ki, items, 0)
    bu = np.where(ku, params.beta_u[uu], 0.0)
    bi = np.where(ki, params.beta_i[ii], 0.0)
    pu = params.gamma_u[uu] * ku[..., None]
    qi = params.gamma_i[ii] * ki[..., None]
    return bu, bi, pu, qi


def score(params: ModelParams, users, items) -> np.ndarray:
    """Scores for aligned arrays of users and items.

    Ids outside the trained id space fall back to the terms still available
    (cold start): their bias and factors count as zero.
    """
    bu, bi, pu, qi = _gather(params, users, items)
    if params.algorithm is Algorithm.POPREC:
        return bi.astype(np.float64)
    out = params.alpha[0] + bu + bi
    if params.algorithm is Algorithm.MF:
        out = out + np.einsum("...d,...d->...", pu, qi)
    elif params.algorithm is Algorithm.NEUMF:
        out = out + mlp_forward(params, pu, qi)
    return out


def predict(params: ModelParams, algorithm: Algorithm | str, user: int, item: int) -> float:
    if Algorithm(algorithm) is not params.algorithm:
        raise ValueError(f"params belong to {params.algorithm.value}, not {Algorithm(algorithm).value}")
    return float(score(params, np.array([user]), np.array([item]))[0])


def score_users(params: ModelParams, users) -> np.ndarray:
    """Dense ``len(users) x num_items`` score matrix."""
    users = np.asarray(users, dtype=np.int64)
    n_items = params.num_items
    bi = params.beta_i
    if params.algorithm is Algorithm.POPREC:
        return np.broadcast_to(bi.astype(np.float64), (len(users), n_items)).copy()
    bu, _, pu, _ = _gather(params, users, np.zeros_like(users))
    base = params.alpha[0] + bu[:, None] + bi[None, :]
    if params.algorithm is Algorithm.BIAS:
        return base
    Q = params.gamma_i
    if params.algorithm is Algorithm.MF:
        return base + pu @ Q.T
    d = params.d
    W1 = params.W1
    A = pu @ W1[:, :d].T                      # per-user part
    B = Q @ W1[:, d:2 * d].T + params.b1      # per-item part
    W3 = W1[:, 2 * d:]
    out = np.empty((len(users), n_items))
    for r in range(len(users)):
        h = A[r][None, :] + B + (Q * pu[r][None, :]) @ W3.T
        np.maximum(h, 0.0, out=h)
        out[r] = h @ params.w2
    return base + out + params.b2[0]
