"""Linear models under an L2 norm-ball, hinge loss, and ERM training.

The norm ball ||theta||_2 <= rho is the only regularizer: keeping it explicit
(rather than a penalty term) is what makes the certificate objective exact.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset, LabeledPoint

__all__ = [
    "LinearModel",
    "LossReport",
    "TrainConfig",
    "TrainingWarning",
    "hinge_loss",
    "hinge_subgradient",
    "evaluate",
    "train_erm",
    "generalization_bound",
]

_NORM_RTOL = 1e-9


class TrainingWarning(UserWarning):
    """Training stopped at the iteration budget before meeting the tolerance."""


@dataclass(frozen=True)
class LinearModel:
    """Parameter vector constrained to the ball ||theta||_2 <= rho."""

    theta: np.ndarray
    rho: float

    def __post_init__(self):
        theta = np.ascontiguousarray(self.theta, dtype=float)
        if theta.ndim != 1:
            raise ValueError("theta must be a 1-d vector")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        nrm = float(np.linalg.norm(theta))
        if nrm > self.rho * (1 + _NORM_RTOL):
            raise ValueError(f"||theta|| = {nrm} exceeds rho = {self.rho}")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def d(self):
        return self.theta.shape[0]

    def to_json_dict(self):
        return {"rho": self.rho, "theta": [float(v) for v in self.theta]}

    @staticmethod
    def from_json_dict(obj):
        return LinearModel(np.array(obj["theta"], dtype=float), float(obj["rho"]))


@dataclass(frozen=True)
class LossReport:
    avg_hinge: float
    zero_one: float
    n_points: int


def hinge_loss(model: LinearModel, p: LabeledPoint) -> float:
    """max(0, 1 - y<theta, x>) for a single point."""
    if p.d != model.d:
        raise ValueError(f"dimension mismatch: point has d={p.d}, model d={model.d}")
    return max(0.0, 1.0 - p.y * float(model.theta @ p.x))


def hinge_subgradient(model: LinearModel, p: LabeledPoint) -> np.ndarray:
    """-y*x on the active side of the hinge (1 - y<theta,x> > 0), else zero."""
    if p.d != model.d:
        raise ValueError(f"dimension mismatch: point has d={p.d}, model d={model.d}")
    if 1.0 - p.y * float(model.theta @ p.x) > 0.0:
        return -p.y * p.x
    return np.zeros(model.d)


def _margins(theta, ds: Dataset):
    return ds.y * (ds.X @ theta)


def evaluate(model: LinearModel, ds: Dataset) -> LossReport:
    """Average hinge loss and 0/1 error; sign(0) counts as a mistake."""
    if ds.n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if ds.d != model.d:
        raise ValueError(f"dimension mismatch: data d={ds.d}, model d={model.d}")
    margins = _margins(model.theta, ds)
    return LossReport(
        avg_hinge=float(np.maximum(0.0, 1.0 - margins).mean()),
        zero_one=float((margins <= 0).mean()),
        n_points=ds.n,
    )


@dataclass(frozen=True)
class TrainConfig:
    """Settings for the staged projected-subgradient solver.

    Within a stage the step is gamma_k / sqrt(t); between stages gamma is
    scaled by `decay` and the search restarts from the best iterate so far.
    Stops once a full stage improves the best objective by less than `tol`.
    """

    stage_iters: int = 1200
    max_stages: int = 18
    decay: float = 0.5
    tol: float = 1e-4
    step_scale: float | None = None


def _weighted_objective_grad(theta, X, yv, wn):
    margins = yv * (X @ theta)
    obj = float(wn @ np.maximum(0.0, 1.0 - margins))
    active = margins < 1.0
    if active.any():
        grad = -(wn[active] * yv[active]) @ X[active]
    else:
        grad = np.zeros(X.shape[1])
    return obj, grad


def train_erm(
    ds: Dataset,
    rho: float,
    config: TrainConfig | None = None,
    *,
    weights=None,
    init=None,
) -> LinearModel:
    """Minimize the (weighted) average hinge loss over the ball ||theta|| <= rho.

    Projected subgradient descent with 1/sqrt(t) steps and iterate averaging,
    run in stages of geometrically shrinking step scale; returns the best
    iterate found. Emits TrainingWarning when the stage budget runs out while
    the objective is still improving by more than the tolerance.
    """
    if ds.n == 0:
        raise ValueError("cannot train on an empty dataset")
    cfg = config or TrainConfig()
    X, yv = ds.X, ds.y.astype(float)
    if weights is None:
        wn = np.full(ds.n, 1.0 / ds.n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (ds.n,) or (w < 0).any() or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive sum")
        wn = w / w.sum()

    if rho <= 0:
        raise ValueError("rho must be positive")

    grad_scale = max(float(wn @ np.linalg.norm(X, axis=1)), 1e-12)
    gamma0 = cfg.step_scale if cfg.step_scale is not None else rho / grad_scale

    if init is not None:
        theta = np.array(init, dtype=float)
        nrm = np.linalg.norm(theta)
        if nrm > rho:
            theta *= rho / nrm
    else:
        theta = np.zeros(ds.d)

    best_obj, _ = _weighted_objective_grad(theta, X, yv, wn)
    best_theta = theta.copy()

    converged = False
    for stage in range(cfg.max_stages):
        gamma = gamma0 * cfg.decay**stage
        theta = best_theta.copy()
        theta_sum = np.zeros(ds.d)
        stage_start_best = best_obj
        for t in range(1, cfg.stage_iters + 1):
            obj, grad = _weighted_objective_grad(theta, X, yv, wn)
            if obj < best_obj:
                best_obj, best_theta = obj, theta.copy()
            theta = theta - (gamma / math.sqrt(t)) * grad
            nrm = np.linalg.norm(theta)
            if nrm > rho:
                theta *= rho / nrm
            theta_sum += theta
        avg = theta_sum / cfg.stage_iters
        avg_obj, _ = _weighted_objective_grad(avg, X, yv, wn)
        if avg_obj < best_obj:
            best_obj, best_theta = avg_obj, avg
        if stage_start_best - best_obj < cfg.tol:
            converged = True
            break

    if not converged:
        warnings.warn(
            f"train_erm hit the stage budget (best objective {best_obj:.6g} still improving)",
            TrainingWarning,
        )
    return LinearModel(best_theta, rho)


def generalization_bound(n: int, rho: float, delta: float, R: float) -> float:
    """Uniform-convergence bound rho*R*(sqrt(4/n) + sqrt(log(1/delta)/(2n))).

    Holds with probability 1-delta for any 1-Lipschitz margin-based loss on
    data with ||x||_2 <= R, uniformly over ||theta||_2 <= rho; this is what
    justifies reading the certified training loss as a test-loss bound.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    if rho <= 0 or R <= 0:
        raise ValueError("rho and R must be positive")
    return rho * R * (math.sqrt(4.0 / n) + math.sqrt(math.log(1.0 / delta) / (2.0 * n)))
