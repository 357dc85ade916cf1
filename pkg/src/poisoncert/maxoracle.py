"""Worst-case single-point hinge loss over a fixed sphere/slab defense.

Maximizing the hinge loss over feasible (x, y) is, per class, the problem of
minimizing c.x with c = y*theta over the intersection of a ball and a slab.
That program has a closed form: decompose c along the inter-centroid axis and
its orthogonal complement, clip the axis coordinate to the slab, and spend the
remaining sphere budget against the orthogonal component. For integer count
features the continuous optimum is an upper bound and a randomized rounding
pass produces a feasible integer candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledPoint
from .defense import MEMBERSHIP_ATOL, FeasibleSet, SphereSlabParams, membership
from .model import LinearModel

__all__ = [
    "OracleResult",
    "ClassBest",
    "UnboundedOracleError",
    "max_loss_continuous",
    "max_loss_integer",
]

_TINY = 1e-14


class UnboundedOracleError(ValueError):
    """The feasible set does not bound the loss (no finite sphere radius)."""


@dataclass(frozen=True)
class ClassBest:
    y: int
    point: LabeledPoint | None
    loss: float


@dataclass(frozen=True)
class OracleResult:
    """Best feasible attack point, with the continuous relaxation value.

    For the continuous oracle loss == relaxed_loss and the point attains it.
    For the integer oracle the point is the best feasible rounding (None with
    no_candidate=True when the budget found none) and relaxed_point carries
    the continuous optimum used for the upper bound.
    """

    point: LabeledPoint | None
    loss: float
    relaxed_loss: float
    relaxed_point: LabeledPoint
    by_class: tuple[ClassBest, ClassBest]
    no_candidate: bool = False


def _min_linear_over_ball_slab(c, mu, r, s, v, use_slab):
    """argmin of c.x over {||x - mu|| <= r} intersect {|<x - mu, v>| <= s}.

    With c = c_par * vhat + c_perp and A = min(r, s/||v||), the minimizer is
    x = mu + alpha* vhat - sqrt(r^2 - alpha*^2) c_perp/||c_perp||
    at alpha* = clip(-c_par * r / ||c||, -A, A); a degenerate ||c_perp|| = 0
    drops the orthogonal term and lands on alpha* = -A * sign(c_par).
    """
    if not math.isfinite(r):
        raise UnboundedOracleError("sphere radius must be finite")
    norm_c = np.linalg.norm(c)
    if norm_c <= _TINY:
        return mu.copy()
    norm_v = np.linalg.norm(v) if use_slab else 0.0
    if use_slab and norm_v > _TINY:
        A = min(r, s / norm_v)
        vhat = v / norm_v
        c_par = float(c @ vhat)
        c_perp = c - c_par * vhat
    else:
        # Coincident centroids (or slab disabled): the slab reads |<x-mu, 0>| <= s
        # and is vacuous, so only the sphere binds.
        A = r
        vhat = None
        c_par = 0.0
        c_perp = c
    norm_perp = np.linalg.norm(c_perp)
    alpha = float(np.clip(-c_par * r / norm_c, -A, A))
    x = mu.copy()
    if vhat is not None:
        x = x + alpha * vhat
    if norm_perp > _TINY * norm_c:
        x = x - math.sqrt(max(r**2 - alpha**2, 0.0)) * (c_perp / norm_perp)
    return x


def max_loss_continuous(F: SphereSlabParams | FeasibleSet, model: LinearModel) -> OracleResult:
    """Exact maximizer of the hinge loss over the sphere/slab set, both classes.

    Solves min y<theta, x> per class in closed form and returns the class with
    the larger hinge loss (ties go to +1). theta = 0 degenerates to loss 1 at
    the positive centroid.
    """
    params = F.params if isinstance(F, FeasibleSet) else F
    if params.d != model.d:
        raise ValueError(f"dimension mismatch: defense d={params.d}, model d={model.d}")
    if not params.use_sphere:
        raise UnboundedOracleError("the continuous oracle needs an enabled sphere constraint")
    best = None
    per_class = []
    for y in (1, -1):
        c = y * model.theta
        x = _min_linear_over_ball_slab(
            c, params.mu(y), params.r(y), params.s(y), params.centroid_vec(y), params.use_slab
        )
        loss = max(0.0, 1.0 - float(c @ x))
        entry = ClassBest(y=y, point=LabeledPoint(x, y), loss=loss)
        per_class.append(entry)
        if best is None or entry.loss > best.loss:
            best = entry
    return OracleResult(
        point=best.point,
        loss=best.loss,
        relaxed_loss=best.loss,
        relaxed_point=best.point,
        by_class=tuple(per_class),
    )


def _round_candidates(rng, x_star, budget):
    """Randomized roundings of x_star: floor plus Bernoulli(fractional part)."""
    base = np.floor(x_star)
    frac = x_star - base
    draws = rng.random((budget, x_star.shape[0]))
    return base + (draws < frac)


def _repair_integer(x, params, y, max_steps=200):
    """Walk coordinates toward mu_y, largest constraint contribution first."""
    mu = params.mu(y)
    v = params.centroid_vec(y)
    x = x.copy()
    for _ in range(max_steps):
        diff = x - mu
        sphere_slack = np.linalg.norm(diff) - params.r(y) if params.use_sphere else -1.0
        slab_val = float(diff @ v) if params.use_slab else 0.0
        slab_slack = abs(slab_val) - params.s(y) if params.use_slab else -1.0
        if sphere_slack <= MEMBERSHIP_ATOL and slab_slack <= MEMBERSHIP_ATOL:
            return x
        if sphere_slack >= slab_slack:
            contrib = diff**2
        else:
            contrib = np.sign(slab_val) * diff * v  # positive entries push the violation
            contrib = np.where(contrib > 0, contrib, 0.0)
        order = np.argsort(-contrib)
        moved = False
        for j in order:
            if contrib[j] <= 0 or abs(diff[j]) < 0.5:
                break
            step = -np.sign(diff[j])
            new_val = x[j] + step
            if new_val < 0:
                continue
            x[j] = new_val
            moved = True
            break
        if not moved:
            return None
    return None


def max_loss_integer(
    F: SphereSlabParams | FeasibleSet,
    model: LinearModel,
    budget: int,
    seed: int,
    *,
    coord_cap=None,
) -> OracleResult:
    """Integer-valued attack point via relaxation plus randomized rounding.

    The continuous optimum gives relaxed_loss (a valid upper bound; integrity
    and non-negativity are only enforced on the rounded candidates). Per class,
    `budget` roundings of the continuous optimum are drawn, each coordinate
    rounded down or up with probability equal to its fractional part, clipped
    to [0, coord_cap]; infeasible samples are repaired by greedy coordinate
    moves toward the class centroid and discarded if repair fails. Returns the
    feasible candidate of highest hinge loss, or no_candidate=True when none
    was found within the budget.
    """
    params = F.params if isinstance(F, FeasibleSet) else F
    if budget < 1:
        raise ValueError("budget must be >= 1")
    relaxed = max_loss_continuous(params, model)
    rng = np.random.default_rng(seed)
    cap = None if coord_cap is None else np.asarray(coord_cap, dtype=float)

    wrapped = FeasibleSet(kind="integer-wrapped", params=params)
    best_point = None
    best_loss = -np.inf
    per_class = []
    for entry in relaxed.by_class:
        y = entry.y
        x_star = np.maximum(entry.point.x, 0.0)
        if cap is not None:
            x_star = np.minimum(x_star, cap)
        candidates = [np.round(x_star)] if _looks_integral(entry.point.x) else []
        raw = _round_candidates(rng, x_star, budget)
        class_best = None
        class_loss = -np.inf
        for cand in candidates + list(raw):
            cand = np.maximum(cand, 0.0)
            if cap is not None:
                cand = np.minimum(cand, cap)
            p = LabeledPoint(cand, y, integer_features=True)
            if not membership(wrapped, p):
                repaired = _repair_integer(cand, params, y)
                if repaired is None:
                    continue
                p = LabeledPoint(repaired, y, integer_features=True)
                if not membership(wrapped, p):
                    continue
            loss = max(0.0, 1.0 - p.y * float(model.theta @ p.x))
            if loss > class_loss:
                class_loss, class_best = loss, p
        per_class.append(ClassBest(y=y, point=class_best, loss=class_loss if class_best else 0.0))
        if class_best is not None and class_loss > best_loss:
            best_loss, best_point = class_loss, class_best

    if best_point is None:
        return OracleResult(
            point=None,
            loss=relaxed.loss,
            relaxed_loss=relaxed.loss,
            relaxed_point=relaxed.point,
            by_class=tuple(per_class),
            no_candidate=True,
        )
    return OracleResult(
        point=best_point,
        loss=best_loss,
        relaxed_loss=relaxed.loss,
        relaxed_point=relaxed.point,
        by_class=tuple(per_class),
    )


def _looks_integral(x):
    return bool(np.all(x >= -1e-9) and np.all(np.abs(x - np.round(x)) <= 1e-9))
