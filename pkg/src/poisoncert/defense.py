"""Sanitization defenses as feasible sets.

A defense is a membership predicate built from per-class sphere radii
(distance to the class centroid) and slab half-widths (projection onto the
line between the centroids). Oracle defenses keep fixed centroids; the
data-dependent variant recomputes centroids from the poisoned mass while
holding the clean-calibrated thresholds fixed. An integer wrapper additionally
requires non-negative integer coordinates (text-style count features).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import ClassStats, Dataset, LabeledPoint, StatsError, _is_nonneg_integral

__all__ = [
    "SphereSlabParams",
    "FeasibleSet",
    "membership",
    "membership_mask",
    "calibrate_thresholds",
    "filter_feasible",
    "recompute_data_dependent",
]

KINDS = ("oracle", "data-dependent", "integer-wrapped")

MEMBERSHIP_ATOL = 1e-9


@dataclass(frozen=True)
class SphereSlabParams:
    """Centroids plus per-class sphere radii r_y and slab half-widths s_y."""

    mu_plus: np.ndarray
    mu_minus: np.ndarray
    r_plus: float
    r_minus: float
    s_plus: float
    s_minus: float
    use_sphere: bool = True
    use_slab: bool = True

    def __post_init__(self):
        mu_p = np.ascontiguousarray(self.mu_plus, dtype=float)
        mu_m = np.ascontiguousarray(self.mu_minus, dtype=float)
        if mu_p.shape != mu_m.shape or mu_p.ndim != 1:
            raise ValueError("centroids must be 1-d vectors of equal dimension")
        for name in ("r_plus", "r_minus", "s_plus", "s_minus"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not (self.use_sphere or self.use_slab):
            raise ValueError("at least one of sphere/slab must be enabled")
        mu_p.flags.writeable = False
        mu_m.flags.writeable = False
        object.__setattr__(self, "mu_plus", mu_p)
        object.__setattr__(self, "mu_minus", mu_m)

    @property
    def d(self):
        return self.mu_plus.shape[0]

    def mu(self, label):
        return self.mu_plus if label == 1 else self.mu_minus

    def r(self, label):
        return self.r_plus if label == 1 else self.r_minus

    def s(self, label):
        return self.s_plus if label == 1 else self.s_minus

    def centroid_vec(self, label):
        """mu_y - mu_{-y}: the axis the slab constraint projects onto."""
        v = self.mu_plus - self.mu_minus
        return v if label == 1 else -v


@dataclass(frozen=True)
class FeasibleSet:
    """A defense: sphere/slab parameters plus the kind of centroid source."""

    kind: str
    params: SphereSlabParams
    integer_features: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")

    @property
    def is_data_dependent(self):
        return self.kind == "data-dependent"

    @property
    def requires_integer(self):
        return self.integer_features or self.kind == "integer-wrapped"


def _constraint_slacks(params: SphereSlabParams, X, label):
    """Signed slacks (value - threshold) for each enabled constraint; <= 0 is feasible."""
    diff = X - params.mu(label)
    slacks = []
    if params.use_sphere:
        slacks.append(np.linalg.norm(diff, axis=1) - params.r(label))
    if params.use_slab:
        v = params.centroid_vec(label)
        slacks.append(np.abs(diff @ v) - params.s(label))
    return slacks


def membership(F: FeasibleSet, p: LabeledPoint, atol: float = MEMBERSHIP_ATOL) -> bool:
    """True iff every enabled constraint holds for the point's class.

    Constraint values are compared with an absolute slack `atol` so that
    points constructed on the constraint boundary remain members.
    """
    if p.d != F.params.d:
        raise ValueError(f"dimension mismatch: point d={p.d}, defense d={F.params.d}")
    if F.requires_integer and not _is_nonneg_integral(p.x):
        return False
    X = p.x[None, :]
    return all(s[0] <= atol for s in _constraint_slacks(F.params, X, p.y))


def membership_mask(F: FeasibleSet, ds: Dataset, atol: float = MEMBERSHIP_ATOL) -> np.ndarray:
    """Vectorized membership over a dataset, preserving order."""
    if ds.d != F.params.d:
        raise ValueError(f"dimension mismatch: data d={ds.d}, defense d={F.params.d}")
    ok = np.ones(ds.n, dtype=bool)
    if F.requires_integer and ds.n:
        ok &= (ds.X >= -1e-9).all(axis=1)
        ok &= (np.abs(ds.X - np.round(ds.X)) <= 1e-9).all(axis=1)
    for label in (1, -1):
        mask = ds.y == label
        if not mask.any():
            continue
        for slack in _constraint_slacks(F.params, ds.X[mask], label):
            sub = ok[mask]
            sub &= slack <= atol
            ok[mask] = sub
    return ok


def filter_feasible(F: FeasibleSet, ds: Dataset) -> Dataset:
    """The subset of points passing membership, order preserved."""
    return ds.subset(np.flatnonzero(membership_mask(F, ds)))


def calibrate_thresholds(
    ds: Dataset,
    stats: ClassStats,
    keep_fraction: float,
    use_sphere: bool = True,
    use_slab: bool = True,
) -> SphereSlabParams:
    """Choose r_y and s_y as per-class lower empirical quantiles.

    Each threshold is the order statistic at index ceil(keep_fraction * n_y),
    so exactly that many class-y points satisfy the individual constraint
    (up to ties). Sphere uses ||x - mu_y||, slab uses |<x - mu_y, mu_y - mu_{-y}>|.
    """
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must be in (0, 1]")
    v = stats.mu_plus - stats.mu_minus
    radii, widths = {}, {}
    for label in (1, -1):
        mask = ds.y == label
        if not mask.any():
            raise StatsError(f"class {label} is empty")
        diff = ds.X[mask] - stats.mu(label)
        k = math.ceil(keep_fraction * mask.sum())
        radii[label] = float(np.sort(np.linalg.norm(diff, axis=1))[k - 1])
        widths[label] = float(np.sort(np.abs(diff @ (v if label == 1 else -v)))[k - 1])
    return SphereSlabParams(
        mu_plus=stats.mu_plus,
        mu_minus=stats.mu_minus,
        r_plus=radii[1],
        r_minus=radii[-1],
        s_plus=widths[1],
        s_minus=widths[-1],
        use_sphere=use_sphere,
        use_slab=use_slab,
    )


def recompute_data_dependent(F: FeasibleSet, D_c: Dataset, D_p: Dataset) -> FeasibleSet:
    """Replace centroids by the empirical means over D_c union D_p.

    Equivalently mu_hat_y = (p_y mu_y + sum_{D_p, y} x / n) / (p_y + n_{p,y} / n)
    with n = |D_c|: the clean mass keeps weight 1 and the poisoned points add
    mass on top. Thresholds are left untouched; only the centroids move.
    """
    if not F.is_data_dependent:
        raise ValueError("recompute_data_dependent requires a data-dependent feasible set")
    if D_p.n and D_p.d != D_c.d:
        raise ValueError("dimension mismatch between clean and poisoned data")
    new_mu = {}
    for label in (1, -1):
        clean = D_c.X[D_c.y == label]
        pois = D_p.X[D_p.y == label] if D_p.n else np.zeros((0, D_c.d))
        total = clean.shape[0] + pois.shape[0]
        if total == 0:
            raise StatsError(f"class {label} is empty in D_c union D_p")
        new_mu[label] = (clean.sum(axis=0) + pois.sum(axis=0)) / total
    params = replace(F.params, mu_plus=new_mu[1], mu_minus=new_mu[-1])
    return replace(F, params=params)
