"""Independent reference implementations used as test oracles.

Everything here is deliberately brute-force (loops, grids, exhaustive
enumeration) and kept free of the code paths it checks.
"""

import numpy as np


def loop_class_stats(ds):
    """Per-class means by plain python accumulation."""
    sums = {1: np.zeros(ds.d), -1: np.zeros(ds.d)}
    counts = {1: 0, -1: 0}
    radius = 0.0
    for i in range(ds.n):
        y = int(ds.y[i])
        sums[y] = sums[y] + ds.X[i]
        counts[y] += 1
        radius = max(radius, float(np.sqrt(np.sum(ds.X[i] ** 2))))
    return sums[1] / counts[1], sums[-1] / counts[-1], counts[1] / ds.n, radius


def loop_hinge_report(theta, ds):
    """Average hinge and 0/1 error by per-point summation."""
    total = 0.0
    errs = 0
    for i in range(ds.n):
        margin = ds.y[i] * float(theta @ ds.X[i])
        total += max(0.0, 1.0 - margin)
        if margin <= 0:
            errs += 1
    return total / ds.n, errs / ds.n


def feasible_mask_points(params, X, label, atol=1e-9):
    """Sphere/slab membership for a batch of same-label points."""
    mu = params.mu(label)
    ok = np.ones(X.shape[0], dtype=bool)
    diff = X - mu
    if params.use_sphere:
        ok &= np.linalg.norm(diff, axis=1) <= params.r(label) + atol
    if params.use_slab:
        v = params.centroid_vec(label)
        ok &= np.abs(diff @ v) <= params.s(label) + atol
    return ok


def grid_max_hinge_fixed(params, theta, label, step):
    """Grid search for the max hinge loss of one class over sphere/slab.

    Uses a 2-d grid in the plane through the centroid spanned by the
    inter-centroid axis and the orthogonal part of theta (grid points are
    feasible points of the full problem, so the maximum found is always a
    valid lower bound on the true maximum, in any dimension).
    """
    mu = params.mu(label)
    r = params.r(label)
    v = params.centroid_vec(label)
    nv = np.linalg.norm(v)
    if nv > 1e-12:
        e1 = v / nv
    else:
        e1 = _any_unit(mu.shape[0], 0)
    c = label * theta
    c_perp = c - (c @ e1) * e1
    if np.linalg.norm(c_perp) > 1e-12:
        e2 = c_perp / np.linalg.norm(c_perp)
    else:
        e2 = _any_orthogonal(e1)
    ticks = np.arange(-r, r + step, step)
    A, B = np.meshgrid(ticks, ticks)
    pts = mu + A.reshape(-1, 1) * e1 + B.reshape(-1, 1) * e2
    ok = feasible_mask_points(params, pts, label)
    if not ok.any():
        return 0.0, mu
    pts = pts[ok]
    losses = np.maximum(0.0, 1.0 - label * (pts @ theta))
    i = int(np.argmax(losses))
    return float(losses[i]), pts[i]


def random_feasible_points(params, label, count, seed):
    """Rejection-sample feasible points from a box around the centroid."""
    rng = np.random.default_rng(seed)
    mu = params.mu(label)
    r = params.r(label)
    out = []
    for _ in range(60):
        X = mu + rng.uniform(-r, r, size=(count * 4, mu.shape[0]))
        ok = feasible_mask_points(params, X, label)
        out.append(X[ok])
        if sum(len(o) for o in out) >= count:
            break
    X = np.concatenate(out) if out else np.zeros((0, mu.shape[0]))
    return X[:count]


def enumerate_integer_max(params, theta, label, cap):
    """Exhaustive max hinge over feasible integer points in [0, cap]^d."""
    d = params.d
    grids = np.meshgrid(*[np.arange(0, cap + 1) for _ in range(d)], indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1).astype(float)
    ok = feasible_mask_points(params, pts, label)
    pts = pts[ok]
    if pts.shape[0] == 0:
        return None, None
    losses = np.maximum(0.0, 1.0 - label * (pts @ theta))
    i = int(np.argmax(losses))
    return float(losses[i]), pts[i]


def _any_unit(d, axis):
    e = np.zeros(d)
    e[axis] = 1.0
    return e


def _any_orthogonal(e1):
    d = e1.shape[0]
    for axis in range(d):
        cand = _any_unit(d, axis) - e1[axis] * e1
        n = np.linalg.norm(cand)
        if n > 1e-8:
            return cand / n
    raise ValueError("no orthogonal direction in dimension 1")


def grid_min_averaged_objective(D_c, attack, eps, rho, grid_n=200):
    """Minimum over a grid of the clean-plus-averaged-attack hinge objective.

    The grid covers [-rho, rho]^2 restricted to the norm ball; any grid point
    is admissible, so the result lower-bounds the true minimum and the
    implied empirical regret under-estimates the true regret.
    """
    ticks = np.linspace(-rho, rho, grid_n)
    TH = np.stack(np.meshgrid(ticks, ticks), axis=-1).reshape(-1, 2)
    TH = TH[np.linalg.norm(TH, axis=1) <= rho]
    best = np.inf
    chunk = 20000
    for start in range(0, TH.shape[0], chunk):
        block = TH[start : start + chunk]
        clean = np.maximum(0.0, 1.0 - D_c.y[:, None] * (D_c.X @ block.T)).mean(axis=0)
        att = np.maximum(0.0, 1.0 - attack.y[:, None] * (attack.X @ block.T)).mean(axis=0)
        best = min(best, float((clean + eps * att).min()))
    return best
