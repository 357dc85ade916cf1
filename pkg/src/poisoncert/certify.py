"""Certified bounds on the minimax training loss under poisoning.

The certificate objective for a model theta is the clean average hinge loss
plus eps times the worst feasible single-point loss; it upper-bounds the
minimax training loss for every theta. An adaptive dual-averaging learner
descends that objective while the per-step loss maximizers accumulate into a
candidate attack, whose induced training loss is the matching lower bound.
For fixed defenses the duality gap is bounded by the learner's average
regret; for data-dependent defenses the same loop runs with the Gram-SDP
oracle but the regret guarantee no longer applies, so upper and lower bounds
are reported without the sandwich assertion.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import sdp as sdp_mod
from .data import Dataset, class_stats, concat
from .defense import FeasibleSet, SphereSlabParams
from .maxoracle import max_loss_continuous, max_loss_integer
from .model import LinearModel, TrainConfig, train_erm

__all__ = [
    "RdaState",
    "StepRecord",
    "Certificate",
    "CertificationError",
    "init_rda_state",
    "rda_step",
    "regret_bound_trace",
    "upper_objective",
    "certify_fixed",
    "certify_data_dependent",
]

logger = logging.getLogger(__name__)


class CertificationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RdaState:
    """State of the adaptive dual-averaging learner.

    theta = -G_t / lambda_t with lambda_t = max(1/eta, ||G_t||/rho): growing
    lambda enforces the norm ball exactly while keeping lambda_t >= 1/eta.
    """

    cumulative_gradient: np.ndarray
    t: int
    eta: float
    lambda_t: float
    rho: float
    theta: np.ndarray


def init_rda_state(d: int, rho: float, eta: float) -> RdaState:
    if rho <= 0 or eta <= 0:
        raise ValueError("rho and eta must be positive")
    return RdaState(
        cumulative_gradient=np.zeros(d),
        t=0,
        eta=eta,
        lambda_t=1.0 / eta,
        rho=rho,
        theta=np.zeros(d),
    )


def rda_step(state: RdaState, g: np.ndarray) -> RdaState:
    """One dual-averaging update: accumulate g, rescale, renormalize theta."""
    g = np.asarray(g, dtype=float)
    if g.shape != state.cumulative_gradient.shape:
        raise ValueError("gradient dimension mismatch")
    G = state.cumulative_gradient + g
    lam = max(1.0 / state.eta, float(np.linalg.norm(G)) / state.rho)
    return RdaState(
        cumulative_gradient=G,
        t=state.t + 1,
        eta=state.eta,
        lambda_t=lam,
        rho=state.rho,
        theta=-G / lam,
    )


def regret_bound_trace(grad_norms, lambdas, rho: float, eta: float) -> np.ndarray:
    """Cumulative bound rho^2/(2 eta) + sum_s ||g_s||^2 / (2 lambda_s).

    lambda_s is the regularization in effect when gradient s arrived (the one
    that produced the iterate the gradient was evaluated at), so the first
    term uses lambda_1 = 1/eta.
    """
    grad_norms = np.asarray(grad_norms, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    if grad_norms.shape != lambdas.shape:
        raise ValueError("grad_norms and lambdas must align")
    head = rho**2 / (2.0 * eta)
    if grad_norms.size == 0:
        return np.array([])
    return head + np.cumsum(grad_norms**2 / (2.0 * lambdas))


def upper_objective(model: LinearModel, D_c: Dataset, oracle_loss: float, eps: float) -> float:
    """Clean average hinge plus eps times the oracle's worst feasible loss."""
    margins = D_c.y * (D_c.X @ model.theta)
    clean = float(np.maximum(0.0, 1.0 - margins).mean())
    return clean + eps * oracle_loss


@dataclass
class StepRecord:
    """Per-iteration trace entry of the certification loop."""

    t: int
    u_before: float  # objective at the pre-update iterate theta^{t-1}
    u_after: float | None  # objective at the post-update iterate theta^{t}
    lambda_used: float
    lambda_after: float
    grad_norm: float
    oracle_loss: float
    skipped: bool = False

    def as_json(self):
        return {
            "t": self.t,
            "u_pre": self.u_before,
            "u_post": self.u_after,
            "lambda": self.lambda_used,
            "grad_norm": self.grad_norm,
            "oracle_loss": self.oracle_loss,
            "skipped": self.skipped,
        }


@dataclass
class Certificate:
    """Upper/lower bounds with the candidate attack and instrumentation."""

    kind: str
    eps: float
    rho: float
    eta: float
    n_clean: int
    n_steps: int
    upper_bound: float
    lower_bound: float
    duality_gap: float
    attack: Dataset
    model_tilde: LinearModel
    u_trace: np.ndarray
    u_pre_trace: np.ndarray
    regret_trace: np.ndarray
    steps: list = field(default_factory=list)
    n_skipped: int = 0
    attack_masses: np.ndarray | None = None
    support_violation: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def avg_regret_bound(self):
        if self.regret_trace.size == 0:
            return 0.0
        return float(self.regret_trace[-1]) / self.n_steps

    def to_json_dict(self, config_echo=None):
        out = {
            "kind": self.kind,
            "eps": self.eps,
            "rho": self.rho,
            "eta": self.eta,
            "n_clean": self.n_clean,
            "n_steps": self.n_steps,
            "upper_bound": self.upper_bound,
            "lower_bound": self.lower_bound,
            "duality_gap": self.duality_gap,
            "avg_regret_bound": self.avg_regret_bound,
            "n_skipped": self.n_skipped,
            "support_violation": self.support_violation,
            "attack": {
                "labels": [int(v) for v in self.attack.y],
                "X": [[float(v) for v in row] for row in self.attack.X],
            },
            "model_tilde": self.model_tilde.to_json_dict(),
            "u_trace": [float(v) for v in self.u_trace],
            "u_pre_trace": [float(v) for v in self.u_pre_trace],
            "regret_trace": [float(v) for v in self.regret_trace],
            "steps": [s.as_json() for s in self.steps],
            "notes": list(self.notes),
        }
        if self.attack_masses is not None:
            out["attack_masses"] = [float(v) for v in self.attack_masses]
        if config_echo is not None:
            out["config"] = config_echo
        return out


def _default_eta(D_c: Dataset, params: SphereSlabParams, eps: float, T: int, rho: float) -> float:
    """rho / (Gbar sqrt(T)) with Gbar an estimate of the per-step gradient norm."""
    mean_norm = float(np.linalg.norm(D_c.X, axis=1).mean())
    feas = max(
        float(np.linalg.norm(params.mu(y))) + (params.r(y) if params.use_sphere else 0.0)
        for y in (1, -1)
    )
    g_bar = max(mean_norm + eps * feas, 1e-12)
    return rho / (g_bar * math.sqrt(max(T, 1)))


def _clean_loss_and_grad(theta, D_c):
    margins = D_c.y * (D_c.X @ theta)
    loss = float(np.maximum(0.0, 1.0 - margins).mean())
    active = margins < 1.0
    if active.any():
        grad = -(D_c.y[active].astype(float) / D_c.n) @ D_c.X[active]
    else:
        grad = np.zeros(D_c.d)
    return loss, grad


def _hinge_sum(theta, X, y):
    if len(y) == 0:
        return 0.0
    return float(np.maximum(0.0, 1.0 - y * (X @ theta)).sum())


def _degenerate_certificate(kind, D_c, rho, train_config):
    model = train_erm(D_c, rho, train_config)
    clean = _hinge_sum(model.theta, D_c.X, D_c.y) / D_c.n
    empty = Dataset(np.zeros((0, D_c.d)), np.zeros(0, dtype=int))
    return Certificate(
        kind=kind,
        eps=0.0,
        rho=rho,
        eta=float("nan"),
        n_clean=D_c.n,
        n_steps=0,
        upper_bound=clean,
        lower_bound=clean,
        duality_gap=0.0,
        attack=empty,
        model_tilde=model,
        u_trace=np.array([]),
        u_pre_trace=np.array([]),
        regret_trace=np.array([]),
    )


def certify_fixed(
    D_c: Dataset,
    F: FeasibleSet,
    eps: float,
    rho: float,
    eta: float | None = None,
    seed: int = 0,
    *,
    steps: int | None = None,
    train_config: TrainConfig | None = None,
    rounding_budget: int = 1000,
    coord_cap=None,
    sandwich_tol: float = 1e-6,
) -> Certificate:
    """Certify a fixed (poison-independent) defense.

    Runs T = floor(eps * n) dual-averaging steps (or `steps` if given, in
    which case the attack points are weight-adjusted when retraining). Each
    step maximizes the hinge loss over the feasible set at the current
    iterate, takes the combined clean+attack subgradient, and updates. The
    returned certificate's bounds satisfy lower <= upper and, for continuous
    oracles, gap <= regret/T within `sandwich_tol`; both are asserted.

    With an integer-wrapped defense the upper bound and gradients come from
    the continuous relaxation while the emitted attack holds the rounded
    feasible points; the regret-gap assertion is skipped since rounding may
    leave a genuine integrality gap.
    """
    if F.is_data_dependent:
        raise ValueError("certify_fixed requires an oracle (fixed) feasible set")
    params = F.params
    if D_c.d != params.d:
        raise ValueError("dimension mismatch between data and defense")
    train_config = train_config or TrainConfig(tol=1e-9, max_stages=24, stage_iters=1500)
    integer_mode = F.requires_integer

    if eps == 0:
        return _degenerate_certificate("integer" if integer_mode else "fixed", D_c, rho, train_config)
    if eps < 0:
        raise ValueError("eps must be non-negative")

    n = D_c.n
    attack_size = math.floor(eps * n)
    if attack_size < 1:
        raise ValueError("eps * n must be at least 1")
    T = steps if steps is not None else attack_size
    if eta is None:
        eta = _default_eta(D_c, params, eps, T, rho)

    rng = np.random.default_rng(seed)
    oracle_seeds = rng.integers(0, 2**63 - 1, size=T + 1) if integer_mode else None

    def oracle(model, k):
        if integer_mode:
            return max_loss_integer(F, model, rounding_budget, int(oracle_seeds[k]), coord_cap=coord_cap)
        return max_loss_continuous(params, model)

    state = init_rda_state(D_c.d, rho, eta)
    records: list[StepRecord] = []
    attack_X, attack_y = [], []
    rounding_misses = 0

    for t in range(1, T + 1):
        theta = state.theta
        clean_loss, clean_grad = _clean_loss_and_grad(theta, D_c)
        res = oracle(LinearModel(theta, rho), t - 1)
        loss_used = res.relaxed_loss if integer_mode else res.loss
        grad_point = res.relaxed_point if integer_mode else res.point
        u_before = clean_loss + eps * loss_used
        if records:
            records[-1].u_after = u_before

        if integer_mode:
            if res.point is not None:
                attack_X.append(res.point.x)
                attack_y.append(res.point.y)
            else:
                rounding_misses += 1
        else:
            attack_X.append(res.point.x)
            attack_y.append(res.point.y)

        g = clean_grad.copy()
        if 1.0 - grad_point.y * float(theta @ grad_point.x) > 0.0:
            g += eps * (-grad_point.y * grad_point.x)
        lam_used = state.lambda_t
        state = rda_step(state, g)
        records.append(
            StepRecord(
                t=t,
                u_before=u_before,
                u_after=None,
                lambda_used=lam_used,
                lambda_after=state.lambda_t,
                grad_norm=float(np.linalg.norm(g)),
                oracle_loss=loss_used,
            )
        )

    clean_loss_T, _ = _clean_loss_and_grad(state.theta, D_c)
    res_T = oracle(LinearModel(state.theta, rho), T)
    records[-1].u_after = clean_loss_T + eps * (res_T.relaxed_loss if integer_mode else res_T.loss)

    u_trace = np.array([r.u_after for r in records])
    u_pre_trace = np.array([r.u_before for r in records])
    regret_trace = regret_bound_trace(
        [r.grad_norm for r in records], [r.lambda_used for r in records], rho, eta
    )
    upper = float(u_trace.min())

    attack = Dataset(
        np.array(attack_X) if attack_X else np.zeros((0, D_c.d)),
        np.array(attack_y, dtype=int) if attack_y else np.zeros(0, dtype=int),
        integer_features=integer_mode,
    )

    weighted = steps is not None and attack.n and attack.n != attack_size
    if weighted:
        weights = np.concatenate([np.ones(n), np.full(attack.n, eps * n / attack.n)])
        model_tilde = train_erm(concat(D_c, attack), rho, train_config, weights=weights)
        lower = (
            _hinge_sum(model_tilde.theta, D_c.X, D_c.y)
            + (eps * n / attack.n) * _hinge_sum(model_tilde.theta, attack.X, attack.y)
        ) / n
    elif attack.n:
        model_tilde = train_erm(concat(D_c, attack), rho, train_config)
        lower = (
            _hinge_sum(model_tilde.theta, D_c.X, D_c.y)
            + _hinge_sum(model_tilde.theta, attack.X, attack.y)
        ) / n
    else:
        model_tilde = train_erm(D_c, rho, train_config)
        lower = _hinge_sum(model_tilde.theta, D_c.X, D_c.y) / n

    cert = Certificate(
        kind="integer" if integer_mode else "fixed",
        eps=eps,
        rho=rho,
        eta=eta,
        n_clean=n,
        n_steps=T,
        upper_bound=upper,
        lower_bound=lower,
        duality_gap=upper - lower,
        attack=attack,
        model_tilde=model_tilde,
        u_trace=u_trace,
        u_pre_trace=u_pre_trace,
        regret_trace=regret_trace,
        steps=records,
    )
    if rounding_misses:
        cert.notes.append(f"{rounding_misses} steps produced no feasible integer rounding")

    if lower > upper + sandwich_tol:
        raise CertificationError(
            f"lower bound {lower:.9f} exceeds upper bound {upper:.9f} beyond tolerance"
        )
    if not integer_mode and not weighted:
        gap_bound = float(regret_trace[-1]) / T + sandwich_tol
        if cert.duality_gap > gap_bound:
            raise CertificationError(
                f"duality gap {cert.duality_gap:.9f} exceeds regret bound {gap_bound:.9f}"
            )
    return cert


def _support_violation(prog, points, mu_p, mu_m, theta):
    """Constraint violation of the (truncated) support under its own program."""
    vecs = np.concatenate([points, np.stack([mu_p, mu_m, theta])])
    G = vecs @ vecs.T
    return prog.max_violation(G)


def certify_data_dependent(
    D_c: Dataset,
    F: FeasibleSet,
    eps: float,
    rho: float,
    eta: float | None = None,
    seed: int = 0,
    *,
    sdp_samples: int = 20,
    attack_samples: int = 5,
    eval_steps: int = 10,
    steps: int | None = None,
    train_config: TrainConfig | None = None,
    sdp_tol: float = 1e-7,
    sdp_max_iter: int = 20_000,
    max_skip_fraction: float = 0.1,
    boundary_weights: bool = True,
    trace_path=None,
) -> Certificate:
    """Certify the data-dependent defense with the Gram-SDP oracle.

    Each step maximizes the expected hinge loss over attack distributions on
    at most four points (Monte-Carlo over the weight simplex, SDP per weight
    draw) and feeds the mass-weighted expected subgradient to the learner.
    Failed SDP steps are skipped without updating the learner; the run fails
    if more than `max_skip_fraction` of steps are skipped. Afterwards the
    `eval_steps` most promising stored distributions each spawn
    `attack_samples` sampled multisets of floor(eps*n) points; the multiset
    with the largest retrained training loss becomes the reported attack.
    No duality assertion is made: the constraint set is non-convex.
    """
    if not F.is_data_dependent:
        raise ValueError("certify_data_dependent requires a data-dependent feasible set")
    params = F.params
    if D_c.d != params.d:
        raise ValueError("dimension mismatch between data and defense")
    train_config = train_config or TrainConfig(tol=1e-7, max_stages=20, stage_iters=1000)

    if eps == 0:
        return _degenerate_certificate("data-dependent", D_c, rho, train_config)
    if eps < 0:
        raise ValueError("eps must be non-negative")

    n = D_c.n
    attack_size = math.floor(eps * n)
    if attack_size < 1:
        raise ValueError("eps * n must be at least 1")
    T = steps if steps is not None else attack_size
    if eta is None:
        eta = _default_eta(D_c, params, eps, T, rho)
    stats = class_stats(D_c)

    # Boundary supports (some masses exactly zero) are tried alongside the
    # simplex samples: they stay feasible when a class has no reachable
    # on-margin point, and the all-off-margin corner realizes a zero-loss
    # attack against models the defense fully protects.
    corners = []
    if boundary_weights:
        corners = [
            sdp_mod.AttackWeights(eps, 0.0, 0.0, 0.0),
            sdp_mod.AttackWeights(0.0, 0.0, eps, 0.0),
            sdp_mod.AttackWeights(eps / 2, 0.0, eps / 2, 0.0),
            sdp_mod.AttackWeights(0.0, eps / 2, 0.0, eps / 2),
        ]

    rng = np.random.default_rng(seed)
    step_seeds = rng.integers(0, 2**63 - 1, size=T + 1)

    state = init_rda_state(D_c.d, rho, eta)
    records: list[StepRecord] = []
    candidates = []  # (value, t, points (4,d), labels, masses, program)
    last_live: StepRecord | None = None
    n_skipped = 0

    def run_oracle(theta, k):
        model = LinearModel(theta, rho)
        return sdp_mod.max_loss_data_dependent(
            stats,
            model,
            params,
            eps,
            sdp_samples,
            int(step_seeds[k]),
            extra_weights=corners,
            tol=sdp_tol,
            max_iter=sdp_max_iter,
            trace_path=trace_path,
        )

    for t in range(1, T + 1):
        theta = state.theta
        try:
            res = run_oracle(theta, t - 1)
        except sdp_mod.SdpOracleError as exc:
            logger.warning("step %d skipped: %s", t, exc)
            n_skipped += 1
            records.append(
                StepRecord(
                    t=t,
                    u_before=float("nan"),
                    u_after=None,
                    lambda_used=state.lambda_t,
                    lambda_after=state.lambda_t,
                    grad_norm=0.0,
                    oracle_loss=float("nan"),
                    skipped=True,
                )
            )
            continue
        clean_loss, clean_grad = _clean_loss_and_grad(theta, D_c)
        u_before = clean_loss + res.value
        if last_live is not None:
            last_live.u_after = u_before
        candidates.append((res.value, t, res.points, res.labels, res.masses, res.program, theta.copy()))

        g = clean_grad.copy()
        for x, y, m in zip(res.points, res.labels, res.masses):
            if m > 0 and 1.0 - y * float(theta @ x) > 0.0:
                g += m * (-float(y) * x)
        lam_used = state.lambda_t
        state = rda_step(state, g)
        rec = StepRecord(
            t=t,
            u_before=u_before,
            u_after=None,
            lambda_used=lam_used,
            lambda_after=state.lambda_t,
            grad_norm=float(np.linalg.norm(g)),
            oracle_loss=res.expected_loss,
        )
        records.append(rec)
        last_live = rec

    if n_skipped > max_skip_fraction * T:
        raise CertificationError(f"{n_skipped}/{T} SDP steps skipped (> {max_skip_fraction:.0%})")

    if last_live is not None:
        try:
            res_T = run_oracle(state.theta, T)
            clean_T, _ = _clean_loss_and_grad(state.theta, D_c)
            last_live.u_after = clean_T + res_T.value
        except sdp_mod.SdpOracleError as exc:
            logger.warning("final objective evaluation skipped: %s", exc)
            last_live.u_after = last_live.u_before

    live = [r for r in records if not r.skipped]
    u_trace = np.array([r.u_after for r in live])
    u_pre_trace = np.array([r.u_before for r in live])
    regret_trace = regret_bound_trace(
        [r.grad_norm for r in live], [r.lambda_used for r in live], rho, eta
    )
    upper = float(u_trace.min()) if u_trace.size else float("inf")

    # Candidate attacks: sample multisets from the strongest distributions.
    candidates.sort(key=lambda c: (-c[0], c[1]))
    best = None
    warm_theta = None
    worst_support_violation = 0.0
    for value, t, pts, labels, masses, prog, theta_t in candidates[:eval_steps]:
        worst_support_violation = max(
            worst_support_violation,
            _support_violation(prog, pts, stats.mu_plus, stats.mu_minus, theta_t),
        )
        probs = masses / masses.sum() if masses.sum() > 0 else np.full(4, 0.25)
        for _ in range(attack_samples):
            counts = rng.multinomial(attack_size, probs)
            rows = np.repeat(pts, counts, axis=0)
            labs = np.repeat(labels, counts)
            D_p = Dataset(rows, labs.astype(int))
            model_tilde = train_erm(
                concat(D_c, D_p), rho, train_config, init=warm_theta
            )
            warm_theta = model_tilde.theta
            score = (
                _hinge_sum(model_tilde.theta, D_c.X, D_c.y)
                + _hinge_sum(model_tilde.theta, D_p.X, D_p.y)
            ) / n
            if best is None or score > best[0]:
                best = (score, D_p, model_tilde, masses)

    if best is None:
        raise CertificationError("no attack candidate could be evaluated")
    lower, attack, model_tilde, masses = best

    return Certificate(
        kind="data-dependent",
        eps=eps,
        rho=rho,
        eta=eta,
        n_clean=n,
        n_steps=T,
        upper_bound=upper,
        lower_bound=lower,
        duality_gap=upper - lower,
        attack=attack,
        model_tilde=model_tilde,
        u_trace=u_trace,
        u_pre_trace=u_pre_trace,
        regret_trace=regret_trace,
        steps=records,
        n_skipped=n_skipped,
        attack_masses=masses,
        support_violation=worst_support_violation,
    )
