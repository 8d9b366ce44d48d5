"""Independent numeric reference solvers and theorem-check harnesses.

Everything here validates the closed-form learners from the outside: a
proximal-gradient solver for the per-round global objectives, a post-hoc
comparator optimizer, the strong-FTRL per-round ledger, and lockstep
equivalence checks for the gradient-descent/FTRL theorems.  None of it
reuses the learners' closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    ConfigError,
    ConvergenceError,
    DataError,
    Linear,
    Logistic,
    LossKind,
    PenaltyKind,
    PenaltyMode,
    PenaltySchedule,
    RoundRecord,
    SparseExample,
    WeightVector,
    loss_margin_derivative,
    loss_value,
)
from .learners import (
    AlgorithmConfig,
    Family,
    LearnerState,
    LearningRateSchedule,
    LossHandling,
    RateMode,
    init,
    step,
)

MAX_ORACLE_DIM = 64
MAX_PROX_ITERS = 1_000_000


@dataclass(frozen=True)
class ObjectiveSpec:
    """One global objective of the unified update, in solver-ready form.

    linear . x  +  0.5 * sum_s || sigma_s^(1/2) (x - center_s) ||^2
    + penalty (cumulative-weight L1 or ball indicator)
    + optionally one loss term kept exact (the implicit round).
    """

    dim: int
    linear: np.ndarray
    quads: tuple[tuple[np.ndarray, np.ndarray], ...]
    penalty_kind: PenaltyKind | None = None
    penalty_weight: float = 0.0
    radius: float = 1.0
    implicit_loss: tuple[LossKind, SparseExample] | None = None


def _ball_project(x: np.ndarray, radius: float) -> np.ndarray:
    nm = math.sqrt(float(np.dot(x, x)))
    if nm <= radius:
        return x
    return x * (radius / nm)


def _soft(x: np.ndarray, thr: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)


def global_argmin(spec: ObjectiveSpec, tol: float = 1e-9) -> np.ndarray:
    """Minimize the objective by proximal gradient to a fixed point.

    The smooth part's gradient step uses 1/L with L from the diagonal
    curvature plus the exact-loss curvature bound; the penalty enters
    through its exact prox.  Iterates until the step displacement falls
    below tol/10 (the penalty prox is exact, so accuracy is governed by
    the smooth part alone).
    """
    if spec.dim > MAX_ORACLE_DIM:
        raise ConfigError(f"oracle dimension {spec.dim} exceeds {MAX_ORACLE_DIM}")
    qdiag = np.zeros(spec.dim)
    lin = spec.linear.astype(float).copy()
    for sigma, center in spec.quads:
        qdiag += sigma
        lin -= sigma * center
    theta_full = np.zeros(spec.dim)
    w = 0.0
    label = 1
    kind: LossKind | None = None
    if spec.implicit_loss is not None:
        kind, ex = spec.implicit_loss
        for i, v in ex.features.items():
            theta_full[i] = v
        w = ex.weight
        label = ex.label

    # zero-curvature coordinates (never regularized by an adaptive rate)
    # must be benign: their restricted optimum is exactly 0
    live = qdiag > 0
    dead = ~live
    if np.any(dead):
        if np.any(theta_full[dead] != 0.0):
            raise ConfigError("zero-curvature coordinate inside the exact loss term")
        cap = spec.penalty_weight if spec.penalty_kind is PenaltyKind.L1 else 0.0
        if np.any(np.abs(lin[dead]) > cap):
            raise ConfigError("objective is unbounded on a zero-curvature coordinate")
    if not np.any(live):
        return np.zeros(spec.dim)
    qd = qdiag[live]
    lv = lin[live]
    theta = theta_full[live]
    has_loss = kind is not None and bool(np.any(theta))
    lip = float(np.max(qd))
    if has_loss:
        lip += w * kind.curvature() * float(np.dot(theta, theta))
    eta = 1.0 / lip
    thr = eta * spec.penalty_weight

    x = np.zeros(int(np.sum(live)))
    disp = math.inf
    for _ in range(MAX_PROX_ITERS):
        grad = lv + qd * x
        if has_loss:
            grad = grad + w * loss_margin_derivative(kind, float(theta @ x), label) * theta
        xn = x - eta * grad
        if spec.penalty_kind is PenaltyKind.L1 and spec.penalty_weight > 0:
            xn = _soft(xn, thr)
        elif spec.penalty_kind is PenaltyKind.BALL:
            xn = _ball_project(xn, spec.radius)
        disp = math.sqrt(float(np.dot(xn - x, xn - x)))
        x = xn
        if disp <= tol / 10:
            out = np.zeros(spec.dim)
            out[live] = x
            return out
    raise ConvergenceError(
        f"proximal gradient stalled at displacement {disp:.3e} (target {tol / 10:.1e})"
    )


def objective_value(spec: ObjectiveSpec, x: np.ndarray) -> float:
    val = float(spec.linear @ x)
    for sigma, center in spec.quads:
        diff = x - center
        val += 0.5 * float(sigma @ (diff * diff))
    if spec.penalty_kind is PenaltyKind.L1:
        val += spec.penalty_weight * float(np.sum(np.abs(x)))
    elif spec.penalty_kind is PenaltyKind.BALL:
        nm = math.sqrt(float(np.dot(x, x)))
        if nm > spec.radius * (1 + 1e-9):
            return math.inf
    if spec.implicit_loss is not None:
        kind, ex = spec.implicit_loss
        m = sum(x[i] * v for i, v in ex.features.items())
        val += ex.weight * loss_value(kind, m, ex.label)
    return val


# ---------------------------------------------------------------------------
# Post-hoc comparator


def posthoc_best(
    losses: Sequence[tuple[LossKind, SparseExample]],
    penalty_weight: float = 0.0,
    radius: float | None = None,
) -> tuple[WeightVector, float]:
    """Best fixed point in hindsight and its total loss.

    Minimizes the summed losses plus an optional cumulative L1 weight over
    an optional L2 ball, by projected/proximal gradient run to displacement
    1e-9.
    """
    if not losses:
        raise DataError("need at least one loss")
    dim = 0
    for _, ex in losses:
        for i in ex.features:
            dim = max(dim, i + 1)
    if dim > MAX_ORACLE_DIM:
        raise ConfigError(f"post-hoc dimension {dim} exceeds {MAX_ORACLE_DIM}")
    T = len(losses)
    theta = np.zeros((T, dim))
    wts = np.zeros(T)
    labels = np.zeros(T)
    curv = np.zeros(T)
    kinds = []
    for k, (kind, ex) in enumerate(losses):
        for i, v in ex.features.items():
            theta[k, i] = v
        wts[k] = ex.weight
        labels[k] = ex.label
        curv[k] = kind.curvature()
        kinds.append(kind)

    scaled = theta * np.sqrt(wts * curv)[:, None]
    lip = float(np.linalg.norm(scaled, 2)) ** 2 if np.any(scaled) else 0.0

    def grad_at(x: np.ndarray) -> np.ndarray:
        margins = theta @ x
        dl = np.array(
            [
                wts[k] * loss_margin_derivative(kinds[k], float(margins[k]), int(labels[k]))
                for k in range(T)
            ]
        )
        return theta.T @ dl

    def value_at(x: np.ndarray) -> float:
        margins = theta @ x
        return float(
            sum(
                wts[k] * loss_value(kinds[k], float(margins[k]), int(labels[k]))
                for k in range(T)
            )
        )

    if lip > 0:
        eta = 1.0 / lip
    else:
        # pure linear losses: pick a step scaled to the feasible region
        gnorm = float(np.linalg.norm(grad_at(np.zeros(dim)))) or 1.0
        if radius is None:
            # bounded only if the L1 weight dominates every coordinate
            g0 = grad_at(np.zeros(dim))
            if np.any(np.abs(g0) > penalty_weight):
                raise ConfigError("linear losses need a feasible ball or a dominating L1 weight")
            return WeightVector.of({}), 0.0
        eta = radius / gnorm

    x = np.zeros(dim)
    for _ in range(MAX_PROX_ITERS):
        xn = x - eta * grad_at(x)
        if penalty_weight > 0:
            xn = _soft(xn, eta * penalty_weight)
        if radius is not None:
            xn = _ball_project(xn, radius)
        disp = math.sqrt(float(np.dot(xn - x, xn - x)))
        x = xn
        if disp <= 1e-9:
            break
    else:
        raise ConvergenceError("post-hoc optimizer did not reach displacement 1e-9")
    return WeightVector.of({i: float(x[i]) for i in range(dim)}), value_at(x)


# ---------------------------------------------------------------------------
# Table-1 objectives reconstructed from learner history


def _sigma_increments(
    config: AlgorithmConfig, records: Sequence[RoundRecord], dim: int
) -> list[np.ndarray]:
    """Replay the rate schedule: per-round sigma_t vectors over [0, dim)."""
    gamma = config.rate.gamma
    floor = config.sigma_floor
    out = []
    if config.rate.mode is RateMode.GLOBAL_SCALAR:
        prev = 0.0
        for t in range(1, len(records) + 1):
            cur = max(gamma * math.sqrt(t), floor)
            out.append(np.full(dim, cur - prev))
            prev = cur
        return out
    n = np.zeros(dim)
    prev_vec = np.zeros(dim)
    for rec in records:
        g = rec.g_rate if rec.g_rate is not None else rec.g
        for i, v in g.items():
            n[i] += v * v
        cur = np.maximum(gamma * np.sqrt(n), floor)
        out.append(cur - prev_vec)
        prev_vec = cur
    return out


def _dense(vec: WeightVector | None, dim: int) -> np.ndarray:
    out = np.zeros(dim)
    if vec is not None:
        for i, v in vec.items():
            out[i] = v
    return out


def family_objective(
    config: AlgorithmConfig,
    records: Sequence[RoundRecord],
    dim: int,
    example: SparseExample | None = None,
) -> ObjectiveSpec:
    """The global objective whose argmin is x_{t+1}, for t = len(records).

    Past losses enter through the recorded subgradients; the current round
    enters linearized through its recorded subgradient, or exactly when
    ``example`` is given and the configuration is implicit.  The penalty
    column and quadratic centers follow the family.
    """
    t = len(records)
    if t == 0:
        raise ConfigError("need at least one completed round")
    pen = config.penalty
    implicit = config.loss_handling is LossHandling.IMPLICIT
    if implicit and example is None:
        raise ConfigError("implicit objective needs the current example")

    linear = np.zeros(dim)
    for rec in records[:-1]:
        linear += _dense(rec.g, dim)
        if rec.phi is not None:
            linear += _dense(rec.phi, dim)
    if not implicit:
        linear += _dense(records[-1].g, dim)

    sig = _sigma_increments(config, records, dim)
    quads = []
    for k, rec in enumerate(records):
        center = _dense(rec.x, dim) if config.centers_at_iterate() else np.zeros(dim)
        quads.append((sig[k], center))

    alpha_t = pen.alpha(t)
    alpha_cum = pen.alpha_cum(t)
    if pen.kind is PenaltyKind.L1:
        kind = PenaltyKind.L1
        weight = config.solve_l1_weight(alpha_cum, alpha_t)
    else:
        kind = PenaltyKind.BALL if config.ball_active(alpha_cum, alpha_t) else None
        weight = 0.0

    return ObjectiveSpec(
        dim=dim,
        linear=linear,
        quads=tuple(quads),
        penalty_kind=kind,
        penalty_weight=weight,
        radius=pen.radius,
        implicit_loss=(config.loss, example) if implicit else None,
    )


def family_consistency_check(
    config: AlgorithmConfig,
    stream: Sequence[SparseExample],
    dim: int,
    oracle_tol: float = 1e-9,
) -> dict:
    """Run a learner and verify each iterate against the oracle argmin."""
    state = init(config)
    records: list[RoundRecord] = []
    worst = 0.0
    for ex in stream:
        state, rec = step(state, ex)
        records.append(rec)
        spec = family_objective(config, records, dim, example=ex)
        ref = global_argmin(spec, tol=oracle_tol)
        mine = _dense(WeightVector(dict(state.x)), dim)
        worst = max(worst, float(np.max(np.abs(mine - ref))))
    return {"max_discrepancy": worst, "rounds": len(records)}


# ---------------------------------------------------------------------------
# Strong FTRL ledger


@dataclass
class LedgerReport:
    realized: np.ndarray  # prefix sums of regret against the folded linear losses
    bound: np.ndarray  # prefix ledger bounds
    terms: np.ndarray  # per-round telescoping summands
    comparator_reg: np.ndarray  # prefix R'_{1:t}(x*)

    @property
    def slack(self) -> np.ndarray:
        return self.bound - self.realized

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slack))


def strong_ftrl_ledger(
    records: Sequence[RoundRecord],
    config: AlgorithmConfig,
    comparator: WeightVector,
    final_x: WeightVector,
) -> LedgerReport:
    """Recompute the per-round ledger from history, independently of step().

    The learner is FTRL on per-round linear functions (folded loss plus,
    for the subgradient-accumulating families, folded penalty
    subgradients), with regularizers R'_t = quadratic + alpha_t * penalty
    for the cumulative-penalty families.  The lemma's inequality
    ``realized <= bound`` must hold on every prefix.
    """
    T = len(records)
    if T == 0:
        raise DataError("empty history")
    dim = 0
    for rec in records:
        for vec in (rec.x, rec.g, rec.phi, rec.g_rate):
            if vec is not None and vec.entries:
                dim = max(dim, max(vec.entries) + 1)
    for vec in (comparator, final_x):
        if vec.entries:
            dim = max(dim, max(vec.entries) + 1)
    pen = config.penalty
    sig = _sigma_increments(config, records, dim)
    xs = [_dense(rec.x, dim) for rec in records] + [_dense(final_x, dim)]
    xstar = _dense(comparator, dim)

    cumulative_l1 = (
        not config.accumulates_phi() and pen.kind is PenaltyKind.L1 and pen.lam > 0
    )
    star_infeasible = (
        pen.kind is PenaltyKind.BALL
        and not config.accumulates_phi()
        and math.sqrt(float(np.dot(xstar, xstar))) > pen.radius * (1 + 1e-9)
    )

    z = np.zeros(dim)
    sig_cum = np.zeros(dim)
    realized = np.zeros(T)
    bound = np.zeros(T)
    terms = np.zeros(T)
    comp_reg = np.zeros(T)
    run_realized = 0.0
    run_terms = 0.0
    run_comp_quad = 0.0
    for k, rec in enumerate(records):
        t = k + 1
        g_eff = _dense(rec.g, dim) + _dense(rec.phi, dim)
        y_t = xs[k] if config.centers_at_iterate() else np.zeros(dim)
        z += g_eff - sig[k] * y_t
        sig_cum += sig[k]
        a_t = pen.alpha(t)
        a_cum = pen.alpha_cum(t)
        pen_w = a_cum * pen.lam if cumulative_l1 else 0.0

        def energy(x: np.ndarray) -> float:
            return float(z @ x + 0.5 * sig_cum @ (x * x) + pen_w * np.sum(np.abs(x)))

        r_t = 0.5 * float(sig[k] @ ((xs[k] - y_t) ** 2))
        if cumulative_l1:
            r_t += a_t * pen.lam * float(np.sum(np.abs(xs[k])))
        run_terms += energy(xs[k]) - energy(xs[k + 1]) - r_t
        run_realized += float(g_eff @ (xs[k] - xstar))
        run_comp_quad += 0.5 * float(sig[k] @ ((xstar - y_t) ** 2))

        comp = run_comp_quad
        if cumulative_l1:
            comp += a_cum * pen.lam * float(np.sum(np.abs(xstar)))
        if star_infeasible:
            comp = math.inf
        realized[k] = run_realized
        terms[k] = run_terms
        comp_reg[k] = comp
        bound[k] = comp + run_terms
    return LedgerReport(realized=realized, bound=bound, terms=terms, comparator_reg=comp_reg)


# ---------------------------------------------------------------------------
# Equivalence checks


def _linear_stream(T: int, dim: int, rng: np.random.Generator) -> list[SparseExample]:
    out = []
    for _ in range(T):
        g = rng.normal(size=dim) / math.sqrt(dim)
        g[g == 0.0] = 1e-3
        out.append(SparseExample({i: float(g[i]) for i in range(dim)}, 1))
    return out


def _logistic_stream(T: int, dim: int, rng: np.random.Generator) -> list[SparseExample]:
    w = rng.normal(size=dim)
    out = []
    for _ in range(T):
        k = int(rng.integers(1, min(dim, 4) + 1))
        coords = rng.choice(dim, size=k, replace=False)
        feats = {int(i): float(rng.normal() or 0.5) for i in sorted(coords)}
        margin = sum(w[i] * v for i, v in feats.items())
        label = 1 if margin > 0 else -1
        if rng.random() < 0.2:
            label = -label
        weight = 2.0 if rng.random() < 0.2 else 1.0
        out.append(SparseExample(feats, label, weight))
    return out


def _state_dense(state: LearnerState, dim: int) -> np.ndarray:
    out = np.zeros(dim)
    for i, v in state.x.items():
        out[i] = v
    return out


def _check_cor2(T, dim, seed, gamma, **_kw) -> float:
    """Gradient descent with rates 1/sigma_{1:t} vs the FTPRL closed form."""
    rng = np.random.default_rng(seed)
    stream = _linear_stream(T, dim, rng)
    cfg = AlgorithmConfig(
        family=Family.FTPRL,
        loss=Linear(),
        rate=LearningRateSchedule(RateMode.GLOBAL_SCALAR, gamma),
        penalty=PenaltySchedule(lam=0.0),
    )
    state = init(cfg)
    x_b = np.zeros(dim)
    worst = 0.0
    for t, ex in enumerate(stream, start=1):
        g = np.array([ex.features[i] for i in range(dim)])
        state, _ = step(state, ex, collect_record=False)
        x_b = x_b - g / (gamma * math.sqrt(t))
        worst = max(worst, float(np.max(np.abs(_state_dense(state, dim) - x_b))))
    return worst


def _check_cor4(T, dim, seed, gamma, **_kw) -> float:
    """FTRL on f^R vs gradient descent on f^R vs revisionist constant-step GD."""
    rng = np.random.default_rng(seed)
    stream = _linear_stream(T, dim, rng)
    cfg = AlgorithmConfig(
        family=Family.AOGD,
        loss=Linear(),
        rate=LearningRateSchedule(RateMode.GLOBAL_SCALAR, gamma),
        penalty=PenaltySchedule(lam=0.0),
    )
    state = init(cfg)
    x_gd = np.zeros(dim)
    g_sum = np.zeros(dim)
    worst = 0.0
    prev_cum = 0.0
    for t, ex in enumerate(stream, start=1):
        g = np.array([ex.features[i] for i in range(dim)])
        cum = gamma * math.sqrt(t)
        sig_t = cum - prev_cum
        prev_cum = cum
        state, _ = step(state, ex, collect_record=False)
        x_gd = x_gd - (g + sig_t * x_gd) / cum
        g_sum += g
        x_rev = -g_sum / cum
        x_a = _state_dense(state, dim)
        worst = max(
            worst,
            float(np.max(np.abs(x_a - x_gd))),
            float(np.max(np.abs(x_a - x_rev))),
            float(np.max(np.abs(x_gd - x_rev))),
        )
    return worst


def _comid_config(gamma, psi, lam, radius, handling) -> AlgorithmConfig:
    if psi == "l1":
        pen = PenaltySchedule(lam=lam)
    else:
        pen = PenaltySchedule(kind=PenaltyKind.BALL, radius=radius)
    return AlgorithmConfig(
        family=Family.FOBOS,
        loss_handling=handling,
        rate=LearningRateSchedule(RateMode.GLOBAL_SCALAR, gamma),
        penalty=pen,
    )


def _check_thm2(T, dim, seed, gamma, psi="l1", lam=0.05, radius=1.0, **_kw) -> float:
    """Linearized COMID vs the oracle argmin of the FTPRL-with-phi objective."""
    cfg = _comid_config(gamma, psi, lam, radius, LossHandling.LINEARIZED)
    rng = np.random.default_rng(seed)
    stream = _logistic_stream(T, dim, rng)
    report = family_consistency_check(cfg, stream, dim, oracle_tol=1e-10)
    return report["max_discrepancy"]


def _check_cor3(T, dim, seed, gamma, psi="l1", lam=0.05, radius=1.0, **_kw) -> float:
    """Implicit COMID vs an independent mirror-descent recursion.

    Side B re-solves, each round, the single-center mirror-descent
    objective f_t(x) + alpha_t*Psi(x) + 0.5*||Q_{1:t}^(1/2)(x - x_b)||^2
    from its own previous point, via the proximal-gradient oracle.
    """
    cfg = _comid_config(gamma, psi, lam, radius, LossHandling.IMPLICIT)
    rng = np.random.default_rng(seed)
    stream = _logistic_stream(T, dim, rng)
    state = init(cfg)
    x_b = np.zeros(dim)
    worst = 0.0
    for t, ex in enumerate(stream, start=1):
        state, _ = step(state, ex, collect_record=False)
        sig_cum = np.full(dim, max(gamma * math.sqrt(t), cfg.sigma_floor))
        a_t = cfg.penalty.alpha(t)
        spec = ObjectiveSpec(
            dim=dim,
            linear=np.zeros(dim),
            quads=((sig_cum, x_b.copy()),),
            penalty_kind=(
                PenaltyKind.L1
                if psi == "l1"
                else (PenaltyKind.BALL if a_t > 0 else None)
            ),
            penalty_weight=a_t * lam if psi == "l1" else 0.0,
            radius=radius,
            implicit_loss=(cfg.loss, ex),
        )
        x_b = global_argmin(spec, tol=1e-10)
        worst = max(worst, float(np.max(np.abs(_state_dense(state, dim) - x_b))))
    return worst


def _check_thm3(T, dim, seed, gamma, psi="l1", lam=0.05, radius=1.0, **_kw) -> float:
    """AOGD (FTRL form) vs mirror descent on the regularized functions f^R."""
    if psi == "l1":
        pen = PenaltySchedule(lam=lam)
    else:
        pen = PenaltySchedule(kind=PenaltyKind.BALL, radius=radius)
    cfg = AlgorithmConfig(
        family=Family.AOGD,
        loss=Linear(),
        rate=LearningRateSchedule(RateMode.GLOBAL_SCALAR, gamma),
        penalty=pen,
    )
    rng = np.random.default_rng(seed)
    stream = _linear_stream(T, dim, rng)
    state = init(cfg)
    x_b = np.zeros(dim)
    worst = 0.0
    prev_cum = 0.0
    for t, ex in enumerate(stream, start=1):
        g = np.array([ex.features[i] for i in range(dim)])
        cum = gamma * math.sqrt(t)
        sig_t = cum - prev_cum
        prev_cum = cum
        state, _ = step(state, ex, collect_record=False)
        u = x_b - (g + sig_t * x_b) / cum
        if psi == "l1":
            x_b = _soft(u, lam / cum)
        else:
            x_b = _ball_project(u, radius)
        worst = max(worst, float(np.max(np.abs(_state_dense(state, dim) - x_b))))
    return worst


_THEOREM_CHECKS = {
    "cor2": (_check_cor2, 1e-9),
    "cor3": (_check_cor3, 1e-6),
    "cor4": (_check_cor4, 1e-9),
    "thm2": (_check_thm2, 1e-6),
    "thm3": (_check_thm3, 1e-6),
}


def equivalence_check(
    theorem: str,
    T: int,
    dim: int,
    seed: int,
    tol: float | None = None,
    gamma: float = 0.7,
    **kwargs,
) -> dict:
    """Run one lockstep equivalence suite; discrepancy is data, not an error."""
    if theorem not in _THEOREM_CHECKS:
        raise ConfigError(
            f"unknown theorem {theorem!r}; expected one of {sorted(_THEOREM_CHECKS)}"
        )
    check, default_tol = _THEOREM_CHECKS[theorem]
    tol = default_tol if tol is None else tol
    worst = check(T, dim, seed, gamma, **kwargs)
    return {
        "theorem": theorem,
        "T": T,
        "dim": dim,
        "seed": seed,
        "max_discrepancy": worst,
        "tol": tol,
        "pass": bool(worst <= tol),
    }
