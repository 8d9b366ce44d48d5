"""The unified FTRL engine, specialized into FTPRL, RDA, FOBOS, and AOGD.

All four families solve, each round, an objective with three parts: an
approximation of past losses (linear, with the current loss optionally kept
exact — the implicit update), a non-smooth composite term, and accumulated
quadratic stabilizers centered either at the current iterate (FTPRL, FOBOS)
or at the origin (RDA, AOGD).  The families differ only in the quadratic
center and in whether past penalty terms are kept exactly (FTPRL, RDA) or
replaced by their subgradients phi_s (FOBOS, AOGD).

The state kept per coordinate is the accumulated linear coefficient z (loss
subgradients, extracted penalty subgradients, and -sigma_s * center_s
terms), plus the squared-gradient sum driving the adaptive rate.  The
iterate is always the exact closed-form argmin of the family objective
given (z, sigma, alpha_cum).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, TextIO

import numpy as np

from .core import (
    ConfigError,
    DataError,
    Linear,
    Logistic,
    LossKind,
    NumericError,
    PenaltyKind,
    PenaltyMode,
    PenaltySchedule,
    RoundRecord,
    SparseExample,
    Squared,
    WeightVector,
    loss_margin_derivative,
    loss_value,
    penalty_value,
)
from .solvers import (
    ScalarCompositeProblem,
    ball_project_argmin,
    composite_scalar_argmin,
    implicit_fixed_point,
    soft_threshold,
)


class Family(Enum):
    FTPRL = "ftprl"
    RDA = "rda"
    FOBOS = "fobos"
    AOGD = "aogd"


class LossHandling(Enum):
    LINEARIZED = "linearized"
    IMPLICIT = "implicit"


class RateMode(Enum):
    GLOBAL_SCALAR = "global"
    PER_COORDINATE_ADAPTIVE = "adaptive"


#: families whose stabilizer is centered at the current iterate
_PROXIMAL = (Family.FTPRL, Family.FOBOS)
#: families that replace past penalty terms by subgradients
_PHI_ACCUMULATING = (Family.FOBOS, Family.AOGD)


@dataclass(frozen=True)
class LearningRateSchedule:
    """sigma_{1:t} = max(gamma*sqrt(t), floor) globally, or per coordinate
    max(gamma*sqrt(sum_s g_{s,i}^2), floor) in adaptive mode."""

    mode: RateMode = RateMode.PER_COORDINATE_ADAPTIVE
    gamma: float = 1.0


@dataclass(frozen=True)
class AlgorithmConfig:
    family: Family
    loss_handling: LossHandling = LossHandling.LINEARIZED
    rate: LearningRateSchedule = field(default_factory=LearningRateSchedule)
    penalty: PenaltySchedule = field(default_factory=PenaltySchedule)
    sigma_floor: float = 0.0
    loss: LossKind = field(default_factory=Logistic)

    def centers_at_iterate(self) -> bool:
        return self.family in _PROXIMAL

    def accumulates_phi(self) -> bool:
        return self.family in _PHI_ACCUMULATING

    def solve_l1_weight(self, alpha_cum: float, alpha_t: float) -> float:
        """Weight on |x| in the round's exact solve, per the family column."""
        lam = self.penalty.lam
        if self.family in (Family.FTPRL, Family.RDA):
            return alpha_cum * lam
        if self.family is Family.FOBOS:
            return alpha_t * lam
        return lam  # AOGD keeps the penalty un-scaled by alpha

    def ball_active(self, alpha_cum: float, alpha_t: float) -> bool:
        if self.penalty.kind is not PenaltyKind.BALL:
            return False
        if self.family in (Family.FTPRL, Family.RDA):
            return alpha_cum > 0
        if self.family is Family.FOBOS:
            return alpha_t > 0
        return True


@dataclass
class LearnerState:
    """Mutable accumulator of the unified update.

    Single-writer: ``step`` mutates; ``predict`` and ``lazy_weight`` only
    read and may run concurrently with each other but not with ``step``.
    """

    config: AlgorithmConfig
    t: int = 0
    z: dict[int, float] = field(default_factory=dict)
    grad_sq: dict[int, float] = field(default_factory=dict)
    alpha_cum: float = 0.0
    sig_cum: float = 0.0  # sigma_{1:t} in global-scalar mode
    x: dict[int, float] = field(default_factory=dict)

    def sigma(self, i: int) -> float:
        """Current cumulative stabilizer sigma_{1:t} at coordinate i."""
        if self.config.rate.mode is RateMode.GLOBAL_SCALAR:
            return self.sig_cum
        n = self.grad_sq.get(i, 0.0)
        return max(self.config.rate.gamma * math.sqrt(n), self.config.sigma_floor)


class Prediction(NamedTuple):
    margin: float
    probability: float


def init(config: AlgorithmConfig) -> LearnerState:
    """Fresh state playing x_1 = 0."""
    if config.rate.gamma <= 0 or not math.isfinite(config.rate.gamma):
        raise ConfigError(f"gamma must be > 0, got {config.rate.gamma}")
    if config.sigma_floor < 0 or not math.isfinite(config.sigma_floor):
        raise ConfigError(f"sigma_floor must be >= 0, got {config.sigma_floor}")
    if config.family is Family.AOGD and config.loss_handling is LossHandling.IMPLICIT:
        raise ConfigError("AOGD supports linearized losses only")
    return LearnerState(config=config)


def predict(state: LearnerState, ex: SparseExample) -> Prediction:
    """Margin and sigmoid probability at the current iterate; read-only."""
    m = 0.0
    x = state.x
    for i, v in ex.features.items():
        m += x.get(i, 0.0) * v
    if m >= 0:
        p = 1.0 / (1.0 + math.exp(-m))
    else:
        e = math.exp(m)
        p = e / (1.0 + e)
    return Prediction(m, p)


def lazy_weight(state: LearnerState, i: int) -> float:
    """Reconstruct the iterate at one coordinate from (z, sigma, alpha_cum).

    For the ball penalty the coordinates are coupled through the norm
    constraint, so the materialized iterate is returned directly.
    """
    cfg = state.config
    if cfg.penalty.kind is PenaltyKind.BALL:
        return state.x.get(i, 0.0)
    zi = state.z.get(i, 0.0)
    sg = state.sigma(i)
    if sg <= 0.0:
        return 0.0
    if cfg.accumulates_phi():
        # past penalties live in z via the extracted phi terms
        return -zi / sg
    a_t = cfg.penalty.alpha(state.t) if state.t >= 1 else 0.0
    c = cfg.solve_l1_weight(state.alpha_cum, a_t)
    return composite_scalar_argmin(ScalarCompositeProblem(a=zi, b=0.0, q=sg, c=c))


def _seen_coordinates(state: LearnerState, feats) -> list[int]:
    seen = set(state.z)
    seen.update(state.x)
    seen.update(state.grad_sq)
    seen.update(feats)
    return sorted(seen)


def _reconstruct_iterate(state: LearnerState) -> dict[int, float]:
    """Re-derive the materialized iterate from the accumulators alone.

    For the subgradient-accumulating families the penalty's effect already
    lives in z through the folded phi terms, so the iterate is -z/sigma;
    the others re-run the composite solve.
    """
    coords = _seen_coordinates(state, {})
    if state.config.accumulates_phi():
        x = {}
        for i in coords:
            sg = state.sigma(i)
            zi = state.z.get(i, 0.0)
            if sg > 0.0 and zi != 0.0:
                x[i] = -zi / sg
        return x
    a_t = state.config.penalty.alpha(state.t) if state.t >= 1 else 0.0
    return _solve_iterate(state, coords, state.alpha_cum, a_t)


def _solve_iterate(
    state: LearnerState, coords: list[int], alpha_cum: float, alpha_t: float
) -> dict[int, float]:
    """Exact argmin of the family objective at the current accumulators."""
    cfg = state.config
    newx: dict[int, float] = {}
    if cfg.ball_active(alpha_cum, alpha_t):
        live = [i for i in coords if state.sigma(i) > 0.0]
        if not live:
            return newx
        a = np.array([state.z.get(i, 0.0) for i in live])
        q = np.array([state.sigma(i) for i in live])
        sol = ball_project_argmin(a, np.zeros(len(live)), q, cfg.penalty.radius)
        for i, v in zip(live, sol):
            if v != 0.0:
                newx[i] = float(v)
        return newx
    c = cfg.solve_l1_weight(alpha_cum, alpha_t)
    if cfg.penalty.kind is PenaltyKind.BALL:
        c = 0.0  # inactive indicator: unconstrained solve
    for i in coords:
        zi = state.z.get(i, 0.0)
        sg = state.sigma(i)
        if sg <= 0.0:
            continue  # only reachable with z == 0; the argmin there is 0
        xi = composite_scalar_argmin(ScalarCompositeProblem(a=zi, b=0.0, q=sg, c=c))
        if xi != 0.0:
            newx[i] = xi
    return newx


def _implicit_scale(
    state: LearnerState,
    ex: SparseExample,
    coords: list[int],
    alpha_cum: float,
    alpha_t: float,
) -> float:
    """Fixed-point gradient scale s* with the round's exact penalty included.

    The candidate point as a function of s is the family solve with the z
    vector perturbed by s*theta on the example support; its margin is
    non-increasing in s, so the one-dimensional solver applies.  With no
    active penalty this reduces exactly to the closed glm fixed point.
    """
    cfg = state.config
    sup = sorted(ex.features)
    th = np.array([ex.features[i] for i in sup])
    zs = np.array([state.z.get(i, 0.0) for i in sup])
    sg = np.array([state.sigma(i) for i in sup])
    if np.any(sg <= 0.0):
        raise NumericError("implicit update requires positive curvature on support")

    if cfg.ball_active(alpha_cum, alpha_t):
        live = [i for i in coords if state.sigma(i) > 0.0]
        pos = {i: k for k, i in enumerate(live)}
        a_full = np.array([state.z.get(i, 0.0) for i in live])
        q_full = np.array([state.sigma(i) for i in live])
        b_full = np.zeros(len(live))
        sup_pos = np.array([pos[i] for i in sup], dtype=int)

        def margin_of(s: float) -> float:
            a = a_full.copy()
            a[sup_pos] += s * th
            sol = ball_project_argmin(a, b_full, q_full, cfg.penalty.radius)
            return float(np.dot(th, sol[sup_pos]))

    else:
        c = cfg.solve_l1_weight(alpha_cum, alpha_t)
        if cfg.penalty.kind is PenaltyKind.BALL:
            c = 0.0
        thr = c / sg

        def margin_of(s: float) -> float:
            u = -(zs + s * th) / sg
            x = np.sign(u) * np.maximum(np.abs(u) - thr, 0.0)
            return float(np.dot(th, x))

    return implicit_fixed_point(cfg.loss, ex.label, ex.weight, margin_of)


def _implicit_advantage(
    state: LearnerState, ex: SparseExample, s_star: float, g_world: dict[int, float]
) -> float:
    """Half the objective gain of the implicit point over the linearized one.

    Both auxiliary points solve the penalty-free round problem, differing
    only off-support never and on-support via the folded gradient (s*theta
    versus the gradient at the played point).  The gain decomposes into a
    quadratic distance plus a Bregman divergence of the loss, both
    non-negative, so the result is exact and never spuriously negative.
    """
    cfg = state.config
    sup = sorted(ex.features)
    th = np.array([ex.features[i] for i in sup])
    zs = np.array([state.z.get(i, 0.0) for i in sup])
    sg = np.array([state.sigma(i) for i in sup])
    gw = np.array([g_world.get(i, 0.0) for i in sup])
    x_bar = -(zs + gw) / sg
    x_til = -(zs + s_star * th) / sg
    m_bar = float(np.dot(th, x_bar))
    m_til = float(np.dot(th, x_til))
    quad = 0.5 * float(np.dot(sg, (x_bar - x_til) ** 2))
    breg = ex.weight * (
        loss_value(cfg.loss, m_bar, ex.label)
        - loss_value(cfg.loss, m_til, ex.label)
        - loss_margin_derivative(cfg.loss, m_til, ex.label) * (m_bar - m_til)
    )
    return 0.5 * (quad + max(breg, 0.0))


def _objective_between(
    state: LearnerState,
    x_old: dict[int, float],
    x_new: dict[int, float],
    pen_weight: float,
) -> float:
    """E(x_old) - E(x_new) for E(x) = z.x + 0.5*sum sigma_i x_i^2 + c*|x|_1."""

    def e(x: dict[int, float]) -> float:
        val = 0.0
        for i, v in x.items():
            val += state.z.get(i, 0.0) * v + 0.5 * state.sigma(i) * v * v
            val += pen_weight * abs(v)
        return val

    return e(x_old) - e(x_new)


def step(
    state: LearnerState, ex: SparseExample, collect_record: bool = True
) -> tuple[LearnerState, RoundRecord | None]:
    """Advance one round: observe an example, fold it in, re-solve the iterate.

    Mutates and returns ``state``; the record (when collected) describes the
    round from the played point's perspective.
    """
    cfg = state.config
    pen = cfg.penalty
    t = state.t + 1
    feats = ex.features

    # loss and world gradient at the played point x_t
    margin = 0.0
    for i, v in feats.items():
        margin += state.x.get(i, 0.0) * v
    if not math.isfinite(margin):
        raise NumericError(f"round {t}: non-finite margin")
    dl = loss_margin_derivative(cfg.loss, margin, ex.label)
    if not math.isfinite(dl):
        raise NumericError(f"round {t}: non-finite loss derivative")
    g_world: dict[int, float] = {}
    for i, v in feats.items():
        gi = ex.weight * dl * v
        if gi != 0.0:
            g_world[i] = gi

    x_old = state.x

    # new stabilizer, added before the solve and centered at y_t
    sig_add_scalar = 0.0
    sig_add: dict[int, float] = {}
    gamma = cfg.rate.gamma
    floor = cfg.sigma_floor
    if cfg.rate.mode is RateMode.GLOBAL_SCALAR:
        new_cum = max(gamma * math.sqrt(t), floor)
        sig_add_scalar = new_cum - state.sig_cum
        state.sig_cum = new_cum
        for i in feats:
            gi = g_world.get(i, 0.0)
            state.grad_sq[i] = state.grad_sq.get(i, 0.0) + gi * gi
        if cfg.centers_at_iterate() and sig_add_scalar != 0.0:
            for i, xi in x_old.items():
                state.z[i] = state.z.get(i, 0.0) - sig_add_scalar * xi
    else:
        for i in feats:
            gi = g_world.get(i, 0.0)
            n_old = state.grad_sq.get(i, 0.0)
            n_new = n_old + gi * gi
            state.grad_sq[i] = n_new
            s_old = max(gamma * math.sqrt(n_old), floor)
            s_new = max(gamma * math.sqrt(n_new), floor)
            d = s_new - s_old
            if d != 0.0:
                sig_add[i] = d
                sig_add_scalar += d
                if cfg.centers_at_iterate():
                    xi = x_old.get(i, 0.0)
                    if xi != 0.0:
                        state.z[i] = state.z.get(i, 0.0) - d * xi

    a_t = pen.alpha(t)
    state.alpha_cum += a_t
    coords = _seen_coordinates(state, feats)

    # fold the loss: linear approximation at x_t, or the implicit fixed point
    delta = 0.0
    if cfg.loss_handling is LossHandling.LINEARIZED:
        g_used = g_world
    else:
        s_star = _implicit_scale(state, ex, coords, state.alpha_cum, a_t)
        g_used = {}
        for i, v in feats.items():
            gi = s_star * v
            if gi != 0.0:
                g_used[i] = gi
        delta = _implicit_advantage(state, ex, s_star, g_world)
    for i, gi in g_used.items():
        state.z[i] = state.z.get(i, 0.0) + gi

    x_new = _solve_iterate(state, coords, state.alpha_cum, a_t)

    # FOBOS/AOGD: extract the penalty subgradient the optimality condition
    # pins down, and fold it; afterwards z == -sigma * x on every coordinate
    phi: dict[int, float] | None = None
    if cfg.accumulates_phi():
        phi = {}
        for i in coords:
            p = -(state.z.get(i, 0.0) + state.sigma(i) * x_new.get(i, 0.0))
            if p != 0.0:
                phi[i] = p
                znew = state.z.get(i, 0.0) + p
                if znew == 0.0:
                    state.z.pop(i, None)
                else:
                    state.z[i] = znew

    record = None
    if collect_record:
        # exact cumulative penalty kept in the objective (FTPRL/RDA with L1)
        pen_cum = 0.0
        if not cfg.accumulates_phi() and pen.kind is PenaltyKind.L1:
            pen_cum = state.alpha_cum * pen.lam
        gap = _objective_between(state, x_old, x_new, pen_cum)
        r_t = 0.0  # this round's regularizer R'_t evaluated at x_t
        if not cfg.centers_at_iterate():
            if cfg.rate.mode is RateMode.GLOBAL_SCALAR:
                r_t += 0.5 * sig_add_scalar * sum(v * v for v in x_old.values())
            else:
                r_t += 0.5 * sum(
                    d * x_old.get(i, 0.0) ** 2 for i, d in sig_add.items()
                )
        if not cfg.accumulates_phi() and pen.kind is PenaltyKind.L1:
            r_t += a_t * pen.lam * sum(abs(v) for v in x_old.values())
        played = WeightVector(dict(x_old))
        record = RoundRecord(
            t=t,
            x=played,
            g=WeightVector(dict(g_used)),
            loss=ex.weight * loss_value(cfg.loss, margin, ex.label),
            penalty=penalty_value(pen, played, t),
            sigma_added=sig_add_scalar,
            delta=delta,
            ledger_term=gap - r_t,
            phi=WeightVector(dict(phi)) if phi is not None else None,
            g_rate=WeightVector(dict(g_world)),
        )

    state.t = t
    state.x = x_new
    return state, record


# ---------------------------------------------------------------------------
# Checkpoint format: one header line, then one tab-separated record per
# coordinate (coordinate, z, sigma, grad_sq), using shortest round-trip
# decimal representations so save -> load -> save is byte-identical.


_LOSS_TAGS = {"logistic": Logistic, "linear": Linear}


def _loss_tag(loss: LossKind) -> str:
    if isinstance(loss, Logistic):
        return "logistic"
    if isinstance(loss, Linear):
        return "linear"
    return f"squared:{loss.target!r}"


def _loss_from_tag(tag: str) -> LossKind:
    if tag in _LOSS_TAGS:
        return _LOSS_TAGS[tag]()
    if tag.startswith("squared:"):
        return Squared(float(tag.split(":", 1)[1]))
    raise DataError(f"unknown loss tag {tag!r}")


def save_checkpoint(state: LearnerState, dest: str | TextIO) -> None:
    cfg = state.config
    pen = cfg.penalty
    parts = [
        "uftrl-checkpoint",
        "v1",
        f"family={cfg.family.value}",
        f"t={state.t}",
        f"alpha_cum={state.alpha_cum!r}",
        f"gamma={cfg.rate.gamma!r}",
        f"rate={cfg.rate.mode.value}",
        f"handling={cfg.loss_handling.value}",
        f"loss={_loss_tag(cfg.loss)}",
        f"lambda={pen.lam!r}",
        f"penalty_mode={pen.mode.value}",
        f"penalty_kind={pen.kind.value}",
        f"radius={pen.radius!r}",
        f"sigma_floor={cfg.sigma_floor!r}",
        f"sig_cum={state.sig_cum!r}",
    ]
    if pen.custom:
        parts.append("alphas=" + ",".join(repr(a) for a in pen.custom))
    lines = [" ".join(parts)]
    for i in sorted(set(state.z) | set(state.grad_sq)):
        lines.append(
            f"{i}\t{state.z.get(i, 0.0)!r}\t{state.sigma(i)!r}"
            f"\t{state.grad_sq.get(i, 0.0)!r}"
        )
    text = "\n".join(lines) + "\n"
    if isinstance(dest, str):
        with open(dest, "w", encoding="ascii") as f:
            f.write(text)
    else:
        dest.write(text)


def load_checkpoint(src: str | TextIO) -> LearnerState:
    if isinstance(src, str):
        with open(src, "r", encoding="ascii") as f:
            return load_checkpoint(f)
    header = src.readline().strip()
    fields = header.split(" ")
    if fields[:2] != ["uftrl-checkpoint", "v1"]:
        raise DataError("not a uftrl checkpoint")
    kv = dict(part.split("=", 1) for part in fields[2:])
    mode = PenaltyMode(kv["penalty_mode"])
    custom = ()
    if mode is PenaltyMode.CUSTOM:
        custom = tuple(float(a) for a in kv["alphas"].split(","))
    cfg = AlgorithmConfig(
        family=Family(kv["family"]),
        loss_handling=LossHandling(kv["handling"]),
        rate=LearningRateSchedule(RateMode(kv["rate"]), float(kv["gamma"])),
        penalty=PenaltySchedule(
            lam=float(kv["lambda"]),
            mode=mode,
            kind=PenaltyKind(kv["penalty_kind"]),
            radius=float(kv["radius"]),
            custom=custom,
        ),
        sigma_floor=float(kv["sigma_floor"]),
        loss=_loss_from_tag(kv["loss"]),
    )
    state = init(cfg)
    state.t = int(kv["t"])
    state.alpha_cum = float(kv["alpha_cum"])
    state.sig_cum = float(kv["sig_cum"])
    for line in src:
        line = line.strip()
        if not line:
            continue
        i_s, z_s, _sig_s, n_s = line.split("\t")
        i = int(i_s)
        z = float(z_s)
        n = float(n_s)
        if z != 0.0:
            state.z[i] = z
        state.grad_sq[i] = n
    # the iterate is re-derivable from the accumulators
    state.x = _reconstruct_iterate(state)
    return state


def checkpoint_to_string(state: LearnerState) -> str:
    buf = io.StringIO()
    save_checkpoint(state, buf)
    return buf.getvalue()
