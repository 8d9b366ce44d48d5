"""Regret measurement, bound formulas, classification metrics, and sweeps."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels, oracle
from .core import (
    ConfigError,
    DataError,
    Linear,
    LossKind,
    MetricError,
    PenaltyKind,
    PenaltySchedule,
    RoundRecord,
    SparseExample,
    WeightVector,
    loss_value,
    penalty_value,
)
from .data import Dataset, shuffle, to_csr
from .learners import (
    AlgorithmConfig,
    Family,
    LearningRateSchedule,
    RateMode,
    init,
    step,
)


# ---------------------------------------------------------------------------
# Regret and the Corollary-1 bound formulas


def regret(
    records: Sequence[RoundRecord],
    losses: Sequence[tuple[LossKind, SparseExample]],
    comparator: WeightVector,
    penalty: PenaltySchedule | None = None,
) -> float:
    """Realized regret of the played points against a fixed comparator.

    With a penalty schedule given, the composite terms alpha_t * Psi enter
    on both sides (the player pays at its round points, the comparator at
    the cumulative weight).
    """
    if len(records) != len(losses):
        raise DataError(
            f"history has {len(records)} rounds but {len(losses)} losses given"
        )
    mine = 0.0
    theirs = 0.0
    for rec, (kind, ex) in zip(records, losses):
        mine += ex.weight * loss_value(kind, rec.x.dot(ex.features), ex.label)
        theirs += ex.weight * loss_value(kind, comparator.dot(ex.features), ex.label)
        if penalty is not None:
            mine += penalty_value(penalty, rec.x, rec.t)
    if penalty is not None:
        t_last = records[-1].t
        if penalty.kind is PenaltyKind.L1:
            theirs += penalty.alpha_cum(t_last) * penalty.lam * comparator.norm1()
        elif penalty.alpha_cum(t_last) > 0 and comparator.norm2() > penalty.radius * (
            1 + 1e-9
        ):
            theirs = math.inf
    return mine - theirs


@dataclass(frozen=True)
class BoundParts:
    """Corollary-1 bound split so tests can ignore the instantiated O(1)."""

    leading: float
    log_term: float
    o1: float

    @property
    def total(self) -> float:
        return self.leading + self.log_term + self.o1


def regret_bound_parts(family: Family | str, D: float, G: float, T: int) -> BoundParts:
    if D <= 0 or G <= 0:
        raise ConfigError("D and G must be > 0")
    if T < 1:
        raise ConfigError("T must be >= 1")
    fam = Family(family) if isinstance(family, str) else family
    if fam in (Family.FTPRL, Family.FOBOS):
        # FTPRL and implicit-update mirror descent share the same bound
        return BoundParts(D * G * math.sqrt(2 * T), 0.0, 0.0)
    if fam is Family.RDA:
        gd = G * D / math.sqrt(2)
        # o1 = the +1 of the harmonic-sum slack plus the first-round slack
        return BoundParts(0.5 * D * G * math.sqrt(2 * T), gd * math.log(T), 2 * gd)
    raise ConfigError(f"no Corollary-1 bound for family {fam}")


def regret_bound(family: Family | str, D: float, G: float, T: int) -> float:
    """DG*sqrt(2T) for FTPRL / implicit mirror descent; the log-T form for RDA."""
    return regret_bound_parts(family, D, G, T).total


# ---------------------------------------------------------------------------
# Classification metrics


def auc(scores: Sequence[tuple[float, int]]) -> float:
    """Exact rank-statistic AUC; ties count one half."""
    if not scores:
        raise MetricError("empty score list")
    s = np.array([v for v, _ in scores], dtype=float)
    y = np.array([1 if lbl > 0 else 0 for _, lbl in scores])
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs at least one positive and one negative label")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=float)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def density(x: WeightVector | np.ndarray, universe: int) -> float:
    """Stored non-zeros divided by the number of features present in the data."""
    if universe <= 0:
        raise MetricError(f"feature universe must be positive, got {universe}")
    nnz = int(np.count_nonzero(x)) if isinstance(x, np.ndarray) else x.nnz()
    if nnz > universe:
        raise MetricError(f"{nnz} stored entries exceed universe {universe}")
    return nnz / universe


# ---------------------------------------------------------------------------
# Single-pass training and the lambda sweep


@dataclass(frozen=True)
class PassMetrics:
    auc: float
    density: float
    online_loss: float
    rounds: int


def _logloss_mean(margins: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> float:
    a = -labels * margins
    per = np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))
    return float(np.sum(weights * per) / max(len(margins), 1))


def run_pass(
    csr,
    family: str,
    lam: float,
    gamma: float,
    sigma_floor: float = 0.0,
    penalty_mode: str = "constant",
    backend: str | None = None,
) -> tuple[PassMetrics, "kernels.PassState"]:
    """One progressive-validation pass via the hot kernel; returns metrics."""
    state = kernels.train_pass(
        csr, family, lam, gamma, sigma_floor, penalty_mode, backend=backend
    )
    final = state.final_weights()
    scores = list(zip(state.margins.tolist(), (1 if l > 0 else -1 for l in csr.labels)))
    return (
        PassMetrics(
            auc=auc(scores),
            density=density(final, csr.n_slots),
            online_loss=_logloss_mean(state.margins, csr.labels, csr.weights),
            rounds=csr.n_examples,
        ),
        state,
    )


@dataclass(frozen=True)
class SweepRow:
    family: str
    lam: float
    gamma: float
    auc: float
    density: float
    online_loss: float


def _thread_cap() -> int:
    env = os.environ.get("UFTRL_THREADS", "").strip()
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"UFTRL_THREADS must be an integer, got {env!r}") from None
        if cap < 1:
            raise ConfigError("UFTRL_THREADS must be >= 1")
        return cap
    return os.cpu_count() or 1


def _sweep_cell(
    dataset: Dataset,
    family: str,
    lam: float,
    gamma_grid: Sequence[float],
    seed_count: int,
    base_seed: int,
    sigma_floor: float,
    backend: str | None,
) -> SweepRow:
    # tune gamma on one fixed shuffle, by online AUC
    tune_csr = to_csr(shuffle(dataset, base_seed))
    best_gamma, best_auc = None, -1.0
    for gamma in gamma_grid:
        metrics, _ = run_pass(
            tune_csr, family, lam, gamma, sigma_floor, backend=backend
        )
        if metrics.auc > best_auc:
            best_gamma, best_auc = gamma, metrics.auc
    # report the mean over fresh shuffles at the chosen gamma
    aucs, dens, losses = [], [], []
    for k in range(seed_count):
        csr = to_csr(shuffle(dataset, base_seed + 1 + k))
        metrics, _ = run_pass(
            csr, family, lam, best_gamma, sigma_floor, backend=backend
        )
        aucs.append(metrics.auc)
        dens.append(metrics.density)
        losses.append(metrics.online_loss)
    return SweepRow(
        family=family,
        lam=lam,
        gamma=best_gamma,
        auc=float(np.mean(aucs)),
        density=float(np.mean(dens)),
        online_loss=float(np.mean(losses)),
    )


def sweep(
    dataset: Dataset,
    families: Sequence[str],
    lambda_grid: Sequence[float],
    gamma_grid: Sequence[float],
    seed_count: int = 5,
    base_seed: int = 0,
    sigma_floor: float = 0.0,
    backend: str | None = None,
) -> list[SweepRow]:
    """Tune gamma per (family, lambda) cell, then average over fresh shuffles.

    Cells are independent jobs; UFTRL_THREADS caps the worker pool and the
    result order is fixed by the grids regardless of scheduling.
    """
    if not families or not lambda_grid or not gamma_grid:
        raise ConfigError("families and both grids must be non-empty")
    if seed_count < 1:
        raise ConfigError("seed_count must be >= 1")
    cells = [(family, lam) for family in families for lam in lambda_grid]
    workers = min(len(cells), _thread_cap())

    def job(cell):
        family, lam = cell
        return _sweep_cell(
            dataset, family, lam, gamma_grid, seed_count, base_seed, sigma_floor, backend
        )

    if workers <= 1:
        return [job(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, cells))


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    """RFC-4180 CSV with the fixed header; values are shortest round-trip."""
    lines = ["family,lambda,gamma,auc,density,online_loss"]
    for r in rows:
        lines.append(
            f"{r.family},{r.lam!r},{r.gamma!r},{r.auc!r},{r.density!r},{r.online_loss!r}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Adversarial streams for the Corollary-1 bound check


def corollary1_gamma(family: Family, D: float, G: float) -> float:
    """Global-scalar gamma realizing the Corollary-1 rate schedules."""
    if family is Family.FTPRL:
        return G * math.sqrt(2.0) / D
    if family is Family.RDA:
        return 2.0 * G * math.sqrt(2.0) / D
    raise ConfigError(f"no Corollary-1 schedule for family {family}")


def adversarial_regret_run(
    family: Family | str,
    D: float,
    G: float,
    T: int,
    seed: int,
    dim: int = 2,
    collect_records: bool = False,
) -> dict:
    """Feed sign-following unit gradients to a learner constrained to a ball.

    Gradients are G * sign(x_t) coordinate-wise (seeded coin flips where a
    coordinate is exactly zero), normalized so ||g_t|| = G: a standard hard
    stream that forces movement without exceeding the gradient bound.
    Reports realized regret against the post-hoc best point in the ball and
    the Corollary-1 bound.
    """
    fam = Family(family) if isinstance(family, str) else family
    gamma = corollary1_gamma(fam, D, G)
    cfg = AlgorithmConfig(
        family=fam,
        loss=Linear(),
        rate=LearningRateSchedule(RateMode.GLOBAL_SCALAR, gamma),
        penalty=PenaltySchedule(kind=PenaltyKind.BALL, radius=D / 2.0),
    )
    state = init(cfg)
    rng = np.random.default_rng(seed)
    g_sum = np.zeros(dim)
    play_loss = 0.0
    records: list[RoundRecord] = []
    losses: list[tuple[LossKind, SparseExample]] = []
    for _ in range(T):
        x = np.array([state.x.get(i, 0.0) for i in range(dim)])
        s = np.sign(x)
        zero = s == 0.0
        if np.any(zero):
            s[zero] = rng.choice((-1.0, 1.0), size=int(zero.sum()))
        g = G * s / math.sqrt(float(np.dot(s, s)))
        ex = SparseExample({i: float(g[i]) for i in range(dim)}, 1)
        play_loss += float(np.dot(g, x))
        g_sum += g
        state, rec = step(state, ex, collect_record=collect_records)
        if collect_records:
            records.append(rec)
            losses.append((Linear(), ex))
    # best point in the ball for accumulated linear loss, in closed form
    gs_norm = math.sqrt(float(np.dot(g_sum, g_sum)))
    best_loss = -(D / 2.0) * gs_norm
    realized = play_loss - best_loss
    bound = regret_bound_parts(fam, D, G, T)
    out = {
        "family": fam.value,
        "D": D,
        "G": G,
        "T": T,
        "seed": seed,
        "dim": dim,
        "realized_regret": realized,
        "cor1_bound": bound.total,
        "cor1_leading": bound.leading,
        "pass": bool(realized <= bound.total),
    }
    if collect_records:
        comp = WeightVector.of(
            {i: float(-(D / 2.0) * g_sum[i] / gs_norm) for i in range(dim)}
            if gs_norm > 0
            else {}
        )
        ledger = oracle.strong_ftrl_ledger(
            records, cfg, comp, WeightVector(dict(state.x))
        )
        out["ledger_bound"] = float(ledger.bound[-1])
        out["ledger_min_slack"] = ledger.min_slack
        out["pass"] = bool(
            realized <= bound.total and realized <= ledger.bound[-1] + 1e-9
        )
        out["records"] = records
        out["losses"] = losses
        out["comparator"] = comp
    return out
