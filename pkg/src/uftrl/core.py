"""Shared domain types: sparse examples, weight vectors, losses, penalties."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping


# ---------------------------------------------------------------------------
# Errors


class UftrlError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(UftrlError):
    """Invalid algorithm, schedule, or run configuration."""


class DataError(UftrlError):
    """Invalid dataset content or mismatched inputs."""


class ParseError(DataError):
    """Malformed input text; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class NumericError(UftrlError):
    """Non-finite value or violated numerical domain."""


class ConvergenceError(NumericError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class MetricError(UftrlError):
    """Metric undefined for the given input (e.g. single-class AUC)."""


def _require_finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericError(f"{what} must be finite, got {value!r}")
    return value


# ---------------------------------------------------------------------------
# Sparse vectors and examples


@dataclass(frozen=True)
class WeightVector:
    """Sparse real vector over integer coordinates.

    An absent coordinate is exactly zero; explicit zeros are never stored,
    so ``nnz()`` is a truthful density count.
    """

    entries: Mapping[int, float] = field(default_factory=dict)

    @staticmethod
    def of(entries: Mapping[int, float]) -> "WeightVector":
        """Build a vector, dropping exact zeros and validating finiteness."""
        clean = {}
        for i, v in entries.items():
            if i < 0:
                raise DataError(f"coordinate {i} is negative")
            _require_finite(v, f"entry at coordinate {i}")
            if v != 0.0:
                clean[int(i)] = float(v)
        return WeightVector(clean)

    def get(self, i: int) -> float:
        return self.entries.get(i, 0.0)

    def dot(self, features: Mapping[int, float]) -> float:
        return sum(self.entries.get(i, 0.0) * v for i, v in features.items())

    def norm1(self) -> float:
        return sum(abs(v) for v in self.entries.values())

    def norm2(self) -> float:
        return math.sqrt(sum(v * v for v in self.entries.values()))

    def nnz(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict[int, float]:
        return dict(self.entries)

    def items(self) -> Iterator[tuple[int, float]]:
        return iter(self.entries.items())


@dataclass(frozen=True)
class SparseExample:
    """One observation: sparse feature map, binary label, importance weight."""

    features: Mapping[int, float]
    label: int
    weight: float = 1.0

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise DataError(f"label must be -1 or +1, got {self.label!r}")
        _require_finite(self.weight, "example weight")
        if self.weight < 0:
            raise DataError(f"example weight must be >= 0, got {self.weight}")
        for i, v in self.features.items():
            if not isinstance(i, int) or i < 0:
                raise DataError(f"feature index {i!r} must be a non-negative int")
            _require_finite(v, f"feature value at {i}")
            if v == 0.0:
                raise DataError(f"explicit zero feature at coordinate {i}")


# ---------------------------------------------------------------------------
# Losses
#
# All losses are margin-structured: f(x) = weight * value(theta . x, label).
# Each kind exposes the scalar value, the derivative in the margin, and a
# bracket for the implicit fixed-point solver.


class Logistic:
    """Log-loss log(1 + exp(-y*m)), evaluated overflow-safely."""

    def value(self, margin: float, label: int) -> float:
        a = -label * margin
        # softplus(a) = max(a, 0) + log1p(exp(-|a|))
        return max(a, 0.0) + math.log1p(math.exp(-abs(a)))

    def dmargin(self, margin: float, label: int) -> float:
        # d/dm log(1+exp(-y m)) = -y / (1 + exp(y m))
        ym = label * margin
        if ym >= 0:
            e = math.exp(-ym)
            return -label * e / (1.0 + e)
        return -label / (1.0 + math.exp(ym))

    def curvature(self) -> float:
        return 0.25

    def solver_bracket(self, label: int, weight: float, margin0: float):
        # dmargin lies in (-1, 0) for y=+1 and (0, 1) for y=-1
        if label > 0:
            return -weight, 0.0
        return 0.0, weight

    def __repr__(self):
        return "Logistic()"

    def __eq__(self, other):
        return isinstance(other, Logistic)

    def __hash__(self):
        return hash("Logistic")


@dataclass(frozen=True)
class Squared:
    """Target-offset squared loss 0.5*(m - target)^2; the label is ignored."""

    target: float = 0.0

    def value(self, margin: float, label: int) -> float:
        d = margin - self.target
        return 0.5 * d * d

    def dmargin(self, margin: float, label: int) -> float:
        return margin - self.target

    def curvature(self) -> float:
        return 1.0

    def solver_bracket(self, label: int, weight: float, margin0: float):
        # |s*| <= weight * |m0 - target|; pad so the root is interior
        b = weight * abs(margin0 - self.target) + 1.0
        return -b, b


class Linear:
    """Linear loss f(x) = g . x where g is the example's feature vector.

    The margin equals the loss value and the margin derivative is one, so
    the folded gradient is exactly ``weight * theta``.
    """

    def value(self, margin: float, label: int) -> float:
        return margin

    def dmargin(self, margin: float, label: int) -> float:
        return 1.0

    def curvature(self) -> float:
        return 0.0

    def solver_bracket(self, label: int, weight: float, margin0: float):
        return weight - 1.0, weight + 1.0

    def __repr__(self):
        return "Linear()"

    def __eq__(self, other):
        return isinstance(other, Linear)

    def __hash__(self):
        return hash("Linear")


LossKind = Logistic | Squared | Linear


def loss_value(kind: LossKind, margin: float, label: int) -> float:
    """Scalar loss at the given margin (or point, for the squared form)."""
    _require_finite(margin, "margin")
    return kind.value(margin, label)


def loss_margin_derivative(kind: LossKind, margin: float, label: int) -> float:
    """Derivative of the loss with respect to the margin."""
    _require_finite(margin, "margin")
    return kind.dmargin(margin, label)


# ---------------------------------------------------------------------------
# Penalty schedules


class PenaltyMode(Enum):
    CONSTANT = "constant"
    PRIOR_ONCE = "prior-once"
    CUSTOM = "custom"


class PenaltyKind(Enum):
    L1 = "l1"
    BALL = "ball"


@dataclass(frozen=True)
class PenaltySchedule:
    """Non-smooth composite term: per-round weight alpha_t on a fixed penalty.

    ``CONSTANT`` uses alpha_t = 1 for every round; ``PRIOR_ONCE`` charges the
    full penalty on round 1 only (alpha_1 = 1, alpha_t = 0 afterwards), which
    encodes a fixed prior independent of the stream length.  ``CUSTOM`` takes
    an explicit non-negative, non-increasing prefix and continues it with its
    last value.
    """

    lam: float = 0.0
    mode: PenaltyMode = PenaltyMode.CONSTANT
    kind: PenaltyKind = PenaltyKind.L1
    radius: float = 1.0
    custom: tuple[float, ...] = ()

    def __post_init__(self):
        _require_finite(self.lam, "lambda")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.kind is PenaltyKind.BALL:
            _require_finite(self.radius, "radius")
            if self.radius <= 0:
                raise ConfigError(f"ball radius must be > 0, got {self.radius}")
        if self.mode is PenaltyMode.CUSTOM:
            if not self.custom:
                raise ConfigError("custom penalty mode requires a non-empty sequence")
            prev = math.inf
            for k, a in enumerate(self.custom):
                _require_finite(a, f"alpha[{k}]")
                if a < 0 or a > prev:
                    raise ConfigError(
                        "custom alphas must be non-negative and non-increasing"
                    )
                prev = a
        elif self.custom:
            raise ConfigError("custom sequence given without custom mode")

    def alpha(self, t: int) -> float:
        """Weight alpha_t on the penalty for round t >= 1."""
        if t < 1:
            raise ConfigError(f"round index must be >= 1, got {t}")
        if self.mode is PenaltyMode.CONSTANT:
            return 1.0
        if self.mode is PenaltyMode.PRIOR_ONCE:
            return 1.0 if t == 1 else 0.0
        seq = self.custom
        return seq[t - 1] if t <= len(seq) else seq[-1]

    def alpha_cum(self, t: int) -> float:
        """Cumulative weight alpha_{1:t}; alpha_cum(0) = 0."""
        if t < 0:
            raise ConfigError(f"round index must be >= 0, got {t}")
        if self.mode is PenaltyMode.CONSTANT:
            return float(t)
        if self.mode is PenaltyMode.PRIOR_ONCE:
            return 1.0 if t >= 1 else 0.0
        total = 0.0
        for s in range(1, t + 1):
            total += self.alpha(s)
        return total


BALL_BOUNDARY_RTOL = 1e-9  # feasibility slack for points produced by projections


def penalty_value(schedule: PenaltySchedule, x: WeightVector, t: int) -> float:
    """alpha_t-weighted penalty at x; the ball indicator returns 0 or +inf."""
    a = schedule.alpha(t)
    if schedule.kind is PenaltyKind.L1:
        return a * schedule.lam * x.norm1()
    if a == 0.0:
        return 0.0
    r = schedule.radius
    return 0.0 if x.norm2() <= r * (1.0 + BALL_BOUNDARY_RTOL) else math.inf


# ---------------------------------------------------------------------------
# Per-round log record


@dataclass(frozen=True)
class RoundRecord:
    """Everything observable about one round of the unified update.

    ``g`` is the loss subgradient folded into the state (taken at the new
    point in implicit mode); ``g_rate`` is the gradient at the played point,
    which drives the adaptive rate schedule.  ``phi`` is the penalty
    subgradient extracted for the subgradient-accumulating families.
    ``delta`` is the implicit-update advantage (zero when linearized) and
    ``ledger_term`` the round's strong-FTRL telescoping summand.
    """

    t: int
    x: WeightVector
    g: WeightVector
    loss: float
    penalty: float
    sigma_added: float
    delta: float
    ledger_term: float
    phi: WeightVector | None = None
    g_rate: WeightVector | None = None
