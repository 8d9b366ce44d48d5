import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uftrl.core import (
    ConfigError,
    DataError,
    Linear,
    Logistic,
    MetricError,
    PenaltySchedule,
    SparseExample,
    WeightVector,
)
from uftrl.data import synth_linear, to_csr, unit_scale
from uftrl.evaluation import (
    BoundParts,
    adversarial_regret_run,
    auc,
    density,
    regret,
    regret_bound,
    regret_bound_parts,
    run_pass,
    sweep,
    sweep_to_csv,
)
from uftrl.learners import (
    AlgorithmConfig,
    Family,
    LearningRateSchedule,
    RateMode,
    init,
    step,
)


class TestRegret:
    def test_identical_play_zero_regret(self):
        losses = [(Linear(), SparseExample({0: 1.0}, 1))]
        cfg = AlgorithmConfig(family=Family.FTPRL, loss=Linear(),
                              rate=LearningRateSchedule(RateMode.GLOBAL_SCALAR, 1.0),
                              penalty=PenaltySchedule(lam=0.0))
        state = init(cfg)
        state, rec = step(state, losses[0][1])
        # comparator = the point actually played (zero)
        assert regret([rec], losses, WeightVector.of({})) == 0.0

    def test_one_round_linear_over_unit_ball(self):
        g = {0: 0.6, 1: 0.8}
        losses = [(Linear(), SparseExample(g, 1))]
        cfg = AlgorithmConfig(family=Family.FTPRL, loss=Linear(),
                              rate=LearningRateSchedule(RateMode.GLOBAL_SCALAR, 1.0),
                              penalty=PenaltySchedule(lam=0.0))
        state = init(cfg)
        state, rec = step(state, losses[0][1])
        best = WeightVector.of({0: -0.6, 1: -0.8})  # -g / ||g||
        assert regret([rec], losses, best) == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            regret([], [(Linear(), SparseExample({0: 1.0}, 1))], WeightVector.of({}))


class TestRegretBound:
    def test_ftprl_values(self):
        assert regret_bound(Family.FTPRL, 1, 1, 2) == pytest.approx(2.0)
        assert regret_bound(Family.FTPRL, 2, 3, 50) == pytest.approx(60.0)

    def test_rda_parts(self):
        parts = regret_bound_parts(Family.RDA, 1, 1, 100)
        assert parts.leading == pytest.approx(0.5 * math.sqrt(200), abs=1e-10)
        assert parts.leading == pytest.approx(7.0711, abs=1e-4)
        assert parts.log_term == pytest.approx(math.log(100) / math.sqrt(2), abs=1e-10)
        assert parts.log_term == pytest.approx(3.25635, abs=1e-4)
        assert parts.o1 == pytest.approx(2 / math.sqrt(2))
        assert parts.total == parts.leading + parts.log_term + parts.o1

    def test_validation(self):
        with pytest.raises(ConfigError):
            regret_bound(Family.FTPRL, 0, 1, 10)
        with pytest.raises(ConfigError):
            regret_bound(Family.FTPRL, 1, 1, 0)
        with pytest.raises(ConfigError):
            regret_bound(Family.AOGD, 1, 1, 10)


class TestAuc:
    def test_perfect_separation(self):
        scores = [(0.9, 1), (0.8, 1), (0.2, -1), (0.1, -1)]
        assert auc(scores) == 1.0

    def test_all_ties(self):
        scores = [(0.5, 1), (0.5, -1), (0.5, 1), (0.5, -1)]
        assert auc(scores) == 0.5

    def test_pair_enumeration_golden(self):
        scores = [(0.9, 1), (0.8, -1), (0.7, 1), (0.1, -1)]
        # enumerate positive-negative pairs directly
        pos = [s for s, l in scores if l > 0]
        neg = [s for s, l in scores if l < 0]
        wins = sum(
            1.0 if p > n else (0.5 if p == n else 0.0) for p in pos for n in neg
        )
        assert wins / (len(pos) * len(neg)) == 0.75
        assert auc(scores) == 0.75

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            auc([(0.5, 1), (0.3, 1)])

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(
            st.tuples(st.floats(-5, 5), st.sampled_from([-1, 1])),
            min_size=4,
            max_size=40,
        ),
        st.floats(0.1, 3.0),
        st.floats(-2.0, 2.0),
    )
    def test_monotone_transform_invariance(self, scores, scale, shift):
        # quantize so strict order survives the transforms in float64
        scores = [(round(s, 6), l) for s, l in scores]
        labels = {l for _, l in scores}
        if labels != {-1, 1}:
            return
        base = auc(scores)
        exp = auc([(math.exp(s), l) for s, l in scores])
        aff = auc([(scale * s + shift, l) for s, l in scores])
        assert exp == pytest.approx(base, abs=1e-12)
        assert aff == pytest.approx(base, abs=1e-12)


class TestDensity:
    def test_empty(self):
        assert density(WeightVector.of({}), 100) == 0.0

    def test_fraction(self):
        assert density(WeightVector.of({i: 1.0 for i in range(5)}), 50) == 0.1

    def test_zero_universe(self):
        with pytest.raises(MetricError):
            density(WeightVector.of({}), 0)


@pytest.fixture(scope="module")
def tiny():
    return unit_scale(synth_linear(300, 200, 5, 0.05, seed=0))


class TestSweep:

    def test_single_cell(self, tiny):
        rows = sweep(tiny, ["rda"], [1e-4], [0.5], seed_count=2)
        assert len(rows) == 1
        assert rows[0].family == "rda"
        assert 0 <= rows[0].auc <= 1
        assert 0 <= rows[0].density <= 1

    def test_deterministic(self, tiny):
        a = sweep(tiny, ["ftprl", "fobos"], [1e-4, 1e-3], [0.5, 1.0], seed_count=2)
        b = sweep(tiny, ["ftprl", "fobos"], [1e-4, 1e-3], [0.5, 1.0], seed_count=2)
        assert a == b

    def test_thread_cap_equivalence(self, tiny, monkeypatch):
        monkeypatch.setenv("UFTRL_THREADS", "1")
        serial = sweep(tiny, ["ftprl", "rda"], [1e-4], [0.5, 1.0], seed_count=2)
        monkeypatch.setenv("UFTRL_THREADS", "4")
        parallel = sweep(tiny, ["ftprl", "rda"], [1e-4], [0.5, 1.0], seed_count=2)
        assert serial == parallel

    def test_zero_lambda_density_counts_touched(self, tiny):
        csr = to_csr(tiny)
        metrics, state = run_pass(csr, "rda", lam=0.0, gamma=0.5)
        touched = int(np.count_nonzero(state.n)) / csr.n_slots
        assert metrics.density == pytest.approx(touched, abs=1e-12)

    def test_empty_grid_rejected(self, tiny):
        with pytest.raises(ConfigError):
            sweep(tiny, ["rda"], [], [0.5])

    def test_csv_shape(self, tiny):
        rows = sweep(tiny, ["rda"], [1e-4], [0.5], seed_count=1)
        text = sweep_to_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0] == "family,lambda,gamma,auc,density,online_loss"
        assert len(lines) == 2
        assert lines[1].startswith("rda,")


class TestAdversarialRuns:
    def test_t1_trivial(self):
        rep = adversarial_regret_run(Family.FTPRL, 2.0, 1.0, 1, seed=0)
        assert rep["pass"]
        assert rep["realized_regret"] <= rep["cor1_bound"]

    @pytest.mark.parametrize("family", [Family.FTPRL, Family.RDA])
    def test_bounds_hold(self, family):
        for seed in range(3):
            rep = adversarial_regret_run(family, 2.0, 1.0, 500, seed=seed)
            assert rep["pass"], rep

    def test_ledger_included_when_requested(self):
        rep = adversarial_regret_run(Family.FTPRL, 2.0, 1.0, 100, seed=0,
                                     collect_records=True)
        assert rep["realized_regret"] <= rep["ledger_bound"] + 1e-9
        assert rep["ledger_min_slack"] >= -1e-9
