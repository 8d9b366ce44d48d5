import gzip
import io
import math

import numpy as np
import pytest

from uftrl.core import ConfigError, DataError, Logistic, ParseError, SparseExample
from uftrl.data import (
    Dataset,
    iter_libsvm,
    parse_libsvm,
    serialize_libsvm,
    shuffle,
    synth_linear,
    to_csr,
    unit_scale,
)


class TestParseLibsvm:
    def test_basic_line(self):
        ds = parse_libsvm(io.StringIO("+1 3:1.5 7:2\n"))
        assert len(ds) == 1
        assert ds.examples[0].features == {3: 1.5, 7: 2.0}
        assert ds.examples[0].label == 1
        assert ds.feature_universe == 2

    def test_zero_label_maps_to_negative(self):
        ds = parse_libsvm(io.StringIO("0 1:1\n"))
        assert ds.examples[0].label == -1

    def test_decreasing_indices_rejected(self):
        with pytest.raises(ParseError) as err:
            parse_libsvm(io.StringIO("1 5:2 3:1\n"))
        assert err.value.line_no == 1

    def test_non_numeric_token(self):
        with pytest.raises(ParseError):
            parse_libsvm(io.StringIO("+1 3:abc\n"))
        with pytest.raises(ParseError):
            parse_libsvm(io.StringIO("cat 3:1\n"))

    def test_empty_input_rejected(self):
        with pytest.raises(ParseError):
            parse_libsvm(io.StringIO(""))

    def test_blank_lines_and_comments_skipped(self):
        ds = parse_libsvm(io.StringIO("\n# header\n+1 1:1\n\n-1 2:2\n"))
        assert len(ds) == 2

    def test_explicit_zero_values_dropped(self):
        ds = parse_libsvm(io.StringIO("+1 1:0.0 2:3\n"))
        assert ds.examples[0].features == {2: 3.0}

    def test_gzip_by_extension(self, tmp_path):
        path = tmp_path / "tiny.svm.gz"
        with gzip.open(path, "wt") as f:
            f.write("+1 1:1 2:0.5\n-1 3:2\n")
        ds = parse_libsvm(str(path))
        assert len(ds) == 2
        assert ds.feature_universe == 3

    def test_streaming_mode_is_lazy(self):
        lines = iter(["+1 1:1\n", "-1 2:1\n"])
        gen = iter_libsvm(lines)
        first = next(gen)
        assert first.label == 1
        assert next(gen).label == -1

    def test_round_trip(self):
        text = "+1 1:1.5 7:0.25\n-1 2:3.0\n+1 0:1e-09\n"
        ds = parse_libsvm(io.StringIO(text))
        out = serialize_libsvm(ds)
        again = parse_libsvm(io.StringIO(out))
        assert again == ds


class TestUnitScale:
    def test_three_four_five(self):
        ds = parse_libsvm(io.StringIO("+1 1:3 2:4\n"))
        scaled = unit_scale(ds)
        assert scaled.examples[0].features == {1: 0.6, 2: 0.8}

    def test_idempotent(self):
        ds = parse_libsvm(io.StringIO("+1 1:3 2:4\n-1 1:0.2 3:9\n"))
        once = unit_scale(ds)
        twice = unit_scale(once)
        for a, b in zip(once.examples, twice.examples):
            for i in a.features:
                assert b.features[i] == pytest.approx(a.features[i], abs=1e-15)

    def test_all_norms_one(self):
        ds = synth_linear(200, 100, 5, 0.1, seed=0)
        for ex in unit_scale(ds).examples:
            norm = math.sqrt(sum(v * v for v in ex.features.values()))
            assert norm == pytest.approx(1.0, abs=1e-12)


class TestSynthLinear:
    def test_deterministic(self):
        a = synth_linear(50, 200, 5, 0.2, seed=7)
        b = synth_linear(50, 200, 5, 0.2, seed=7)
        assert a == b

    def test_param_validation(self):
        with pytest.raises(ConfigError):
            synth_linear(10, 5, 6, 0.1, seed=0)
        with pytest.raises(ConfigError):
            synth_linear(10, 5, 2, 0.6, seed=0)

    def test_noise_rate_measured(self):
        noise = 0.15
        ds, truth = synth_linear(100_000, 50, 5, noise, seed=3, return_truth=True)
        flips = 0
        for ex in ds.examples:
            margin = truth.dot(ex.features)
            clean = 1 if margin > 0 else -1
            if ex.label != clean:
                flips += 1
        assert flips / len(ds) == pytest.approx(noise, abs=0.01)

    def test_noiseless_batch_separator_reaches_high_auc(self):
        from uftrl.evaluation import auc
        from uftrl.oracle import posthoc_best

        ds = unit_scale(synth_linear(1000, 50, 10, 0.0, seed=1))
        losses = [(Logistic(), ex) for ex in ds.examples]
        best, _ = posthoc_best(losses, radius=20.0)
        scores = [(best.dot(ex.features), ex.label) for ex in ds.examples]
        assert auc(scores) >= 0.99

    def test_moderate_l1_stores_few_coordinates(self):
        from uftrl.evaluation import run_pass

        ds = unit_scale(synth_linear(4000, 10_000, 10, 0.05, seed=2))
        csr = to_csr(ds)
        _, state = run_pass(csr, "rda", lam=1e-3, gamma=1.0)
        nnz = int(np.count_nonzero(state.final_weights()))
        assert 0 < nnz <= 5 * 10


class TestShuffle:
    def test_single_example_unchanged(self):
        ds = parse_libsvm(io.StringIO("+1 1:1\n"))
        assert shuffle(ds, 0) == ds

    def test_deterministic(self):
        ds = synth_linear(100, 50, 5, 0.1, seed=0)
        assert shuffle(ds, 9) == shuffle(ds, 9)

    def test_different_seeds_differ(self):
        ds = synth_linear(1000, 50, 5, 0.1, seed=0)
        assert shuffle(ds, 1) != shuffle(ds, 2)

    def test_is_permutation(self):
        ds = synth_linear(100, 50, 5, 0.1, seed=0)
        shuffled = shuffle(ds, 4)
        assert sorted(map(repr, shuffled.examples)) == sorted(map(repr, ds.examples))


class TestCsr:
    def test_layout(self):
        ds = Dataset(
            (
                SparseExample({5: 1.0, 9: 2.0}, 1),
                SparseExample({5: -1.0}, -1, weight=2.0),
            ),
            feature_universe=2,
        )
        csr = to_csr(ds)
        assert csr.n_slots == 2
        assert list(csr.slots) == [5, 9]
        assert list(csr.indptr) == [0, 2, 3]
        assert list(csr.indices) == [0, 1, 0]
        assert list(csr.values) == [1.0, 2.0, -1.0]
        assert list(csr.labels) == [1.0, -1.0]
        assert list(csr.weights) == [1.0, 2.0]
