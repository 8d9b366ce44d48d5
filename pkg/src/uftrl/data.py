"""Dataset ingestion (LIBSVM text), unit scaling, and synthetic streams."""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

from .core import ConfigError, DataError, ParseError, SparseExample, WeightVector


@dataclass(frozen=True)
class Dataset:
    """Immutable example sequence; the universe counts distinct indices present."""

    examples: tuple[SparseExample, ...]
    feature_universe: int

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[SparseExample]:
        return iter(self.examples)


def _make_dataset(examples: list[SparseExample]) -> Dataset:
    seen: set[int] = set()
    for ex in examples:
        seen.update(ex.features)
    return Dataset(tuple(examples), len(seen))


def _open_lines(source) -> Iterable[str]:
    if isinstance(source, str):
        if source.endswith(".gz"):
            return gzip.open(source, "rt", encoding="ascii")
        return open(source, "r", encoding="ascii")
    return source


_LABELS = {"+1": 1, "1": 1, "-1": -1, "0": -1}  # 0/1 files map 0 to -1


def _parse_label(token: str, line_no: int) -> int:
    if token in _LABELS:
        return _LABELS[token]
    try:
        v = float(token)
    except ValueError:
        raise ParseError(line_no, f"non-numeric label {token!r}") from None
    if v == 1:
        return 1
    if v == -1 or v == 0:
        return -1
    raise ParseError(line_no, f"label {token!r} is not in {{-1, 0, +1}}")


def iter_libsvm(source) -> Iterator[SparseExample]:
    """Stream examples from LIBSVM text: `label index:value ...` per line.

    Single-pass and constant-memory; indices must be strictly increasing
    within a line.  Explicit zero values are dropped (absent means zero).
    """
    lines = _open_lines(source)
    try:
        for line_no, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            label = _parse_label(tokens[0], line_no)
            feats: dict[int, float] = {}
            prev = -1
            for tok in tokens[1:]:
                idx_s, _, val_s = tok.partition(":")
                if not val_s:
                    raise ParseError(line_no, f"malformed pair {tok!r}")
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise ParseError(line_no, f"non-numeric token {tok!r}") from None
                if idx < 0:
                    raise ParseError(line_no, f"negative index {idx}")
                if idx <= prev:
                    raise ParseError(
                        line_no, f"indices must be strictly increasing, got {idx} after {prev}"
                    )
                if not math.isfinite(val):
                    raise ParseError(line_no, f"non-finite value in {tok!r}")
                prev = idx
                if val != 0.0:
                    feats[idx] = val
            yield SparseExample(features=feats, label=label)
    finally:
        if hasattr(lines, "close") and lines is not source:
            lines.close()


def parse_libsvm(source) -> Dataset:
    """Materialize a LIBSVM stream; an input with no examples is an error."""
    examples = list(iter_libsvm(source))
    if not examples:
        raise ParseError(0, "no examples in input")
    return _make_dataset(examples)


def serialize_libsvm(ds: Dataset, dest: IO[str] | None = None) -> str | None:
    """Write `label index:value ...` lines; values round-trip bit-exactly."""
    lines = []
    for ex in ds.examples:
        pairs = " ".join(f"{i}:{ex.features[i]!r}" for i in sorted(ex.features))
        label = "+1" if ex.label > 0 else "-1"
        lines.append(f"{label} {pairs}".rstrip())
    text = "\n".join(lines) + "\n"
    if dest is None:
        return text
    dest.write(text)
    return None


def unit_scale(ds: Dataset) -> Dataset:
    """Scale every feature vector to unit L2 length."""
    scaled = []
    for k, ex in enumerate(ds.examples):
        norm = math.sqrt(sum(v * v for v in ex.features.values()))
        if norm == 0.0:
            raise DataError(f"example {k} has a zero feature vector")
        feats = {i: v / norm for i, v in ex.features.items()}
        scaled.append(SparseExample(feats, ex.label, ex.weight))
    return Dataset(tuple(scaled), ds.feature_universe)


def shuffle(ds: Dataset, seed: int) -> Dataset:
    """Uniform permutation from numpy's PCG64 generator; same seed, same order."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ds.examples))
    return Dataset(tuple(ds.examples[k] for k in perm), ds.feature_universe)


def synth_linear(
    n: int,
    d: int,
    informative: int,
    noise: float,
    seed: int,
    return_truth: bool = False,
):
    """Sparse linearly-separable stream with label noise.

    A ground-truth weight vector lives on the first ``informative``
    coordinates; each example activates at least one of them (so its clean
    label is well defined) plus roughly 1% background features drawn from a
    power-law frequency profile, text-like: a few coordinates are common
    and most appear only a handful of times.  Values are positive and
    count-like.  Labels are the sign of the true margin, flipped with
    probability ``noise``.
    """
    if informative < 1 or informative > d:
        raise ConfigError(f"need 1 <= informative <= d, got {informative} of {d}")
    if not 0 <= noise < 0.5:
        raise ConfigError(f"noise must be in [0, 0.5), got {noise}")
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    signs = rng.choice((-1.0, 1.0), size=informative)
    w_true = signs * (3.0 + np.abs(rng.normal(size=informative)))
    n_bg = d - informative
    bg_cdf = None
    bg_mean = 0.0
    if n_bg > 0:
        # word-frequency-like profile: a few common coordinates, a long
        # tail that appears only a handful of times over the whole stream
        freq = (np.arange(n_bg) + 2.0) ** -1.6
        bg_cdf = np.cumsum(freq / freq.sum())
        bg_mean = max(1.5 * (0.01 * d - 0.6 * informative), 1.0)
    examples = []
    for _ in range(n):
        active = np.nonzero(rng.random(informative) < 0.6)[0]
        if active.size == 0:
            active = rng.integers(0, informative, size=1)
        feats: dict[int, float] = {}
        for i in active:
            feats[int(i)] = 1.0 + abs(rng.normal())
        if n_bg > 0:
            k = int(rng.poisson(bg_mean))
            if k > 0:
                bg = np.unique(np.searchsorted(bg_cdf, rng.random(k)))
                vals = 1.0 + 0.5 * np.abs(rng.normal(size=bg.size))
                for i, v in zip(bg, vals):
                    feats[int(i) + informative] = float(v)
        margin = sum(w_true[i] * feats[i] for i in range(informative) if i in feats)
        label = 1 if margin > 0 else -1
        if rng.random() < noise:
            label = -label
        examples.append(SparseExample(dict(sorted(feats.items())), label))
    ds = _make_dataset(examples)
    if return_truth:
        truth = WeightVector.of({i: w_true[i] for i in range(informative)})
        return ds, truth
    return ds


@dataclass(frozen=True)
class CsrView:
    """Dense-slot CSR rendering of a dataset for the training kernels."""

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    slots: np.ndarray = field(repr=False)  # slot -> original coordinate

    @property
    def n_examples(self) -> int:
        return len(self.labels)

    @property
    def n_slots(self) -> int:
        return len(self.slots)


def to_csr(ds: Dataset) -> CsrView:
    """Remap coordinates to dense slots 0..U-1 and pack CSR arrays."""
    indptr = np.zeros(len(ds.examples) + 1, dtype=np.int64)
    nnz = sum(len(ex.features) for ex in ds.examples)
    raw = np.empty(nnz, dtype=np.int64)
    values = np.empty(nnz, dtype=np.float64)
    labels = np.empty(len(ds.examples), dtype=np.float64)
    weights = np.empty(len(ds.examples), dtype=np.float64)
    k = 0
    for r, ex in enumerate(ds.examples):
        labels[r] = ex.label
        weights[r] = ex.weight
        for i in sorted(ex.features):
            raw[k] = i
            values[k] = ex.features[i]
            k += 1
        indptr[r + 1] = k
    slots = np.unique(raw) if nnz else np.empty(0, dtype=np.int64)
    indices = np.searchsorted(slots, raw)
    return CsrView(indptr, indices, values, labels, weights, slots)
