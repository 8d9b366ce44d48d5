"""Hot training-pass kernels: numba-jitted, with a same-source numpy fallback.

The experiment protocol (single-pass logistic training with per-coordinate
adaptive rates and an L1 penalty) spends essentially all of its time in the
per-example update loop, so that loop lives here in a form numba can
compile.  Set ``UFTRL_BACKEND=numpy`` to run the identical function body
uncompiled (bit-for-bit the same results), or ``UFTRL_BACKEND=numba`` to
require the compiled path.

State layout per feature slot: ``z`` (accumulated linear term) and ``n``
(squared-gradient sum) drive the closed-form lazy iterate for FTPRL and
RDA; FOBOS and AOGD store the iterate ``x`` directly plus a ``stamp``
(cumulative penalty weight, or round index for AOGD) so skipped rounds of
per-round shrinkage can be applied in one soft-threshold on next touch.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .core import ConfigError
from .data import CsrView

FTPRL, RDA, FOBOS, AOGD = 0, 1, 2, 3
FAMILY_CODES = {"ftprl": FTPRL, "rda": RDA, "fobos": FOBOS, "aogd": AOGD}

ALPHA_CONSTANT, ALPHA_PRIOR_ONCE = 0, 1
ALPHA_CODES = {"constant": ALPHA_CONSTANT, "prior-once": ALPHA_PRIOR_ONCE}


def _train_pass_body(
    indptr,
    indices,
    values,
    labels,
    weights,
    family,
    alpha_mode,
    lam,
    gamma,
    floor,
    z,
    n,
    x,
    stamp,
    margins,
    scratch,
):
    n_examples = labels.shape[0]
    for row in range(n_examples):
        t = row + 1
        if alpha_mode == 0:
            acum_prev = t - 1.0
            a_t = 1.0
            acum_now = float(t)
        else:
            acum_prev = 1.0 if t > 1 else 0.0
            a_t = 1.0 if t == 1 else 0.0
            acum_now = 1.0

        # reconstruct the current iterate on the example support
        m = 0.0
        lo, hi = indptr[row], indptr[row + 1]
        for k in range(lo, hi):
            j = indices[k]
            sig = gamma * math.sqrt(n[j])
            if sig < floor:
                sig = floor
            w = 0.0
            if family <= RDA:
                if sig > 0.0:
                    u = -z[j] / sig
                    thr = acum_prev * lam / sig
                    au = abs(u)
                    if au > thr:
                        w = math.copysign(au - thr, u)
            else:
                if sig > 0.0:
                    if family == FOBOS:
                        pending = (acum_prev - stamp[j]) * lam / sig
                        stamp[j] = acum_prev
                    else:
                        pending = ((t - 1.0) - stamp[j]) * lam / sig
                        stamp[j] = t - 1.0
                    if pending > 0.0:
                        ax = abs(x[j])
                        if ax > pending:
                            x[j] = math.copysign(ax - pending, x[j])
                        else:
                            x[j] = 0.0
                w = x[j]
            scratch[k - lo] = w
            m += w * values[k]
        margins[row] = m

        # logistic margin derivative, overflow-safe
        y = labels[row]
        ym = y * m
        if ym >= 0.0:
            e = math.exp(-ym)
            dl = -y * e / (1.0 + e)
        else:
            dl = -y / (1.0 + math.exp(ym))
        gscale = weights[row] * dl

        for k in range(lo, hi):
            j = indices[k]
            v = values[k]
            w = scratch[k - lo]
            g = gscale * v
            n_old = n[j]
            sig_old = gamma * math.sqrt(n_old)
            if sig_old < floor:
                sig_old = floor
            n[j] = n_old + g * g
            sig_new = gamma * math.sqrt(n[j])
            if sig_new < floor:
                sig_new = floor
            if family == FTPRL:
                z[j] += g - (sig_new - sig_old) * w
            elif family == RDA:
                z[j] += g
            elif family == FOBOS:
                u = w - g / sig_new
                thr = a_t * lam / sig_new
                au = abs(u)
                x[j] = math.copysign(au - thr, u) if au > thr else 0.0
                stamp[j] = acum_now
            else:
                u = (sig_old * w - g) / sig_new
                thr = lam / sig_new
                au = abs(u)
                x[j] = math.copysign(au - thr, u) if au > thr else 0.0
                stamp[j] = float(t)


try:
    from numba import njit

    _train_pass_njit = njit(cache=True, nogil=True)(_train_pass_body)
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    _train_pass_njit = None
    HAS_NUMBA = False


def active_backend() -> str:
    """Resolve the kernel backend from UFTRL_BACKEND (numba when available)."""
    env = os.environ.get("UFTRL_BACKEND", "").strip().lower()
    if env == "numpy":
        return "numpy"
    if env == "numba":
        if not HAS_NUMBA:
            raise ConfigError("UFTRL_BACKEND=numba but numba is not importable")
        return "numba"
    if env:
        raise ConfigError(f"unknown UFTRL_BACKEND {env!r}; use 'numba' or 'numpy'")
    return "numba" if HAS_NUMBA else "numpy"


@dataclass
class PassState:
    """Arrays after one training pass, plus the progressive-validation margins."""

    family: int
    lam: float
    gamma: float
    floor: float
    alpha_mode: int
    rounds: int
    z: np.ndarray
    n: np.ndarray
    x: np.ndarray
    stamp: np.ndarray
    margins: np.ndarray

    def final_weights(self) -> np.ndarray:
        """Materialize x_{T+1} across every slot."""
        sig = np.maximum(self.gamma * np.sqrt(self.n), self.floor)
        live = sig > 0
        out = np.zeros_like(self.z)
        t = self.rounds
        acum = float(t) if self.alpha_mode == ALPHA_CONSTANT else (1.0 if t >= 1 else 0.0)
        if self.family in (FTPRL, RDA):
            u = np.where(live, -self.z / np.where(live, sig, 1.0), 0.0)
            thr = np.where(live, acum * self.lam / np.where(live, sig, 1.0), 0.0)
            out = np.sign(u) * np.maximum(np.abs(u) - thr, 0.0)
        else:
            elapsed = (
                (acum - self.stamp) if self.family == FOBOS else (float(t) - self.stamp)
            )
            pending = np.where(live, elapsed * self.lam / np.where(live, sig, 1.0), 0.0)
            out = np.sign(self.x) * np.maximum(np.abs(self.x) - np.maximum(pending, 0.0), 0.0)
        return out


def train_pass(
    csr: CsrView,
    family: str,
    lam: float,
    gamma: float,
    sigma_floor: float = 0.0,
    penalty_mode: str = "constant",
    backend: str | None = None,
) -> PassState:
    """One progressive-validation training pass over a CSR dataset.

    Logistic loss, linearized updates, per-coordinate adaptive rates, L1
    penalty: the configuration of the sweep protocol.  Anything else goes
    through the reference learner instead.
    """
    if family not in FAMILY_CODES:
        raise ConfigError(f"unknown family {family!r}")
    if penalty_mode not in ALPHA_CODES:
        raise ConfigError(f"kernel supports penalty modes {sorted(ALPHA_CODES)}")
    if gamma <= 0:
        raise ConfigError(f"gamma must be > 0, got {gamma}")
    if lam < 0 or sigma_floor < 0:
        raise ConfigError("lambda and sigma_floor must be >= 0")
    backend = backend or active_backend()
    if backend == "numba":
        if not HAS_NUMBA:
            raise ConfigError("numba backend requested but numba is unavailable")
        fn = _train_pass_njit
    elif backend == "numpy":
        fn = _train_pass_body
    else:
        raise ConfigError(f"unknown backend {backend!r}")

    d = csr.n_slots
    T = csr.n_examples
    z = np.zeros(d)
    n = np.zeros(d)
    x = np.zeros(d)
    stamp = np.zeros(d)
    margins = np.zeros(T)
    max_nnz = int(np.max(np.diff(csr.indptr))) if T else 0
    scratch = np.zeros(max(max_nnz, 1))
    fn(
        csr.indptr,
        csr.indices,
        csr.values,
        csr.labels,
        csr.weights,
        FAMILY_CODES[family],
        ALPHA_CODES[penalty_mode],
        float(lam),
        float(gamma),
        float(sigma_floor),
        z,
        n,
        x,
        stamp,
        margins,
        scratch,
    )
    return PassState(
        family=FAMILY_CODES[family],
        lam=float(lam),
        gamma=float(gamma),
        floor=float(sigma_floor),
        alpha_mode=ALPHA_CODES[penalty_mode],
        rounds=T,
        z=z,
        n=n,
        x=x,
        stamp=stamp,
        margins=margins,
    )
