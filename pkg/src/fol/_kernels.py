"""Hot numeric kernels: log-domain Sinkhorn and mutual-NN matching.

Each kernel has a numba-compiled implementation and a pure-numpy one.
The active backend is chosen at import time: numba when importable,
unless the environment variable ``FOL_NUMBA`` is set to ``0``/``off``/
``false``. ``benchmarks/bench_kernels.py`` compares both paths.
"""

from __future__ import annotations

import math
import os

import numpy as np

_FLAG = os.environ.get("FOL_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "off", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _WANT_NUMBA


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Sinkhorn, log domain
# ---------------------------------------------------------------------------


def _logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1)
    return m + np.log(np.exp(x - m[:, None]).sum(axis=1))


def sinkhorn_log_numpy(logits, mu, kappa, max_iterations, tolerance):
    """Alternating row/column log-normalization toward marginals mu, kappa.

    Returns (log_plan, iterations, converged).
    """
    logits = np.asarray(logits, dtype=np.float64)
    log_mu = np.log(mu)
    log_kappa = np.log(kappa)
    u = np.zeros(logits.shape[0])
    v = np.zeros(logits.shape[1])
    converged = False
    iterations = 0
    for it in range(max_iterations):
        u = log_mu - _logsumexp_rows(logits + v[None, :])
        v = log_kappa - _logsumexp_rows((logits + u[:, None]).T)
        iterations = it + 1
        plan = np.exp(logits + u[:, None] + v[None, :])
        row_dev = np.abs(plan.sum(axis=1) - mu).max()
        col_dev = np.abs(plan.sum(axis=0) - kappa).max()
        if max(row_dev, col_dev) <= tolerance:
            converged = True
            break
    return logits + u[:, None] + v[None, :], iterations, converged


if NUMBA_AVAILABLE:

    @numba.njit(cache=True)
    def _sinkhorn_log_nb(logits, mu, kappa, max_iterations, tolerance):
        n, k = logits.shape
        log_mu = np.log(mu)
        log_kappa = np.log(kappa)
        u = np.zeros(n)
        v = np.zeros(k)
        converged = False
        iterations = 0
        for it in range(max_iterations):
            for i in range(n):
                hi = -np.inf
                for j in range(k):
                    val = logits[i, j] + v[j]
                    if val > hi:
                        hi = val
                s = 0.0
                for j in range(k):
                    s += math.exp(logits[i, j] + v[j] - hi)
                u[i] = log_mu[i] - (hi + math.log(s))
            for j in range(k):
                hi = -np.inf
                for i in range(n):
                    val = logits[i, j] + u[i]
                    if val > hi:
                        hi = val
                s = 0.0
                for i in range(n):
                    s += math.exp(logits[i, j] + u[i] - hi)
                v[j] = log_kappa[j] - (hi + math.log(s))
            iterations = it + 1
            viol = 0.0
            for i in range(n):
                rs = 0.0
                for j in range(k):
                    rs += math.exp(logits[i, j] + u[i] + v[j])
                dev = abs(rs - mu[i])
                if dev > viol:
                    viol = dev
            for j in range(k):
                cs = 0.0
                for i in range(n):
                    cs += math.exp(logits[i, j] + u[i] + v[j])
                dev = abs(cs - kappa[j])
                if dev > viol:
                    viol = dev
            if viol <= tolerance:
                converged = True
                break
        out = np.empty((n, k))
        for i in range(n):
            for j in range(k):
                out[i, j] = logits[i, j] + u[i] + v[j]
        return out, iterations, converged

    def sinkhorn_log_numba(logits, mu, kappa, max_iterations, tolerance):
        logits = np.ascontiguousarray(logits, dtype=np.float64)
        mu = np.ascontiguousarray(mu, dtype=np.float64)
        kappa = np.ascontiguousarray(kappa, dtype=np.float64)
        return _sinkhorn_log_nb(logits, mu, kappa, max_iterations, tolerance)

else:  # pragma: no cover
    sinkhorn_log_numba = None


def sinkhorn_log(logits, mu, kappa, max_iterations, tolerance):
    if USE_NUMBA:
        return sinkhorn_log_numba(logits, mu, kappa, max_iterations, tolerance)
    return sinkhorn_log_numpy(logits, mu, kappa, max_iterations, tolerance)


# ---------------------------------------------------------------------------
# Mutual nearest neighbors
# ---------------------------------------------------------------------------


def mutual_nn_numpy(a, b):
    """Mutual argmax pairs under dot-product similarity.

    Returns (idx_a, idx_b, sims) arrays; ties resolve to the lower index.
    """
    sims = a @ b.T
    best_b = sims.argmax(axis=1)
    best_a = sims.argmax(axis=0)
    rows = np.arange(a.shape[0])
    keep = best_a[best_b] == rows
    idx_a = rows[keep]
    idx_b = best_b[keep]
    return idx_a, idx_b, sims[idx_a, idx_b]


if NUMBA_AVAILABLE:

    @numba.njit(cache=True)
    def _mutual_nn_nb(a, b):
        # BLAS matmul for the similarity block, one fused pass for both
        # argmax directions (strict > keeps the lower index on ties).
        na = a.shape[0]
        nb = b.shape[0]
        sims = np.dot(a, b.T)
        best_b = np.zeros(na, dtype=np.int64)
        best_b_val = np.full(na, -np.inf)
        best_a = np.zeros(nb, dtype=np.int64)
        best_a_val = np.full(nb, -np.inf)
        for i in range(na):
            for j in range(nb):
                s = sims[i, j]
                if s > best_b_val[i]:
                    best_b_val[i] = s
                    best_b[i] = j
                if s > best_a_val[j]:
                    best_a_val[j] = s
                    best_a[j] = i
        count = 0
        for i in range(na):
            if best_a[best_b[i]] == i:
                count += 1
        idx_a = np.empty(count, dtype=np.int64)
        idx_b = np.empty(count, dtype=np.int64)
        sims = np.empty(count)
        pos = 0
        for i in range(na):
            j = best_b[i]
            if best_a[j] == i:
                idx_a[pos] = i
                idx_b[pos] = j
                sims[pos] = best_b_val[i]
                pos += 1
        return idx_a, idx_b, sims

    def mutual_nn_numba(a, b):
        a = np.ascontiguousarray(a, dtype=np.float64)
        b = np.ascontiguousarray(b, dtype=np.float64)
        return _mutual_nn_nb(a, b)

else:  # pragma: no cover
    mutual_nn_numba = None


def mutual_nn(a, b):
    if a.shape[0] == 0 or b.shape[0] == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), np.empty(0)
    if USE_NUMBA:
        return mutual_nn_numba(a, b)
    return mutual_nn_numpy(a, b)


def warmup() -> None:
    """Trigger JIT compilation so timed sections measure steady state."""
    if not USE_NUMBA:
        return
    logits = np.zeros((2, 2))
    sinkhorn_log(logits, np.full(2, 0.5), np.full(2, 0.5), 2, 1e-3)
    mutual_nn(np.eye(2), np.eye(2))
