"""Shared synthetic instances for the test suite."""

import os

# the solver works on small arrays where BLAS thread pools only add
# spin-wait overhead; pin them before numpy loads
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np

try:
    from threadpoolctl import threadpool_limits

    # keep a reference so the limit stays active for the whole session,
    # covering the case where numpy was already imported by a plugin
    _THREAD_LIMIT = threadpool_limits(limits=1)
except ImportError:
    pass


def two_constant(n=64, noise=0.05, seed=1, lo=0.25, hi=0.75):
    """Noisy two-region image (left lo, right hi) with 1-based ground truth."""
    rng = np.random.default_rng(seed)
    img = np.full((n, n), lo)
    img[:, n // 2:] = hi
    gt = np.ones((n, n), dtype=int)
    gt[:, n // 2:] = 2
    img = np.clip(img + noise * rng.standard_normal((n, n)), 0.0, 1.0)
    return img, gt


def tjunction(n=64, noise=0.05, seed=3):
    """Three regions meeting in a T: two in the top half, one below."""
    rng = np.random.default_rng(seed)
    img = np.empty((n, n))
    img[:n // 2, :n // 2] = 0.0
    img[:n // 2, n // 2:] = 1.0
    img[n // 2:, :] = 0.5
    gt = np.empty((n, n), dtype=int)
    gt[:n // 2, :n // 2] = 1
    gt[:n // 2, n // 2:] = 2
    gt[n // 2:, :] = 3
    img = np.clip(img + noise * rng.standard_normal((n, n)), 0.0, 1.0)
    return img, gt


def tjunction_patches(n=64):
    """One supervision rectangle well inside each T-junction region."""
    return {"patches": [
        {"channel": 1, "x": 8, "y": 8, "w": 8, "h": 8},
        {"channel": 2, "x": n - 16, "y": 8, "w": 8, "h": 8},
        {"channel": 3, "x": n // 2 - 4, "y": n - 16, "w": 8, "h": 8},
    ]}


def random_feasible(rng, k, h, w):
    """Random interior point of the simplex at every pixel."""
    g = rng.gamma(1.0, 1.0, size=(k, h, w)) + 1e-12
    return g / g.sum(axis=0, keepdims=True)


def dyadic_stack(rng, k, h, w, denom=256):
    """Feasible stack of multiples of 1/denom; channel sums are exactly 1.0
    in floating point, which makes flux-cancellation tests bit-exact."""
    counts = rng.multinomial(denom, [1.0 / k] * k, size=(h, w))
    return np.moveaxis(counts, -1, 0).astype(float) / denom


def accuracy(labels, gt):
    return float((labels == gt).mean())


def monotone(totals, slack=1e-9):
    return all(totals[i + 1] <= totals[i] + slack * abs(totals[i])
               for i in range(len(totals) - 1))
