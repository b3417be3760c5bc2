"""Geometry of the probability (K-1)-simplex.

All operations act along a channel axis (default axis 0), so they apply both
to single K-vectors and to full ownership stacks of shape (K, H, W).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: internal feasibility tolerance (double-precision headroom)
FEAS_TOL = 1e-12
#: user-facing feasibility tolerance
STACK_TOL = 1e-10


def tangent_project(w, axis: int = 0) -> np.ndarray:
    """Project a free gradient onto the tangent plane of the simplex.

    The normal direction is the all-ones vector, so the projection just
    removes the channel mean: pi(w) = w - <w> 1.
    """
    w = np.asarray(w, dtype=float)
    return w - np.mean(w, axis=axis, keepdims=True)


def simplex_project(v, axis: int = 0) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-threshold).

    Vectorized over all non-channel axes.  A final renormalizing subtraction
    spreads the leftover rounding mass over the positive support so components
    sum to 1 at machine precision, with no negative components.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite components")
    v = np.moveaxis(v, axis, -1)
    k = v.shape[-1]
    if k < 2:
        raise ValueError("simplex projection needs K >= 2 channels")

    u = np.sort(v, axis=-1)[..., ::-1]
    css = np.cumsum(u, axis=-1) - 1.0
    counts = np.arange(1, k + 1, dtype=float)
    rho = np.sum(u * counts > css, axis=-1)  # number of active components
    tau = np.take_along_axis(css, rho[..., None] - 1, axis=-1) / rho[..., None]
    x = np.maximum(v - tau, 0.0)

    # renormalizing subtraction on the support
    pos = x > 0
    npos = np.maximum(pos.sum(axis=-1, keepdims=True), 1)
    excess = (x.sum(axis=-1, keepdims=True) - 1.0) / npos
    x = np.maximum(np.where(pos, x - excess, 0.0), 0.0)
    return np.moveaxis(x, -1, axis)


@dataclass
class StackReport:
    max_sum_deviation: float
    min_value: float
    max_value: float
    tol: float

    @property
    def ok(self) -> bool:
        return (
            self.max_sum_deviation <= self.tol
            and self.min_value >= -self.tol
            and self.max_value <= 1.0 + self.tol
        )


def validate_stack(P, tol: float = STACK_TOL) -> StackReport:
    """Check pixelwise simplex feasibility of an ownership stack (K, H, W)."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 3 or P.shape[0] < 2:
        raise ValueError(f"expected stack of shape (K>=2, H, W), got {P.shape}")
    sums = P.sum(axis=0)
    return StackReport(
        max_sum_deviation=float(np.max(np.abs(sums - 1.0))),
        min_value=float(P.min()),
        max_value=float(P.max()),
        tol=tol,
    )


def require_feasible(P, tol: float = STACK_TOL) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    report = validate_stack(P, tol)
    if not report.ok:
        raise ValueError(
            "ownership stack is not simplex-feasible: "
            f"max sum deviation {report.max_sum_deviation:.3e}, "
            f"min {report.min_value:.3e}, max {report.max_value:.3e}"
        )
    return P
