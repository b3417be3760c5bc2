"""The soft segmentation energy and its constituents.

Images may be grayscale (H, W) or multi-channel (C, H, W); pattern stacks
carry one field per segment matching the image shape, ownership stacks are
always (K, H, W).  All energies are plain sums over pixels (h = 1), so the
Modica-Mortola limit reads as boundary length in pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import dirichlet_energy
from .simplex import require_feasible


@dataclass
class ModelParams:
    """Weights of the segmentation energy.

    k: number of patterns (>= 2)
    lam: fidelity weight (assumes intensities normalized to [0, 1])
    alpha: pattern smoothness weight
    epsilon: ownership transition bandwidth in pixels
    """

    k: int = 2
    lam: float = 10.0
    alpha: float = 2.0
    epsilon: float = 1.5

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("need at least 2 patterns (k >= 2)")
        if self.lam <= 0 or self.alpha <= 0 or self.epsilon <= 0:
            raise ValueError("lam, alpha and epsilon must be strictly positive")


@dataclass
class EnergyBreakdown:
    data_term: float
    sobolev_term: float
    mm_term: float

    @property
    def total(self) -> float:
        return self.data_term + self.sobolev_term + self.mm_term

    def as_dict(self) -> dict:
        return {
            "data": self.data_term,
            "sobolev": self.sobolev_term,
            "mm": self.mm_term,
            "total": self.total,
        }


def squared_error(u, image) -> np.ndarray:
    """Pixelwise squared synthesis error, summed over color components."""
    u = np.asarray(u, dtype=float)
    image = np.asarray(image, dtype=float)
    d = (u - image) ** 2
    if d.ndim == 3:
        d = d.sum(axis=0)
    return d


def data_energy(P, U, image, lam: float) -> float:
    """Ownership-weighted least squares: lam * sum_i int (u_i - I)^2 p_i."""
    P = np.asarray(P, dtype=float)
    U = np.asarray(U, dtype=float)
    image = np.asarray(image, dtype=float)
    if P.shape[0] != U.shape[0]:
        raise ValueError("ownership and pattern stacks disagree on K")
    if U.shape[1:] != image.shape or P.shape[1:] != image.shape[-2:]:
        raise ValueError("stack dimensions do not match the image")
    total = 0.0
    for i in range(P.shape[0]):
        total += float(np.sum(squared_error(U[i], image) * P[i]))
    return lam * total


def mm_energy(p, epsilon: float) -> float:
    """Modica-Mortola phase energy: int 9*eps*|grad p|^2 + (p(1-p))^2 / eps."""
    p = np.asarray(p, dtype=float)
    well = float(np.sum((p * (1.0 - p)) ** 2))
    return 9.0 * epsilon * dirichlet_energy(p) + well / epsilon


def sobolev_energy(U, alpha: float) -> float:
    U = np.asarray(U, dtype=float)
    total = 0.0
    for u in U:
        if u.ndim == 3:
            total += sum(dirichlet_energy(c) for c in u)
        else:
            total += dirichlet_energy(u)
    return alpha * total


def total_energy(P, U, image, params: ModelParams) -> EnergyBreakdown:
    """Full soft segmentation energy; rejects infeasible ownership stacks."""
    P = require_feasible(P)
    return EnergyBreakdown(
        data_term=data_energy(P, U, image, params.lam),
        sobolev_term=sobolev_energy(U, params.alpha),
        mm_term=sum(mm_energy(p, params.epsilon) for p in P),
    )


def means_to_stack(m, image_shape) -> np.ndarray:
    """Expand per-segment mean values into constant pattern fields."""
    m = np.atleast_1d(np.asarray(m, dtype=float))
    if m.ndim == 1:  # grayscale means
        return np.broadcast_to(m[:, None, None], (m.shape[0],) + tuple(image_shape)).copy()
    # color means, shape (K, C)
    k, c = m.shape
    return np.broadcast_to(m[:, :, None, None], (k, c) + tuple(image_shape[-2:])).copy()


def pc_energy(P, m, image, params: ModelParams) -> EnergyBreakdown:
    """Piecewise-constant variant: patterns are constants, no Sobolev term."""
    P = require_feasible(P)
    image = np.asarray(image, dtype=float)
    U = means_to_stack(m, image.shape)
    return EnergyBreakdown(
        data_term=data_energy(P, U, image, params.lam),
        sobolev_term=0.0,
        mm_term=sum(mm_energy(p, params.epsilon) for p in P),
    )


def harden(P) -> np.ndarray:
    """Pixelwise argmax labels in 1..K; ties go to the largest index."""
    P = np.asarray(P, dtype=float)
    k = P.shape[0]
    # argmax returns the first maximum, so scan channels in reverse
    return (k - np.argmax(P[::-1], axis=0)).astype(np.int32)


def permute(stack, sigma) -> np.ndarray:
    """Reorder channels: output channel i is input channel sigma[i] (1-based)."""
    stack = np.asarray(stack)
    k = stack.shape[0]
    idx = np.asarray(sigma, dtype=int) - 1
    if sorted(idx.tolist()) != list(range(k)):
        raise ValueError(f"sigma must be a permutation of 1..{k}")
    return stack[idx].copy()


def sigmoid_profile(signed_distance, epsilon: float) -> np.ndarray:
    """Equipartitioned phase transition profile sigma(d / (3 eps))."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    from scipy.special import expit

    return expit(np.asarray(signed_distance, dtype=float) / (3.0 * epsilon))
