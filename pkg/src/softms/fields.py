"""Discrete calculus on regular pixel grids (h = 1).

Fields are 2D numpy arrays indexed [row, col] = [y, x], row-major.
Homogeneous Neumann boundaries are realized with mirrored ghost cells, so the
5-point Laplacian conserves total mass exactly (integrate(lap(f)) == 0).
"""

from __future__ import annotations

import numpy as np


def as_field(f) -> np.ndarray:
    """Validate and coerce an array-like to a finite 2D float field."""
    a = np.asarray(f, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a 2D field, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("field contains NaN or Inf")
    return a


def laplacian_neumann(f: np.ndarray) -> np.ndarray:
    """5-point Laplacian with mirrored ghost cells.

    Off-grid neighbors are replaced by the center value, which makes the
    discrete normal derivative of the ghost extension zero.  This is exactly
    the (negated) graph Laplacian of the grid graph, so it is symmetric and
    flux-conserving.
    """
    f = np.asarray(f, dtype=float)
    out = np.zeros_like(f)
    # accumulate signed edge differences; mirrored neighbors contribute 0
    out[1:, :] += f[:-1, :] - f[1:, :]
    out[:-1, :] += f[1:, :] - f[:-1, :]
    out[:, 1:] += f[:, :-1] - f[:, 1:]
    out[:, :-1] += f[:, 1:] - f[:, :-1]
    return out


def dirichlet_energy(f: np.ndarray) -> float:
    """Sum of squared forward differences; differences crossing the boundary
    are omitted. Gradient of this energy is -2 * laplacian_neumann."""
    f = np.asarray(f, dtype=float)
    e = 0.0
    if f.shape[0] > 1:
        e += float(np.sum(np.diff(f, axis=0) ** 2))
    if f.shape[1] > 1:
        e += float(np.sum(np.diff(f, axis=1) ** 2))
    return e


def integrate(f: np.ndarray) -> float:
    """Discrete integral over the grid (pixel area = 1)."""
    return float(np.sum(f))


def boundary_length(width: int, height: int) -> int:
    """Perimeter pixel count for the fixed boundary traversal."""
    return 2 * width + 2 * height - 4


def normal_derivative_boundary(f: np.ndarray) -> np.ndarray:
    """One-sided outward normal differences along the boundary.

    Traversal: top row left-to-right, right column top-to-bottom, bottom row
    right-to-left, left column bottom-to-top; corners appear once and hold the
    average of their two outward one-sided differences.
    """
    f = as_field(f)
    h, w = f.shape
    if h < 2 or w < 2:
        raise ValueError("normal derivative needs width and height >= 2")

    top = f[0, :] - f[1, :]          # outward is -y
    bottom = f[-1, :] - f[-2, :]     # outward is +y
    left = f[:, 0] - f[:, 1]         # outward is -x
    right = f[:, -1] - f[:, -2]      # outward is +x

    out = np.empty(boundary_length(w, h), dtype=float)
    k = 0
    # top row, left -> right
    out[k] = (top[0] + left[0]) / 2.0
    out[k + 1:k + w - 1] = top[1:-1]
    out[k + w - 1] = (top[-1] + right[0]) / 2.0
    k += w
    # right column, top -> bottom (corner (h-1, w-1) included here once)
    out[k:k + h - 2] = right[1:-1]
    k += h - 2
    out[k] = (bottom[-1] + right[-1]) / 2.0
    k += 1
    # bottom row, right -> left
    out[k:k + w - 2] = bottom[-2:0:-1]
    k += w - 2
    out[k] = (bottom[0] + left[-1]) / 2.0
    k += 1
    # left column, bottom -> top
    out[k:k + h - 2] = left[-2:0:-1]
    return out
