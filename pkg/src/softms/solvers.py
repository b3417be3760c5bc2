"""Screened-Poisson half-steps of the segmentation Euler-Lagrange system.

Both subproblems have the form -a * lap(u) + b(x) * u = f with homogeneous
Neumann boundaries (mirrored ghost cells), solved matrix-free with conjugate
gradients; the operator is the SPD graph Laplacian plus a nonnegative
diagonal.  Supervised pixels are removed from the ownership solve and held at
their Dirichlet values.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.fft import dctn, idctn
from scipy.sparse.linalg import LinearOperator, cg

from .fields import integrate, laplacian_neumann
from .simplex import require_feasible, simplex_project, tangent_project
from .supervision import apply_supervision

#: a channel is "dumb" when its total ownership mass drops below this
#: fraction of the pixel count; its pattern is fixed to zero by convention.
DUMB_THRESHOLD_FRAC = 1e-6


@dataclass
class SolverOptions:
    inner_tol: float = 1e-6        # relative residual target of the CG solves
    max_inner_sweeps: int = 2000   # CG iteration cap
    lin_steps: int = 8             # linearization iterations per ownership solve
    lin_tol: float = 1e-5          # successive-iterate tolerance
    #: proximal damping of the linearized sweep (pseudo time step).  None is
    #: the raw linearization; its screening coefficient vanishes where p = 1,
    #: so after simplex clamping it can lock onto hard interfaces.  A finite
    #: step keeps updates bounded without changing the fixed points.
    step: float | None = 0.2

    def __post_init__(self):
        if min(self.inner_tol, self.max_inner_sweeps, self.lin_steps, self.lin_tol) <= 0:
            raise ValueError("solver options must be positive")
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive or None")


@dataclass
class LinearSolve:
    u: np.ndarray
    rel_residual: float
    converged: bool


def dumb_threshold(shape) -> float:
    return DUMB_THRESHOLD_FRAC * float(np.prod(shape))


@lru_cache(maxsize=8)
def _grid_graph_laplacian(shape):
    """Graph Laplacian of the 4-connected grid as a CSR matrix.

    This is the matrix of -laplacian_neumann on raveled fields; assembling
    it once per shape keeps the CG matvecs out of python.
    """
    h, w = shape
    n = h * w
    idx = np.arange(n).reshape(h, w)
    rows = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
    cols = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
    adj = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    adj = adj + adj.T
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return (sp.diags(deg) - adj).tocsr()


@lru_cache(maxsize=8)
def _grid_spectrum(shape):
    """Eigenvalues of the grid graph Laplacian in the DCT-II basis."""
    h, w = shape
    ky = 2.0 - 2.0 * np.cos(np.pi * np.arange(h) / h)
    kx = 2.0 - 2.0 * np.cos(np.pi * np.arange(w) / w)
    return ky[:, None] + kx[None, :]


def _diag_positions(L) -> np.ndarray:
    """Indices of the diagonal entries inside a CSR data array."""
    rows = np.repeat(np.arange(L.shape[0]), np.diff(L.indptr))
    return np.flatnonzero(L.indices == rows)


@lru_cache(maxsize=8)
def _free_structure(shape):
    L = _grid_graph_laplacian(shape)
    return L, _diag_positions(L)


@lru_cache(maxsize=8)
def _masked_structure(shape, mask_bytes):
    """Laplacian restricted to the free pixels of a Dirichlet mask."""
    fixed = np.frombuffer(mask_bytes, dtype=bool).reshape(shape)
    fr = (~fixed).ravel()
    L = _grid_graph_laplacian(shape)
    L_ff = L[fr][:, fr].tocsr()
    return fr, L_ff, _diag_positions(L_ff)


def screened_poisson(a, b_coef, rhs, opts: SolverOptions,
                     fixed=None, fixed_values=None, x0=None) -> LinearSolve:
    """Solve -a*lap(u) + b_coef*u = rhs, Neumann boundaries, optional interior
    Dirichlet pixels (fixed mask / values)."""
    rhs = np.asarray(rhs, dtype=float)
    shape = rhs.shape
    b_coef = np.broadcast_to(np.asarray(b_coef, dtype=float), shape)

    have_fixed = fixed is not None and np.any(fixed)
    if have_fixed:
        fr, L_ff, diagpos = _masked_structure(shape, fixed.tobytes())
        free = ~fixed
        lift = np.zeros(shape)
        lift[fixed] = fixed_values[fixed]
        # the screening term of A @ lift vanishes on free pixels, so only
        # the Laplacian coupling to the fixed values enters the rhs
        L = _grid_graph_laplacian(shape)
        b_free = rhs.ravel()[fr] - a * (L @ lift.ravel())[fr]
        data = a * L_ff.data
        data[diagpos] += b_coef.ravel()[fr]
        A = sp.csr_matrix((data, L_ff.indices, L_ff.indptr), shape=L_ff.shape)
        x0f = None if x0 is None else np.asarray(x0, dtype=float).ravel()[fr]
    else:
        L, diagpos = _free_structure(shape)
        b_free = rhs.ravel()
        data = a * L.data
        data[diagpos] += b_coef.ravel()
        A = sp.csr_matrix((data, L.indices, L.indptr), shape=L.shape)
        x0f = None if x0 is None else np.asarray(x0, dtype=float).ravel()
    n = b_free.size

    spread = float(b_coef.max() - b_coef.min())
    if spread <= a:
        # mild screening variation: precondition with the exact inverse of
        # the constant-coefficient operator a*L + mean(b), diagonalized by
        # the DCT; CG then converges in a handful of iterations
        eig = a * _grid_spectrum(shape) + float(b_coef.mean())

        def apply_minv(r2d):
            f = dctn(r2d, type=2, norm="ortho")
            return idctn(f / eig, type=2, norm="ortho")

        if have_fixed:
            def pinv(rf):
                # zero-extend, apply the full-grid inverse, restrict; this
                # is SPD on the free subspace, which is all CG needs
                full = np.zeros(shape)
                full[free] = rf
                return apply_minv(full)[free]
        else:
            def pinv(r):
                return apply_minv(r.reshape(shape)).ravel()

        precond = LinearOperator((n, n), matvec=pinv, dtype=float)
    else:
        # strongly varying screening (e.g. a polarized ownership weight):
        # the constant-coefficient inverse misestimates both phases, plain
        # Jacobi does better
        dinv = 1.0 / A.diagonal()
        precond = LinearOperator((n, n), matvec=lambda r: dinv * r,
                                 dtype=float)
    sol, info = cg(A, b_free, x0=x0f, rtol=opts.inner_tol, atol=1e-12,
                   maxiter=opts.max_inner_sweeps, M=precond)

    res = np.linalg.norm(A @ sol - b_free)
    if have_fixed:
        u = lift.copy()
        u[~fixed] = sol
    else:
        u = sol.reshape(shape)
    scale = np.linalg.norm(b_free)
    rel = res / scale if scale > 0 else res
    return LinearSolve(u=u, rel_residual=float(rel), converged=(info == 0))


@dataclass
class PatternSolve:
    u: np.ndarray
    dumb: bool
    rel_residual: float
    converged: bool


def solve_pattern_channel(p, image, alpha: float, lam: float,
                          opts: SolverOptions | None = None, x0=None) -> PatternSolve:
    """Pattern half-step: -alpha*lap(u) + lam*p*u = lam*p*I per color component.

    Channels whose total ownership is below the dumb threshold get u = 0 (the
    equation degenerates to a pure-Neumann Laplacian with a constant
    nullspace, and a vanished channel carries no data anyway).
    """
    opts = opts or SolverOptions()
    p = np.asarray(p, dtype=float)
    image = np.asarray(image, dtype=float)
    if integrate(p) < dumb_threshold(p.shape):
        return PatternSolve(np.zeros(image.shape), True, 0.0, True)

    comps = image[None] if image.ndim == 2 else image
    x0c = None if x0 is None else (x0[None] if x0.ndim == 2 else x0)
    out = np.empty_like(comps)
    worst_rel, ok = 0.0, True
    for c in range(comps.shape[0]):
        s = screened_poisson(alpha, lam * p, lam * p * comps[c], opts,
                             x0=None if x0c is None else x0c[c])
        out[c] = s.u
        worst_rel = max(worst_rel, s.rel_residual)
        ok = ok and s.converged
    u = out[0] if image.ndim == 2 else out
    return PatternSolve(u, False, worst_rel, ok)


def ownership_force(P, e, epsilon: float) -> np.ndarray:
    """Free-gradient fields of the ownership energy, one per channel:
    V_i = e_i - 18*eps*lap(p_i) + 2/eps * p_i(1-p_i)(1-2p_i)."""
    P = np.asarray(P, dtype=float)
    e = np.asarray(e, dtype=float)
    V = np.empty_like(P)
    for i in range(P.shape[0]):
        p = P[i]
        V[i] = (e[i] - 18.0 * epsilon * laplacian_neumann(p)
                + (2.0 / epsilon) * p * (1.0 - p) * (1.0 - 2.0 * p))
    return V


def mean_V(P, e, epsilon: float) -> np.ndarray:
    """Channel-mean of the ownership forces, in closed form.

    Because the ownerships sum to one pixelwise, the Laplacian terms cancel
    and <V> = (1/K) sum e_i + (2/(eps K)) sum (2p_i^3 - 3p_i^2) + 2/(eps K);
    no stencil evaluation is needed.
    """
    P = np.asarray(P, dtype=float)
    e = np.asarray(e, dtype=float)
    k = P.shape[0]
    poly = np.sum(2.0 * P ** 3 - 3.0 * P ** 2, axis=0)
    return e.mean(axis=0) + (2.0 / (epsilon * k)) * poly + 2.0 / (epsilon * k)


def ownership_linearized_step(P, e, epsilon: float, supervision=None,
                              opts: SolverOptions | None = None) -> np.ndarray:
    """One semi-implicit sweep of the nonlinear ownership system.

    The double-well force p(1-p)(1-2p) is split as p(1-p)^2 - p^2(1-p); the
    first half is taken implicitly (it keeps the screened coefficient
    nonnegative), the second goes to the right-hand side.  With a finite
    opts.step an additional proximal term (p_new - p_old)/step is added on
    both sides; this leaves the fixed points untouched but bounds the update
    where the screening coefficient degenerates.  The solved stack is
    re-feasibilized by exact simplex projection, then supervised pixels are
    restored bit-exactly.
    """
    opts = opts or SolverOptions()
    P = require_feasible(P)
    e = np.asarray(e, dtype=float)
    k = P.shape[0]
    mv = mean_V(P, e, epsilon)
    damp = 0.0 if opts.step is None else 1.0 / opts.step

    fixed = values = None
    if supervision is not None and supervision.patches:
        fixed, values = supervision.masks(k, P.shape[1:])

    out = np.empty_like(P)
    for i in range(k):
        p = P[i]
        b_coef = damp + (2.0 / epsilon) * (1.0 - p) ** 2
        rhs = damp * p - e[i] + mv + (2.0 / epsilon) * p ** 2 * (1.0 - p)
        s = screened_poisson(18.0 * epsilon, b_coef, rhs, opts,
                             fixed=fixed,
                             fixed_values=None if values is None else values[i],
                             x0=p)
        out[i] = s.u
    out = simplex_project(out, axis=0)
    return apply_supervision(out, supervision)


def solve_ownerships(P0, e, epsilon: float, supervision=None,
                     opts: SolverOptions | None = None) -> np.ndarray:
    """Inner fixed-point loop over linearized sweeps."""
    opts = opts or SolverOptions()
    P = require_feasible(P0)
    for _ in range(opts.lin_steps):
        P_next = ownership_linearized_step(P, e, epsilon, supervision, opts)
        change = float(np.max(np.abs(P_next - P)))
        P = P_next
        if change < opts.lin_tol:
            break
    return P


@dataclass
class ElResidual:
    pattern_per_channel: np.ndarray
    ownership_per_channel: np.ndarray

    @property
    def pattern(self) -> float:
        return float(self.pattern_per_channel.max())

    @property
    def ownership(self) -> float:
        return float(self.ownership_per_channel.max())


#: step used by the projected-gradient stationarity measure; small enough
#: that the measure approximates the feasible-descent component of the force
_RESIDUAL_STEP = 1e-6


def el_residual(P, U, image, params, supervision=None) -> ElResidual:
    """Max-norm stationarity residuals of both half-systems.

    The ownership residual is the scaled projected-gradient mapping
    ||P - proj_simplex(P - t*pi(V))||_inf / t with a small step t.  The
    tangent-projected force alone cannot vanish on the simplex faces a
    polarized minimizer sits on; the mapping keeps only its feasible-descent
    component, which does vanish at constrained stationary points.
    """
    from .energy import squared_error

    P = require_feasible(P)
    U = np.asarray(U, dtype=float)
    image = np.asarray(image, dtype=float)
    k = P.shape[0]

    pat = np.empty(k)
    for i in range(k):
        comps = image[None] if image.ndim == 2 else image
        u = U[i][None] if image.ndim == 2 else U[i]
        r = 0.0
        for c in range(comps.shape[0]):
            res = (-params.alpha * laplacian_neumann(u[c])
                   + params.lam * P[i] * u[c] - params.lam * P[i] * comps[c])
            r = max(r, float(np.max(np.abs(res))))
        pat[i] = r

    e = np.stack([params.lam * squared_error(U[i], image) for i in range(k)])
    g = tangent_project(ownership_force(P, e, params.epsilon), axis=0)
    t = _RESIDUAL_STEP
    mapped = (P - simplex_project(P - t * g, axis=0)) / t
    if supervision is not None and supervision.patches:
        fixed, _ = supervision.masks(k, P.shape[1:])
        mapped = mapped[:, ~fixed]
        own = np.max(np.abs(mapped), axis=1) if mapped.size else np.zeros(k)
    else:
        own = np.max(np.abs(mapped), axis=(1, 2))
    return ElResidual(pattern_per_channel=pat, ownership_per_channel=own)
