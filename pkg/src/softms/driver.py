"""Outer alternating-minimization loop for both segmentation models.

One outer iteration updates the ownerships (inner linearized fixed point)
and then the patterns (exact linear solves / weighted means).  The ownership
half-step carries no descent guarantee of its own, so the driver damps it
toward the previous iterate whenever it would raise the energy; the trace is
therefore monotone by construction.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import (EnergyBreakdown, ModelParams, data_energy, harden,
                     means_to_stack, mm_energy, pc_energy, sobolev_energy,
                     squared_error, total_energy)
from .simplex import simplex_project
from .solvers import (SolverOptions, dumb_threshold, el_residual,
                      solve_ownerships, solve_pattern_channel)
from .supervision import apply_supervision

FULL = "full"
PIECEWISE = "pc"

#: damping factors tried when an ownership update would raise the energy
_BACKTRACK = (1.0, 0.5, 0.25, 0.125, 0.0625)

#: inertial weight on the previous ownership displacement when choosing the
#: starting point of the next sweep; the backtracking guard makes bad
#: extrapolations harmless
_INERTIA = 0.75

#: pseudo-time steps of the post-convergence polish sweeps; the damped
#: ownership sweep stalls at a stationarity bias proportional to its step,
#: so a short ladder of shrinking steps sharpens the final iterate
_POLISH_STEPS = (0.05, 0.01, 0.002, 0.001, 0.0005)


class RunAborted(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class RunConfig:
    model: str = FULL
    params: ModelParams = field(default_factory=ModelParams)
    max_outer: int = 100
    energy_tol: float = 1e-5
    seed: int = 0
    init: str = "quantile"   # uniform | quantile | supplied
    order: str = "p_first"   # p_first | u_first
    solver: SolverOptions = field(default_factory=SolverOptions)
    init_ownerships: np.ndarray | None = None
    init_patterns: np.ndarray | None = None
    init_means: np.ndarray | None = None

    def __post_init__(self):
        if self.model not in (FULL, PIECEWISE):
            raise ValueError(f"unknown model {self.model!r}")
        if self.max_outer < 1 or self.energy_tol <= 0:
            raise ValueError("max_outer >= 1 and energy_tol > 0 required")
        if self.init not in ("uniform", "quantile", "supplied"):
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.order not in ("p_first", "u_first"):
            raise ValueError(f"unknown order {self.order!r}")


@dataclass
class TraceRow:
    iteration: int
    energy: EnergyBreakdown
    max_dp: float
    ms: float


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)
    converged: bool = False
    #: iteration at which the energy-decrease test tripped; rows past it are
    #: polish sweeps that sharpen stationarity without changing the energy much
    converged_at: int | None = None
    dumb: list = field(default_factory=list)
    pattern_residual: float = float("nan")
    ownership_residual: float = float("nan")

    CSV_HEADER = "iter,data,sobolev,mm,total,max_dp,ms"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.CSV_HEADER + "\n")
        for r in self.rows:
            e = r.energy
            buf.write(f"{r.iteration},{e.data_term:.17g},{e.sobolev_term:.17g},"
                      f"{e.mm_term:.17g},{e.total:.17g},{r.max_dp:.17g},{r.ms:.6g}\n")
        return buf.getvalue()

    @property
    def totals(self):
        return [r.energy.total for r in self.rows]


@dataclass
class RunResult:
    ownerships: np.ndarray
    patterns: np.ndarray | None
    means: np.ndarray | None
    trace: RunTrace

    @property
    def labels(self) -> np.ndarray:
        return harden(self.ownerships)


def update_means(P, image):
    """Ownership-weighted mean intensity per channel; dumb channels get 0."""
    P = np.asarray(P, dtype=float)
    image = np.asarray(image, dtype=float)
    k = P.shape[0]
    thresh = dumb_threshold(P.shape[1:])
    color = image.ndim == 3
    m = np.zeros((k, image.shape[0]) if color else k)
    dumb = np.zeros(k, dtype=bool)
    for i in range(k):
        mass = float(P[i].sum())
        if mass < thresh:
            dumb[i] = True
            continue
        if color:
            m[i] = np.array([float((c * P[i]).sum()) / mass for c in image])
        else:
            m[i] = float((image * P[i]).sum()) / mass
    return m, dumb


def _quantile_levels(image, k):
    qs = (np.arange(1, k + 1) - 0.5) / k
    if image.ndim == 3:
        return np.stack([np.quantile(image, q, axis=(1, 2)) for q in qs])
    return np.quantile(image, qs)


def initialize(image, config: RunConfig, supervision=None):
    """Build the starting pair (P0, U0 or m0).

    quantile: pattern levels at the ((i-0.5)/K)-quantiles of I and ownerships
    from a softmax of the fidelity, plus a small seeded perturbation to break
    the channel-permutation symmetry; uniform: flat ownerships plus the same
    perturbation.  Supervised pixels are overwritten with their exact values.
    """
    params = config.params
    image = np.asarray(image, dtype=float)
    k = params.k
    h, w = image.shape[-2:]
    rng = np.random.default_rng(config.seed)

    if config.init == "supplied":
        if config.init_ownerships is None:
            raise ValueError("init='supplied' requires init_ownerships")
        P0 = np.asarray(config.init_ownerships, dtype=float).copy()
        if config.model == FULL:
            U0 = (np.asarray(config.init_patterns, dtype=float).copy()
                  if config.init_patterns is not None
                  else means_to_stack(_quantile_levels(image, k), image.shape))
            m0 = None
        else:
            m0 = (np.asarray(config.init_means, dtype=float).copy()
                  if config.init_means is not None else _quantile_levels(image, k))
            U0 = None
        return apply_supervision(P0, supervision), U0, m0

    levels = _quantile_levels(image, k)
    if config.init == "quantile" and np.ptp(image) == 0.0:
        # constant image: the softmax logits are all equal, but the energy
        # minimizer is known exactly (one channel owns everything, pattern
        # matches the constant); start there, largest index by convention
        P0 = np.zeros((k, h, w))
        P0[k - 1] = 1.0
        P0 = apply_supervision(P0, supervision)
        stack = means_to_stack(levels, image.shape)
        return P0, (stack if config.model == FULL else None), (
            None if config.model == FULL else levels)
    if supervision is not None and supervision.patches:
        # seed supervised channels at the mean intensity over their own
        # patches; a rank-based assignment can contradict the pinned pixels
        # and the alternating scheme cannot swap channels afterwards
        _, values = supervision.masks(k, image.shape[-2:])
        for i in range(k):
            mask = values[i] > 0.5
            if mask.any():
                levels[i] = (np.array([float(c[mask].mean()) for c in image])
                             if image.ndim == 3 else float(image[mask].mean()))
    stack = means_to_stack(levels, image.shape)
    if config.init == "quantile":
        logits = np.stack([-params.lam * squared_error(stack[i], image)
                           for i in range(k)])
        logits -= logits.max(axis=0, keepdims=True)
        soft = np.exp(logits)
        P0 = soft / soft.sum(axis=0, keepdims=True)
    else:
        P0 = np.full((k, h, w), 1.0 / k)
    # seeded pixel noise breaks the channel symmetry locally; the graded
    # channel bias (larger than the noise) breaks it globally, so flat image
    # regions tilt toward one channel instead of speckling
    P0 = P0 + 1e-3 * rng.uniform(-1.0, 1.0, size=(k, h, w))
    P0 = P0 + 3e-3 * (np.arange(k, dtype=float) / max(k - 1, 1))[:, None, None]
    P0 = simplex_project(P0, axis=0)
    P0 = apply_supervision(P0, supervision)

    if config.model == FULL:
        return P0, stack, None
    return P0, None, levels


def _freeze_dumb(P, dumb, supervision):
    """Zero out dumb channels and renormalize the live ones."""
    if not dumb.any():
        return P
    live = ~dumb
    if live.sum() >= 2:
        P = P.copy()
        P[dumb] = 0.0
        P[live] = simplex_project(P[live], axis=0)
    else:
        P = P.copy()
        P[dumb] = 0.0
        P[live] = 1.0
    return apply_supervision(P, supervision)


def _run(image, config: RunConfig, supervision=None, on_iteration=None) -> RunResult:
    params = config.params
    opts = config.solver
    image = np.asarray(image, dtype=float)
    pc = config.model == PIECEWISE
    k = params.k

    if supervision is not None and supervision.patches:
        supervision.validate(image.shape[-1], image.shape[-2], k)

    P, U, m = initialize(image, config, supervision)
    dumb = np.zeros(k, dtype=bool)
    trace = RunTrace()

    def patterns_now():
        return means_to_stack(m, image.shape) if pc else U

    def breakdown(P_cur):
        if pc:
            return pc_energy(P_cur, m, image, params)
        return total_energy(P_cur, U, image, params)

    def p_energy(P_cur):
        # terms of the energy that depend on P (U or m held fixed)
        pats = patterns_now()
        return (data_energy(P_cur, pats, image, params.lam)
                + sum(mm_energy(p, params.epsilon) for p in P_cur))

    def error_fields():
        pats = patterns_now()
        return np.stack([params.lam * squared_error(pats[i], image)
                         for i in range(k)])

    def ownership_step(P_cur, anchor=None):
        # anchor is the monotonicity reference; when the sweep starts from
        # an extrapolated point, backtracking still interpolates toward the
        # last accepted iterate so the trace can never rise
        anchor = P_cur if anchor is None else anchor
        cand = solve_ownerships(P_cur, error_fields(), params.epsilon,
                                supervision, opts)
        cand = _freeze_dumb(cand, dumb, supervision)
        e_old = p_energy(anchor)
        for theta in _BACKTRACK:
            trial = cand if theta == 1.0 else anchor + theta * (cand - anchor)
            if p_energy(trial) <= e_old:
                return trial
        return anchor

    def pattern_step(P_cur):
        nonlocal U, m
        if pc:
            m, now_dumb = update_means(P_cur, image)
            dumb[:] = dumb | now_dumb
            m[dumb] = 0.0
        else:
            new_U = U.copy()
            for i in range(k):
                if dumb[i]:
                    new_U[i] = 0.0
                    continue
                sol = solve_pattern_channel(P_cur[i], image, params.alpha,
                                            params.lam, opts, x0=U[i])
                new_U[i] = sol.u
                dumb[i] = dumb[i] or sol.dumb
            U = new_U

    def extrapolate(P_cur, P_prev):
        # inertial guess for the next sweep; the damped sweep advances the
        # interface a roughly constant amount per iteration, so carrying the
        # previous displacement forward cuts the outer iteration count
        if P_prev is None or config.solver.step is None:
            return P_cur
        guess = simplex_project(P_cur + _INERTIA * (P_cur - P_prev), axis=0)
        return apply_supervision(guess, supervision)

    prev_total = breakdown(P).total
    P_prev = None
    for n in range(1, config.max_outer + 1):
        t0 = time.perf_counter()
        P_before = P
        if config.order == "p_first":
            P = ownership_step(extrapolate(P, P_prev), anchor=P)
            pattern_step(P)
        else:
            pattern_step(P)
            P = ownership_step(extrapolate(P, P_prev), anchor=P)
        P_prev = P_before
        bd = breakdown(P)
        row = TraceRow(
            iteration=n,
            energy=bd,
            max_dp=float(np.max(np.abs(P - P_before))),
            ms=(time.perf_counter() - t0) * 1e3,
        )
        trace.rows.append(row)
        if on_iteration is not None:
            on_iteration(row)
        if dumb.all():
            trace.dumb = dumb.tolist()
            raise RunAborted("all channels became dumb; nothing left to segment",
                             trace)
        drop = prev_total - bd.total
        if drop < config.energy_tol * max(abs(prev_total), 1e-12):
            trace.converged = True
            trace.converged_at = n
            prev_total = bd.total
            break
        prev_total = bd.total

    # polish: the damped ownership sweep leaves a stationarity bias
    # proportional to its pseudo-time step, so after energy convergence a
    # few extra outer iterations with shrinking steps tighten the iterate;
    # the backtracking guard keeps the trace monotone throughout
    if trace.converged and config.solver.step is not None and not dumb.all():
        for tau in _POLISH_STEPS:
            if len(trace.rows) >= config.max_outer:
                break
            opts = replace(config.solver, step=tau,
                           lin_steps=max(config.solver.lin_steps, 20),
                           lin_tol=min(config.solver.lin_tol, 1e-7))
            t0 = time.perf_counter()
            P_before = P
            P = ownership_step(P)
            pattern_step(P)
            bd = breakdown(P)
            row = TraceRow(
                iteration=len(trace.rows) + 1,
                energy=bd,
                max_dp=float(np.max(np.abs(P - P_before))),
                ms=(time.perf_counter() - t0) * 1e3,
            )
            trace.rows.append(row)
            if on_iteration is not None:
                on_iteration(row)
        opts = config.solver

    res = el_residual(P, patterns_now(), image, params, supervision)
    trace.dumb = dumb.tolist()
    trace.pattern_residual = res.pattern
    trace.ownership_residual = res.ownership
    return RunResult(ownerships=P,
                     patterns=None if pc else U,
                     means=m if pc else None,
                     trace=trace)


def run_sms(image, config: RunConfig | None = None, supervision=None,
            on_iteration=None) -> RunResult:
    """Alternating minimization for the full model (smooth pattern fields)."""
    config = config or RunConfig()
    if config.model != FULL:
        raise ValueError("run_sms drives the full model; use run_pc_sms")
    return _run(image, config, supervision, on_iteration)


def run_pc_sms(image, config: RunConfig | None = None, supervision=None,
               on_iteration=None) -> RunResult:
    """Alternating minimization for the piecewise-constant model."""
    config = config or RunConfig(model=PIECEWISE)
    if config.model != PIECEWISE:
        raise ValueError("run_pc_sms drives the piecewise-constant model")
    return _run(image, config, supervision, on_iteration)
