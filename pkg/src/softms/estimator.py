"""Scikit-learn style front door for the segmentation solver.

The model is transductive, like clustering estimators: ``fit`` segments the
image it is given and exposes ``labels_``, ``ownerships_`` and the trace.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .driver import FULL, PIECEWISE, RunConfig, run_pc_sms, run_sms
from .energy import ModelParams
from .solvers import SolverOptions
from .supervision import Supervision


class SoftSegmenter(BaseEstimator):
    """Probabilistic K-pattern segmentation of a single image.

    Parameters mirror the energy weights: ``lam`` is the fidelity weight,
    ``alpha`` the pattern smoothness weight and ``epsilon`` the ownership
    transition bandwidth in pixels.  ``model`` selects smooth pattern fields
    ("full") or per-pattern constants ("pc").
    """

    def __init__(self, k=2, lam=10.0, alpha=2.0, epsilon=1.5, model=FULL,
                 max_outer=100, energy_tol=1e-5, seed=0, init="quantile",
                 inner_tol=1e-6, lin_steps=8):
        self.k = k
        self.lam = lam
        self.alpha = alpha
        self.epsilon = epsilon
        self.model = model
        self.max_outer = max_outer
        self.energy_tol = energy_tol
        self.seed = seed
        self.init = init
        self.inner_tol = inner_tol
        self.lin_steps = lin_steps

    def _config(self) -> RunConfig:
        return RunConfig(
            model=self.model,
            params=ModelParams(k=self.k, lam=self.lam, alpha=self.alpha,
                               epsilon=self.epsilon),
            max_outer=self.max_outer,
            energy_tol=self.energy_tol,
            seed=self.seed,
            init=self.init,
            solver=SolverOptions(inner_tol=self.inner_tol,
                                 lin_steps=self.lin_steps),
        )

    def fit(self, X, y=None, supervision=None):
        """Segment image X ((H, W) or (3, H, W), intensities in [0, 1]).

        ``supervision`` is a Supervision object or a patch-set dict.
        """
        X = np.asarray(X, dtype=float)
        if isinstance(supervision, dict):
            supervision = Supervision.from_dict(supervision)
        run = run_sms if self.model == FULL else run_pc_sms
        result = run(X, self._config(), supervision)
        self.result_ = result
        self.ownerships_ = result.ownerships
        self.patterns_ = result.patterns
        self.means_ = result.means
        self.labels_ = result.labels
        self.trace_ = result.trace
        return self

    def _check_fitted(self):
        if not hasattr(self, "labels_"):
            raise NotFittedError("call fit() first")

    def fit_predict(self, X, y=None, supervision=None):
        return self.fit(X, y, supervision=supervision).labels_

    def predict(self, X=None):
        """Label map of the fitted image (1..K per pixel)."""
        self._check_fitted()
        if X is not None:
            return self.fit(X).labels_
        return self.labels_

    def transform(self, X=None):
        """Ownership stack of the fitted image, shape (K, H, W)."""
        self._check_fitted()
        if X is not None:
            return self.fit(X).ownerships_
        return self.ownerships_
