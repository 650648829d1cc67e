"""scikit-learn compatible wrapper around the windowed estimators.

Measurement series follow the scikit-learn layout: ``X`` has one row per
time step and one column per sensor channel, i.e. the transpose of the
``p x k`` blocks used by the functional API.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import FracSystem
from .estimators import SolverConfig, estimate_windows


class FractionalStateEstimator(TransformerMixin, BaseEstimator):
    """Artifact-robust state estimator for a known fractional-order plant.

    Parameters
    ----------
    A, C, alpha : array_like
        Plant matrices and fractional orders (see :class:`frares.FracSystem`).
    method : {"l1", "l0"}
        Convex row-sparse estimator or exact combinatorial search.
    window : int or None
        Re-estimate the initial state every ``window`` steps; ``None`` uses
        the whole series as one window.
    q_max : int
        Largest artifact channel count tried by ``method="l0"``.
    solver : dict or None
        :class:`frares.SolverConfig` overrides for ``method="l1"``.
    tol : float
        Relative residual tolerance for ``method="l0"``.

    Attributes
    ----------
    x0_ : ndarray of shape (n_states,)
        Initial state estimated on the first window.
    window_x0_ : ndarray of shape (n_windows, n_states)
    support_ : list of frozenset
        Channels flagged as carrying artifacts, per window.
    states_ : ndarray of shape (n_timesteps, n_states)
    results_ : list of (start, stop, EstimationResult)
    """

    def __init__(self, A, C, alpha, method="l1", window=None, q_max=1, solver=None, tol=1e-8):
        self.A = A
        self.C = C
        self.alpha = alpha
        self.method = method
        self.window = window
        self.q_max = q_max
        self.solver = solver
        self.tol = tol

    def _system(self):
        return FracSystem(self.A, self.C, self.alpha)

    def _run(self, X):
        system = self._system()
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        if X.shape[1] != system.n_channels:
            raise ValueError(
                f"X has {X.shape[1]} channels (columns); the sensor matrix has {system.n_channels}"
            )
        window = self.window or X.shape[0]
        config = SolverConfig.from_dict(self.solver or {})
        return estimate_windows(system, X.T, window, method=self.method, q_max=self.q_max,
                                config=config, tol=self.tol)

    def fit(self, X, y=None):
        results, states = self._run(X)
        self.results_ = results
        self.states_ = states
        self.window_x0_ = np.array([r.x0_hat for _, _, r in results])
        self.x0_ = self.window_x0_[0]
        self.support_ = [r.support_hat for _, _, r in results]
        self.n_features_in_ = self._system().n_channels
        return self

    def transform(self, X):
        """Estimated state trajectory for the series ``X``, shape ``(k, n_states)``."""
        check_is_fitted(self, "x0_")
        _, states = self._run(X)
        return states

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).states_

    def predict(self, X):
        """Artifact-free reconstruction of ``X``: ``C x_hat[m]`` per row."""
        return self.transform(X) @ self._system().C.T
