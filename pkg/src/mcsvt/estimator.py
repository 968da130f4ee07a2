"""scikit-learn style wrappers around the completion routines.

Missing entries are encoded as NaN::

    >>> imp = SoftImputeClip(lam="dense", b=0.1, a=1.0)
    >>> completed = imp.fit_transform(X_with_nans)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import engine
from .probe import usvt_baseline
from .sampling import ObservationSet, SamplingModel, marginals


def _observations(X) -> ObservationSet:
    if isinstance(X, ObservationSet):
        return X
    X = check_array(X, dtype=float, ensure_all_finite="allow-nan", ensure_min_samples=1, ensure_min_features=1)
    obs = ObservationSet.from_nan(X)
    if len(obs.mask) == 0:
        raise ValueError("X has no observed (non-NaN) entries")
    return obs


def _default_a(obs: ObservationSet, a):
    if a is not None:
        return float(a)
    top = float(np.abs(obs.values).max()) if len(obs.values) else 0.0
    return top if top > 0 else 1.0


class _CompletionMixin(TransformerMixin):
    def _check_fitted_shape(self, X):
        check_is_fitted(self, "estimate_")
        X = check_array(X, dtype=float, ensure_all_finite="allow-nan")
        if X.shape != self.estimate_.shape:
            raise ValueError(f"X has shape {X.shape}, estimator was fitted on {self.estimate_.shape}")
        return X

    def transform(self, X):
        """Return ``X`` with its NaN entries replaced by the fitted estimate."""
        X = self._check_fitted_shape(X)
        return np.where(np.isnan(X), self.estimate_, X)

    def predict(self, X):
        """Estimated values at the ``(row, col)`` pairs listed in the rows of ``X``."""
        check_is_fitted(self, "estimate_")
        idx = check_array(X, dtype=int)
        if idx.shape[1] != 2:
            raise ValueError("predict expects an (n, 2) array of (row, col) indices")
        return self.estimate_[idx[:, 0], idx[:, 1]]


class SoftImputeClip(_CompletionMixin, BaseEstimator):
    """Soft-impute with entrywise clipping and the two-part exit rule.

    Parameters
    ----------
    lam : float or {"dense", "general"}
        Regularisation level, or the rule used to derive it. ``"dense"``
        needs ``b``; ``"general"`` needs ``sigma`` and ``b``.
    a : float, optional
        Sup-norm bound on the target. Defaults to the largest absolute
        observed value.
    sigma, b : float, optional
        Noise standard deviation and bound, used by the lambda rules.
    c_star : float
        Constant of the general rule.
    sampling_model : SamplingModel, optional
        Known observation probabilities; supplies the marginal bound ``L``
        for the rules. Without it ``L`` is the largest observed row or
        column count.
    max_iters, extra_tol, stopping, fro_tol, post_clip
        Passed to :class:`mcsvt.engine.CompletionConfig`.
    warm_start : bool
        Start a refit from the previous estimate instead of zero.
    """

    def __init__(self, lam="dense", a=None, sigma=None, b=None, c_star=3.0, sampling_model=None,
                 max_iters=5000, extra_tol=0.0, stopping="paper", fro_tol=1e-6, post_clip=False,
                 warm_start=False):
        self.lam = lam
        self.a = a
        self.sigma = sigma
        self.b = b
        self.c_star = c_star
        self.sampling_model = sampling_model
        self.max_iters = max_iters
        self.extra_tol = extra_tol
        self.stopping = stopping
        self.fro_tol = fro_tol
        self.post_clip = post_clip
        self.warm_start = warm_start

    def _lambda_spec(self):
        if self.lam == "dense":
            if self.b is None:
                raise ValueError("lam='dense' requires the noise bound b")
            return engine.DenseRule(float(self.b))
        if self.lam == "general":
            if self.b is None or self.sigma is None:
                raise ValueError("lam='general' requires sigma and b")
            return engine.GeneralRule(float(self.sigma), float(self.b), float(self.c_star))
        if isinstance(self.lam, str):
            raise ValueError(f"unknown lambda rule {self.lam!r}")
        return float(self.lam)

    def fit(self, X, y=None):
        obs = _observations(X)
        config = engine.CompletionConfig(
            lam=self._lambda_spec(),
            a=_default_a(obs, self.a),
            max_iters=self.max_iters,
            extra_tol=self.extra_tol,
            post_clip=self.post_clip,
            stopping=self.stopping,
            fro_tol=self.fro_tol,
        )
        summary = None
        if self.sampling_model is not None:
            model = self.sampling_model
            if not isinstance(model, SamplingModel) or model.shape != obs.shape:
                raise ValueError("sampling_model must be a SamplingModel matching X's shape")
            summary = marginals(model)
        init = None
        if self.warm_start and hasattr(self, "estimate_") and self.estimate_.shape == obs.shape:
            init = self.estimate_
        result = engine.run(obs, config, summary, init=init)
        self.estimate_ = result.estimate
        self.lambda_ = result.lam
        self.a_ = config.a
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.trace_ = result.trace
        return self


class USVTImputer(_CompletionMixin, BaseEstimator):
    """One-step universal singular value thresholding baseline."""

    def __init__(self, a=None, eta=2.01):
        self.a = a
        self.eta = eta

    def fit(self, X, y=None):
        obs = _observations(X)
        self.a_ = _default_a(obs, self.a)
        self.estimate_ = usvt_baseline(obs, self.a_, self.eta)
        return self
