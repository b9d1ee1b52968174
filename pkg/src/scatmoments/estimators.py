"""Scikit-learn style wrappers around the scattering and fitting pipeline.

``ScatteringTransform`` turns a batch of series into fixed-length moment
vectors, so the multiscale features drop into ordinary sklearn pipelines.
``GenerativeModelGMM`` wraps the two-step simulated method of moments as a
fit-style estimator with the fitted parameter and goodness of fit exposed
as attributes.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .estimation import MomentCondition, gmm_two_step
from .processes import FAMILIES, ProcessSpec, simulate
from .scattering import scatter
from .signal import TimeSeries
from .wavelet import build_filter_bank

__all__ = ["ScatteringTransform", "GenerativeModelGMM"]


def _as_series_matrix(X) -> np.ndarray:
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    if X.shape[1] < 16:
        raise ValueError("series too short; need at least 16 samples per row")
    return X


def _bank_for_length(length: int, j0: int, j_max: int, m_scale, family: str):
    if m_scale is None:
        m_scale = min(j_max + 2, int(math.log2(length)))
    n_fft = 2 ** (m_scale + 2)
    return build_filter_bank(n_fft, 1, m_scale, family=family), m_scale


class ScatteringTransform(BaseEstimator, TransformerMixin):
    """Extract first- and second-order scattering moments per series.

    Each input row is treated as one realization; ``transform`` returns
    one moment vector per row (optionally log2-scaled), with the column
    layout given by :meth:`get_feature_names_out`.

    Parameters
    ----------
    j0, j_max : int
        Retained scale range, ``j0 < j1 <= j_max``.
    m_scale : int or None
        Averaging scale; default two octaves above ``j_max`` (capped by
        the series length).
    max_order : int
        1 or 2.
    log2 : bool
        Return log2 of the moments (entries <= 0 become NaN).
    family : str
        Wavelet family tag.
    """

    def __init__(self, j0=0, j_max=5, m_scale=None, max_order=2, log2=False,
                 family="meyer"):
        self.j0 = j0
        self.j_max = j_max
        self.m_scale = m_scale
        self.max_order = max_order
        self.log2 = log2
        self.family = family

    def fit(self, X, y=None):
        X = _as_series_matrix(X)
        self.n_features_in_ = X.shape[1]
        self.bank_, self.m_scale_ = _bank_for_length(
            X.shape[1], self.j0, self.j_max, self.m_scale, self.family
        )
        probe = scatter(
            TimeSeries(X[0]), self.bank_, max_order=self.max_order,
            j0=self.j0, j_max=self.j_max, keep_per_block=False,
        )
        self.moment_labels_ = tuple(probe.moment_labels())
        return self

    def transform(self, X):
        check_is_fitted(self, "bank_")
        X = _as_series_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"series length {X.shape[1]} != fitted length {self.n_features_in_}"
            )
        ts = TimeSeries(X.reshape(-1), n_blocks=X.shape[0], block_len=X.shape[1])
        sv = scatter(ts, self.bank_, max_order=self.max_order,
                     j0=self.j0, j_max=self.j_max)
        blocks = sv.per_block if sv.per_block else (sv,)
        out = np.stack([b.as_array() for b in blocks])
        if self.log2:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(out > 0, np.log2(out, where=out > 0), np.nan)
        return out

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "moment_labels_")
        return np.array(
            ["s" + "_".join(str(j) for j in lab) for lab in self.moment_labels_]
        )


class GenerativeModelGMM(BaseEstimator):
    """Fit a generative model to series by simulated scattering moments.

    ``fit`` expects one realization per row, estimates the free parameter
    of the chosen family by the two-step method, and exposes the result:

    Attributes
    ----------
    theta_ : float
        Fitted parameter value.
    chi2_red_, p_value_, dof_ : goodness of fit (p-value ``None`` when
        blocks are declared correlated or identity weighting is used).
    fit_result_ : GmmFit
        Full record (weighting matrix, trace, moment vectors).

    Parameters
    ----------
    family : str
        Process family; its free parameter is inferred (``hurst`` for
        fbm, ``alpha`` for levy_stable, ``intermittency`` for the
        multifractal families, ``intensity`` for poisson).
    bounds : (float, float)
        Search interval for the parameter.
    fixed_params : dict
        Remaining family parameters (e.g. integral scale).
    j0, j_max, m_scale, max_order : moment-vector layout.
    n_sim : int or None
        Model realizations per probe; default 16x the number of rows.
    seed : int
        Seed of the simulation substreams (common across probes).
    identity_weight : bool
        Skip covariance weighting (heavy-tail families).
    independent_rows : bool
        Declare rows independent realizations (enables the p-value).
    """

    _FREE = {
        "poisson": "intensity",
        "fbm": "hurst",
        "levy_stable": "alpha",
        "mrm_cascade": "intermittency",
        "mrm_stationary": "intermittency",
        "mrw": "intermittency",
    }

    def __init__(self, family="fbm", bounds=(0.05, 0.95), fixed_params=None,
                 j0=0, j_max=5, m_scale=None, max_order=2, n_sim=None,
                 seed=0, identity_weight=False, independent_rows=True):
        self.family = family
        self.bounds = bounds
        self.fixed_params = fixed_params
        self.j0 = j0
        self.j_max = j_max
        self.m_scale = m_scale
        self.max_order = max_order
        self.n_sim = n_sim
        self.seed = seed
        self.identity_weight = identity_weight
        self.independent_rows = independent_rows

    def fit(self, X, y=None):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        X = _as_series_matrix(X)
        if X.shape[0] < 2:
            raise ValueError("need at least 2 realizations (rows)")
        self.n_features_in_ = X.shape[1]
        bank, m_scale = _bank_for_length(
            X.shape[1], self.j0, self.j_max, self.m_scale, "meyer"
        )
        ts = TimeSeries(X.reshape(-1), n_blocks=X.shape[0], block_len=X.shape[1])
        sv = scatter(ts, bank, max_order=self.max_order, j0=self.j0,
                     j_max=self.j_max)
        free = self._FREE[self.family]
        theta = dict(self.fixed_params or {})
        theta[free] = 0.5 * (self.bounds[0] + self.bounds[1])
        template = ProcessSpec(self.family, theta, length=X.shape[1], seed=0)
        n_sim = self.n_sim if self.n_sim is not None else 16 * X.shape[0]
        mc = MomentCondition(
            data=sv, bank=bank, template=template, free_param=free,
            n_sim=n_sim, sim_seed=self.seed,
            independent_blocks=self.independent_rows,
            max_order=self.max_order,
        )
        result = gmm_two_step(mc, self.bounds,
                              identity_weight=self.identity_weight)
        self.fit_result_ = result
        self.free_param_ = free
        self.theta_ = result.theta_hat[free]
        self.chi2_red_ = result.chi2_red
        self.p_value_ = result.p_value
        self.dof_ = result.dof
        return self

    def sample(self, n_realizations=1, length=None, seed=0):
        """Simulate from the fitted model."""
        check_is_fitted(self, "theta_")
        theta = dict(self.fixed_params or {})
        theta[self.free_param_] = self.theta_
        spec = ProcessSpec(
            self.family, theta,
            length=length or self.n_features_in_,
            seed=seed, n_realizations=n_realizations,
        )
        return simulate(spec).series.blocks
