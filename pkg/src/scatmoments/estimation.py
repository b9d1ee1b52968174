"""Model fitting from scattering moments.

Implements the simulated method of moments: the gap between the data's
moment vector and a Monte-Carlo estimate of the model's moments is
minimized over the model parameter, first under identity weighting, then
re-weighted by the inverse empirical covariance of the per-block data
vectors.  The weighted objective at the optimum yields a reduced
chi-squared whose p-value is meaningful only when the per-block vectors
are independent draws.

Simulations share one seed across parameter probes (common random
numbers), so the objective is a deterministic function of the parameter
and the fit is reproducible bit for bit.

Also provides the two dedicated intermittency regressions (wavelet
moments, log-modulus covariance) and the log-linear scattering-slope
regression for the stable index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .analysis import SlopeFit, fit_log2_slope
from .processes import ProcessSpec, simulate
from .scattering import NormalizedScattering, ScatteringVector, scatter
from .signal import TimeSeries
from .wavelet import FilterBank, transform

__all__ = [
    "MomentCondition",
    "GmmFit",
    "gmm_one_step",
    "gmm_two_step",
    "empirical_weight",
    "chi2_survival",
    "wavelet_moment_regression",
    "log_covariance_regression",
    "scattering_slope_regression",
    "default_j_for_intermittency",
    "Lam2Regression",
    "AlphaRegression",
]

# Largest retained scale that minimized the fit error in our calibration
# runs, per intermittency level (higher intermittency wants fewer coarse,
# high-variance moments).
_J_BY_INTERMITTENCY = ((0.02, 7), (0.05, 6), (0.1, 5))


def default_j_for_intermittency(lam2: float) -> int:
    """Shipped default for the largest retained scale in intermittency fits."""
    best = min(_J_BY_INTERMITTENCY, key=lambda kv: abs(kv[0] - lam2))
    return best[1]


@dataclass(frozen=True)
class MomentCondition:
    """Data moments, their per-block draws, and the model to match.

    ``free_param`` names the entry of ``template.theta`` being estimated;
    the template's other entries (and length) stay fixed.  ``n_sim``
    realizations seeded by ``sim_seed`` estimate the model moments at each
    probed parameter value.  Set ``independent_blocks=False`` when the
    per-block vectors come from overlapping or adjacent windows of a
    single realization; the fit still runs but no p-value is reported.
    """

    data: ScatteringVector
    bank: FilterBank
    template: ProcessSpec
    free_param: str
    n_sim: int
    sim_seed: int = 0
    independent_blocks: bool = True
    max_order: int = 2

    def __post_init__(self):
        if not self.data.per_block:
            raise ValueError("data vector must carry per-block estimates")
        if self.free_param not in self.template.theta:
            raise ValueError(f"template has no parameter {self.free_param!r}")
        if self.n_sim < 2:
            raise ValueError("n_sim must be at least 2")
        labels = self.data.moment_labels()
        for b in self.data.per_block:
            if b.moment_labels() != labels or (b.j0, b.j_max) != (
                self.data.j0,
                self.data.j_max,
            ):
                raise ValueError("per-block vectors must share the index set")

    @property
    def n_blocks(self) -> int:
        return len(self.data.per_block)

    def block_matrix(self) -> np.ndarray:
        return np.stack([b.as_array() for b in self.data.per_block])


@dataclass(frozen=True)
class GmmFit:
    """Two-step fit result: estimates, weighting, and goodness of fit."""

    theta_hat: dict
    theta_one_step: dict
    weight_matrix: np.ndarray
    chi2_red: float
    dof: int
    p_value: float | None
    objective_trace: tuple[tuple[float, float], ...]
    moment_labels: tuple
    data_moments: np.ndarray
    model_moments: np.ndarray
    model_moment_se: np.ndarray
    n_blocks: int
    n_sim: int
    identity_weight: bool
    ridge_applied: bool
    multistart_spread: float

    def __post_init__(self):
        if self.dof <= 0:
            raise ValueError("degrees of freedom must be positive")
        w = np.asarray(self.weight_matrix)
        if w.size and not np.allclose(w, w.T, atol=1e-10 * max(1.0, np.abs(w).max())):
            raise ValueError("weight matrix must be symmetric")

    def to_json(self, path=None) -> str:
        doc = {
            "theta_hat": self.theta_hat,
            "theta_one_step": self.theta_one_step,
            "chi2_red": self.chi2_red,
            "dof": self.dof,
            "p_value": self.p_value,
            "n_blocks": self.n_blocks,
            "n_sim": self.n_sim,
            "identity_weight": self.identity_weight,
            "ridge_applied": self.ridge_applied,
            "multistart_spread": self.multistart_spread,
            "moment_labels": [list(lab) for lab in self.moment_labels],
            "data_moments": self.data_moments.tolist(),
            "model_moments": self.model_moments.tolist(),
            "model_moment_se": self.model_moment_se.tolist(),
            "weight_matrix": self.weight_matrix.tolist(),
            "objective_trace": [list(t) for t in self.objective_trace],
        }
        text = json.dumps(doc)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def chi2_survival(x: float, k: int) -> float:
    """Upper tail of the chi-squared distribution with ``k`` degrees.

    Regularized upper incomplete gamma ``Q(k/2, x/2)`` computed by the
    classic series / continued-fraction pair, accurate to ~1e-14.
    """
    if k < 1 or k != int(k):
        raise ValueError("degrees of freedom must be a positive integer")
    if x < 0 or not np.isfinite(x):
        raise ValueError("x must be finite and nonnegative")
    if x == 0.0:
        return 1.0
    a = 0.5 * k
    xx = 0.5 * x
    if xx < a + 1.0:
        return 1.0 - _gamma_p_series(a, xx)
    return _gamma_q_contfrac(a, xx)


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(1000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


class _SimulatedMoments:
    """Memoized model-moment estimator with common random numbers."""

    def __init__(self, mc: MomentCondition):
        self.mc = mc
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def __call__(self, theta: float) -> tuple[np.ndarray, np.ndarray]:
        key = float(theta)
        if key not in self._cache:
            mc = self.mc
            theta_rec = dict(mc.template.theta)
            theta_rec[mc.free_param] = key
            spec = replace(
                mc.template,
                theta=theta_rec,
                n_realizations=mc.n_sim,
                seed=mc.sim_seed,
            )
            ens = simulate(spec)
            sv = scatter(
                ens.series,
                mc.bank,
                max_order=mc.max_order,
                j0=mc.data.j0,
                j_max=mc.data.j_max,
            )
            per = np.stack([b.as_array() for b in sv.per_block])
            mean = sv.as_array()
            se = per.std(axis=0, ddof=1) / math.sqrt(mc.n_sim)
            self._cache[key] = (mean, se)
        return self._cache[key]


def _golden_minimize(fun, lo, hi, tol):
    """Golden-section refinement; assumes a minimum inside [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while (b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def _minimize_scalar(fun, bounds, rel_tol=1e-4, coarse=13, n_starts=3):
    """Coarse-grid bracketing plus multi-start golden-section refinement.

    Returns the best parameter, its objective, the evaluation trace, and
    the spread of the refined candidates (a large spread flags competing
    local minima).
    """
    lo, hi = bounds
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
        raise ValueError(f"invalid bounds ({lo}, {hi})")
    trace: list[tuple[float, float]] = []

    def tracked(t):
        v = float(fun(t))
        if not np.isfinite(v):
            raise ValueError(f"objective not finite at parameter {t}")
        trace.append((float(t), v))
        return v

    grid = np.linspace(lo, hi, coarse)
    vals = [tracked(g) for g in grid]
    order = np.argsort(vals)
    starts = []
    for idx in order:
        if len(starts) >= n_starts:
            break
        if any(abs(idx - s) <= 1 for s in starts):
            continue
        starts.append(int(idx))
    tol = rel_tol * max(abs(lo), abs(hi))
    candidates = []
    for idx in starts:
        a = grid[max(idx - 1, 0)]
        b = grid[min(idx + 1, coarse - 1)]
        candidates.append(_golden_minimize(tracked, a, b, tol))
    best_t, best_v = min(candidates, key=lambda tv: tv[1])
    near = [t for t, v in candidates if v <= best_v * (1.0 + 1e-6) + 1e-30]
    spread = max(near) - min(near) if len(near) > 1 else 0.0
    return best_t, best_v, trace, spread


def gmm_one_step(mc: MomentCondition, bounds) -> dict:
    """Identity-weighted simulated-moments estimate of the free parameter."""
    sim = _SimulatedMoments(mc)
    data_vec = mc.data.as_array()

    def objective(theta):
        model, _ = sim(theta)
        r = data_vec - model
        return float(r @ r)

    theta, _, _, _ = _minimize_scalar(objective, bounds)
    return {mc.free_param: theta}


def _weight_from_deviations(dev: np.ndarray) -> tuple[np.ndarray, bool]:
    """Invert the second-moment matrix of per-block deviations.

    Ridge regularization (1e-8 of the mean diagonal) is added when the
    matrix is ill-conditioned beyond 1e10; the flag reports the event.
    """
    n = dev.shape[0]
    cov = dev.T @ dev / n
    ridge = False
    cond = np.linalg.cond(cov)
    if not np.isfinite(cond) or cond > 1e10:
        cov = cov + 1e-8 * (np.trace(cov) / cov.shape[0]) * np.eye(cov.shape[0])
        ridge = True
    try:
        w = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance singular even after ridge regularization")
    if not np.all(np.isfinite(w)):
        raise ValueError("covariance singular even after ridge regularization")
    return 0.5 * (w + w.T), ridge


def empirical_weight(mc: MomentCondition, theta: dict) -> tuple[np.ndarray, bool]:
    """Inverse covariance of per-block data vectors around the model moments.

    Raises
    ------
    ValueError
        Fewer than 2 blocks, or a matrix singular even after the ridge
        (see :func:`_weight_from_deviations`).
    """
    if mc.n_blocks < 2:
        raise ValueError("need at least 2 per-block vectors for a covariance")
    sim = _SimulatedMoments(mc)
    model, _ = sim(theta[mc.free_param])
    dev = mc.block_matrix() - model
    return _weight_from_deviations(dev)


def gmm_two_step(
    mc: MomentCondition, bounds, identity_weight: bool = False
) -> GmmFit:
    """Two-step simulated method of moments with a chi-squared fit test.

    Step one minimizes the unweighted moment gap; step two re-minimizes
    under the inverse empirical covariance evaluated at the first-step
    estimate.  The reduced chi-squared uses the effective sample size
    ``n / (1 + n/n_sim)``, which accounts for the Monte-Carlo noise of
    the simulated model moments (immaterial once ``n_sim >> n``).

    With ``identity_weight=True`` (heavy-tailed models whose covariance
    is unreliable) the first-step estimate is kept and only the fit
    statistic uses the empirical weighting; no p-value is reported then,
    nor when blocks are declared correlated.
    """
    sim = _SimulatedMoments(mc)
    data_vec = mc.data.as_array()
    labels = tuple(mc.data.moment_labels())
    p = data_vec.size
    d = 1
    if p - d <= 0:
        raise ValueError("need more moments than parameters")

    def objective_with(weight):
        def objective(theta):
            model, _ = sim(theta)
            r = data_vec - model
            return float(r @ weight @ r)

        return objective

    eye = np.eye(p)
    t1, _, trace1, spread1 = _minimize_scalar(objective_with(eye), bounds)
    theta1 = {mc.free_param: t1}
    trace = list(trace1)
    spread = spread1

    if identity_weight:
        theta_hat = dict(theta1)
    else:
        w1, _ = empirical_weight(mc, theta1)
        t2, _, trace2, spread2 = _minimize_scalar(objective_with(w1), bounds)
        theta_hat = {mc.free_param: t2}
        trace += trace2
        spread = max(spread, spread2)

    w_hat, ridge = empirical_weight(mc, theta_hat)
    model, model_se = sim(theta_hat[mc.free_param])
    m_hat = data_vec - model
    n = mc.n_blocks
    # The simulated model moments carry their own sampling noise, so the
    # moment gap has variance scaled by (1/n + 1/n_sim); the effective
    # sample size keeps the fit statistic chi-squared at finite n_sim.
    n_eff = n / (1.0 + n / mc.n_sim)
    chi2_red = float(n_eff * (m_hat @ w_hat @ m_hat) / (p - d))
    p_value = None
    if mc.independent_blocks and not identity_weight:
        p_value = chi2_survival((p - d) * chi2_red, p - d)
    return GmmFit(
        theta_hat=theta_hat,
        theta_one_step=theta1,
        weight_matrix=w_hat,
        chi2_red=chi2_red,
        dof=p - d,
        p_value=p_value,
        objective_trace=tuple(trace),
        moment_labels=labels,
        data_moments=data_vec,
        model_moments=model,
        model_moment_se=model_se,
        n_blocks=n,
        n_sim=mc.n_sim,
        identity_weight=identity_weight,
        ridge_applied=ridge,
        multistart_spread=float(spread),
    )


@dataclass(frozen=True)
class Lam2Regression:
    """Intermittency estimate from a log-domain regression."""

    lam2: float
    fit: SlopeFit
    n_dropped: int = 0


def wavelet_moment_regression(ts: TimeSeries, bank: FilterBank, j_range) -> Lam2Regression:
    """Intermittency from the curvature of first/second wavelet moments.

    Regresses ``log2 E|W_j|^2 - 2 log2 E|W_j|`` on ``j``; the slope is the
    second-order curvature of the scaling exponents, whose negative is the
    intermittency factor.  Zero for monofractal inputs.

    Raises
    ------
    ValueError
        Fewer than 3 scales in range.
    """
    scales = sorted(j_range)
    if len(scales) < 3:
        raise ValueError("need at least 3 scales")
    co = transform(ts, bank, scales=scales)
    curve = {}
    for j in scales:
        mask = co.valid_mask(j)
        mod = np.abs(co.by_scale[j])[mask]
        m1 = float(np.mean(mod))
        m2 = float(np.mean(mod**2))
        # log2(m2) - 2*log2(m1), folded into one log for the slope fit
        curve[j] = m2 / (m1 * m1)
    fit = fit_log2_slope(curve)
    return Lam2Regression(lam2=-fit.slope, fit=fit)


def log_covariance_regression(
    ts: TimeSeries, bank: FilterBank, j: int, lags
) -> Lam2Regression:
    """Intermittency from the covariance decay of the log modulus.

    The empirical covariance of ``log |W_j(t)|`` at lag ``l`` is regressed
    against ``-ln(l)``; long-memory log-normal cascades give a line of
    slope equal to the intermittency factor.  Samples where the modulus is
    exactly zero are dropped and counted.

    Raises
    ------
    ValueError
        Fewer than 3 usable lags, or lags not positive.
    """
    lags = sorted(set(int(l) for l in lags))
    if len(lags) < 3:
        raise ValueError("need at least 3 lags")
    if lags[0] < 1:
        raise ValueError("lags must be positive")
    co = transform(ts, bank, scales=[j])
    mod = np.abs(co.by_scale[j]).reshape(ts.n_blocks, ts.block_len)
    margin = min(2**j, ts.block_len // 2 - 1)
    mod = mod[:, margin : ts.block_len - margin]
    dropped = int(np.sum(mod == 0.0))
    cov_by_lag = {}
    logs = []
    for row in mod:
        keep = row > 0.0
        logs.append((np.log(row, where=keep, out=np.full(row.shape, np.nan)), keep))
    for lag in lags:
        num = 0.0
        cnt = 0
        for lg, keep in logs:
            if lg.size <= lag:
                continue
            a, b = lg[:-lag], lg[lag:]
            ok = keep[:-lag] & keep[lag:]
            if ok.sum() < 2:
                continue
            aa, bb = a[ok], b[ok]
            num += float(np.sum((aa - aa.mean()) * (bb - bb.mean())))
            cnt += int(ok.sum())
        if cnt >= 2:
            cov_by_lag[lag] = num / cnt
    if len(cov_by_lag) < 3:
        raise ValueError("fewer than 3 lags with usable samples")
    x = np.array([-math.log(l) for l in sorted(cov_by_lag)])
    y = np.array([cov_by_lag[l] for l in sorted(cov_by_lag)])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = float(np.sqrt(np.sum(resid**2) / max(len(x) - 2, 1) / sxx))
    fit = SlopeFit(
        slope=float(slope),
        intercept=float(intercept),
        stderr=stderr,
        range=(min(cov_by_lag), max(cov_by_lag)),
    )
    return Lam2Regression(lam2=float(slope), fit=fit, n_dropped=dropped)


@dataclass(frozen=True)
class AlphaRegression:
    """Stable-index estimate from joint log-linear scattering slopes."""

    alpha: float
    order1_slope: float
    order2_slope: float
    n_points: int


def scattering_slope_regression(
    ns: NormalizedScattering, delta: int = 3
) -> AlphaRegression:
    """Joint log-linear regression of both scattering orders for the index.

    First-order moments decay like ``2**(j/alpha)`` and second-order
    tails like ``2**(l*(1/alpha - 1))`` for gaps ``l >= delta``; a joint
    least squares ties both slopes to one index estimate.

    Raises
    ------
    ValueError
        No second-order entries survive the gap filter.
    """
    rows = []
    rhs = []
    for j, v in sorted(ns.order1_norm.items()):
        if v > 0:
            rows.append([j, 1.0, 0.0])
            rhs.append(math.log2(v))
    o2 = 0
    for (j1, j2), v in sorted(ns.order2_norm.items()):
        l = j2 - j1
        if l >= delta and v > 0:
            rows.append([l, 0.0, 1.0])
            rhs.append(math.log2(v) + l)
            o2 += 1
    if o2 == 0:
        raise ValueError(f"no second-order entries with gap >= {delta}")
    a = np.asarray(rows)
    b = np.asarray(rhs)
    coef, *_ = np.linalg.lstsq(a, b, rcond=None)
    inv_alpha = float(coef[0])
    o1_pts = {j: v for j, v in ns.order1_norm.items() if v > 0}
    o1_slope = fit_log2_slope(o1_pts).slope if len(o1_pts) >= 3 else inv_alpha
    tail = {}
    for (j1, j2), v in ns.order2_norm.items():
        l = j2 - j1
        if l >= delta and v > 0:
            tail.setdefault(l, []).append(v)
    tail_curve = {l: float(np.median(vs)) for l, vs in tail.items()}
    o2_slope = fit_log2_slope(tail_curve).slope if len(tail_curve) >= 3 else inv_alpha - 1.0
    return AlphaRegression(
        alpha=1.0 / inv_alpha,
        order1_slope=float(o1_slope),
        order2_slope=float(o2_slope),
        n_points=len(rhs),
    )
