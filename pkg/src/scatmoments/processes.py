"""Seedable simulators for the supported process families.

Families
--------
``poisson``
    Homogeneous counting path with exponential inter-arrival times;
    parameter ``intensity`` (events per sample).
``fbm``
    Fractional Brownian motion via exact circulant embedding of the
    fractional Gaussian noise autocovariance; parameter ``hurst``.
``levy_stable``
    Symmetric alpha-stable walk, increments drawn with the
    Chambers-Mallows-Stuck transform; parameter ``alpha`` in (1, 2].
``mrm_cascade``
    Grid-bound log-normal multiplicative cascade density on dyadic cells
    of an integral scale ``2**integral_scale_log2``; parameter
    ``intermittency`` (the log-variance factor).
``mrm_stationary``
    Stationary log-normal measure ``exp(w(t))`` with log-correlated
    Gaussian ``w``; same parameters as the cascade.
``mrw``
    Random walk whose squared increments are modulated by a stationary
    log-normal measure (a stochastic-volatility model).

Every realization is generated from its own counter-based substream keyed
by ``(seed, realization index)``, so ensembles are reproducible bit for
bit and realizations may be generated in any order or in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .signal import TimeSeries

__all__ = ["ProcessSpec", "SimulatedEnsemble", "simulate", "zeta", "FAMILIES"]

FAMILIES = ("poisson", "fbm", "levy_stable", "mrm_cascade", "mrm_stationary", "mrw")

_THETA_KEYS = {
    "poisson": ("intensity",),
    "fbm": ("hurst",),
    "levy_stable": ("alpha",),
    "mrm_cascade": ("intermittency", "integral_scale_log2"),
    "mrm_stationary": ("intermittency", "integral_scale_log2"),
    "mrw": ("intermittency", "integral_scale_log2"),
}


@dataclass(frozen=True)
class ProcessSpec:
    """Descriptor of a parametric generative model.

    ``theta`` holds the family parameters by name (see module docstring);
    ``length`` is samples per realization.
    """

    family: str
    theta: dict
    length: int
    seed: int = 0
    n_realizations: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown process family {self.family!r}")
        missing = set(_THETA_KEYS[self.family]) - set(self.theta)
        if missing:
            raise ValueError(f"{self.family}: missing parameters {sorted(missing)}")
        if self.length < 2:
            raise ValueError("length must be at least 2")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be positive")
        th = self.theta
        if self.family == "poisson" and not th["intensity"] > 0:
            raise ValueError("intensity must be positive")
        if self.family == "fbm" and not 0 < th["hurst"] < 1:
            raise ValueError("hurst must lie in (0, 1)")
        if self.family == "levy_stable" and not 1 < th["alpha"] <= 2:
            raise ValueError("alpha must lie in (1, 2]")
        if self.family in ("mrm_cascade", "mrm_stationary", "mrw"):
            lam2 = th["intermittency"]
            if not 0 < lam2 < 1:
                raise ValueError(
                    "intermittency must lie in (0, 1) so second moments scale"
                )
            L = th["integral_scale_log2"]
            if L != int(L) or L < 1:
                raise ValueError("integral_scale_log2 must be a positive integer")


@dataclass(frozen=True)
class SimulatedEnsemble:
    """Simulated realizations, concatenated block-wise, plus provenance."""

    series: TimeSeries
    spec: ProcessSpec
    rng_trace: tuple[str, ...]


def _substream(seed: int, k: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(k,))
    return np.random.Generator(np.random.Philox(ss))


def simulate(spec: ProcessSpec) -> SimulatedEnsemble:
    """Draw ``spec.n_realizations`` independent paths of the requested family."""
    gen = _GENERATORS[spec.family]
    n, R = spec.length, spec.n_realizations
    out = np.empty((R, n))
    trace = []
    for k in range(R):
        rng = _substream(spec.seed, k)
        out[k] = gen(spec.theta, n, rng)
        trace.append(f"philox[{spec.seed}:{k}]")
    ts = TimeSeries(out.reshape(-1), n_blocks=R, block_len=n)
    return SimulatedEnsemble(series=ts, spec=spec, rng_trace=tuple(trace))


def zeta(family: str, theta: dict, q: float) -> float:
    """Closed-form scaling exponent of order-``q`` wavelet moments.

    Linear for the self-similar families, concave for the log-normal
    measures.  Raises for moments that do not exist (stable families with
    ``q >= alpha``) and for families without a defined exponent.
    """
    if not np.isfinite(q):
        raise ValueError("q must be finite")
    if family == "fbm":
        return q * theta["hurst"]
    if family == "levy_stable":
        alpha = theta["alpha"]
        if q >= alpha and alpha < 2:
            raise ValueError(f"moment of order {q} diverges for alpha={alpha}")
        return q / alpha
    if family in ("mrm_cascade", "mrm_stationary"):
        lam2 = theta["intermittency"]
        return (1.0 + lam2 / 2.0) * q - (lam2 / 2.0) * q**2
    if family == "mrw":
        lam2 = theta["intermittency"]
        # Conditioning on the volatility measure reduces order q to
        # measure order q/2.
        return (1.0 + lam2 / 2.0) * (q / 2.0) - (lam2 / 2.0) * (q / 2.0) ** 2
    raise ValueError(f"no scaling exponent defined for family {family!r}")


# ---------------------------------------------------------------------------
# family generators: theta, length, rng -> 1-D path
# ---------------------------------------------------------------------------


def _gen_poisson(theta, n, rng):
    lam = theta["intensity"]
    gaps = []
    total = 0.0
    # Draw in chunks until the arrival times exceed the window.
    chunk = max(64, int(1.5 * lam * n) + 32)
    while total <= n:
        g = rng.exponential(1.0 / lam, size=chunk)
        gaps.append(g)
        total += g.sum()
    arrivals = np.cumsum(np.concatenate(gaps))
    arrivals = arrivals[arrivals < n]
    path = np.zeros(n)
    np.add.at(path, np.ceil(arrivals).astype(int).clip(0, n - 1), 1.0)
    return np.cumsum(path)


@lru_cache(maxsize=64)
def _fgn_embedding(n, hurst):
    """Eigenvalues of the circulant embedding of the fGn autocovariance."""
    k = np.arange(n + 1, dtype=float)
    gamma = 0.5 * (
        np.abs(k + 1) ** (2 * hurst)
        + np.abs(k - 1) ** (2 * hurst)
        - 2.0 * np.abs(k) ** (2 * hurst)
    )
    c = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(c).real
    eig.setflags(write=False)
    return eig


def _gen_fbm(theta, n, rng):
    hurst = theta["hurst"]
    m = n
    for _ in range(3):
        eig = _fgn_embedding(m, hurst)
        if eig.min() > -1e-9 * eig.max():
            break
        m *= 2
    else:
        raise ValueError("circulant embedding not nonnegative-definite")
    eig = np.clip(eig, 0.0, None)
    two_m = eig.size
    # Real part of the spectrally colored complex draw has covariance
    # exactly equal to the embedded sequence.
    z = rng.normal(size=two_m) + 1j * rng.normal(size=two_m)
    coeff = np.fft.fft(np.sqrt(eig / two_m) * z)
    fgn = coeff.real[:n]
    return np.cumsum(fgn)


def _gen_levy(theta, n, rng):
    alpha = theta["alpha"]
    v = rng.uniform(-np.pi / 2.0, np.pi / 2.0, size=n)
    w = rng.exponential(1.0, size=n)
    if alpha == 2.0:
        incr = 2.0 * np.sin(v) * np.sqrt(w)
    else:
        incr = (
            np.sin(alpha * v)
            / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
        )
    return np.cumsum(incr)


def _cascade_cell(lam2, levels, rng):
    """One log-normal cascade density over ``2**levels`` unit cells."""
    s = math.sqrt(lam2 * math.log(2.0))
    m = -0.5 * lam2 * math.log(2.0)
    dens = np.ones(1)
    for lev in range(1, levels + 1):
        weights = np.exp(m + s * rng.normal(size=2**lev))
        dens = np.repeat(dens, 2) * weights
    return dens


def _gen_mrm_cascade(theta, n, rng):
    lam2 = theta["intermittency"]
    L = int(theta["integral_scale_log2"])
    cell = 2**L
    n_cells = -(-n // cell)
    parts = [_cascade_cell(lam2, L, rng) for _ in range(n_cells)]
    return np.concatenate(parts)[:n]


@lru_cache(maxsize=64)
def _log_field_embedding(lam2, L, n):
    """Circulant eigenvalues for the log-correlated covariance, padded
    until the embedding is nonnegative-definite."""
    tau = np.arange(n + 1, dtype=float)
    cov = lam2 * np.clip(np.log(2.0**L / (tau + 1.0)), 0.0, None)
    m = n
    for _ in range(3):
        base = np.concatenate([cov, np.zeros(m - n)]) if m > n else cov
        c = np.concatenate([base, base[-2:0:-1]])
        eig = np.fft.fft(c).real
        if eig.min() > -1e-9 * eig.max():
            eig = np.clip(eig, 0.0, None)
            eig.setflags(write=False)
            return eig
        m *= 2
    raise ValueError("circulant embedding not nonnegative-definite")


def _log_correlated_field(lam2, L, n, rng):
    """Stationary Gaussian with covariance ``lam2 * log+(2^L / (tau + 1))``."""
    eig = _log_field_embedding(float(lam2), int(L), int(n))
    two_m = eig.size
    z = rng.normal(size=two_m) + 1j * rng.normal(size=two_m)
    coeff = np.fft.fft(np.sqrt(eig / two_m) * z)
    return coeff.real[:n]


def _gen_mrm_stationary(theta, n, rng):
    lam2 = theta["intermittency"]
    L = int(theta["integral_scale_log2"])
    w = _log_correlated_field(lam2, L, n, rng)
    var = lam2 * math.log(2.0**L)
    return np.exp(w - 0.5 * var)


def _gen_mrw(theta, n, rng):
    dm = _gen_mrm_stationary(theta, n, rng)
    eps = rng.normal(size=n)
    return np.cumsum(np.sqrt(dm) * eps)


_GENERATORS = {
    "poisson": _gen_poisson,
    "fbm": _gen_fbm,
    "levy_stable": _gen_levy,
    "mrm_cascade": _gen_mrm_cascade,
    "mrm_stationary": _gen_mrm_stationary,
    "mrw": _gen_mrw,
}
