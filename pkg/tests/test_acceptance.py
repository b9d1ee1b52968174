"""End-to-end acceptance criteria.

Each test prints one PASS line when its criterion holds; tolerances are
fixed here, not tuned at runtime.  Heavy statistical calibrations are
marked ``slow``.
"""

import numpy as np
import pytest
import scipy.stats

from scatmoments import (
    MomentCondition,
    ProcessSpec,
    TimeSeries,
    build_filter_bank,
    error_bound,
    fit_log2_slope,
    gmm_two_step,
    log_covariance_regression,
    normalize,
    scatter,
    scattering_slope_regression,
    simulate,
    transform,
    verify_phi,
    wavelet_moment_regression,
)
from scatmoments.estimation import _SimulatedMoments, _minimize_scalar
from scatmoments.wavelet import _psi_hat


def _report(num, text):
    print(f"\nACCEPTANCE {num:>2}: PASS - {text}")


def _slope(curve, lo, hi):
    return fit_log2_slope(curve, (lo, hi)).slope


# -- 1 ----------------------------------------------------------------------


def test_01_filter_bank_certificates():
    bank = build_filter_bank(2**14, 1, 10)
    assert bank.lp_defect < 0.05
    phi = verify_phi(bank)
    assert phi.ok and phi.worst_margin > 0
    assert bank.vanishing_defect < 1e-6
    assert bank.analyticity_ratio < 0.05
    _report(1, f"lp_defect={bank.lp_defect:.2e}, phi margin={phi.worst_margin:.3f}, "
               f"vanishing={bank.vanishing_defect:.2e}, "
               f"analyticity={bank.analyticity_ratio:.2e}")


# -- 2 ----------------------------------------------------------------------


def test_02_transform_matches_direct_convolution():
    bank = build_filter_bank(2**10, 1, 6)
    rng = np.random.default_rng(12)
    x = rng.normal(size=256)
    co = transform(TimeSeries(x), bank, scales=[2, 3, 4], detrend=False)
    worst = 0.0
    for j in (2, 3, 4):
        kern = np.fft.ifft(_psi_hat("meyer", 256, j))
        direct = np.array(
            [np.sum(x * kern[(t - np.arange(256)) % 256]) for t in range(256)]
        )
        worst = max(worst, float(np.max(np.abs(co.by_scale[j] - direct))))
    assert worst < 1e-10
    _report(2, f"max |fft - direct| = {worst:.2e}")


# -- 3, 4 ---------------------------------------------------------------------

HS = (0.2, 0.4, 0.6, 0.8)


@pytest.fixture(scope="module")
def fbm_vectors():
    bank = build_filter_bank(2**15, 1, 13)
    out = {}
    for hurst in HS:
        ens = simulate(ProcessSpec("fbm", {"hurst": hurst}, 2**20, seed=1))
        out[hurst] = normalize(
            scatter(ens.series, bank, max_order=2, j0=1, j_max=12,
                    j1_values=[2, 3, 4])
        )
    return out


def test_03_fbm_first_order_slopes(fbm_vectors):
    slopes = {}
    for hurst, ns in fbm_vectors.items():
        slopes[hurst] = _slope(ns.order1_norm, 4, 11)
        assert slopes[hurst] == pytest.approx(hurst, abs=0.03), f"H={hurst}"
    _report(3, "first-order slopes " +
            ", ".join(f"H={h}: {s:+.3f}" for h, s in slopes.items()))


def test_04_fbm_second_order_universal_tail(fbm_vectors):
    tail_slopes = {}
    for hurst, ns in fbm_vectors.items():
        per_j1 = []
        for j1 in (2, 3):
            tail = {l: ns.order2_norm[(j1, j1 + l)] for l in range(1, 10)
                    if (j1, j1 + l) in ns.order2_norm}
            per_j1.append(_slope(tail, 4, 8))
        tail_slopes[hurst] = float(np.median(per_j1))
        assert tail_slopes[hurst] == pytest.approx(-0.5, abs=0.05), f"H={hurst}"
    assert max(tail_slopes.values()) - min(tail_slopes.values()) <= 0.1
    # Stationarity across starting scales at the Brownian point: curves
    # for different j1 coincide gap by gap.
    ns = fbm_vectors[0.6]
    for l in range(1, 6):
        vals = [np.log2(ns.order2_norm[(j1, j1 + l)]) for j1 in (2, 3, 4)]
        assert max(vals) - np.median(vals) < 0.15
        assert np.median(vals) - min(vals) < 0.15
    _report(4, "tail slopes " +
            ", ".join(f"H={h}: {s:+.3f}" for h, s in tail_slopes.items()) +
            f"; spread {max(tail_slopes.values()) - min(tail_slopes.values()):.3f}")


# -- 5 ----------------------------------------------------------------------


def test_05_poisson_two_regimes():
    lam = 1e-4
    bank = build_filter_bank(2**21, 1, 19)
    ens = simulate(ProcessSpec("poisson", {"intensity": lam}, 2**22, seed=2))
    sv = scatter(ens.series, bank, max_order=2, j0=3, j_max=18,
                 j1_values=[4, 5, 6])
    ns = normalize(sv)
    # Fine scales: one jump per wavelet support gives the closed-form level
    # lam * 2^j * L1-norm of the wavelet antiderivative.
    n_ref = 2**14
    ratios = {}
    for j in (4, 5, 6):
        psi = np.roll(np.fft.ifft(_psi_hat("meyer", n_ref, j)), n_ref // 2)
        psibar_l1 = np.sum(np.abs(np.cumsum(psi)))
        ratios[j] = sv.order1[j] / (lam * psibar_l1)
        assert 0.85 <= ratios[j] <= 1.15, f"j={j}: {ratios[j]}"
    coarse = _slope(sv.order1, 14, 18)
    assert coarse == pytest.approx(0.5, abs=0.05)
    # Fine-regime collapse: distinct starting scales trace one curve of the
    # gap.  Checked an octave below the stated boundary, where the
    # theorem's own O(lam * 2^j2) correction stays subdominant.
    spreads = {}
    for l in range(1, 5):
        vals = [np.log2(ns.order2_norm[(j1, j1 + l)]) for j1 in (4, 5, 6)]
        spreads[l] = max(vals) - min(vals)
        assert spreads[l] < 0.3, f"l={l}"
    # Coarse regime: Gaussian-like decay of the second order.
    tail = {l: ns.order2_norm[(4, 4 + l)] for l in range(1, 15)
            if (4, 4 + l) in ns.order2_norm}
    coarse2 = _slope(tail, 10, 14)
    assert coarse2 == pytest.approx(-0.5, abs=0.07)
    _report(5, f"fine ratios {ratios[4]:.2f}/{ratios[5]:.2f}/{ratios[6]:.2f}, "
               f"coarse slope {coarse:+.3f}, max collapse spread "
               f"{max(spreads.values()):.2f}, coarse order-2 {coarse2:+.3f}")


# -- 6 ----------------------------------------------------------------------


def test_06_levy_slopes():
    bank = build_filter_bank(2**17, 1, 15)
    results = {}
    for alpha in (1.2, 1.5):
        ens = simulate(ProcessSpec("levy_stable", {"alpha": alpha}, 2**20,
                                   seed=11, n_realizations=8))
        ns = normalize(scatter(ens.series, bank, max_order=2, j0=1, j_max=14,
                               j1_values=[2, 3]))
        o1 = _slope(ns.order1_norm, 2, 9)
        assert o1 == pytest.approx(1.0 / alpha, abs=0.03), f"alpha={alpha}"
        per_j1 = []
        for j1 in (2, 3):
            tail = {l: ns.order2_norm[(j1, j1 + l)] for l in range(1, 13)
                    if (j1, j1 + l) in ns.order2_norm}
            per_j1.append(_slope(tail, 6, 10))
        o2 = float(np.median(per_j1))
        assert o2 == pytest.approx(1.0 / alpha - 1.0, abs=0.07), f"alpha={alpha}"
        results[alpha] = (o1, o2)
    _report(6, ", ".join(
        f"alpha={a}: o1 {v[0]:+.3f} (exp {1/a:+.3f}), o2 {v[1]:+.3f} "
        f"(exp {1/a-1:+.3f})" for a, v in results.items()))


# -- 7 ----------------------------------------------------------------------


def test_07_mrm_scaling():
    L = 13
    bank = build_filter_bank(2**16, 1, 14)
    ens = simulate(ProcessSpec(
        "mrm_cascade", {"intermittency": 0.04, "integral_scale_log2": L},
        2**20, seed=5))
    sv = scatter(ens.series, bank, max_order=2, j0=1, j_max=12,
                 j1_values=[2, 3])
    # First order flat below the integral scale.  The reference sits inside
    # the scaling regime; the finest octaves carry the discrete cutoff
    # transient the retained range is meant to exclude.
    ns = normalize(sv, ref_j=4)
    flat = {j: abs(np.log2(ns.order1_norm[j])) for j in range(4, L)}
    assert max(flat.values()) < 0.1
    # Second order flattens to a constant below the integral scale.
    tail = {l: ns.order2_norm[(2, 2 + l)] for l in range(1, 11)}
    plateau_slope = _slope(tail, 5, 9)
    assert abs(plateau_slope) < 0.15
    # Wavelet moments of the integrated measure give zeta(2) = 2 - lam2.
    path = TimeSeries(np.cumsum(ens.series.samples))
    co = transform(path, bank, scales=range(4, 11))
    m2 = {j: float(np.mean(np.abs(co.by_scale[j])[co.valid_mask(j)] ** 2))
          for j in range(4, 11)}
    zeta2 = _slope(m2, 4, 10)
    assert zeta2 == pytest.approx(2 - 0.04, abs=0.05)
    # The limiting constant grows linearly with the intermittency amplitude;
    # the ratio is wavelet-specific (about 0.79 for this bank) and must be
    # stable across amplitudes.
    ratios = []
    for lam in (0.2, 0.26, 0.32):
        e2 = simulate(ProcessSpec(
            "mrm_cascade",
            {"intermittency": lam * lam, "integral_scale_log2": L},
            2**20, seed=5))
        n2 = normalize(scatter(e2.series, bank, max_order=2, j0=1, j_max=12,
                               j1_values=[2, 3]))
        vals = [n2.order2_norm[(j1, j1 + l)] for j1 in (2, 3)
                for l in (6, 7, 8, 9) if j1 + l < 12]
        ratios.append(np.mean(vals) / lam)
    assert max(ratios) / min(ratios) < 1.15
    assert 0.82 * 0.75 < np.mean(ratios) < 0.82 * 1.25
    _report(7, f"flatness {max(flat.values()):.3f}, plateau slope "
               f"{plateau_slope:+.3f}, zeta(2)={zeta2:.3f}, K/lam="
               f"{np.mean(ratios):.3f} (spread {max(ratios)/min(ratios)-1:.1%})")


# -- 8 ----------------------------------------------------------------------


def test_08_intermittency_estimators_reference_row():
    # Reference configuration: 48 realizations of 2048 samples (about 1e5
    # points), integral scale 2^10, moments up to scale 5.
    lam2 = 0.1
    theta = {"intermittency": lam2, "integral_scale_log2": 10}
    bank = build_filter_bank(2**13, 1, 9)
    ens = simulate(ProcessSpec("mrm_cascade", theta, 2048, seed=1,
                               n_realizations=48))
    sv = scatter(ens.series, bank, max_order=2, j0=0, j_max=5)
    tmpl = ProcessSpec("mrm_cascade", dict(theta), length=2048, seed=0)
    mc = MomentCondition(data=sv, bank=bank, template=tmpl,
                         free_param="intermittency", n_sim=768, sim_seed=7)
    fit = gmm_two_step(mc, (0.02, 0.3))
    gmm_err = abs(fit.theta_hat["intermittency"] - lam2)
    assert gmm_err <= 6e-3
    wav = wavelet_moment_regression(ens.series, bank, range(1, 9))
    assert abs(wav.lam2 - lam2) <= 3e-2
    # Lags well inside (2^j, integral scale): the log-linear law rolls off
    # approaching the integral scale and carries an O(j/l) correction at
    # small lags.
    lags = [int(v) for v in np.unique(np.geomspace(4, 256, 18).astype(int))]
    lc = log_covariance_regression(ens.series, bank, 1, lags)
    assert abs(lc.lam2 - lam2) <= 9e-3
    _report(8, f"scattering {fit.theta_hat['intermittency']:.4f}, wavelet "
               f"{wav.lam2:.4f}, log-cov {lc.lam2:.4f} (truth {lam2})")


# -- 9 ----------------------------------------------------------------------


def test_09_stable_index_reference_row():
    alpha = 1.5
    bank = build_filter_bank(2**13, 1, 9)
    ens = simulate(ProcessSpec("levy_stable", {"alpha": alpha}, 2**15, seed=3,
                               n_realizations=32))
    sv = scatter(ens.series, bank, max_order=2, j0=0, j_max=5)
    tmpl = ProcessSpec("levy_stable", {"alpha": alpha}, length=2**14, seed=0)
    mc = MomentCondition(data=sv, bank=bank, template=tmpl, free_param="alpha",
                         n_sim=128, sim_seed=7)
    fit = gmm_two_step(mc, (1.1, 1.95), identity_weight=True)
    assert fit.theta_hat["alpha"] == pytest.approx(alpha, abs=0.06)
    assert fit.p_value is None
    bank11 = build_filter_bank(2**14, 1, 11)
    single = simulate(ProcessSpec("levy_stable", {"alpha": alpha}, 2**20, seed=3))
    sv2 = scatter(single.series, bank11, max_order=2, j0=0, j_max=10)
    reg = scattering_slope_regression(normalize(sv2), delta=3)
    assert reg.alpha == pytest.approx(alpha, abs=0.12)
    _report(9, f"GMM alpha {fit.theta_hat['alpha']:.4f}, regression "
               f"{reg.alpha:.4f} (truth {alpha})")


# -- 10 ---------------------------------------------------------------------


@pytest.mark.slow
def test_10_jtest_calibration():
    # Under the true model with independent realizations the reduced
    # fit statistic is chi-squared: mean near 1, distribution accepted by
    # a KS test at the 1% level over 100 repetitions.
    lam2, L, B, n_blocks = 0.05, 8, 512, 50
    bank = build_filter_bank(2**9, 1, 7)
    tmpl = ProcessSpec("mrm_cascade",
                       {"intermittency": lam2, "integral_scale_log2": L},
                       length=B, seed=0)
    chis = []
    for rep in range(100):
        ens = simulate(ProcessSpec(
            "mrm_cascade", {"intermittency": lam2, "integral_scale_log2": L},
            B, seed=rep, n_realizations=n_blocks))
        sv = scatter(ens.series, bank, max_order=2, j0=0, j_max=4)
        mc = MomentCondition(data=sv, bank=bank, template=tmpl,
                             free_param="intermittency", n_sim=400,
                             sim_seed=10_000 + rep)
        chis.append(gmm_two_step(mc, (0.01, 0.2)).chi2_red)
    chis = np.array(chis)
    dof = 9
    assert abs(chis.mean() - 1.0) <= 0.35
    ks = scipy.stats.kstest(chis * dof, "chi2", args=(dof,))
    assert ks.pvalue > 0.01
    _report(10, f"mean chi2_red {chis.mean():.3f}, std {chis.std():.3f}, "
                f"KS p={ks.pvalue:.3f} over 100 repetitions")


# -- 11 ---------------------------------------------------------------------


@pytest.mark.slow
def test_11_estimator_error_bound():
    # The plug-in bound must dominate the observed estimator variance in at
    # least 95% of (family, scale) cells.
    bank = build_filter_bank(2**14, 1, 12)
    fams = [
        ("poisson", {"intensity": 1e-3}),
        ("fbm", {"hurst": 0.5}),
        ("fbm", {"hurst": 0.8}),
        ("levy_stable", {"alpha": 1.5}),
        ("mrm_cascade", {"intermittency": 0.04, "integral_scale_log2": 10}),
        ("mrm_stationary", {"intermittency": 0.04, "integral_scale_log2": 10}),
        ("mrw", {"intermittency": 0.04, "integral_scale_log2": 10}),
    ]
    reps = 50
    j_cells = range(2, 9)
    total, ok = 0, 0
    for fam, theta in fams:
        estimates = {j: [] for j in j_cells}
        bounds = {j: [] for j in j_cells}
        for r in range(reps):
            ens = simulate(ProcessSpec(fam, theta, 2**14, seed=1000 + r))
            sv = scatter(ens.series, bank, max_order=2, j0=1, j_max=11)
            for j in j_cells:
                estimates[j].append(sv.order1[j])
                bounds[j].append(error_bound(ens.series, bank, j, sv))
        for j in j_cells:
            total += 1
            if np.var(estimates[j]) <= np.mean(bounds[j]):
                ok += 1
    assert ok / total >= 0.95, f"{ok}/{total}"
    _report(11, f"bound dominates observed variance in {ok}/{total} cells")


# -- 12 ---------------------------------------------------------------------


def test_12_invariance_suite(tmp_path):
    # Multiplicative invariance of normalized moments.
    bank = build_filter_bank(2**13, 1, 9)
    rng = np.random.default_rng(0)
    x = np.cumsum(rng.normal(size=2**14))
    na = normalize(scatter(TimeSeries(x), bank, j0=0, j_max=5))
    nb = normalize(scatter(TimeSeries(1000.0 * x), bank, j0=0, j_max=5))
    for key in na.order2_norm:
        assert nb.order2_norm[key] == pytest.approx(na.order2_norm[key],
                                                    rel=1e-12)
    # Positive rescaling of the weight matrix cannot move the estimate.
    theta = {"intermittency": 0.08, "integral_scale_log2": 8}
    ens = simulate(ProcessSpec("mrm_cascade", theta, 1024, seed=3,
                               n_realizations=16))
    sv = scatter(ens.series, bank, j0=0, j_max=4)
    tmpl = ProcessSpec("mrm_cascade", dict(theta), length=1024, seed=0)
    mc = MomentCondition(data=sv, bank=bank, template=tmpl,
                         free_param="intermittency", n_sim=32, sim_seed=4)
    sim = _SimulatedMoments(mc)
    data_vec = mc.data.as_array()
    from scatmoments.estimation import empirical_weight

    w, _ = empirical_weight(mc, {"intermittency": 0.08})

    def obj_for(weight):
        def obj(t):
            r = data_vec - sim(t)[0]
            return float(r @ weight @ r)
        return obj

    t1, *_ = _minimize_scalar(obj_for(w), (0.02, 0.2))
    t2, *_ = _minimize_scalar(obj_for(9.0 * w), (0.02, 0.2))
    assert t1 == t2
    # Command determinism under fixed seeds.
    from scatmoments.cli import main

    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.csv"
        main(["simulate", "--family", "mrw", "--intermittency", "0.05",
              "--integral-scale-log2", "7", "--length", "4096", "--seed",
              "13", "--out", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    _report(12, "scaling, weighting, and command-determinism invariances hold")


# -- 13 ---------------------------------------------------------------------


@pytest.mark.slow
def test_13_model_selection_echo():
    # Synthetic stand-in for the real-data workflow: on volatility-modulated
    # walk data, the matching family must fit best (lowest chi2_red) and
    # recover its intermittency; and a glued two-regime fixture must fail
    # the self-similarity check (covered in the analysis tests).
    lam2, L, B, n_blocks = 0.05, 9, 2048, 64
    theta = {"intermittency": lam2, "integral_scale_log2": L}
    bank = build_filter_bank(2**13, 1, 9)
    ens = simulate(ProcessSpec("mrw", theta, B, seed=17,
                               n_realizations=n_blocks))
    sv = scatter(ens.series, bank, max_order=2, j0=0, j_max=5)
    chi = {}
    theta_hat = {}
    candidates = {
        "fbm": (ProcessSpec("fbm", {"hurst": 0.5}, length=B, seed=0),
                "hurst", (0.2, 0.9), False),
        "levy_stable": (ProcessSpec("levy_stable", {"alpha": 1.5}, length=B,
                                    seed=0), "alpha", (1.1, 2.0), True),
        "mrw": (ProcessSpec("mrw", dict(theta), length=B, seed=0),
                "intermittency", (0.01, 0.3), False),
    }
    for fam, (tmpl, free, bounds, identity) in candidates.items():
        mc = MomentCondition(data=sv, bank=bank, template=tmpl,
                             free_param=free, n_sim=512, sim_seed=23)
        fit = gmm_two_step(mc, bounds, identity_weight=identity)
        chi[fam] = fit.chi2_red
        theta_hat[fam] = fit.theta_hat[free]
    assert chi["mrw"] < chi["fbm"] and chi["mrw"] < chi["levy_stable"]
    assert theta_hat["mrw"] == pytest.approx(lam2, abs=0.02)
    _report(13, "chi2_red " +
            ", ".join(f"{k}={v:.1f}" for k, v in chi.items()) +
            f"; recovered intermittency {theta_hat['mrw']:.4f}")
