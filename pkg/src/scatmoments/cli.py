"""Batch command line: simulate ensembles, compute moments, fit models,
verify the filter bank.

Every output file is written atomically and accompanied by a
``<name>.manifest.json`` recording the command, flags, seed, input digest
and tool version, so a run can be reproduced bit for bit.  Thread count
follows the usual BLAS/FFT environment variables (``OMP_NUM_THREADS``
and friends); outputs do not depend on it.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import intermittency_summary, stationarity_across_scales
from .estimation import (
    MomentCondition,
    default_j_for_intermittency,
    gmm_two_step,
    log_covariance_regression,
    scattering_slope_regression,
    wavelet_moment_regression,
)
from .processes import FAMILIES, ProcessSpec, simulate
from .scattering import (
    normalize,
    per_block_scatter,
    scatter,
    vector_to_csv,
    vector_to_json,
)
from .signal import TimeSeries, deseasonalize, load_csv, segment, write_csv
from .wavelet import build_filter_bank, verify_littlewood_paley, verify_phi

__all__ = ["main"]

_THETA_FLAGS = {
    "poisson": ("intensity",),
    "fbm": ("hurst",),
    "levy_stable": ("alpha",),
    "mrm_cascade": ("intermittency", "integral_scale_log2"),
    "mrm_stationary": ("intermittency", "integral_scale_log2"),
    "mrw": ("intermittency", "integral_scale_log2"),
}


class SystemExit2(Exception):
    """Usage error signalled from inside a command handler."""


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path: Path, command: str, args: argparse.Namespace,
                    inputs=()) -> None:
    params = {
        k: v for k, v in sorted(vars(args).items())
        if k != "func" and not k.startswith("_")
    }
    doc = {
        "command": command,
        "parameters": params,
        "seed": params.get("seed"),
        "input_digests": {str(p): _digest(Path(p)) for p in inputs},
        "tool_version": __version__,
    }
    _atomic_write(Path(str(out_path) + ".manifest.json"),
                  json.dumps(doc, indent=2, default=str))


def _load_series(args) -> TimeSeries:
    ts = load_csv(args.input, args.column)
    if getattr(args, "deseasonalize", None):
        ts, _ = deseasonalize(ts, args.deseasonalize)
    if getattr(args, "block_len", None):
        ts = segment(ts, args.block_len)
    return ts


def _bank_from_args(args):
    m_scale = args.m
    n_fft = args.n_fft or 2 ** (m_scale + 2)
    j_min = getattr(args, "j_min", 1)
    return build_filter_bank(n_fft, j_min, m_scale, family=args.family)


def cmd_simulate(args) -> int:
    theta = {}
    for key in _THETA_FLAGS[args.family]:
        val = getattr(args, key)
        if val is None:
            raise SystemExit2(f"--{key.replace('_', '-')} is required for {args.family}")
        theta[key] = val
    try:
        spec = ProcessSpec(args.family, theta, length=args.length,
                           seed=args.seed, n_realizations=args.n_realizations)
    except ValueError as exc:
        raise SystemExit2(str(exc))
    ens = simulate(spec)
    out = Path(args.out)
    write_csv(out, ens.series)
    sidecar = {
        "family": spec.family,
        "theta": spec.theta,
        "length": spec.length,
        "seed": spec.seed,
        "n_realizations": spec.n_realizations,
        "rng_trace": list(ens.rng_trace),
    }
    _atomic_write(out.with_suffix(".spec.json"), json.dumps(sidecar, indent=2))
    _write_manifest(out, "simulate", args)
    print(f"wrote {out} ({spec.n_realizations} x {spec.length} samples)")
    return 0


def cmd_scatter(args) -> int:
    ts = _load_series(args)
    bank = _bank_from_args(args)
    sv = scatter(ts, bank, max_order=args.max_order, j0=args.j0, j_max=args.j)
    out = Path(args.out)
    vector_to_csv(sv, out.with_suffix(".csv"))
    vector_to_json(sv, out.with_suffix(".json"))
    ns = normalize(sv)
    lines = ["kind,j1,gap,log2_value"]
    for j, v in sorted(ns.order1_norm.items()):
        if v > 0:
            lines.append(f"order1,{j},,{np.log2(v):.17g}")
    for (j1, j2), v in sorted(ns.order2_norm.items()):
        if v > 0:
            lines.append(f"order2,{j1},{j2 - j1},{np.log2(v):.17g}")
    _atomic_write(out.with_suffix(".normalized.csv"), "\n".join(lines) + "\n")
    if args.summary:
        rep = intermittency_summary(ns)
        stat = None
        try:
            stat_rep = stationarity_across_scales(ns)
            stat = dataclasses.asdict(stat_rep)
            stat["spread_by_gap"] = {str(k): v for k, v in stat_rep.spread_by_gap.items()}
        except ValueError:
            pass
        doc = {
            "tail_slope": rep.tail_slope,
            "tail_stderr": rep.tail_stderr,
            "classification": rep.classification,
            "sum_sq_by_scale": {str(k): v for k, v in rep.sum_sq_by_scale.items()},
            "stationarity": stat,
        }
        _atomic_write(out.with_suffix(".summary.json"), json.dumps(doc, indent=2))
    _write_manifest(out, "scatter", args, inputs=[args.input])
    print(f"wrote {out.with_suffix('.csv')} / .json / .normalized.csv")
    return 0


def cmd_fit(args) -> int:
    ts = _load_series(args)
    j = args.j
    if j is None:
        if args.family in ("mrm_cascade", "mrm_stationary", "mrw"):
            j = default_j_for_intermittency(args.intermittency or 0.05)
        else:
            j = 5
    bank_m = args.m or min(j + 4, int(np.log2(ts.block_len)))
    bank = build_filter_bank(args.n_fft or 2 ** (bank_m + 2), 1, bank_m,
                             family="meyer")
    out = Path(args.out)
    if args.estimator == "wavelet":
        reg = wavelet_moment_regression(ts, bank, range(args.j0 + 1, j + 1))
        doc = {"estimator": "wavelet", "intermittency": reg.lam2,
               "slope": reg.fit.slope, "stderr": reg.fit.stderr}
        _atomic_write(out, json.dumps(doc, indent=2))
    elif args.estimator == "logcov":
        lags = [int(l) for l in np.unique(np.geomspace(
            2 ** (args.j0 + 1), ts.block_len // 4, 24).astype(int))]
        reg = log_covariance_regression(ts, bank, args.j0 + 1, lags)
        doc = {"estimator": "logcov", "intermittency": reg.lam2,
               "stderr": reg.fit.stderr, "dropped": reg.n_dropped}
        _atomic_write(out, json.dumps(doc, indent=2))
    elif args.estimator == "scatt_regression":
        sv = scatter(ts, bank, max_order=2, j0=args.j0, j_max=j)
        reg = scattering_slope_regression(normalize(sv), delta=args.delta)
        doc = {"estimator": "scatt_regression", "alpha": reg.alpha,
               "order1_slope": reg.order1_slope,
               "order2_slope": reg.order2_slope}
        _atomic_write(out, json.dumps(doc, indent=2))
    elif args.estimator == "gmm":
        theta = {}
        for key in _THETA_FLAGS[args.family]:
            val = getattr(args, key)
            if val is None and key != _free_param(args.family):
                raise SystemExit2(f"--{key.replace('_', '-')} is required")
            if val is not None:
                theta[key] = val
        free = _free_param(args.family)
        theta.setdefault(free, 0.5 * (args.bounds[0] + args.bounds[1]))
        template = ProcessSpec(args.family, theta, length=ts.block_len, seed=0)
        sv = scatter(ts, bank, max_order=2, j0=args.j0, j_max=j)
        if ts.n_blocks == 1:
            # Single realization: per-window estimates at the requested
            # stride supply the covariance (correlated unless the stride is
            # large, hence no p-value without --independent-blocks).
            windows = per_block_scatter(ts, bank, j0=args.j0, j_max=j,
                                        delta=args.window_delta)
            sv = dataclasses.replace(sv, per_block=windows)
        n_vectors = len(sv.per_block)
        mc = MomentCondition(
            data=sv, bank=bank, template=template, free_param=free,
            n_sim=args.n_sim or 16 * n_vectors, sim_seed=args.seed,
            independent_blocks=args.independent_blocks,
        )
        fit = gmm_two_step(mc, tuple(args.bounds),
                           identity_weight=args.identity_weight)
        fit.to_json(out)
    else:
        raise SystemExit2(f"unknown estimator {args.estimator!r}")
    _write_manifest(out, "fit", args, inputs=[args.input])
    print(f"wrote {out}")
    return 0


def _free_param(family: str) -> str:
    return {"poisson": "intensity", "fbm": "hurst", "levy_stable": "alpha",
            "mrm_cascade": "intermittency", "mrm_stationary": "intermittency",
            "mrw": "intermittency"}[family]


def cmd_verify_bank(args) -> int:
    bank = _bank_from_args(args)
    if args.phi == "allpass":
        bank = dataclasses.replace(
            bank, phi_hat=np.ones_like(np.asarray(bank.phi_hat)))
    lp = verify_littlewood_paley(bank)
    phi = verify_phi(bank)
    checks = {
        "lp_defect": bank.lp_defect,
        "lp_ok": bool(bank.lp_defect < 0.05),
        "analyticity_ratio": bank.analyticity_ratio,
        "analyticity_ok": bool(bank.analyticity_ratio < 0.05),
        "vanishing_defect": bank.vanishing_defect,
        "vanishing_ok": bool(bank.vanishing_defect < 1e-6),
        "phi_ok": phi.ok,
        "phi_worst_margin": phi.worst_margin,
        "per_octave_deviation": {str(k): v for k, v in lp.per_octave.items()},
        "covered_band_rad_per_sample": list(lp.covered_band),
    }
    ok = checks["lp_ok"] and checks["analyticity_ok"] and checks["vanishing_ok"] and phi.ok
    checks["all_ok"] = bool(ok)
    out = Path(args.out)
    _atomic_write(out, json.dumps(checks, indent=2))
    _write_manifest(out, "verify-bank", args)
    print(f"wrote {out} (all_ok={ok})")
    return 0 if ok else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scatmoments",
        description="Scattering moments of time series: simulate, analyze, fit.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a process ensemble as CSV")
    sim.add_argument("--family", required=True, choices=FAMILIES)
    sim.add_argument("--length", type=int, required=True)
    sim.add_argument("--n-realizations", type=int, default=1)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--intensity", type=float)
    sim.add_argument("--hurst", type=float)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--intermittency", type=float)
    sim.add_argument("--integral-scale-log2", dest="integral_scale_log2", type=int)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    sc = sub.add_parser("scatter", help="compute scattering moments of a CSV column")
    sc.add_argument("--input", required=True)
    sc.add_argument("--column", default=0, type=_name_or_index)
    sc.add_argument("--block-len", dest="block_len", type=int)
    sc.add_argument("--deseasonalize", type=int, metavar="PERIOD")
    sc.add_argument("--j0", type=int, default=0)
    sc.add_argument("--j", type=int, required=True)
    sc.add_argument("--m", type=int, required=True)
    sc.add_argument("--n-fft", dest="n_fft", type=int)
    sc.add_argument("--max-order", dest="max_order", type=int, default=2)
    sc.add_argument("--family", default="meyer")
    sc.add_argument("--summary", action="store_true")
    sc.add_argument("--out", required=True)
    sc.set_defaults(func=cmd_scatter)

    fit = sub.add_parser("fit", help="fit a generative model to a CSV column")
    fit.add_argument("--input", required=True)
    fit.add_argument("--column", default=0, type=_name_or_index)
    fit.add_argument("--block-len", dest="block_len", type=int)
    fit.add_argument("--deseasonalize", type=int, metavar="PERIOD")
    fit.add_argument("--estimator", default="gmm",
                     choices=["gmm", "wavelet", "logcov", "scatt_regression"])
    fit.add_argument("--family", default="mrm_cascade", choices=FAMILIES)
    fit.add_argument("--bounds", type=float, nargs=2, default=[0.01, 0.5])
    fit.add_argument("--j0", type=int, default=0)
    fit.add_argument("--j", type=int)
    fit.add_argument("--m", type=int)
    fit.add_argument("--n-fft", dest="n_fft", type=int)
    fit.add_argument("--delta", type=int, default=3,
                     help="gap filter for the scattering regression")
    fit.add_argument("--window-delta", dest="window_delta", type=int, default=1,
                     help="window stride (in averaging windows) for "
                          "single-realization GMM covariance")
    fit.add_argument("--n-sim", dest="n_sim", type=int)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--intensity", type=float)
    fit.add_argument("--hurst", type=float)
    fit.add_argument("--alpha", type=float)
    fit.add_argument("--intermittency", type=float)
    fit.add_argument("--integral-scale-log2", dest="integral_scale_log2", type=int)
    fit.add_argument("--identity-weight", action="store_true")
    fit.add_argument("--independent-blocks", action="store_true")
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=cmd_fit)

    vb = sub.add_parser("verify-bank", help="emit the filter-bank certificate")
    vb.add_argument("--n-fft", dest="n_fft", type=int)
    vb.add_argument("--j-min", dest="j_min", type=int, default=1)
    vb.add_argument("--m", type=int, required=True)
    vb.add_argument("--family", default="meyer")
    vb.add_argument("--phi", choices=["default", "allpass"], default="default")
    vb.add_argument("--out", required=True)
    vb.set_defaults(func=cmd_verify_bank)

    return parser


def _name_or_index(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
