import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from scatmoments.cli import main


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--family", "fbm", "--hurst", "0.5",
            "--length", "4096", "--seed", "7"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert digest(a) == digest(b)
    assert a.with_suffix(".spec.json").exists()
    manifest = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 7


def test_simulate_rejects_bad_alpha(tmp_path, capsys):
    rc = main(["simulate", "--family", "levy_stable", "--alpha", "0.9",
               "--length", "128", "--out", str(tmp_path / "x.csv")])
    assert rc == 2
    assert "alpha" in capsys.readouterr().err


def test_simulate_requires_family_param(tmp_path):
    rc = main(["simulate", "--family", "fbm", "--length", "128",
               "--out", str(tmp_path / "x.csv")])
    assert rc == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as err:
        main(["simulate", "--family", "not-a-family", "--length", "10",
              "--out", "x.csv"])
    assert err.value.code == 2


def test_scatter_outputs(tmp_path):
    src = tmp_path / "in.csv"
    main(["simulate", "--family", "fbm", "--hurst", "0.5", "--length", "16384",
          "--seed", "3", "--out", str(src)])
    out = tmp_path / "sv"
    rc = main(["scatter", "--input", str(src), "--column", "0", "--j0", "0",
               "--j", "6", "--m", "8", "--summary", "--out", str(out)])
    assert rc == 0
    table = (tmp_path / "sv.csv").read_text().splitlines()
    assert table[0] == "order,j1,j2,value,log2_value"
    doc = json.loads((tmp_path / "sv.json").read_text())
    assert doc["j_max"] == 6
    norm = (tmp_path / "sv.normalized.csv").read_text().splitlines()
    assert norm[0] == "kind,j1,gap,log2_value"
    summary = json.loads((tmp_path / "sv.summary.json").read_text())
    assert summary["classification"] in {"gaussian-like", "intermediate",
                                         "highly-intermittent"}
    manifest = json.loads((tmp_path / "sv.manifest.json").read_text())
    assert str(src) in manifest["input_digests"]


def test_scatter_missing_input(tmp_path, capsys):
    rc = main(["scatter", "--input", str(tmp_path / "nope.csv"), "--j", "5",
               "--m", "7", "--out", str(tmp_path / "o")])
    assert rc == 2


def test_fit_wavelet_estimator(tmp_path):
    src = tmp_path / "mrm.csv"
    main(["simulate", "--family", "mrm_cascade", "--intermittency", "0.1",
          "--integral-scale-log2", "8", "--length", "65536", "--seed", "5",
          "--out", str(src)])
    out = tmp_path / "fit.json"
    rc = main(["fit", "--input", str(src), "--estimator", "wavelet",
               "--block-len", "2048", "--j0", "0", "--j", "5", "--m", "7",
               "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["estimator"] == "wavelet"
    assert doc["intermittency"] == pytest.approx(0.1, abs=0.06)


def test_fit_gmm_smoke(tmp_path):
    src = tmp_path / "mrm.csv"
    main(["simulate", "--family", "mrm_cascade", "--intermittency", "0.1",
          "--integral-scale-log2", "7", "--length", "16384", "--seed", "6",
          "--out", str(src)])
    out = tmp_path / "fit.json"
    rc = main(["fit", "--input", str(src), "--estimator", "gmm",
               "--family", "mrm_cascade", "--integral-scale-log2", "7",
               "--bounds", "0.02", "0.3", "--block-len", "512", "--j0", "0",
               "--j", "3", "--m", "6", "--n-sim", "64", "--seed", "4",
               "--independent-blocks", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["theta_hat"]["intermittency"] == pytest.approx(0.1, abs=0.05)
    assert doc["p_value"] is not None
    assert len(doc["objective_trace"]) > 10


def test_fit_gmm_single_series_uses_windows(tmp_path):
    # One realization: the covariance comes from strided windows, so the
    # fit runs but reports no p-value.
    src = tmp_path / "x.csv"
    main(["simulate", "--family", "mrm_cascade", "--intermittency", "0.1",
          "--integral-scale-log2", "7", "--length", "16384", "--seed", "8",
          "--out", str(src)])
    out = tmp_path / "f.json"
    rc = main(["fit", "--input", str(src), "--estimator", "gmm",
               "--family", "mrm_cascade", "--integral-scale-log2", "7",
               "--bounds", "0.02", "0.3", "--j0", "0", "--j", "3", "--m", "6",
               "--n-sim", "48", "--window-delta", "4", "--seed", "9",
               "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["p_value"] is None
    assert doc["n_blocks"] > 2
    assert doc["theta_hat"]["intermittency"] == pytest.approx(0.1, abs=0.06)


def test_verify_bank_certificate(tmp_path):
    out = tmp_path / "cert.json"
    rc = main(["verify-bank", "--m", "10", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["all_ok"] is True
    assert doc["lp_defect"] < 0.05
    assert doc["phi_worst_margin"] > 0
    assert doc["vanishing_defect"] < 1e-6
    assert doc["analyticity_ratio"] < 0.05


def test_verify_bank_allpass_fails(tmp_path):
    out = tmp_path / "cert.json"
    rc = main(["verify-bank", "--m", "8", "--phi", "allpass", "--out", str(out)])
    assert rc == 1
    doc = json.loads(out.read_text())
    assert doc["phi_ok"] is False and doc["all_ok"] is False


def test_verify_bank_stable_json(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["verify-bank", "--m", "9", "--out", str(a)])
    main(["verify-bank", "--m", "9", "--out", str(b)])
    assert digest(a) == digest(b)


def test_cli_thread_count_independence(tmp_path):
    # Same command under different thread-count environments must produce
    # byte-identical output.
    outs = []
    for threads in ("1", "4"):
        out = tmp_path / f"t{threads}.csv"
        env = dict(os.environ, OMP_NUM_THREADS=threads,
                   OPENBLAS_NUM_THREADS=threads)
        subprocess.run(
            [sys.executable, "-m", "scatmoments.cli", "simulate", "--family",
             "mrw", "--intermittency", "0.05", "--integral-scale-log2", "7",
             "--length", "8192", "--seed", "11", "--out", str(out)],
            check=True, env=env, capture_output=True,
        )
        outs.append(digest(out))
    assert outs[0] == outs[1]
