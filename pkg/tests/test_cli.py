from __future__ import annotations

import io
import subprocess
import sys

import pytest

from screenfair.cli import main

EXTRA = "rule1.kind = threshold\nrule1.beta = 0\nrule2.kind = threshold\nrule2.beta = 0\n"


def run(*argv):
    out = io.StringIO()
    code = main(list(map(str, argv)), out=out)
    return code, out.getvalue()


def kv(text):
    return dict(line.split(": ", 1) for line in text.splitlines() if ": " in line and not line.startswith("#"))


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def scenario_text(mu2=-1.0, gamma=1.0, cmin=0.5, cmax=0.5, disclose=True, rules=True):
    lines = ["pop1.mu = 0", "pop1.sigma = 1", f"pop2.mu = {mu2}", "pop2.sigma = 1",
             f"disclose = {'true' if disclose else 'false'}", f"cost.min = {cmin}", f"cost.max = {cmax}"]
    if gamma is not None:
        lines.append(f"gamma = {gamma}")
    return "\n".join(lines) + "\n" + (EXTRA if rules else "")


def test_posterior(canonical_path):
    code, out = run("posterior", canonical_path, "--beta", 0, "--grade", 0)
    assert code == 0
    d = kv(out)
    assert float(d["closed_form_mean"]) == pytest.approx(0.3257, abs=1e-4)
    assert float(d["quadrature_mean"]) == pytest.approx(0.3257, abs=1e-4)
    assert float(d["difference"]) < 1e-7


def test_posterior_neg_inf_beta(canonical_path):
    code, out = run("posterior", canonical_path, "--beta=-inf", "--grade", 2)
    assert code == 0
    assert float(kv(out)["closed_form_mean"]) == pytest.approx(1.0, abs=1e-12)


def test_missing_gamma_is_exit_2(tmp_path, capsys):
    p = write(tmp_path, "s.txt", scenario_text(gamma=None))
    code, _ = run("posterior", p, "--beta", 0, "--grade", 0)
    assert code == 2
    assert "gamma" in capsys.readouterr().err


def test_calibrate_modes(tmp_path, canonical_path, capsys):
    same = write(tmp_path, "same.txt", scenario_text(mu2=0.0))
    code, out = run("calibrate", same, "--mode", "igm")
    assert code == 0
    d = kv(out)
    assert d["beta1"] == d["beta2"]
    code, _ = run("calibrate", write(tmp_path, "g2.txt", scenario_text(gamma=2.0)), "--mode", "eo-gamma1")
    assert code == 2
    code, _ = run("calibrate", canonical_path, "--mode", "no-grades")
    assert code == 2
    assert "disclose = false" in capsys.readouterr().err
    ng = write(tmp_path, "ng.txt", scenario_text(disclose=False, gamma=None, cmin=0.3, cmax=0.7))
    code, out = run("calibrate", ng, "--mode", "no-grades")
    assert code == 0 and min(float(kv(out)["mean_given_admission1"]), float(kv(out)["mean_given_admission2"])) >= 0.7
    code, out = run("calibrate", canonical_path, "--mode", "noiseless")
    assert code == 0 and float(kv(out)["type_threshold"]) == 0.5


def test_calibrate_non_convergence_exit_3(canonical_path, monkeypatch):
    import screenfair.cli as cli
    from screenfair.calibration import CalibrationResult

    monkeypatch.setattr(cli, "eo_fixed_point_gamma1",
                        lambda sc: CalibrationResult(0.0, 0.0, 0.0, 1.0, 1.0, False, message="stuck"))
    code, out = run("calibrate", canonical_path, "--mode", "eo-gamma1")
    assert code == 3
    assert "converged: false" in out


def test_audit_and_csv(tmp_path, canonical_path):
    code, out = run("audit", canonical_path)
    assert code == 0
    d = kv(out)
    assert float(d["eo_gap"]) > 0 and float(d["igm_violation"]) > 0 and float(d["sigm_gap"]) > 0
    same = write(tmp_path, "same.txt", scenario_text(mu2=0.0))
    d = kv(run("audit", same)[1])
    assert float(d["eo_gap"]) == 0 and float(d["igm_violation"]) == 0 and float(d["sigm_gap"]) == 0
    csv_path = tmp_path / "out" / "audit.csv"
    code, _ = run("audit", canonical_path, "--rule1", "step:0:0.5,1:1.0", "--rule2", "threshold:0.5", "--csv", csv_path)
    assert code == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("# tool: screenfair")
    header = [l for l in lines if not l.startswith("#")][0]
    assert header == "metric,value,argmax"
    assert not list(csv_path.parent.glob(".*.tmp"))


def test_audit_rejects_bad_rules(canonical_path):
    assert run("audit", canonical_path, "--rule1", "admit-none")[0] == 2
    assert run("audit", canonical_path, "--rule1", "threshold:abc")[0] == 2


def test_sweep(tmp_path, canonical_path, capsys):
    code, out = run("sweep", canonical_path, "--grid1=-1:1:3", "--grid2=-1:1:3", "--target", "sigm")
    assert code == 0
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0] == "beta1,beta2,metric,value,argmax"
    assert len(rows) == 10
    assert rows[1].startswith("-1,-1,") and rows[-1].startswith("1,1,")
    assert "minimum:" in capsys.readouterr().err
    same = write(tmp_path, "same.txt", scenario_text(mu2=0.0, cmin=0.3, cmax=0.7))
    csv_path = tmp_path / "sweep.csv"
    code, out = run("sweep", same, "--grid1=-2:2:5", "--grid2=-2:2:5", "--csv", csv_path)
    assert code == 0
    assert out.startswith("minimum: 0 ")
    b1 = out.split("beta1=")[1].split()[0]
    b2 = out.split("beta2=")[1].split()[0]
    assert b1 == b2


def test_sweep_bad_grid(canonical_path):
    with pytest.raises(SystemExit) as info:
        run("sweep", canonical_path, "--grid1=3:1:5")
    assert info.value.code == 2


def test_mc_check(canonical_path):
    code, out = run("mc-check", canonical_path, "--samples", 200_000)
    assert code == 0
    assert out.rstrip().endswith("overall: PASS")
    assert code == run("mc-check", canonical_path, "--samples", 200_000)[0]
    assert out == run("mc-check", canonical_path, "--samples", 200_000)[1]
    assert run("mc-check", canonical_path, "--samples", 10)[0] == 2


def test_module_entry_point(canonical_path):
    proc = subprocess.run([sys.executable, "-m", "screenfair", "posterior", str(canonical_path), "--beta", "0", "--grade", "0"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "closed_form_mean: 0.325735007935" in proc.stdout
