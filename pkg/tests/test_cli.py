import json
import time
from pathlib import Path

import numpy as np
import pytest

from sffdl import cli


def write_config(tmp_path, text):
    p = tmp_path / "run.toml"
    p.write_text(text)
    return str(p)


def run(args, monkeypatch=None):
    return cli.main(args)


def test_config_errors(tmp_path, capsys):
    assert cli.main(["sffmodel", "--config", str(tmp_path / "missing.toml")]) == 2
    bad = write_config(tmp_path, "[sffmodel]\nnot_a_key = 1\n")
    assert cli.main(["sffmodel", "--config", bad, "--out", str(tmp_path)]) == 2
    broken = write_config(tmp_path, "[sffmodel\n")
    assert cli.main(["sffmodel", "--config", broken]) == 2
    neg = write_config(tmp_path, "[sffmodel]\nlam = -0.1\n")
    assert cli.main(["sffmodel", "--config", neg, "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_config_required():
    with pytest.raises(SystemExit):
        cli.main(["sffmodel"])


def test_resource_guards(tmp_path):
    cfg = write_config(tmp_path, "[collapse]\ntrajectories = 10000000000\n")
    assert cli.main(["collapse", "--config", cfg, "--scale", "desk", "--out", str(tmp_path)]) == 3
    cfg = write_config(tmp_path, "[spinchain]\nLs = [20]\n")
    assert cli.main(["spinchain", "--config", cfg, "--out", str(tmp_path)]) == 3
    cfg = write_config(tmp_path, "[twosite]\nN = 300\n")
    assert cli.main(["twosite", "--config", cfg, "--out", str(tmp_path)]) == 3


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    def boom(cfg, out):
        raise FloatingPointError("drift")

    monkeypatch.setitem(cli.COMMANDS, "sffmodel", boom)
    cfg = write_config(tmp_path, "[sffmodel]\n")
    assert cli.main(["sffmodel", "--config", cfg, "--out", str(tmp_path)]) == 4


def test_flags_override_config_and_env_overrides_out(tmp_path, monkeypatch):
    env_out = tmp_path / "env"
    monkeypatch.setenv("SFFDL_OUT", str(env_out))
    cfg = write_config(tmp_path, "seed = 3\n[sffmodel]\nLs = [8, 16, 32]\nlam = 0.2\n")
    assert cli.main(["sffmodel", "--config", cfg, "--seed", "9", "--out", str(tmp_path / "flag")]) == 0
    man = json.loads((env_out / "sffmodel" / "manifest.json").read_text())
    assert man["config"]["seed"] == 9 and man["config"]["lam"] == 0.2
    assert not (tmp_path / "flag").exists()


def test_sffmodel_outputs(tmp_path):
    cfg = write_config(tmp_path, "[sffmodel]\n")
    assert cli.main(["sffmodel", "--config", cfg, "--out", str(tmp_path)]) == 0
    d = tmp_path / "sffmodel"
    man = json.loads((d / "manifest.json").read_text())
    for name in man["files"]:
        assert (d / name).exists()
    s = man["summary"]
    for L, sl in s["slopes"].items():
        assert sl["early"] == pytest.approx(int(L), rel=0.02)
        assert sl["late"] == pytest.approx(1.0, rel=0.02)
    assert s["rms_rel_residual"] < 0.05
    assert (d / "plot_sffmodel.py").read_text().startswith('"""Generated plot script')
    compile((d / "plot_sffmodel.py").read_text(), "plot", "exec")


def test_sffmodel_from_measured_w(tmp_path):
    from sffdl.curves import Curve

    t = np.geomspace(0.1, 30, 100)
    w = Curve(t, np.minimum(1, 20 * np.exp(-3.5 * np.sqrt(t))), 10**6, None, {"n_samples": 10**12})
    w.stderr = 1e-3 * w.values
    w.write(tmp_path / "w", "w")
    cfg = write_config(tmp_path, f'[sffmodel]\nw_source = "measured"\nw_path = "{tmp_path / "w.csv"}"\nlate_window = [2.0, 30.0]\n')
    assert cli.main(["sffmodel", "--config", cfg, "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "sffmodel" / "manifest.json").read_text())
    assert man["summary"]["b"] == pytest.approx(3.5, rel=1e-6)


def test_collapse_reproducible_bytes(tmp_path):
    text = "[collapse]\nL = 16\ntrajectories = 3000\nt_max = 6.0\nfit_window = [2.0, 6.0]\n"
    cfg = write_config(tmp_path, text)
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert cli.main(["collapse", "--config", cfg, "--seed", "5", "--out", str(out)]) == 0
        outs.append((out / "collapse" / "autocorrelator.csv").read_bytes())
    assert outs[0] == outs[1]
    man = json.loads((tmp_path / "o0" / "collapse" / "manifest.json").read_text())
    assert man["summary"]["max_drift"] < 1e-10


def test_dconst_schema_and_references(tmp_path):
    cfg = write_config(tmp_path, "[dconst]\nL = 21\ntrajectories = 200\nt_max = 4.0\n")
    assert cli.main(["dconst", "--config", cfg, "--out", str(tmp_path)]) == 0
    d = tmp_path / "dconst"
    header = (d / "d_of_t.csv").read_text().splitlines()[:2]
    assert header == ["# schema=1", "t,D,D_stderr"]
    refs = json.loads((d / "references.json").read_text())
    assert refs["golden_rule"] == pytest.approx(0.7022, abs=5e-4)
    assert refs["moment_matrix"] == pytest.approx(0.6936, abs=3e-3)


def test_spinchain_smoke(tmp_path):
    cfg = write_config(tmp_path, "[spinchain]\nLs = [4, 6]\nrealizations = 30\n")
    assert cli.main(["spinchain", "--config", cfg, "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "spinchain" / "manifest.json").read_text())["summary"]
    for v in s.values():
        assert v["K0_over_4L"] == pytest.approx(1.0, rel=1e-12)
        assert abs(v["plateau_over_dim"] - 1) < 4 * v["plateau_over_dim_stderr"]


def test_wt_smoke(tmp_path):
    cfg = write_config(tmp_path, "[wt]\nL = 24\ntrajectories = 4000\nt_max = 8.0\nlate_window = [1.0, 8.0]\n")
    assert cli.main(["wt", "--config", cfg, "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "wt" / "manifest.json").read_text())["summary"]
    assert s["early_rate"] == pytest.approx(1.214, rel=0.05)
    assert s["b"] > 0


@pytest.mark.slow
def test_twosite_smoke_scale(tmp_path):
    start = time.time()
    assert cli.main(["twosite", "--config", "configs/smoke.toml", "--out", str(tmp_path)]) == 0
    assert time.time() - start < 120
    d = tmp_path / "twosite"
    # six panels: ED + three analytic SFF curves per coupling, plus C11/C12 for each coupling
    for lam in ("0.1", "0.05"):
        for kind in ("ed", "early", "late", "crossover"):
            assert (d / f"sff_{kind}_lam{lam}.csv").exists()
        assert (d / f"corr_lam{lam}.csv").exists()
    s = json.loads((d / "manifest.json").read_text())["summary"]
    for v in s.values():
        assert v["row_sum_max_z"] < 5
