from __future__ import annotations

import csv

import pytest

from oscamp.cli import build_parser, main


def test_global_flags_either_side():
    p = build_parser()
    a = p.parse_args(["--seed", "3", "spectral"])
    b = p.parse_args(["spectral", "--seed", "3"])
    assert a.seed == b.seed == 3


def test_spectral_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["spectral", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3
    assert rows[0]["class [label]"] == "outgoing"
    assert "kappa" in capsys.readouterr().out


def test_resonances(capsys):
    assert main(["resonances", "--nmax", "50"]) == 0
    assert "(1, 2, -1)" in capsys.readouterr().out
    assert main(["resonances", "--nmax", "50", "--mach", "0.55"]) == 0
    assert "0 primitive" in capsys.readouterr().out


def test_profile_selftest_flags_corruption(capsys):
    assert main(["profiles", "--selftest"]) == 0
    assert main(["profiles", "--selftest", "--corrupt"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_profiles_then_corrector(tmp_path):
    prof = tmp_path / "prof"
    assert main(["profiles", "--T", "0.3", "--out", str(prof)]) == 0
    assert (prof / "problem.cfg").exists() and (prof / "amplitude.csv").exists()
    appr = tmp_path / "approx"
    assert main(["corrector", "--from", str(prof), "--eps", "0.25", "--out", str(appr)]) == 0
    assert (appr / "fields.csv").exists() and (appr / "fast_coefficients.csv").exists()


def test_simulate_and_verify(tmp_path, capsys):
    prof = tmp_path / "prof"
    main(["profiles", "--T", "0.3", "--out", str(prof)])
    cfg = str(prof / "problem.cfg")
    for e in ("0.25", "0.125"):
        assert main(["simulate", "--config", cfg, "--eps", e, "--out", str(tmp_path / f"run_{e}")]) == 0
    rc = main(["verify", "--runs", str(tmp_path / "run_*"), "--approx", str(prof),
               "--out", str(tmp_path / "report.csv")])
    assert rc in (0, 1)
    rows = list(csv.DictReader((tmp_path / "report.csv").open()))
    assert [float(r["eps [1]"]) for r in rows] == [0.25, 0.125]


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[system]\nfamily = euler\nv = 1\n")
    assert main(["spectral", "--config", str(cfg)]) == 2
    assert "missing key" in capsys.readouterr().err


def test_nashmoser_cli(tmp_path, capsys):
    assert main(["nashmoser", "--T", "0.2", "--dt", "0.01", "--out", str(tmp_path / "nm")]) == 0
    assert (tmp_path / "nm" / "nashmoser.csv").exists()
    assert "nash-moser: PASS" in capsys.readouterr().out
