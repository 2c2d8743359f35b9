import csv
import json

import pytest

from plma.cli import EXIT_CERT, EXIT_CONFIG, EXIT_OK, build_parser, main, resolve_config


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_transform_eps_case(tmp_path):
    assert run(tmp_path, "transform", "--case", "eps:0.5", "--n", "129") == EXIT_OK
    d = tmp_path / "eps_0.5" / "n129"
    assert (d / "ustar.csv").exists() and (d / "u.csv").exists()
    (row,) = read_csv(d / "identities.csv")
    bound = float(row["bound_10h2"])
    assert max(float(row[k]) for k in ("r11", "r12", "r22")) <= bound
    assert float(row["involution_error"]) <= bound


def test_transform_all_fans_out(tmp_path):
    assert run(tmp_path, "transform", "--case", "all", "--n", "33") == EXIT_OK
    dirs = sorted(p.name for p in tmp_path.iterdir())
    assert len(dirs) == 7 and "exp" in dirs


def test_unknown_case_lists_known(tmp_path, capsys):
    assert run(tmp_path, "transform", "--case", "nosuch") == EXIT_CONFIG
    assert "known cases" in capsys.readouterr().err


@pytest.mark.parametrize("args", [
    ["solve", "--case", "radial", "--n", "17"],
    ["verify", "--all", "--n", "64"],
    ["sweep", "--eps", ""],
    ["sweep", "--eps", "0.5,2"],
    ["verify", "--case", "radial", "--all"],
    ["nosuch"],
])
def test_configuration_errors(tmp_path, args):
    assert run(tmp_path, *args) == EXIT_CONFIG


def test_solve_radial(tmp_path):
    assert run(tmp_path, "solve", "--case", "radial", "--n", "33") == EXIT_OK
    (row,) = read_csv(tmp_path / "crossval.csv")
    assert float(row["plt_error"]) < 1e-10 and float(row["reference_error"]) < 1e-10
    report = json.loads((tmp_path / "solve_report.json").read_text())
    assert report["radial/n33"]["plt"]["converged"]


def test_solve_eps_convexity_log(tmp_path):
    assert run(tmp_path, "solve", "--case", "eps:0.1", "--n", "65") == EXIT_OK
    (row,) = read_csv(tmp_path / "crossval.csv")
    assert row["convexity_all_pass"] == "1" and row["plt_converged"] == "1"


def test_verify_eps_sweep_row(tmp_path):
    assert run(tmp_path, "verify", "--case", "eps:0.5", "--n", "65") == EXIT_OK
    (row,) = read_csv(tmp_path / "sweep.csv")
    assert float(row["d2u0"]) == pytest.approx(2.0, rel=1e-3)
    assert float(row["b"]) == pytest.approx(2.0, rel=1e-3)
    assert float(row["m0"]) == pytest.approx(0.25, rel=1e-3)
    assert (tmp_path / "summary.txt").exists()


def test_tampered_case_fails_before_certificates(tmp_path, capsys):
    assert run(tmp_path, "verify", "--case", "exp", "--f-scale", "2") == EXIT_CERT
    assert "det D^2u" in capsys.readouterr().err
    assert not (tmp_path / "certificates.csv").exists()


def test_sweep_single_eps(tmp_path):
    assert run(tmp_path, "sweep", "--eps", "1", "--n", "65") == EXIT_OK
    (row,) = read_csv(tmp_path / "sweep.csv")
    assert [float(row[k]) for k in ("d2u0_exact", "b_exact", "m0_exact")] == [1.0, 1.0, 0.5]
    assert row["agree"] == "1"


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"case": ["radial"], "n": [33], "tol": 1e-6, "seed": 3}))
    args = build_parser().parse_args(["verify", "--config", str(cfg), "--n", "65"])
    rc = resolve_config(args)
    assert rc.cases == ["radial"] and rc.n == [65] and rc.tol == 1e-6 and rc.seed == 3
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(tmp_path, "verify", "--config", str(cfg)) == EXIT_CONFIG


def test_verify_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["verify", "--case", "exp", "--case", "eps:0.25", "--n", "33", "--seed", "7",
                     "--out", str(d)]) == EXIT_OK
    for name in ("certificates.csv", "sweep.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
