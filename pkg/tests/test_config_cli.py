import json
import math
import subprocess
import sys

import pytest

from knoids import cli
from knoids.config import ConfigError, RunConfig, dump_text, load, parse_angle, parse_length, parse_text


@pytest.mark.parametrize("text, value", [("pi", math.pi), ("pi/3", math.pi / 3),
                                         ("2*pi/5", 2 * math.pi / 5), ("2pi/5", 2 * math.pi / 5),
                                         ("1.2", 1.2), (0.5, 0.5)])
def test_parse_angle(text, value):
    assert parse_angle(text) == value


def test_parse_angle_rejects():
    with pytest.raises(ConfigError):
        parse_angle("pi/0")
    with pytest.raises(ConfigError):
        parse_angle("tau")


def test_parse_length():
    assert parse_length("inf") == math.inf
    assert parse_length("2.5") == 2.5
    with pytest.raises(ConfigError):
        parse_length("long")


def test_config_file_round_trip(tmp_path):
    cfg = load(overrides={"phi": "pi/3", "k": "4", "l": "1.5", "family": "saddle"})
    path = tmp_path / "run.cfg"
    path.write_text(dump_text(cfg))
    assert load(path) == cfg


def test_unknown_and_duplicate_keys():
    with pytest.raises(ConfigError, match="unknown"):
        parse_text("phi = 1.0\nspeed = 3\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("phi = 1.0\nphi = 1.1\n")
    with pytest.raises(ConfigError):
        parse_text("phi 1.0\n")


def test_tolerance_ordering_and_ranges():
    with pytest.raises(ConfigError):
        load(overrides={"tol_pde": "1e-3"})
    with pytest.raises(ConfigError):
        load(overrides={"phi": "pi/2"})
    with pytest.raises(ConfigError):
        load(overrides={"formats": "stl"})


def test_family_constraints():
    with pytest.raises(ConfigError):
        RunConfig(family="knoid", k=3, phi=0.9).validate_family()   # pi/3 > 0.9
    with pytest.raises(ConfigError):
        RunConfig(family="saddle", k=3, phi=1.2).validate_family()
    with pytest.raises(ConfigError):
        RunConfig(family="parabolic", l=2.0).validate_family()
    RunConfig(family="saddle", k=3, phi=1.2, l=1.0).validate_family()


def test_digest_ignores_output_root():
    a = RunConfig()
    assert a.digest("build") == RunConfig(out="elsewhere", workers=4).digest("build")
    assert a.digest("build") != a.digest("periods")
    assert a.digest("build") != RunConfig(seed=1).digest("build")


def test_solver_defaults_and_overrides():
    s = RunConfig().solver(R=2.0, n_extra=1.0)
    assert (s.R, s.n_extra) == (2.0, 1.0)
    s = RunConfig(trunc_R=5.0, trunc_N=3.0).solver(R=2.0, n_extra=1.0)
    assert (s.R, s.n_extra) == (5.0, 3.0)


def test_cli_triangle_ln3(capsys):
    assert cli.main(["triangle", "--phi", "pi/3", "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["a_max"] - math.log(3)) < 1e-12
    assert abs(out["a_emb"] - 0.5 * math.log(3)) < 1e-12


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["triangle", "--phi", "pi/2"]) == 1
    assert cli.main(["triangle", "--phi", "1.0", "--a", "5.0"]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["triangle", "--bogus"])
    assert exc.value.code == 1
    assert cli.main(["periods", "--phi", "1.2", "--out", str(tmp_path)]) == 1
    # a below the hyperbolic range is a solver failure
    code = cli.main(["build", "--family", "hyperbolic", "--phi", "1.2", "--a", "0.5",
                     "--trunc-R", "2", "--trunc-N", "1", "--out", str(tmp_path)])
    assert code == 2
    capsys.readouterr()


def test_cli_periods_fixed_b_is_reproducible(tmp_path):
    cmd = [sys.executable, "-m", "knoids.cli", "periods", "--phi", "1.2", "--a", "0.5", "--b", "0",
           "--trunc-R", "2", "--trunc-N", "1", "--json"]
    runs = [subprocess.run(cmd + ["--out", str(tmp_path / f"r{i}")], capture_output=True, check=True).stdout
            for i in range(2)]
    reps = [json.loads(r) for r in runs]
    for r in reps:
        r["config"].pop("out")
    assert reps[0] == reps[1]
    assert runs[0].replace(b"r0", b"r1") == runs[1]
    rep = reps[0]["report"]
    assert rep["P1"] > 0
    files = [sorted(p.name for p in (tmp_path / f"r{i}").iterdir()) for i in range(2)]
    assert files[0] == files[1] and len(files[0]) == 1
