import json
import os
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ljreact import ParseError, SingularError, ValidationError
from ljreact import cli
from ljreact.cli import RunConfig, main, parse_config
from ljreact.diagnostics import Check, DiagnosticsReport

FAST = ["--set", "T=0.005", "--set", "N=6"]


def test_minimal_config_gets_defaults():
    cfg = parse_config("N = 10\nseed = 7\n")
    assert cfg.params.N == 10 and cfg.params.seed == 7
    assert cfg.params.alpha == 12.0 and cfg.study.runs == 20


def test_validation_is_forwarded():
    with pytest.raises(ValidationError) as err:
        parse_config("alpha = 4.0\nbeta = 6.0\n")
    assert err.value.field == "alpha"


def test_unknown_key_names_key_and_line():
    with pytest.raises(ParseError) as err:
        parse_config("N = 10\n\ngamma = 2.0\n")
    assert "gamma" in str(err.value) and err.value.line == 3
    with pytest.raises(ParseError) as err:
        parse_config("[study]\nruns = 3\ncolour = 'red'\n")
    assert err.value.line == 3


def test_syntax_error_has_line():
    with pytest.raises(ParseError) as err:
        parse_config("N = 10\nseed = = 3\n")
    assert err.value.line == 2


def test_aliases_and_types():
    cfg = parse_config("lambda = 2.0\nlambda_tilde = 0.5\nbox_lo = [-5, -5]\nbox_hi = [5, 5]\n")
    assert cfg.params.lam == 2.0 and cfg.params.lam_tilde == 0.5
    assert cfg.params.box_lo == (-5.0, -5.0)
    with pytest.raises(ParseError):
        parse_config("N = 2.5\n")
    with pytest.raises(ParseError):
        parse_config("lam = 1.0\nlambda = 2.0\n")


@given(st.integers(2, 100), st.floats(0.0, 10.0), st.integers(0, 2**63),
       st.integers(1, 500), st.lists(st.floats(0.001, 0.5), min_size=1, max_size=4, unique=True),
       st.sampled_from(["clock", "acceptance"]))
def test_config_round_trip(N, lam_tilde, seed, runs, eps, killing):
    text = (f"N = {N}\nlam_tilde = {lam_tilde!r}\nseed = {seed}\n[study]\nruns = {runs}\n"
            f"eps_levels = {sorted(eps, reverse=True)!r}\nkilling = '{killing}'\n")
    cfg = parse_config(text)
    assert parse_config(cfg.to_toml()) == cfg


def test_default_config_round_trip():
    cfg = RunConfig()
    assert parse_config(cfg.to_toml()) == cfg


def _files(root: Path):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file()}


def test_simulate_is_byte_identical(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    conf = tmp_path / "c.toml"
    conf.write_text("N = 6\nT = 0.01\nlam_tilde = 200.0\n[output]\ntrajectory_every = 2\n"
                    "field_every = 5\n")
    assert main(["simulate", "--config", str(conf), "--seed", "7", "--out", "a"]) == 0
    first = _files(tmp_path / "a")
    assert main(["simulate", "--config", str(conf), "--seed", "7", "--out", "a"]) == 0
    assert _files(tmp_path / "a") == first
    assert {"trajectory.csv", "events.csv", "field.csv", "metadata.json", "run_config.toml",
            "field_0000005.csv"} <= set(first)
    meta = json.loads(first["metadata.json"])
    assert meta["seed"] == 7 and meta["params"]["N"] == 6
    # the stored config reproduces the run
    assert cli.parse_config(first["run_config.toml"].decode()).params.seed == 7
    # nothing written outside the output directory
    assert sorted(os.listdir(tmp_path)) == ["a", "c.toml"]


def test_noreaction_has_empty_event_file(tmp_path):
    out = tmp_path / "nr"
    assert main(["noreaction", "--seed", "1", "--out", str(out), *FAST]) == 0
    assert (out / "events.csv").read_text().splitlines() == ["step,particle,time,hazard_at_death"]


def test_verify_writes_every_requested_check(tmp_path):
    out = tmp_path / "v"
    code = main(["verify", "--scale", "smoke", "--only", "interlacing,drift_bound",
                 "--out", str(out)])
    doc = json.loads((out / "report.json").read_text())
    assert [c["name"] for c in doc["checks"]] == ["interlacing", "drift_bound"]
    assert all(c["measured"] for c in doc["checks"])
    assert code == (0 if doc["passed"] else 3)


@pytest.mark.parametrize("cmd", ["converge", "lyapunov-probe", "plot-export"])
def test_other_subcommands_run(tmp_path, cmd):
    out = tmp_path / cmd
    assert main([cmd, "--seed", "2", "--runs", "2", "--out", str(out), *FAST]) == 0
    assert (out / "metadata.json").exists()
    if cmd == "plot-export":
        assert {"field.png", "paths.png", "survival.png", "min_gap.png",
                "paths.csv"} <= set(os.listdir(out))


def test_exit_codes(tmp_path, monkeypatch, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("gamma = 1\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert "gamma" in capsys.readouterr().err
    assert main(["simulate", "--set", "alpha=1.0", "--out", str(tmp_path / "x")]) == 1
    assert main(["collide-test", "--runs", "3", "--out", str(tmp_path / "x"), *FAST]) == 1

    def singular(cfg, args):
        raise SingularError("exact overlap of two active particles", step=3, pair=(0, 1),
                            distance=0.0)
    monkeypatch.setitem(cli.COMMANDS, "simulate", (singular, ""))
    assert main(["simulate", "--out", str(tmp_path / "x")]) == 2

    failing = DiagnosticsReport([Check("c", False, {"x": 1}, {"tol": 0}, 1, "p")])
    monkeypatch.setattr("ljreact.verification.run_suite", lambda *a, **k: failing)
    assert main(["verify", "--out", str(tmp_path / "v")]) == 3


def test_help_lists_documented_flags(capsys):
    with pytest.raises(SystemExit):
        main(["simulate", "--help"])
    text = capsys.readouterr().out
    for flag in ("--seed", "--out", "--runs", "--dt", "--eps-levels"):
        assert flag in text
