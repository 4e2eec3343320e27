"""Config runner tests: parsing, determinism, artifacts, exit codes."""

import json

import pytest

from siltlab.cli import ConfigError, ExperimentConfig, main, parse_config, report
from siltlab.mc import parse_ensemble_csv
from siltlab.stable import StableSpec


def write_config(tmp_path, body, name="exp.toml"):
    conf = tmp_path / name
    conf.write_text(body)
    return str(conf)


# ------------------------------------------------- config parsing


def test_round_trip_defaults_and_custom():
    cfg = ExperimentConfig()
    assert parse_config(cfg.to_toml()) == cfg
    custom = ExperimentConfig(
        command="tails",
        spec=StableSpec(dim=2, beta=1.8, family="separable", coeffs=(1.0, 2.0)),
        t_end=2.0,
        n_steps=256,
        eps_ladder=(0.1, 0.05),
        n_reps=50,
        seed=9,
        grid_L=64.0,
        grid_N=512,
        lam=2.0,
        tol=1e-5,
        max_iter=500,
        out_dir="elsewhere",
        formats=("csv",),
    )
    assert parse_config(custom.to_toml()) == custom
    assert custom.config_hash() != cfg.config_hash()


def test_hash_ignores_output_section():
    a = ExperimentConfig(out_dir="x", formats=("csv",))
    b = ExperimentConfig(out_dir="y", formats=("csv", "svg"))
    assert a.config_hash() == b.config_hash()


def test_unknown_keys_named():
    with pytest.raises(ConfigError, match='"spec.bta"'):
        parse_config('command = "sample"\n[spec]\nbta = 0.8\n')
    with pytest.raises(ConfigError, match='"solver.step"'):
        parse_config('[solver]\nstep = 3\n')
    with pytest.raises(ConfigError, match='"experiment"'):
        parse_config('experiment = "sample"\n')


def test_config_validation_errors():
    with pytest.raises(ConfigError, match="command"):
        parse_config('command = "samp"\n')
    with pytest.raises(ConfigError, match="TOML"):
        parse_config("command = [unterminated\n")
    with pytest.raises(ConfigError, match="spec.beta"):
        parse_config('[spec]\nbeta = "wide"\n')
    with pytest.raises(ConfigError, match="run.n_steps"):
        parse_config("[run]\nn_steps = 2.5\n")
    with pytest.raises(ConfigError, match="eps_ladder"):
        parse_config("[run]\neps_ladder = [0.1, 0.2]\n")
    with pytest.raises(ConfigError, match="set together"):
        parse_config("[solver]\nL = 32.0\n")
    with pytest.raises(ConfigError, match="formats"):
        parse_config('[output]\nformats = ["svg"]\n')
    with pytest.raises(ConfigError, match="formats"):
        parse_config('[output]\nformats = ["csv", "pdf"]\n')


# ------------------------------------------------- runs and artifacts


def test_sample_run_is_deterministic(tmp_path):
    conf = write_config(
        tmp_path,
        'command = "sample"\n'
        "[run]\nn_reps = 3\nn_steps = 16\n"
        f'[output]\nout_dir = "{tmp_path}/a"\n',
    )
    assert main(["--config", conf]) == 0
    assert main(["--config", conf, "--out-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "paths.csv").read_bytes()
    b = (tmp_path / "b" / "paths.csv").read_bytes()
    assert a == b

    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert set(manifest) == {
        "config_hash", "command", "started_at", "elapsed_s", "artifact_list",
        "versions", "config", "statuses", "incomplete",
    }
    assert manifest["artifact_list"] == ["paths.csv"]
    assert manifest["incomplete"] is False
    assert manifest["versions"]["siltlab"]


def test_seed_override_changes_data(tmp_path):
    conf = write_config(
        tmp_path,
        'command = "sample"\n[run]\nn_reps = 1\nn_steps = 8\n'
        f'[output]\nout_dir = "{tmp_path}/s0"\n',
    )
    main(["--config", conf])
    main(["--config", conf, "--seed", "1", "--out-dir", str(tmp_path / "s1")])
    a = (tmp_path / "s0" / "paths.csv").read_text()
    b = (tmp_path / "s1" / "paths.csv").read_text()
    assert a != b
    assert '"seed":1' in b.split("\n")[1]


def test_env_overrides(tmp_path, monkeypatch):
    conf = write_config(
        tmp_path,
        'command = "sample"\n[run]\nn_reps = 1\nn_steps = 8\n',
    )
    monkeypatch.setenv("SILTLAB_OUT_DIR", str(tmp_path / "env_out"))
    monkeypatch.setenv("SILTLAB_WORKERS", "1")
    assert main(["--config", conf]) == 0
    assert (tmp_path / "env_out" / "paths.csv").exists()


def test_gamma_ensemble_artifact_and_worker_invariance(tmp_path):
    body = (
        'command = "gamma-ensemble"\n'
        "[spec]\nbeta = 0.8\n"
        "[run]\nn_reps = 6\nn_steps = 64\neps_ladder = [0.1, 0.05]\n"
    )
    conf = write_config(tmp_path, body + f'[output]\nout_dir = "{tmp_path}/w1"\n')
    assert main(["--config", conf, "--workers", "1"]) == 0
    assert main(["--config", conf, "--workers", "2",
                 "--out-dir", str(tmp_path / "w2")]) == 0
    one = (tmp_path / "w1" / "ensemble.csv").read_bytes()
    two = (tmp_path / "w2" / "ensemble.csv").read_bytes()
    assert one == two
    ens = parse_ensemble_csv(one.decode())
    assert ens.plan.spec == StableSpec(dim=1, beta=0.8)
    assert ens.plan.eps_ladder == (0.1, 0.05)
    summary = json.loads((tmp_path / "w1" / "gamma_summary.json").read_text())
    assert len(summary["rungs"]) == 2 and summary["n_failures"] == 0


def test_empty_ensemble_reports_n0(tmp_path):
    conf = write_config(
        tmp_path,
        'command = "gamma-ensemble"\n[spec]\nbeta = 0.8\n[run]\nn_reps = 0\n'
        f'[output]\nout_dir = "{tmp_path}/e"\n',
    )
    assert main(["--config", conf]) == 0
    assert "n=0" in report(tmp_path / "e")


def test_variational_run_and_nonconvergence(tmp_path):
    ok = write_config(
        tmp_path,
        'command = "variational"\n[spec]\nbeta = 1.0\n'
        "[solver]\nL = 64.0\nN = 2048\n"
        f'[output]\nout_dir = "{tmp_path}/v"\n',
        name="ok.toml",
    )
    assert main(["--config", ok]) == 0
    rec = json.loads((tmp_path / "v" / "constants.json").read_text())
    assert rec["a_value"] > 0 and rec["kappa"] > 0
    assert "incomplete" not in rec

    bad = write_config(
        tmp_path,
        'command = "variational"\n[spec]\nbeta = 1.0\n'
        "[solver]\nL = 64.0\nN = 2048\ntol = 1e-13\nmax_iter = 2\n"
        f'[output]\nout_dir = "{tmp_path}/vbad"\n',
        name="bad.toml",
    )
    assert main(["--config", bad]) == 2
    mani = json.loads((tmp_path / "vbad" / "manifest.json").read_text())
    assert mani["incomplete"] is True
    partial = json.loads((tmp_path / "vbad" / "constants.json").read_text())
    assert partial["incomplete"] is True


def test_exit_codes_for_validation(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "missing.toml")]) == 1
    conf = write_config(tmp_path, '[spec]\nbta = 0.8\n')
    assert main(["--config", conf]) == 1
    assert '"spec.bta"' in capsys.readouterr().err
    gated = write_config(
        tmp_path,
        'command = "gamma-ensemble"\n[spec]\nbeta = 0.5\n'
        f'[output]\nout_dir = "{tmp_path}/g"\n',
        name="gated.toml",
    )
    assert main(["--config", gated]) == 1


def test_lil_command_artifacts(tmp_path):
    conf = write_config(
        tmp_path,
        'command = "lil"\n[spec]\nbeta = 1.0\n[run]\nt_end = 64.0\n'
        f'[output]\nout_dir = "{tmp_path}/l"\n',
    )
    assert main(["--config", conf]) == 0
    svg = (tmp_path / "l" / "trajectory.svg").read_text()
    assert svg.startswith("<svg ") and svg.rstrip().endswith("</svg>")
    rows = (tmp_path / "l" / "trajectory.csv").read_text().strip().split("\n")
    assert rows[2].startswith("t,value,")
    assert len(rows) == 3 + 12


def test_all_command_statuses_and_report(tmp_path):
    conf = write_config(
        tmp_path,
        'command = "all"\n[spec]\nbeta = 0.8\n'
        "[run]\nn_reps = 5\nn_steps = 64\n"
        "[solver]\nL = 64.0\nN = 1024\n"
        f'[output]\nout_dir = "{tmp_path}/all"\n',
    )
    assert main(["--config", conf]) == 0
    mani = json.loads((tmp_path / "all" / "manifest.json").read_text())
    assert mani["statuses"]["sample"] == "ok"
    assert mani["statuses"]["variational"] == "ok"
    assert mani["statuses"]["tails"].startswith("skipped")
    assert mani["statuses"]["lil"].startswith("skipped")
    text = report(tmp_path / "all")
    assert "== variational ==" in text and "skipped" in text


def test_report_names_missing_artifacts(tmp_path):
    conf = write_config(
        tmp_path,
        'command = "scaling-test"\n[spec]\nbeta = 0.8\n'
        "[run]\nt_end = 2.0\nn_reps = 10\nn_steps = 64\n"
        f'[output]\nout_dir = "{tmp_path}/r"\n',
    )
    assert main(["--config", conf]) == 0
    (tmp_path / "r" / "scaling.json").unlink()
    assert "artifact missing: scaling.json" in report(tmp_path / "r")
    assert "no manifest" in report(tmp_path / "nowhere")
