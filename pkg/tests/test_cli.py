"""The batch runner: configuration handling, exit codes and reproducible outputs."""

import json

import pytest

from opelab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NUMERIC, EXIT_PASS, OUTPUT_ENV, config_hash, main
from opelab.free_field import read_binary

SMALL_GRID = ["--n-per-side", "512", "--box-length", "8"]


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def test_power_count_defaults(tmp_path):
    code, out = run(tmp_path, "power-count")
    assert code == EXIT_PASS
    rep = json.loads((out / "power-count.json").read_text())
    assert rep["pass"] and rep["report"]["n_failures"] == 0
    assert rep["nu_single_factor"] == "7/100"
    assert rep["config"]["max_m"] == 2 and rep["config"]["max_n"] == 2


def test_lemma_check_local_l1(tmp_path):
    code, out = run(tmp_path, "lemma-check", "--lemma", "local_l1", "--d", "1", "--alpha", "0", "--n-anchors", "5")
    assert code == EXIT_PASS
    rep = json.loads((out / "lemma-check.json").read_text())
    assert rep["K"] == [4.0]
    assert rep["max_ratio"] <= 1


def test_lemma_check_random_draws(tmp_path):
    code, out = run(tmp_path, "lemma-check", "--lemma", "global_beta", "--draws", "2", "--n-anchors", "3")
    assert code == EXIT_PASS
    assert len(json.loads((out / "lemma-check.json").read_text())["reports"]) == 2


def test_missing_required_key_writes_nothing(tmp_path, capsys):
    code, out = run(tmp_path, "sample")
    assert code == EXIT_CONFIG
    assert not out.exists()
    assert "seed" in capsys.readouterr().err


def test_config_error_reports_line(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 1\nr: -3\nsamples: 10\n")
    code, out = run(tmp_path, "wick2", "--config", str(cfg))
    assert code == EXIT_CONFIG and not out.exists()
    err = capsys.readouterr().err
    assert "line 3" in err and "samples" in err


def test_config_type_error_reports_line(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("# experiment\nseed: one\n")
    assert run(tmp_path, "sample", "--config", str(cfg))[0] == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_config_for_other_subcommand(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("subcommand: pinsum\n")
    assert run(tmp_path, "power-count", "--config", str(cfg))[0] == EXIT_CONFIG


def test_unreadable_yaml(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 1\nr: [1, 2\n")
    assert run(tmp_path, "wick2", "--config", str(cfg))[0] == EXIT_CONFIG
    assert "line" in capsys.readouterr().err


def test_unknown_lemma(tmp_path):
    assert run(tmp_path, "lemma-check", "--lemma", "nope", "--alpha", "0")[0] == EXIT_CONFIG


def test_numerical_error_exit(tmp_path):
    # width 2^-8 is below two lattice spacings of a 512-site box of side 8
    code, _ = run(tmp_path, "wick2", "--seed", "1", "--r", "-8", *SMALL_GRID)
    assert code == EXIT_NUMERIC


def test_failed_check_exit(tmp_path):
    code, out = run(tmp_path, "covariance", "--seed", "2", "--n-samples", "20", "--tolerance", "0", *SMALL_GRID)
    assert code == EXIT_FAIL
    assert json.loads((out / "covariance.json").read_text())["pass"] is False


def test_reruns_are_byte_identical(tmp_path):
    args = ["wick2", "--seed", "4", "--r", "-3", "--n-samples", "200", *SMALL_GRID]
    code_a, a = run(tmp_path, *args, name="a")
    code_b, b = run(tmp_path, *args, "--workers", "3", name="b")
    assert code_a == code_b
    for name in ("wick2.json", "wick2.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_every_output_carries_config_hash(tmp_path):
    code, out = run(tmp_path, "sample", "--seed", "3", "--n-samples", "2", "--format", "csv", *SMALL_GRID)
    assert code == EXIT_PASS
    resolved = json.loads((out / "sample.config.json").read_text())
    h = resolved["config_hash"]
    assert len(h) == 16
    for path in out.iterdir():
        assert f"config_hash={h}" in path.read_text() or f'"config_hash": "{h}"' in path.read_text(), path.name
    cfg = {k: v for k, v in resolved["config"].items() if k not in ("workers", "output_dir")}
    assert config_hash(cfg) == h


def test_binary_samples_round_trip(tmp_path):
    code, out = run(tmp_path, "sample", "--seed", "3", *SMALL_GRID)
    assert code == EXIT_PASS
    grid, dim_phi, seed, values = read_binary(out / "field_00000.bin")
    assert (grid.n_per_side, dim_phi, seed, values.shape) == (512, 0.2, 3, (512,))


def test_output_directory_from_environment(tmp_path, monkeypatch):
    env_dir = tmp_path / "from-env"
    monkeypatch.setenv(OUTPUT_ENV, str(env_dir))
    monkeypatch.chdir(tmp_path)
    assert main(["power-count", "--max-m", "1", "--max-n", "1"]) == EXIT_PASS
    assert (env_dir / "power-count.json").exists()
    # --out wins over the environment
    assert main(["power-count", "--max-m", "1", "--max-n", "1", "--out", str(tmp_path / "explicit")]) == EXIT_PASS
    assert (tmp_path / "explicit" / "power-count.json").exists()


def test_default_output_directory(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    monkeypatch.chdir(tmp_path)
    assert main(["power-count", "--max-m", "1", "--max-n", "1"]) == EXIT_PASS
    assert (tmp_path / "opelab-output" / "power-count.config.json").exists()


def test_config_document_and_override(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("subcommand: pinsum\nn_configs: 20\nclaim_configs: 5\n")
    code, out = run(tmp_path, "pinsum", "--config", str(cfg), "--max-p", "4")
    assert code == EXIT_PASS
    rep = json.loads((out / "pinsum.json").read_text())
    assert rep["pinsum"]["checked"] == 20 and rep["config"]["max_p"] == 4


def test_moment_check_default_spectators(tmp_path):
    code, out = run(tmp_path, "moment-check", "--seed", "1", "--n-samples", "1000", "--mc-samples", "20000")
    assert code == EXIT_PASS
    rep = json.loads((out / "moment-check.json").read_text())
    assert rep["ipc"]["method"] == "grid"


@pytest.mark.parametrize("mode", ["telescoping", "mollifier"])
def test_renorm_converge_writes_table(tmp_path, mode):
    args = ["renorm-converge", "--seed", "1", "--n-samples", "300", "--mode", mode, "--r-min", "-3", *SMALL_GRID]
    code, out = run(tmp_path, *args)
    assert code in (EXIT_PASS, EXIT_FAIL)
    lines = (out / "renorm-converge.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == "r,norm,stderr,fitted_slope,exact_norm"
    assert len(lines) == 2 + 3
    summary = json.loads((out / "renorm-converge.json").read_text())
    assert {"nu_pred", "nu_fit", "seed", "config_hash"} <= set(summary)


def test_kappa_calibrate(tmp_path):
    code, out = run(tmp_path, "kappa-calibrate", "--d", "3", "--dim-phi", "0.5")
    assert code == EXIT_PASS
    rep = json.loads((out / "kappa-calibrate.json").read_text())
    assert rep["calibration"]["selected_convention"] == "paper_formula_over_2pi_d"
