import json

import pytest

from blockaloha import BlockShape, chi, slot_success_prob
from blockaloha.cli import ConfigError, load_run_config, main, parse_config_file


def run_cli(*args):
    return main(list(args))


def test_default_parameters():
    cfg = load_run_config()
    assert cfg.params.lam == 1e-4
    assert cfg.params.alpha == 3.0
    assert cfg.params.gamma == 0.1
    assert cfg.params.xi == pytest.approx(10.0)  # 40 dBm
    assert cfg.params.N0 == 1e-17
    assert cfg.shape.T == 5
    assert cfg.optimizer.eta_curr == 3.0
    assert cfg.optimizer.K == 400


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment line\n"
        "lambda = 2e-4\n"
        "xi = 30dBm  # one watt\n"
        "v = 3\n"
    )
    cfg = load_run_config(str(path), {"v": "4", "seed": "9"})
    assert cfg.params.lam == 2e-4
    assert cfg.params.xi == pytest.approx(1.0)
    assert cfg.shape.v == 4  # CLI override beats the file
    assert cfg.seed == 9


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("lambdda = 1e-4\n")
    with pytest.raises(ConfigError):
        load_run_config(str(path))
    with pytest.raises(ConfigError):
        load_run_config(None, {"nope": "1"})


def test_config_error_exit_code(tmp_path):
    assert run_cli("optimize", "--outdir", str(tmp_path), "--set", "alpha=1.5") == 2
    assert run_cli("optimize", "--outdir", str(tmp_path), "--set", "bogus=1") == 2


def test_parse_config_rejects_garbage(tmp_path):
    path = tmp_path / "g.cfg"
    path.write_text("just some words\n")
    with pytest.raises(ConfigError):
        parse_config_file(path)


def test_chi_table_matches_library(tmp_path, capsys):
    assert run_cli("chi-table", "--outdir", str(tmp_path), "--x-step", "0.25") == 0
    lines = (tmp_path / "chi_table.csv").read_text().splitlines()
    header = [l for l in lines if not l.startswith("#")][0].split(",")
    assert header[0] == "x"
    data = [l.split(",") for l in lines if not l.startswith("#")][1:]
    assert len(data) == 5
    for row in data:
        x = float(row[0])
        for j, v in enumerate(range(1, 6), start=1):
            assert float(row[j]) == pytest.approx(chi(BlockShape(5, v), x), abs=1e-15)


def test_success_prob_output(tmp_path):
    assert run_cli("success-prob", "--outdir", str(tmp_path), "--points", "3") == 0
    lines = (tmp_path / "success_prob.csv").read_text().splitlines()
    rows = [l.split(",") for l in lines if not l.startswith("#")][1:]
    cfg = load_run_config()
    for lam, closed, quadr in rows:
        assert float(closed) == pytest.approx(
            slot_success_prob(cfg.params, float(lam)), rel=1e-15
        )
        assert float(quadr) == pytest.approx(float(closed), rel=1e-9)


def test_demo_plant_pattern(tmp_path):
    code = run_cli(
        "demo-plant", "--outdir", str(tmp_path), "--set", "v=3", "--G", "01110"
    )
    assert code == 0
    meta = json.loads((tmp_path / "plant_trace.meta.json").read_text())
    assert meta["controllable"] is True
    assert meta["target_slot"] == 3
    lines = (tmp_path / "plant_trace.csv").read_text().splitlines()
    rows = [l.split(",") for l in lines if not l.startswith("#")][1:]
    assert [r[1] for r in rows] == ["control"] * 4 + ["dummy"]


def test_demo_plant_all_success(tmp_path):
    assert run_cli("demo-plant", "--outdir", str(tmp_path), "--G", "11111") == 0
    meta = json.loads((tmp_path / "plant_trace.meta.json").read_text())
    assert meta["target_slot"] == 1  # v = 2 successes complete at slot index 1


def test_demo_plant_bad_pattern(tmp_path):
    assert run_cli("demo-plant", "--outdir", str(tmp_path), "--G", "01") == 2
    assert run_cli("demo-plant", "--outdir", str(tmp_path), "--G", "01x10") == 2


def test_demo_plant_seeded_matches_run_detector(tmp_path):
    from oracles import max_run

    for seed in (1, 2, 3, 4):
        assert run_cli(
            "demo-plant", "--outdir", str(tmp_path), "--seed", str(seed)
        ) == 0
        meta = json.loads((tmp_path / "plant_trace.meta.json").read_text())
        assert meta["controllable"] == (max_run(meta["flags"]) >= 2)


def test_optimize_small_run(tmp_path):
    assert run_cli("optimize", "--outdir", str(tmp_path), "--set", "K=3") == 0
    text = (tmp_path / "trace.csv").read_text()
    lines = text.splitlines()
    header_comments = [l for l in lines if l.startswith("#")]
    assert any("P_O" in c for c in header_comments)  # documented columns
    rows = [l.split(",") for l in lines if not l.startswith("#")]
    assert rows[0][0] == "k"
    assert len(rows) == 4  # header + 3 blocks
    meta = json.loads((tmp_path / "trace.meta.json").read_text())
    assert meta["config"]["K"] == "3"
    assert "versions" in meta


def test_optimize_byte_identical(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    for d in (d1, d2):
        assert run_cli("optimize", "--outdir", str(d), "--set", "K=4") == 0
    assert (d1 / "trace.csv").read_bytes() == (d2 / "trace.csv").read_bytes()
    assert (d1 / "trace.meta.json").read_text() == (d2 / "trace.meta.json").read_text()


def test_validate_quick_passes_and_is_deterministic(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    code1 = run_cli(
        "validate", "--outdir", str(d1), "--episodes-scale", "0.05", "--workers", "1"
    )
    code2 = run_cli(
        "validate", "--outdir", str(d2), "--episodes-scale", "0.05", "--workers", "3"
    )
    assert code1 == 0 and code2 == 0
    assert (d1 / "validation.csv").read_bytes() == (d2 / "validation.csv").read_bytes()
    lines = (d1 / "validation.csv").read_text().splitlines()
    rows = [l for l in lines if not l.startswith("#")][1:]
    assert len(rows) >= 10


def test_validate_perturbation_fails(tmp_path):
    code = run_cli(
        "validate",
        "--outdir",
        str(tmp_path),
        "--episodes-scale",
        "0.05",
        "--perturb-rho",
        "0.05",
    )
    assert code == 1


def test_csv_float_format_round_trips(tmp_path):
    assert run_cli("optimize", "--outdir", str(tmp_path), "--set", "K=2") == 0
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    rows = [l.split(",") for l in lines if not l.startswith("#")][1:]
    from blockaloha import run_horizon

    cfg = load_run_config(None, {"K": "2"})
    trace = run_horizon(cfg.params, cfg.shape, cfg.optimizer)
    assert float(rows[0][4]) == trace.records[0].rho  # exact round trip
    assert float(rows[1][15]) == trace.records[1].cost
