from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from carleman_lab.cli import main
from carleman_lab.config import DEFAULTS, ConfigError, config_hash, echo, format_config, parse_config
from carleman_lab.serialize import dumps_report, loads_report, records_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
MINIMAL = "[domain]\nkind = torus\nlength = 1.0\n[potential]\nspec = weierstrass{alpha=0.5,levels=6}\n"
PLANE = (CONFIGS / "plane_wave.ini").read_text().replace("n = 128", "n = 64").replace(
    "h = 0.2, 0.1, 0.05, 0.025", "h = 0.2, 0.1, 0.05"
)


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert set(cfg.defaulted) == set(DEFAULTS) and len(DEFAULTS) == 6
    for attr, value in DEFAULTS.items():
        assert getattr(cfg, attr) == value
    assert cfg.seed is None and cfg.mode is None
    text = echo(cfg)
    assert text.count("(default)") == 6 and text.endswith("defaulted fields: 6\n")


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.ini")))
def test_shipped_configs_roundtrip(name):
    cfg = parse_config((CONFIGS / name).read_text())
    assert parse_config(format_config(cfg)) == cfg
    assert format_config(parse_config(format_config(cfg))) == format_config(cfg)


@pytest.mark.parametrize(
    "text, needle",
    [
        (MINIMAL + "[experiment]\nkappa = 2\n", "line 7: key 'kappa' in [experiment]"),
        (MINIMAL + "[experiment]\ncolour = red\n", "line 7: unknown key 'colour'"),
        (MINIMAL + "[plots]\n", "line 6: unknown section"),
        (MINIMAL + "[experiment]\nseed = 1\nseed = 2\n", "line 8: duplicate key"),
        (MINIMAL + "[experiment]\nh = 0.1, x\n", "line 7: key 'h'"),
        ("[domain]\nkind = torus\n", "missing required field: [domain] length"),
        ("kind = torus\n", "line 1: key 'kind' outside any section"),
        (MINIMAL.replace("length = 1.0", "length = -1"), "line 3: key 'length' in [domain]"),
    ],
)
def test_config_errors_carry_line_and_key(text, needle):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert needle in str(info.value)


def test_comments_ignored():
    cfg = parse_config("# header\n" + MINIMAL.replace("length = 1.0", "length = 1.0  # unit torus") + "; trailer\n")
    assert cfg.domain_length == 1.0


def test_config_hash_ignores_seed_only():
    a = parse_config(MINIMAL + "[experiment]\nseed = 1\n")
    b = parse_config(MINIMAL + "[experiment]\nseed = 2\n")
    c = parse_config(MINIMAL + "[experiment]\nseed = 1\nkappa = 0.25\n")
    assert config_hash(a) == config_hash(b) != config_hash(c)
    assert len(config_hash(a)) == 64


def _write_cfg(tmp_path, text=PLANE):
    path = tmp_path / "exp.ini"
    path.write_text(text)
    return path


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(_write_cfg(tmp_path)), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["mode"] == "local_to_global" and report["pass"] in (True, False)
    assert len(report["provenance"]["config_hash"]) == 64
    header = (out / "records.csv").read_text().splitlines()[0]
    assert header == "h,theta,omega,beta,lhs,rhs,ratio,log_ratio"
    assert "defaulted fields:" in (out / "config_echo.txt").read_text()
    assert "local_to_global:" in capsys.readouterr().out


def test_report_roundtrip_bytes(tmp_path):
    out = tmp_path / "out"
    main(["run", "--config", str(_write_cfg(tmp_path)), "--out", str(out)])
    text = (out / "report.json").read_text()
    rep = loads_report(text)
    assert dumps_report(rep) == text
    assert records_csv(rep) == (out / "records.csv").read_text()


def test_sweep_workers_byte_identical(tmp_path):
    cfg = _write_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", str(cfg), "--out", str(a), "--workers", "1"]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(b), "--workers", "2"]) == 0
    for name in ("report.json", "records.csv", "config_echo.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_fit_and_plot_data(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "out"
    main(["run", "--config", str(cfg), "--out", str(out)])
    before = (out / "records.csv").read_text()
    assert main(["fit", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "records.csv").read_text() == before
    assert main(["emit-plot-data", "--config", str(cfg), "--out", str(out)]) == 0
    scatter = (out / "plot_beta_log_ratio.csv").read_text().splitlines()
    assert scatter[0] == "alpha,beta,log_ratio" and len(scatter) == 4
    assert (out / "plot_loglog.csv").read_text().startswith("alpha,log_h,log_log_ratio")


def test_fit_without_report_is_an_error(tmp_path, capsys):
    out = tmp_path / "empty"
    out.mkdir()
    assert main(["fit", "--config", str(_write_cfg(tmp_path)), "--out", str(out)]) == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["command"] == "fit" and "no report" in record["message"]
    assert json.loads((out / "error.json").read_text()) == record


def test_bad_config_exit_code(tmp_path, capsys):
    path = _write_cfg(tmp_path, MINIMAL + "[experiment]\nkappa = 7\n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 2
    record = json.loads(capsys.readouterr().err.strip())
    assert record["error"] == "ConfigError" and "line 7" in record["message"]


def test_missing_config_and_bad_workers(tmp_path):
    assert main(["run", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--config", str(_write_cfg(tmp_path)), "--out", str(tmp_path), "--workers", "0"]) == 2


def test_seed_override_recorded(tmp_path):
    text = (CONFIGS / "checkerboard.ini").read_text()
    text = text.replace("n = 128", "n = 64").replace("h = 0.2, 0.1, 0.05, 0.025", "h = 0.2, 0.1")
    out = tmp_path / "out"
    assert main(["run", "--config", str(_write_cfg(tmp_path, text)), "--out", str(out), "--seed", "5"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["provenance"]["seed"] == 5


def test_verify_command(capsys):
    assert main(["verify"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS ") for line in lines)


def test_console_script_installed():
    assert shutil.which("carleman-lab") is not None
