import json
import math

import pytest

from scalpos.cli_report import (
    EXIT_FAIL,
    EXIT_NUMERIC,
    EXIT_PASS,
    EXIT_USAGE,
    ConfigError,
    NumericReportError,
    RunConfig,
    content_hash,
    main,
    parse_config,
    render_json,
)


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_defaults_resolve_per_command():
    cfg = parse_config()
    assert (cfg.command, cfg.n, cfg.d, cfg.N, cfg.seed, cfg.samples) == ("surgery", 4, 1, 7, 0, 10000)
    assert parse_config(overrides={"command": "dims"}).n == 7
    assert parse_config(overrides={"command": "verify-chart"}).n == 2


def test_low_codimension_rejected_with_named_inequality():
    with pytest.raises(ConfigError, match=r"k: codimension n - d >= 3 violated"):
        parse_config(overrides={"n": 4, "d": 2, "N": 9})


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="colour: unknown key"):
        parse_config(_write(tmp_path / "c.json", {"colour": "red"}))


@pytest.mark.parametrize("bad", [{"seed": "x"}, {"spin": 1}, {"samples": 0}, {"seam_c0": -1.0}, {"command": "zap"}])
def test_bad_values_rejected(tmp_path, bad):
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path / "c.json", bad))


def test_flags_override_file(tmp_path):
    path = _write(tmp_path / "c.json", {"seed": 3, "samples": 50})
    cfg = parse_config(path, {"seed": 9})
    assert cfg.seed == 9 and cfg.samples == 50


def test_config_round_trip(tmp_path):
    cfg = parse_config(overrides={"command": "dims", "n": 9, "spin": True})
    again = parse_config(_write(tmp_path / "c.json", cfg.to_dict()))
    assert again == cfg
    assert content_hash(again) == content_hash(cfg)
    assert content_hash(cfg) == content_hash(RunConfig(**{**cfg.to_dict(), "out": "elsewhere"}))


def test_render_json_rejects_non_finite():
    with pytest.raises(NumericReportError):
        render_json({"min_scal": math.nan})
    with pytest.raises(NumericReportError):
        render_json({"x": [1.0, math.inf]})
    assert render_json({"b": 1, "a": 2.5}).index('"a"') < render_json({"b": 1, "a": 2.5}).index('"b"')


def test_dims_spin(tmp_path, capsys):
    assert main(["dims", "--n", "7", "--spin", "--out", str(tmp_path)]) == EXIT_PASS
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["budget"]["delta"] == 10 and rep["budget"]["ambient"] == 23
    assert (tmp_path / "summary.txt").exists() and (tmp_path / "run_record.json").exists()


@pytest.mark.parametrize(
    "argv,code",
    [
        (["verify-chart", "--preset", "round-sphere", "--samples", "200"], EXIT_PASS),
        (["verify-chart", "--preset", "clifford-torus", "--samples", "200"], EXIT_FAIL),
        (["veronese", "--field", "H"], EXIT_PASS),
        (["bending-profile"], EXIT_PASS),
        (["surgery", "--n", "5", "--d", "3", "--N", "10"], EXIT_USAGE),
        (["surgery", "--N", "6"], EXIT_USAGE),
        (["surgery", "--bogus"], EXIT_USAGE),
        (["dims", "--n", "4"], EXIT_USAGE),
    ],
)
def test_exit_codes(tmp_path, argv, code):
    assert main(argv + ["--out", str(tmp_path / "o")]) == code


def test_bending_profile_writes_csv(tmp_path):
    assert main(["bending-profile", "--out", str(tmp_path)]) == EXIT_PASS
    header = (tmp_path / "profile.csv").read_text().splitlines()[0]
    assert header == "s,a,b,a_prime,b_prime,kappa,sigma,piece"


def test_missing_config_file_is_usage_error(tmp_path):
    assert main(["dims", "--config", str(tmp_path / "none.json")]) == EXIT_USAGE


def test_surgery_report_is_byte_identical(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["surgery", "--samples", "1500", "--seed", "4", "--out", str(a)]) == EXIT_PASS
    assert main(["surgery", "--samples", "1500", "--seed", "4", "--out", str(b)]) == EXIT_PASS
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert main(["surgery", "--config", str(a / "run_record.json"), "--out", str(c)]) == EXIT_PASS
    assert (a / "report.json").read_bytes() == (c / "report.json").read_bytes()
    rep = json.loads((a / "report.json").read_text())
    assert rep["verdict"] == "pass"
    assert rep["config_hash"] == json.loads((a / "run_record.json").read_text())["content_hash"]


def test_non_finite_report_exits_numeric(tmp_path, monkeypatch):
    import scalpos.cli_report as cli

    real = cli._DISPATCH["dims"]

    def poisoned(cfg):
        report, extras = real(cfg)
        report["budget"]["delta"] = math.nan
        return report, extras

    monkeypatch.setitem(cli._DISPATCH, "dims", poisoned)
    assert main(["dims", "--out", str(tmp_path)]) == EXIT_NUMERIC
    assert not (tmp_path / "report.json").exists()
