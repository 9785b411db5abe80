import json
from importlib import resources

import pytest

from csipred import csvio
from csipred.cli import main
from csipred.config import ExperimentConfig, config_from_dict, load_config
from csipred.errors import ConfigurationError

SMALL = {
    "channel": {"n_slots": 3000, "n_rb": 8},
    "predictors": [{"kind": "wiener", "input_len": 4, "t_csi": 8}],
    "scale": {"train_slots": 3000, "test_slots": 1000},
}


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_defaults_and_seed_derivation():
    exp = load_config()
    assert exp.to_dict() == ExperimentConfig().to_dict()
    assert (exp.train_seed, exp.test_seed) == (1, 2)
    assert exp.with_seed(3).train_seed == 7


@pytest.mark.parametrize("data", [{"bogus": 1}, {"channel": {"dopler_hz": 5}}, {"scale": {"slots": 1}},
                                  {"predictors": [{"kind": "gru", "layers": 2}]}, {"predictors": []}])
def test_unknown_keys_rejected(data):
    with pytest.raises(ConfigurationError):
        config_from_dict(data)


def test_missing_files_rejected(tmp_path):
    with pytest.raises(ConfigurationError, match="CQI table"):
        config_from_dict({"cqi_table": "nope.json"}, tmp_path)
    with pytest.raises(ConfigurationError):
        config_from_dict({"channel": {"profiles_path": str(tmp_path / "none.json")}})
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.json")


def test_cli_config_errors_exit_2(tmp_path, capsys):
    assert main(["generate", "--config", _write(tmp_path, {"bogus": 1})]) == 2
    assert "unknown key" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["train", "--config", str(bad)]) == 2


def test_unknown_figure_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--figure", "fig99"])
    assert exc.value.code == 2
    assert "invalid choice" in capsys.readouterr().err


def test_generate_is_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["generate", "--config", cfg, "--seed", "5", "--out", str(a)]) == 0
    assert main(["generate", "--config", cfg, "--seed", "5", "--out", str(b)]) == 0
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["fractions"] == [0.784, 0.196, 0.02]
    assert manifest["train_seed"] == 11 and manifest["configs"][0]["seed"] == 11
    for name in manifest["files"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    meta, header, rows = csvio.read_csv(a / "train_track0.csv")
    assert meta["seed"] == "5" and len(rows) == manifest["split_sizes"][0]


def test_generate_seed_changes_output(tmp_path):
    cfg = _write(tmp_path, SMALL)
    main(["generate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "a")])
    main(["generate", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a/trace.csv").read_bytes() != (tmp_path / "b/trace.csv").read_bytes()


def test_train_writes_summary(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    _, header, rows = csvio.read_csv(out / "train_summary.csv")
    assert header[0] == "predictor" and rows[0][0] == "wiener"
    assert rows[0][3] == str(7 * 7)
    assert (out / "wiener_best_cqi_T8_track0.wiener").exists()


def test_verify_passes():
    assert main(["verify"]) == 0


def test_verify_gradient_fault_fails(capsys):
    assert main(["verify", "--inject-fault", "gradient"]) == 1
    assert "[FAIL] gradients" in capsys.readouterr().out


def test_verify_corrupted_table_fails(tmp_path, capsys):
    src = resources.files("csipred").joinpath("data/cqi_table.json").read_text()
    data = json.loads(src)
    data["entries"][5]["spectral_eff"] = 0.01
    assert main(["verify", "--table", _write(tmp_path, data, "table.json")]) == 1
    assert "[FAIL] cqi-table" in capsys.readouterr().out
