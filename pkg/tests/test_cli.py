import json

import numpy as np
import pytest

from cbfcert.cli import load_run_config, main, simulate_summary
from cbfcert.config import ConfigError
from cbfcert.model import load_model

TINY = {
    "schema_version": 1,
    "synth": {"n_samples": 400, "warm_steps": 40, "steps": 40, "log_every": 20},
    "verify": {"lip_mode": "sampled", "lip_samples": 2000},
}


@pytest.fixture
def tiny(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(TINY))
    return cfg


def test_defaults_without_config():
    run = load_run_config(None)
    assert run.system == "benchmark" and run.verify.alpha == 0.2


def test_missing_config_exit_code(tmp_path):
    assert main(["synth", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "m.json")]) == 1


@pytest.mark.parametrize(
    "data",
    [
        {"schema_version": 1, "bogus": 1},
        {"schema_version": 2},
        {"schema_version": 1, "synth": {"learning_rate": 1}},
        {"schema_version": 1, "verify": {"alpha": 0.9, "alpha_bar": 0.4}},
        {"schema_version": 1, "system": "pendulum"},
    ],
)
def test_bad_configs_rejected(tmp_path, data):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(data))
    with pytest.raises(ConfigError):
        load_run_config(str(p))


def test_usage_error_is_config_error():
    with pytest.raises(SystemExit) as exc:
        main(["verify"])
    assert exc.value.code == 1


def test_synth_writes_model_and_log(tiny, tmp_path):
    out = tmp_path / "m.json"
    assert main(["synth", "--config", str(tiny), "--out", str(out), "--seed", "3"]) == 0
    model = load_model(out)
    assert model.meta["seed"] == 3
    log = (tmp_path / "m.log.csv").read_text().splitlines()
    assert log[0].startswith("step,stage,loss") and len(log) == 5


def test_synth_is_deterministic(tiny, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["synth", "--config", str(tiny), "--out", str(a)])
    main(["synth", "--config", str(tiny), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_refine_without_counterexamples_is_noop(tiny, tmp_path):
    m = tmp_path / "m.json"
    main(["synth", "--config", str(tiny), "--out", str(m)])
    cex = tmp_path / "cex.json"
    cex.write_text("[]")
    out = tmp_path / "r.json"
    assert main(["refine", str(m), str(cex), "--config", str(tiny), "--out", str(out)]) == 0
    assert out.read_bytes() == m.read_bytes()


def test_refine_with_counterexamples(tiny, tmp_path):
    m = tmp_path / "m.json"
    main(["synth", "--config", str(tiny), "--out", str(m)])
    cex = tmp_path / "cex.json"
    cex.write_text(json.dumps({"counterexamples": [{"state": [0.5, 0.5]}, {"state": [-1.0, 0.2]}]}))
    out = tmp_path / "r.json"
    assert main(["refine", str(m), str(cex), "--config", str(tiny), "--out", str(out), "--steps", "5"]) == 0
    assert out.read_bytes() != m.read_bytes()


def test_refine_rejects_malformed_counterexamples(tiny, tmp_path):
    m = tmp_path / "m.json"
    main(["synth", "--config", str(tiny), "--out", str(m)])
    cex = tmp_path / "cex.json"
    cex.write_text(json.dumps([{"x": [0, 0]}]))
    assert main(["refine", str(m), str(cex), "--out", str(tmp_path / "r.json")]) == 1


def test_missing_model_is_config_error(tmp_path):
    assert main(["verify", str(tmp_path / "none.json"), "--out", str(tmp_path / "r.json")]) == 1


def test_simulate_zero_steps(tiny, tmp_path):
    m = load_model_from_synth(tiny, tmp_path)
    sys_ = m.make_system()
    X0 = np.array([[1.5, 0.0], [0.0, 1.6]])
    s = simulate_summary(sys_, m, X0, 0, str(tmp_path / "t.csv"))
    assert s["steps"] == 0 and s["n_starts"] == 2 and s["unsafe_hits"] == 0
    assert s["max_h"] == pytest.approx(float(m.h(X0).max()))
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 3


def load_model_from_synth(cfg, tmp_path):
    out = tmp_path / "m.json"
    main(["synth", "--config", str(cfg), "--out", str(out)])
    return load_model(out)
