import json
import math

import numpy as np
import pytest

ev = pytest.importorskip("eegvfusion")


def test_preprocess_and_psd_find_a_10hz_tone():
    fs = 200.0
    t = np.arange(int(30 * fs)) / fs
    x = np.vstack([np.sin(2 * np.pi * 10 * t), np.sin(2 * np.pi * 10 * t) + 0.5 * np.sin(2 * np.pi * 50 * t)])
    y = ev.preprocess(x, fs)
    assert y.shape == x.shape
    freqs, power = ev.welch_psd(y, fs)
    assert power.shape == (2, freqs.size)
    for row in power:
        assert freqs[np.argmax(row)] == pytest.approx(10.0)


def test_ipot_matches_exact_ot():
    rng = np.random.default_rng(0)
    for _ in range(10):
        c = rng.uniform(0, 2, size=(3, 3))
        plan, cost = ev.ipot(c, outer_iters=200)
        _, exact = ev.exact_ot(c)
        assert abs(cost - exact) < 1e-3
        assert np.allclose(plan.sum(axis=1), 1 / 3, atol=1e-9)
        assert np.allclose(plan.sum(axis=0), 1 / 3, atol=1e-9)
    with pytest.raises(ev.ContractError):
        ev.ipot(np.zeros((2, 2)), a=[0.5, 0.6])


def test_cosine_cost_examples():
    c = ev.cosine_cost(np.array([[1.0, 0.0]]), np.array([[3.0, 0.0], [0.0, 2.0], [-1.0, 0.0]]))
    assert np.allclose(c, [[0.0, 1.0, 2.0]])


def test_postprocess_and_metrics():
    grid = [0] * 60
    for t in list(range(10, 20)) + list(range(23, 35)):
        grid[t] = 1
    assert ev.postprocess_events(grid) == [(10.0, 35.0)]
    assert ev.postprocess_events([1] * 8 + [0] * 52) == []
    m = ev.evaluate_grids([([1, 0, 0, 1], [1, 1, 0, 0])])
    assert m["sample_sensitivity"] == 0.5
    assert m["balanced_accuracy"] == 0.5
    assert ev.evaluate_grids([([0, 1], [0, 0])])["sample_sensitivity"] is None


def test_config_profiles_and_overrides():
    assert set(ev.profile_names()) >= {"desk", "full", "smoke"}
    cfg = json.loads(ev.config_json("full"))
    assert cfg["mae"]["mask_ratio"] == 0.75
    a = ev.config_fingerprint(ev.config_json("smoke"))
    b = ev.config_fingerprint(ev.config_json("smoke", seed=8))
    assert a != b
    with pytest.raises(ev.ConfigError):
        ev.config_json("smoke", overrides=["mae.bogus=1"])


def test_smoke_pipeline(tmp_path):
    out = str(tmp_path / "run")
    for command in ["gen-data", "pretrain", "train", "detect", "eval"]:
        ev.run(command, profile="smoke", out=out)
    report = json.loads((tmp_path / "run" / "reports" / "fusion.json").read_text())
    ba = report["balanced_accuracy"]
    assert ba is None or 0.0 <= ba <= 1.0
    log = ev.run("psd", profile="smoke", out=out, source="s000")
    assert "Hz" in log
    assert (tmp_path / "run" / "psd" / "s000.csv").exists()
    with pytest.raises(ev.Error):
        ev.run("pretrain", profile="smoke", out=str(tmp_path / "empty"))
    assert not math.isnan(report["hours"])
