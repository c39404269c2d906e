import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

import kabi


def test_oscillator_basics():
    r, psi = kabi.order_parameter([0.0, math.pi / 2])
    assert r == pytest.approx(math.sqrt(2) / 2)
    assert psi == pytest.approx(math.pi / 4)
    assert kabi.drift_pairwise([0.0, math.pi / 2], [0.0, 0.0], 2.0) == pytest.approx([1.0, -1.0])
    rng = np.random.default_rng(0)
    p, w = rng.uniform(-3, 3, 20), rng.normal(size=20)
    assert np.allclose(kabi.drift_pairwise(p, w, 1.7), kabi.drift_meanfield(p, w, 1.7), atol=1e-10)
    assert kabi.critical_coupling(0.5) == pytest.approx(0.7978845608, abs=1e-9)
    with pytest.raises(ValueError):
        kabi.critical_coupling(0.0)


def test_features_and_simulation():
    s = kabi.summarize_step([0.0, math.pi / 2, math.pi, 3 * math.pi / 2])
    assert s["r"] == pytest.approx(0.0, abs=1e-15)
    assert s["std_sin"] == pytest.approx(math.sqrt(0.5))
    phases = kabi.simulate_mean_field(n_oscillators=50, kappa=4.0, seed=3, n_steps=400)
    assert phases.shape == (41, 50)
    feats = kabi.summarize_rows(phases)
    assert feats.shape == (41, 6)
    assert np.allclose(feats[:, 0] ** 2, feats[:, 2] ** 2 + feats[:, 4] ** 2, atol=1e-12)
    ctx = kabi.simulate_features("simple", [2.0], seed=5)
    assert ctx.shape == (100, 6)
    assert np.array_equal(ctx, kabi.simulate_features("simple", [2.0], seed=5))


def test_metrics():
    rng = np.random.default_rng(1)
    draws, truths = [], []
    for _ in range(100):
        mu = rng.uniform(1, 4)
        draws.append(rng.normal(mu, 0.3, size=(400, 1)))
        truths.append([rng.normal(mu, 0.3)])
    rep = kabi.evaluate(draws, truths, [0.0], [5.0])
    k1 = rep["parameters"]["kappa_1"]
    assert rep["n_test"] == 100
    assert 0.0 <= k1["calibration_error"] <= 0.1
    assert k1["posterior_contraction"] > 0.9
    stat, p = kabi.ks_uniform(np.linspace(0.005, 0.995, 100))
    assert p > 0.99
    assert 0.0 <= kabi.pit(draws[0], truths[0])[0] <= 1.0
    prior = kabi.sample_prior([0.0], [5.0], 1000, seed=2)
    assert prior.shape == (1000, 1) and prior.min() >= 0.0 and prior.max() <= 5.0


def test_cli_roundtrip(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "simple", "simulate": {"thetas": [[1.0]]}}))
    assert kabi.run_cli(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == 0
    manifest = json.loads((tmp_path / "sim" / "manifest.json").read_text())
    assert manifest["valid"] is True
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenario": "simple", "simulation": {"dtt": 1}}))
    assert kabi.run_cli(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    with pytest.raises(FileNotFoundError):
        kabi.posterior_sample(str(tmp_path / "missing.kflow"), [0.0])
