"""Smoke tests for the _abcsmc extension module."""

import math
import os

import pytest

import _abcsmc as core

DATA_DIR = os.environ.get("ABCSMC_DATA_DIR", "data")


def test_models_simulate_and_replay():
    for name in ["quadratic", "gm", "mg1", "slcp", "seir"]:
        model = core.Model(name)
        theta = model.prior_sample(seed=1)
        assert len(theta) == model.dim_theta
        y = model.simulate(theta, seed=2)
        assert y == model.simulate(theta, seed=2)
        s = model.summarize(y)
        assert len(s) == model.dim_summary
        assert model.distance(s, s) == 0.0
        assert math.isfinite(model.prior_logpdf(theta))


def test_quadratic_formula():
    model = core.Model("quadratic")
    y = model.simulate([2.0, 1.0], seed=7)[0]
    assert abs(y - 1.0) < 0.1  # mean 1, sd 0.01


def test_invalid_model_raises():
    with pytest.raises(core.AbcsmcError):
        core.Model("nope")


def test_systematic_resample():
    assert core.systematic_resample([3.0, 1.0], 4, 0.1) == [0, 0, 0, 1]
    assert core.systematic_resample([1.0] * 5, 5, 0.4) == [0, 1, 2, 3, 4]


def test_wasserstein():
    assert core.wasserstein([[0.0]], [[3.0]]) == pytest.approx(3.0)
    a = [[0.0, 0.0], [1.0, 0.0]]
    b = [[0.0, 1.0], [1.0, 1.0]]
    assert core.wasserstein(a, b) == pytest.approx(1.0)
    with pytest.raises(core.AbcsmcError):
        core.wasserstein([[0.0]], [[0.0, 1.0]])


def test_gaussian_mixture_fit():
    rows = [[-5.0 + 0.01 * i] for i in range(100)]
    rows += [[5.0 + 0.01 * i] for i in range(100)]
    fit = core.fit_gaussian_mixture(rows, k=2, seed=3)
    assert len(fit["weights"]) == 2
    assert sum(fit["weights"]) == pytest.approx(1.0)
    means = sorted(m[0] for m in fit["means"])
    assert means[0] == pytest.approx(-4.5, abs=0.5)
    assert means[1] == pytest.approx(5.5, abs=0.5)


def test_gm_exact_posterior():
    draws = core.gm_exact_posterior_sample(0.0, 20000, seed=4)
    mean = sum(draws) / len(draws)
    assert abs(mean) < 0.05
    assert all(-10.0 <= d <= 10.0 for d in draws)


def test_flow_train_and_density():
    import random

    rnd = random.Random(5)
    train = [[rnd.gauss(0, 1)] for _ in range(300)]
    test = [[rnd.gauss(0, 1)] for _ in range(100)]
    fit = core.train_flow(train, test, bins=8, hidden=6, max_epochs=10, seed=6)
    lp = core.flow_logpdf(fit["flow_json"], [0.0])
    assert math.isfinite(lp)
    sample = core.flow_sample(fit["flow_json"], 50, seed=7)
    assert len(sample) == 50


def test_run_end_to_end_and_determinism():
    config = """
[run]
model = "gm"
kernel = "one_hit"
proposal = "mixture"
components = 3
n_particles = 80
max_iterations = 3
seed = 11
"""
    records = core.run(config, data_dir=DATA_DIR)
    assert len(records) == 1
    rec = records[0]
    assert rec["iterations"] == 3
    assert len(rec["output_sample"]) == 80
    again = core.run(config, data_dir=DATA_DIR)
    assert again[0]["final_epsilon"] == rec["final_epsilon"]
    assert again[0]["output_sample"] == rec["output_sample"]


def test_format_sig3():
    assert core.format_sig3(0.0058462) == "5.85e-03"
    assert core.format_sig3(25.46) == "25.5"
