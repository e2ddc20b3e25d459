import numpy as np
import pytest

from asyncact import SystemConfig, simulate_trial
from asyncact.centralized import alg1_solve
from asyncact.evaluation import (
    aggregate,
    detection_metrics,
    device_scores,
    equal_error_point,
    equal_error_rate,
    rates,
    roc_sweep,
    run_monte_carlo,
)
from asyncact.experiment import AlgorithmSpec


def test_worked_example():
    truth = np.array([1, 0, 0, 0, 0, 1])
    soft = np.array([0.1, 0.9, 0.6, 0.0, 0.0, 0.8])
    pm, pf = detection_metrics(soft, truth, 0.5, 2)
    assert (pm, pf) == (0.5, 1.0)


def test_threshold_extremes():
    truth = np.array([1, 0, 0, 0, 0, 1, 0, 0])
    assert detection_metrics(truth.astype(float), truth, 0.5, 2) == (0.0, 0.0)
    assert detection_metrics(truth.astype(float), truth, 1.0, 2) == (1.0, 0.0)
    # strict threshold: at gamma = 0 exact zeros are not detections
    assert detection_metrics(truth.astype(float), truth, 0.0, 2) == (0.0, 0.0)


def test_multiple_detections_resolved_by_argmax():
    truth = np.array([0, 1])
    assert detection_metrics(np.array([0.7, 0.9]), truth, 0.5, 2) == (0.0, pytest.approx(np.nan, nan_ok=True))
    assert detection_metrics(np.array([0.9, 0.9]), truth, 0.5, 2)[0] == 1.0


def test_empty_sets_are_nan():
    pm, pf = rates(np.empty(0), np.array([0.2]), 0.5)
    assert np.isnan(pm[0]) and pf[0] == 0.0


def test_roc_monotone(rng):
    truth = np.zeros(200)
    truth[rng.choice(100, 20, replace=False) * 2] = 1
    soft = rng.uniform(0, 1, 200)
    roc = roc_sweep(soft, truth, 2)
    assert np.all(np.diff(roc.pm) >= 0) and np.all(np.diff(roc.pf) <= 0)
    assert np.all((roc.pm >= 0) & (roc.pm <= 1) & (roc.pf >= 0) & (roc.pf <= 1))
    with pytest.raises(ValueError):
        roc_sweep(soft, truth, 2, grid=[0.5, 0.1])


def test_pooled_curve_equals_trial_average(rng):
    grid = np.linspace(0, 1, 101)
    acts, inas, pms, pfs = [], [], [], []
    for _ in range(100):
        truth = np.zeros(200)
        truth[rng.choice(100, 10, replace=False) * 2 + rng.integers(0, 2, 10)] = 1
        a, i = device_scores(rng.uniform(0, 1, 200), truth, 2)
        acts.append(a)
        inas.append(i)
        pm, pf = rates(a, i, grid)
        pms.append(pm)
        pfs.append(pf)
    pm, pf = rates(np.concatenate(acts), np.concatenate(inas), grid)
    np.testing.assert_allclose(pm, np.mean(pms, axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(pf, np.mean(pfs, axis=0), rtol=0, atol=1e-12)


def test_equal_error_perfect_detector():
    ee = equal_error_rate(np.full(10, 1.0), np.zeros(90))
    assert ee.degenerate and ee.p_err == 0.0


def test_equal_error_constructed_crossing():
    ee = equal_error_point(lambda g: g, lambda g: 1 - g)
    assert not ee.degenerate
    assert ee.gamma == pytest.approx(0.5, abs=1e-4)
    assert ee.p_err == pytest.approx(0.5, abs=1e-4)


@pytest.mark.parametrize("delays, expected", [(1, 0.5), (2, 2 / 3)])
def test_random_guess(rng, delays, expected):
    # one delay: PM = g, PF = 1 - g.  Two delays: the argmax must also hit the
    # true delay, PM = 1/2 + g^2/2 and PF = 1 - g^2, crossing at P = 2/3.
    acts, inas = [], []
    for _ in range(100):
        truth = np.zeros(100 * delays)
        truth[rng.choice(100, 10, replace=False) * delays] = 1
        a, i = device_scores(rng.uniform(0, 1, 100 * delays), truth, delays)
        acts.append(a)
        inas.append(i)
    ee = equal_error_rate(np.concatenate(acts), np.concatenate(inas))
    assert abs(ee.p_err - expected) < 0.02
    assert abs(ee.p_err - 0.5) < 0.1 or delays > 1


_CFG = SystemConfig(num_aps=2, antennas_per_ap=4, num_devices=12, sig_len=6, max_delay=1)


def test_single_trial_equals_manual_pipeline():
    rep = run_monte_carlo(_CFG, [AlgorithmSpec("alg1")], trials=1, seed=5, workers=1)["alg1"]
    sc, d = simulate_trial(_CFG, 5 ^ 0)
    a, i = device_scores(alg1_solve(d).b, sc.truth, 2)
    pm, pf = rates(a, i, rep.gamma_grid)
    np.testing.assert_array_equal(rep.pm, pm)
    np.testing.assert_array_equal(rep.pf, pf)


def test_monte_carlo_deterministic_across_workers():
    algs = [AlgorithmSpec("alg1"), AlgorithmSpec("bcd")]
    r1 = run_monte_carlo(_CFG, algs, trials=4, seed=3, workers=1)
    r2 = run_monte_carlo(_CFG, algs, trials=4, seed=3, workers=2)
    for lbl in r1:
        np.testing.assert_array_equal(r1[lbl].pm, r2[lbl].pm)
        np.testing.assert_array_equal(r1[lbl].pf, r2[lbl].pf)
        assert r1[lbl].p_err == r2[lbl].p_err


def test_failures_are_counted():
    from asyncact.evaluation import TrialOutcome

    ok = TrialOutcome("x", 0, np.array([0.9]), np.array([0.1]), 3, 0, 0, 1.0)
    bad = TrialOutcome("x", 1, np.empty(0), np.empty(0), 0, 0, 0, 0.0, error="ValueError: boom")
    rep = aggregate("x", [ok, bad])
    assert rep.failures == 1 and rep.mean_iters == 3


@pytest.mark.slow
def test_more_aps_beat_single_large_array():
    spread = SystemConfig(num_aps=8, antennas_per_ap=8, num_devices=50, sig_len=9, max_delay=1)
    single = spread.replace(num_aps=1, antennas_per_ap=64)
    alg = [AlgorithmSpec("alg1")]
    p_spread = run_monte_carlo(spread, alg, trials=30, seed=1)["alg1"].p_err
    p_single = run_monte_carlo(single, alg, trials=30, seed=1)["alg1"].p_err
    assert p_spread < p_single
