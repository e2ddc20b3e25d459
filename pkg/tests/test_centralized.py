import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncact import SystemConfig, simulate_trial
from asyncact.centralized import SolveOptions, alg1_solve, prox_block_update, proximal_point
from asyncact.likelihood import model_covariance, nll_gradient, penalized_cost


def test_prox_examples():
    np.testing.assert_allclose(prox_block_update(np.array([0.3, 0.5]), 0.2), [0.3, 0.7])
    np.testing.assert_allclose(prox_block_update(np.array([-0.2, 1.3]), 0.05), [0.0, 1.0])
    # ties: the first maximal entry gets the shift
    np.testing.assert_allclose(prox_block_update(np.array([0.4, 0.4]), 0.1), [0.5, 0.4])


def test_prox_stacked_matches_single(rng):
    A = rng.uniform(-0.5, 1.5, (50, 3))
    out = prox_block_update(A, 0.3)
    for i in range(50):
        np.testing.assert_array_equal(out[i], prox_block_update(A[i], 0.3))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1.0, 2.0), min_size=2, max_size=2), st.floats(0.0, 1.0))
def test_prox_matches_grid(alpha, shift):
    alpha = np.array(alpha)
    u = prox_block_update(alpha, shift)
    g = np.linspace(0, 1, 201)
    U1, U2 = np.meshgrid(g, g, indexing="ij")
    F = 0.5 * ((U1 - alpha[0]) ** 2 + (U2 - alpha[1]) ** 2) - shift * np.maximum(U1, U2)
    fu = 0.5 * np.sum((u - alpha) ** 2) - shift * np.max(u)
    assert fu <= F.min() + 1e-12
    assert np.all((u >= 0) & (u <= 1))


def _config():
    return SystemConfig(num_aps=2, antennas_per_ap=4, num_devices=15, sig_len=6, max_delay=1)


def test_objective_monotone_and_feasible():
    for seed in range(5):
        _, d = simulate_trial(_config(), seed)
        res = alg1_solve(d)
        obj = np.array([r["objective"] for r in res.trace])
        assert np.all(np.diff(obj) <= 1e-12 * np.abs(obj[:-1]))
        assert np.all((res.b >= 0) & (res.b <= 1))
        assert res.converged


def test_fixed_point_of_prox_gradient():
    _, d = simulate_trial(_config(), 2)
    opts = SolveOptions(tol_step=1e-10, max_iters=5000)
    res = alg1_solve(d, opts)
    g = nll_gradient(res.b, d, opts.rho)
    for eta in (1e-4, 1e-3):
        nb = proximal_point(res.b, g, eta, opts.rho, d.max_delay + 1)
        assert np.max(np.abs(nb - res.b)) < 1e-5


def test_zero_signal_returns_zero():
    _, d = simulate_trial(_config(), 0)
    n = d.seq_len
    R = np.stack([s2 * np.eye(n, dtype=complex) for s2 in d.noise_var])
    res = alg1_solve(d.with_covariances(R))
    assert res.converged
    assert np.max(res.b) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_noiseless_single_device_identified(seed):
    cfg = SystemConfig(num_aps=1, antennas_per_ap=8, num_devices=4, sig_len=8, max_delay=1,
                       area_side=100.0, target_snr_db=40.0)
    sc, d = simulate_trial(cfg, seed)
    sc.activity[:] = False
    sc.delays[:] = -1
    k = seed % 4
    sc.activity[k] = True
    sc.delays[k] = seed % 2
    truth = sc.truth
    R = np.stack([model_covariance(truth, d, m) for m in range(d.num_aps)])
    res = alg1_solve(d.with_covariances(R))
    assert int(np.argmax(res.b)) == int(np.argmax(truth))


def test_converged_step_is_fixed():
    _, d = simulate_trial(_config(), 3)
    opts = SolveOptions()
    res = alg1_solve(d, opts)
    again = alg1_solve(d, opts, b0=res.b, max_iters=1)
    assert np.max(np.abs(again.b - res.b)) < 10 * opts.tol_step


def test_warm_start_not_worse():
    _, d = simulate_trial(_config(), 1)
    cold = alg1_solve(d)
    warm = alg1_solve(d, b0=cold.b)
    assert warm.objective <= cold.objective + 1e-12
    assert penalized_cost(warm.b, d, 0.16) == pytest.approx(warm.objective, rel=1e-12)


def test_options_validation():
    with pytest.raises(ValueError, match="rho"):
        SolveOptions(rho=0)
    with pytest.raises(ValueError, match="backtrack"):
        SolveOptions(backtrack=1.0)
