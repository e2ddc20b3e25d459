import numpy as np
import pytest

from asyncact import SystemConfig, simulate_trial
from asyncact.likelihood import (
    CovCache,
    NotPositiveDefiniteError,
    SingularUpdateError,
    block_penalty,
    cost_lower_bound,
    evaluate,
    local_gradients,
    model_covariance,
    nll_cost,
    nll_gradient,
    penalized_cost,
    per_ap_cost,
    sherman_morrison_update,
)


def dense_cost(b, data):
    """Oracle: explicit covariance, dense inverse and slogdet."""
    total = 0.0
    for m in range(data.num_aps):
        C = data.noise_var[m] * np.eye(data.seq_len, dtype=complex)
        for j in range(data.num_coords):
            s = data.sig_rows[j][:, None]
            C = C + b[j] * data.weights[m, j] * (s @ s.conj().T)
        sign, logdet = np.linalg.slogdet(C)
        assert sign.real > 0
        total += logdet + np.trace(np.linalg.inv(C) @ data.R[m]).real
    return total


def test_noise_only_closed_form(small_data):
    _, d = small_data
    b = np.zeros(d.num_coords)
    expected = sum(d.seq_len * np.log(s2) + np.trace(d.R[m]).real / s2 for m, s2 in enumerate(d.noise_var))
    assert nll_cost(b, d) == pytest.approx(expected, rel=1e-12)


def test_perfect_fit_closed_form(small_data):
    _, d = small_data
    rng = np.random.default_rng(1)
    b = rng.uniform(0, 1, d.num_coords)
    C = np.stack([model_covariance(b, d, m) for m in range(d.num_aps)])
    dd = d.with_covariances(C)
    expected = sum(np.linalg.slogdet(C[m])[1] + d.seq_len for m in range(d.num_aps))
    assert nll_cost(b, dd) == pytest.approx(expected, rel=1e-10)
    # the true covariance is the stationary point of the unconstrained cost
    assert np.max(np.abs(nll_gradient(b, dd))) < 1e-8 * np.max(np.abs(nll_gradient(np.zeros_like(b), dd)))


def test_cost_matches_dense_oracle(small_data, rng):
    _, d = small_data
    for _ in range(20):
        b = rng.uniform(0, 1, d.num_coords)
        assert nll_cost(b, d) == pytest.approx(dense_cost(b, d), rel=1e-10)


def test_cost_lower_bound(small_data, rng):
    _, d = small_data
    lb = cost_lower_bound(d)
    for _ in range(10):
        assert nll_cost(rng.uniform(0, 1, d.num_coords), d) >= lb


def test_gradient_matches_finite_differences(small_data, rng):
    _, d = small_data
    h = 1e-5
    for rho in (0.0, 0.16):
        b = rng.uniform(h, 1 - h, d.num_coords)
        g = nll_gradient(b, d, rho)
        fd = np.empty_like(g)
        for j in range(d.num_coords):
            e = np.zeros_like(b)
            e[j] = h
            fd[j] = (nll_cost(b + e, d) + rho * np.sum(b + e) - nll_cost(b - e, d) - rho * np.sum(b - e)) / (2 * h)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-6 * np.max(np.abs(g)))


def test_evaluate_consistent(small_data, rng):
    _, d = small_data
    b = rng.uniform(0, 1, d.num_coords)
    ev = evaluate(b, d, 0.16)
    assert ev.nll == pytest.approx(nll_cost(b, d), rel=1e-12)
    assert ev.penalized == pytest.approx(penalized_cost(b, d, 0.16), rel=1e-12)
    np.testing.assert_allclose(ev.grad, nll_gradient(b, d, 0.16), rtol=1e-12)


def test_per_ap_and_local_gradients(small_data, rng):
    _, d = small_data
    x = rng.uniform(0, 1, (d.num_aps, d.num_coords))
    f = per_ap_cost(x, d)
    G = local_gradients(x, d)
    for m in range(d.num_aps):
        single = d.subset_aps([m])
        assert f[m] == pytest.approx(nll_cost(x[m], single), rel=1e-12)
        np.testing.assert_allclose(G[m], nll_gradient(x[m], single), rtol=1e-10)


def test_block_penalty():
    assert block_penalty(np.array([0.2, 0.5, 0.0, 0.0, 1.0, 1.0]), 2) == pytest.approx(0.2 + 1.0)
    assert block_penalty(np.array([0.0, 0.7, 0.0, 0.3]), 2) == 0.0


def test_non_pd_raises(small_data):
    _, d = small_data
    b = np.full(d.num_coords, -1e6)
    with pytest.raises(NotPositiveDefiniteError):
        nll_cost(b, d)


def test_sherman_morrison_matches_dense(rng):
    n = 6
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = A @ A.conj().T + np.eye(n)
    s = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    for c in (0.7, -0.01, 3.0):
        exact = np.linalg.inv(A + c * np.outer(s, s.conj()))
        np.testing.assert_allclose(sherman_morrison_update(np.linalg.inv(A), s, c), exact, rtol=1e-10, atol=1e-12)


def test_sherman_morrison_singular(rng):
    s = np.array([1.0, 0.0], dtype=complex)
    with pytest.raises(SingularUpdateError):
        sherman_morrison_update(np.eye(2, dtype=complex), s, -1.0)


def test_cov_cache_after_many_updates():
    cfg = SystemConfig(num_aps=2, antennas_per_ap=4, num_devices=20, sig_len=6, max_delay=1)
    _, d = simulate_trial(cfg, 3)
    rng = np.random.default_rng(0)
    cache = CovCache(d, np.zeros(d.num_coords))
    for _ in range(1000):
        cache.update(int(rng.integers(d.num_aps)), int(rng.integers(d.num_coords)), float(rng.uniform()))
    for m in range(d.num_aps):
        assert cache.consistency_error(m) < 1e-9


def test_penalty_examples(small_data):
    assert 0.16 * block_penalty(np.array([0.5, 0.5]), 2) == pytest.approx(0.08)
    _, d = small_data
    b = np.zeros(d.num_coords)
    b[::d.max_delay + 1] = 0.7
    assert penalized_cost(b, d, 0.16) == nll_cost(b, d)


def test_sherman_morrison_identity_case():
    s = np.zeros(4, dtype=complex)
    s[0] = 1.0
    np.testing.assert_allclose(sherman_morrison_update(np.eye(4, dtype=complex), s, 1.0).real,
                               np.diag([0.5, 1, 1, 1]))
    np.testing.assert_array_equal(sherman_morrison_update(np.eye(4, dtype=complex), s, 0.0), np.eye(4))


def test_box_covariances_dominate_noise(small_data, rng):
    _, d = small_data
    for _ in range(10):
        b = rng.uniform(0, 1, d.num_coords)
        for m in range(d.num_aps):
            lo = np.linalg.eigvalsh(model_covariance(b, d, m)).min()
            assert lo >= d.noise_var[m] * (1 - 1e-10)
