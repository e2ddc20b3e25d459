import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncact import SystemConfig, simulate_trial
from asyncact.fronthaul import (
    BitLedger,
    QuantizerSpec,
    bits_alg1,
    bits_alg3,
    hermitian_to_real,
    huffman_bits,
    huffman_decode,
    huffman_encode,
    huffman_roundtrip,
    quantize,
    quantize_covariance,
    quantize_observations,
    real_to_hermitian,
)


def test_quantizer_examples(rng):
    spec = QuantizerSpec(4)
    assert quantize([0.0], spec)[0][0] == 0 and quantize([0.0], spec)[1][0] == 0.0
    s, r = quantize([1.0], spec)
    assert s[0] == 15 and r[0] == 1.0
    v = rng.uniform(0, 1, 10_000)
    assert np.max(np.abs(quantize(v, spec)[1] - v)) <= 1 / 30 + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 16), st.floats(-5, 5), st.floats(1e-3, 10),
       st.lists(st.floats(-20, 20), min_size=1, max_size=50))
def test_quantizer_error_bound(bits, lo, width, values):
    spec = QuantizerSpec(bits, lo, lo + width)
    v = np.clip(values, spec.lo, spec.hi)
    sym, r = quantize(values, spec)
    assert np.all(np.abs(r - v) <= spec.step / 2 + 1e-12 * (1 + abs(lo) + width))
    assert np.all((sym >= 0) & (sym < 2**bits))


def test_quantizer_validation():
    with pytest.raises(ValueError, match="bits"):
        QuantizerSpec(0)
    with pytest.raises(ValueError, match="lo < hi"):
        QuantizerSpec(4, 1.0, 1.0)


def test_hermitian_packing_roundtrip(rng):
    A = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    H = A + A.conj().T
    v = hermitian_to_real(H)
    assert v.size == 25
    np.testing.assert_allclose(real_to_hermitian(v, 5), H)


def test_covariance_quantization_structure():
    R = 3e-11 * np.eye(10, dtype=complex)
    p = quantize_covariance(R, 8)
    assert p.symbols.size == 100
    np.testing.assert_array_equal(p.recon, p.recon.conj().T)
    off = p.recon[~np.eye(10, dtype=bool)]
    assert np.all(off == 0)
    assert np.max(np.abs(np.diag(p.recon) - 3e-11)) <= p.scale / (2**8 - 1) / 2 + 1e-25


def test_covariance_quantization_bound(small_data):
    _, d = small_data
    p = quantize_covariance(d.R[0], 6)
    np.testing.assert_array_equal(p.recon, p.recon.conj().T)
    err = np.max(np.abs(hermitian_to_real(p.recon) - hermitian_to_real(d.R[0])))
    # 2**Q - 1 levels on [-s, s] keep 0 exact; their step is s / (2**(Q-1) - 1)
    assert err <= p.spec.step / 2 * (1 + 1e-12)


def test_huffman_examples():
    assert huffman_bits(np.full(100, 7)) == 100
    sym = np.tile(np.arange(16), 8)
    assert huffman_bits(sym) == sym.size * 4
    bits, dec = huffman_roundtrip(sym)
    assert bits == sym.size * 4
    np.testing.assert_array_equal(dec, sym)


def test_huffman_roundtrip_random(rng):
    for _ in range(1000):
        Q = int(rng.integers(1, 6))
        n = int(rng.integers(1, 200))
        p = rng.dirichlet(np.full(2**Q, 0.3))
        sym = rng.choice(2**Q, size=n, p=p)
        bits, dec = huffman_roundtrip(sym)
        np.testing.assert_array_equal(dec, sym)
        assert bits <= n * Q or (Q == 1 and len(set(sym.tolist())) == 1 and bits == n)


def test_huffman_prefix_free_and_decoding_errors():
    st_ = huffman_encode([0, 0, 1, 2, 2, 2])
    assert st_.num_bits == huffman_bits([0, 0, 1, 2, 2, 2])
    st_.num_symbols += 1
    with pytest.raises(ValueError):
        huffman_decode(st_)
    with pytest.raises(ValueError):
        huffman_bits([])


def test_bit_formulas():
    assert bits_alg1(8, 14, 9, 1, 8) == 11200
    assert bits_alg1(1, 3, 5, 1, 3) == 3 * 36  # L+T = 2N boundary uses the covariance
    assert bits_alg1(1, 1, 3, 1, 1) == 8
    assert bits_alg3(8, 100, 4, 1, 1) == 6400
    assert bits_alg3(8, 100, 4, 1, 2) == 3 * 6400
    assert bits_alg3(1, 1, 1, 0, 1) == 1
    with pytest.raises(ValueError):
        bits_alg3(1, 1, 1, 0, 0)


def test_ledger_totals_match_formula(tmp_path):
    cfg = SystemConfig(num_aps=3, antennas_per_ap=8, num_devices=10, sig_len=9, max_delay=1)
    _, d = simulate_trial(cfg, 0)
    _, ledger = quantize_observations(d, 14)
    assert ledger.raw_total == bits_alg1(3, 14, 9, 1, 8)
    assert ledger.raw_total == sum(r["raw_bits"] for r in ledger.records)
    cfg2 = cfg.replace(antennas_per_ap=4)
    _, d2 = simulate_trial(cfg2, 0)
    d2q, ledger2 = quantize_observations(d2, 14)
    assert ledger2.raw_total == bits_alg1(3, 14, 9, 1, 4)
    np.testing.assert_allclose(d2q.R, np.conj(np.swapaxes(d2q.R, 1, 2)))
    path = tmp_path / "ledger.csv"
    ledger.to_csv(path)
    assert path.read_text().splitlines()[0] == "iteration,direction,raw_bits,huffman_bits"


def test_sparse_payload_gain(rng):
    for _ in range(100):
        x = np.zeros(400)
        idx = rng.choice(400, 60, replace=False)
        x[idx] = rng.uniform(0, 1, 60)
        sym, _ = quantize(x, QuantizerSpec(4))
        assert huffman_bits(sym) <= 0.5 * sym.size * 4


def test_ledger_extend():
    a, b = BitLedger(), BitLedger()
    a.record(1, "uplink", 10, 4)
    b.record(1, "downlink", 6, 2)
    a.extend(b)
    assert (a.raw_total, a.huffman_total) == (16, 6)
