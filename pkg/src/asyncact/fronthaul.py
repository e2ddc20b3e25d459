"""Fronthaul model: uniform scalar quantization, Huffman coding, bit budgets.

Quantizers are midtread: level j maps to lo + j * step, so lo (and hi)
are exact levels and, for ranges that straddle zero with an odd number of
levels, so is 0.  Huffman bit counts cover the payload only; codebooks are
assumed to be shared out of band.
"""
from __future__ import annotations

import csv
import heapq
from collections import Counter
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform scalar quantizer with ``levels`` points on [lo, hi].

    ``levels`` defaults to 2**bits.  Using 2**bits - 1 levels on a
    symmetric range keeps 0 as an exact level at the same bit cost.
    """

    bits: int
    lo: float = 0.0
    hi: float = 1.0
    levels: int | None = None

    def __post_init__(self):
        if not isinstance(self.bits, (int, np.integer)) or self.bits < 1:
            raise ValueError(f"bits must be a positive integer, got {self.bits!r}")
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        n = self.num_levels
        if not 2 <= n <= 2**self.bits:
            raise ValueError(f"levels must lie in [2, 2**bits], got {n}")

    @property
    def num_levels(self) -> int:
        return 2**self.bits if self.levels is None else int(self.levels)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.num_levels - 1)


def quantize(vec, spec: QuantizerSpec) -> tuple[np.ndarray, np.ndarray]:
    """Quantize element-wise.  Out-of-range inputs are clamped first.

    Returns (symbols, reconstruction).
    """
    v = np.clip(np.asarray(vec, dtype=float), spec.lo, spec.hi)
    sym = np.rint((v - spec.lo) / spec.step).astype(np.int64)
    sym = np.clip(sym, 0, spec.num_levels - 1)
    recon = spec.lo + sym * spec.step
    # make the top level land exactly on hi
    recon = np.where(sym == spec.num_levels - 1, spec.hi, recon)
    return sym, recon


def hermitian_to_real(R: np.ndarray) -> np.ndarray:
    """The n^2 real parameters of a Hermitian matrix: diagonal, then the
    real and imaginary parts of the strict upper triangle (row-major)."""
    iu = np.triu_indices(R.shape[0], k=1)
    up = R[iu]
    return np.concatenate([np.real(np.diagonal(R)), up.real, up.imag])


def real_to_hermitian(v: np.ndarray, n: int) -> np.ndarray:
    iu = np.triu_indices(n, k=1)
    npair = iu[0].size
    out = np.zeros((n, n), dtype=complex)
    out[np.diag_indices(n)] = v[:n]
    out[iu] = v[n:n + npair] + 1j * v[n + npair:]
    out[(iu[1], iu[0])] = np.conj(out[iu])
    return out


def symmetric_spec(scale: float, bits: int) -> QuantizerSpec:
    """Zero-preserving quantizer on [-scale, scale] (2**bits - 1 levels)."""
    if bits < 2:
        raise ValueError("symmetric quantization needs at least 2 bits")
    s = scale if scale > 0 else 1.0
    return QuantizerSpec(bits=bits, lo=-s, hi=s, levels=2**bits - 1)


@dataclass
class CovariancePayload:
    symbols: np.ndarray
    recon: np.ndarray
    scale: float
    spec: QuantizerSpec


def quantize_covariance(R: np.ndarray, bits: int) -> CovariancePayload:
    """Quantize a Hermitian matrix through its n^2 real parameters.

    The range is [-s, s] with s the largest magnitude parameter; s itself
    is side information sent at full precision and not counted.
    """
    v = hermitian_to_real(np.asarray(R))
    scale = float(np.max(np.abs(v)))
    spec = symmetric_spec(scale, bits)
    sym, recon = quantize(v, spec)
    return CovariancePayload(sym, real_to_hermitian(recon, R.shape[0]), scale, spec)


def quantize_signal(Y: np.ndarray, bits: int) -> CovariancePayload:
    """Quantize a complex block through its real and imaginary parts."""
    v = np.concatenate([Y.real.ravel(), Y.imag.ravel()])
    scale = float(np.max(np.abs(v)))
    spec = symmetric_spec(scale, bits)
    sym, recon = quantize(v, spec)
    half = Y.size
    return CovariancePayload(sym, (recon[:half] + 1j * recon[half:]).reshape(Y.shape), scale, spec)


# -- Huffman ------------------------------------------------------------------

def huffman_code_lengths(symbols) -> dict[int, int]:
    """Optimal prefix-code lengths for the empirical histogram.

    Ties are broken by the smallest symbol in each subtree so the code is
    deterministic.  A one-symbol alphabet gets a 1-bit code.
    """
    counts = Counter(int(s) for s in np.asarray(symbols).ravel())
    if not counts:
        raise ValueError("cannot build a Huffman code for an empty input")
    if len(counts) == 1:
        return {next(iter(counts)): 1}
    heap = [(c, s, [s]) for s, c in counts.items()]
    heapq.heapify(heap)
    lengths = dict.fromkeys(counts, 0)
    while len(heap) > 1:
        c1, k1, g1 = heapq.heappop(heap)
        c2, k2, g2 = heapq.heappop(heap)
        for s in g1 + g2:
            lengths[s] += 1
        heapq.heappush(heap, (c1 + c2, min(k1, k2), g1 + g2))
    return lengths


def canonical_codes(lengths: dict[int, int]) -> dict[int, tuple[int, int]]:
    """symbol -> (code, length), assigned in (length, symbol) order."""
    code = 0
    prev = 0
    out = {}
    for sym, ln in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        code <<= ln - prev
        out[sym] = (code, ln)
        code += 1
        prev = ln
    return out


@dataclass
class HuffmanStream:
    """Canonical code lengths indexed by symbol plus an MSB-first payload."""

    lengths: np.ndarray  # lengths[s] = code length of symbol s (0 if unused)
    payload: bytes
    num_bits: int
    num_symbols: int


def huffman_encode(symbols) -> HuffmanStream:
    sym = np.asarray(symbols, dtype=np.int64).ravel()
    if sym.size and sym.min() < 0:
        raise ValueError("symbols must be non-negative integers")
    lengths = huffman_code_lengths(sym)
    codes = canonical_codes(lengths)
    bits = []
    for s in sym.tolist():
        code, ln = codes[s]
        bits.extend((code >> (ln - 1 - i)) & 1 for i in range(ln))
    table = np.zeros(int(sym.max()) + 1, dtype=np.int64)
    for s, ln in lengths.items():
        table[s] = ln
    payload = np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes() if bits else b""
    return HuffmanStream(table, payload, len(bits), int(sym.size))


def huffman_decode(stream: HuffmanStream) -> np.ndarray:
    lengths = {s: int(ln) for s, ln in enumerate(stream.lengths) if ln > 0}
    decode = {(code, ln): s for s, (code, ln) in canonical_codes(lengths).items()}
    bits = np.unpackbits(np.frombuffer(stream.payload, dtype=np.uint8))[:stream.num_bits]
    out = np.empty(stream.num_symbols, dtype=np.int64)
    code = ln = n = 0
    for bit in bits.tolist():
        code = (code << 1) | bit
        ln += 1
        s = decode.get((code, ln))
        if s is not None:
            out[n] = s
            n += 1
            code = ln = 0
    if n != stream.num_symbols or ln != 0:
        raise ValueError("corrupt Huffman payload")
    return out


def huffman_bits(symbols) -> int:
    """Payload length in bits of the Huffman-coded symbols."""
    sym = np.asarray(symbols).ravel()
    lengths = huffman_code_lengths(sym)
    counts = Counter(int(s) for s in sym)
    return int(sum(counts[s] * ln for s, ln in lengths.items()))


def huffman_roundtrip(symbols) -> tuple[int, np.ndarray]:
    stream = huffman_encode(symbols)
    return stream.num_bits, huffman_decode(stream)


# -- accounting ---------------------------------------------------------------

@dataclass
class BitLedger:
    """Per-message fronthaul bit counts."""

    records: list = field(default_factory=list)

    def record(self, iteration: int, direction: str, raw_bits: int, huffman_bits: int, ap: int = -1) -> None:
        self.records.append({"iteration": int(iteration), "direction": direction, "ap": int(ap),
                             "raw_bits": int(raw_bits), "huffman_bits": int(huffman_bits)})

    def extend(self, other: "BitLedger") -> None:
        self.records.extend(other.records)

    @property
    def raw_total(self) -> int:
        return sum(r["raw_bits"] for r in self.records)

    @property
    def huffman_total(self) -> int:
        return sum(r["huffman_bits"] for r in self.records)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "direction", "raw_bits", "huffman_bits"])
            for r in self.records:
                w.writerow([r["iteration"], r["direction"], r["raw_bits"], r["huffman_bits"]])


def bits_alg1(M: int, Q1: int, L: int, T: int, N: int) -> int:
    """Bits to ship every AP's statistics once: the covariance when it is
    smaller than the raw block (L+T <= 2N), otherwise the raw block."""
    n = L + T
    if n <= 2 * N:
        return M * Q1 * n * n
    return 2 * M * Q1 * n * N


def bits_alg3(M: int, K: int, Q2: int, T: int, I: int) -> int:
    """Bits for I accelerated iterations: I uplink and I-1 downlink vectors per AP."""
    if I < 1:
        raise ValueError("I must be >= 1")
    return (2 * I - 1) * M * K * Q2 * (T + 1)


def quantize_observations(data, bits: int):
    """Quantize every AP's statistics for centralized detection.

    Returns (ReceivedData with reconstructed covariances, BitLedger).
    """
    n, N = data.seq_len, data.num_antennas
    ledger = BitLedger()
    R = np.empty_like(data.R)
    for m in range(data.num_aps):
        if n <= 2 * N:
            p = quantize_covariance(data.R[m], bits)
            R[m] = p.recon
        else:
            p = quantize_signal(data.Y[m], bits)
            R[m] = p.recon @ np.conj(p.recon.T) / N
        ledger.record(1, "uplink", p.symbols.size * bits, huffman_bits(p.symbols), ap=m)
    return data.with_covariances(R), ledger
