"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (loops, direct
formulas, finite differences) and never calls into the library's own kernels
for the quantity it checks.
"""

from __future__ import annotations

import numpy as np


def matmul_triple_loop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def layer_norm_two_pass(x: np.ndarray, gain: np.ndarray, shift: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    rows = x.reshape(-1, x.shape[-1])
    flat = out.reshape(-1, x.shape[-1])
    for r in range(rows.shape[0]):
        row = rows[r]
        mu = sum(row) / len(row)
        var = sum((v - mu) ** 2 for v in row) / len(row)
        flat[r] = gain * ((row - mu) / np.sqrt(var + eps)) + shift
    return out


def attention_single_head(tokens: np.ndarray, wq, bq, wk, bk, wv, bv, wo, bo) -> np.ndarray:
    """Hand-rolled scaled dot-product attention, one head, no library calls."""
    q = tokens @ wq.T + bq
    k = tokens @ wk.T + bk
    v = tokens @ wv.T + bv
    d = q.shape[1]
    scores = q @ k.T / np.sqrt(d)
    weights = np.exp(scores - scores.max(axis=1, keepdims=True))
    weights = weights / weights.sum(axis=1, keepdims=True)
    return (weights @ v) @ wo.T + bo


def finite_difference_grads(f, arrays: dict[str, np.ndarray], h: float = 1e-4) -> dict[str, np.ndarray]:
    """Central differences of a scalar function of a dict of arrays."""
    grads = {}
    for name, base in arrays.items():
        g = np.zeros_like(base, dtype=np.float64)
        flat = base.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f(arrays)
            flat[i] = orig - h
            down = f(arrays)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def grads_close(analytic: np.ndarray, numeric: np.ndarray,
                rtol: float = 1e-3, atol: float = 1e-6) -> bool:
    """Relative comparison with a small absolute floor for near-zero slopes."""
    return bool(np.all(np.abs(analytic - numeric) <= rtol * np.abs(numeric) + atol))


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-6) -> float:
    denom = np.maximum(np.abs(numeric), atol)
    return float(np.max(np.abs(analytic - numeric) / denom))


def bicubic_ramp_reference(n: int, s: int, c0: float, c1: float) -> np.ndarray:
    """A cubic kernel with linear precision sampled on a ramp c0 + c1*i gives
    exactly the ramp at the output pixel centers."""
    xs = (np.arange(n // s) + 0.5) * s - 0.5
    return c0 + c1 * xs


def dft_peak_bin(field: np.ndarray, axis: int) -> int:
    """Index of the dominant nonzero-frequency bin along one axis."""
    spectrum = np.abs(np.fft.rfft(field, axis=axis)).mean(axis=1 - axis)
    spectrum[0] = 0.0
    return int(np.argmax(spectrum))
