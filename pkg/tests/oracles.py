"""Independent brute-force reference implementations used only by tests.

Everything here is written from the direct mathematical definitions (explicit
loops, no FFT, no shared code with the package paths it checks).
"""

import math
from fractions import Fraction

import numpy as np


def analytic_bandpass_magnitude(f_hz, low_hz, high_hz, fs_hz):
    """|H| of the prewarped analog order-2 Butterworth band-pass at f_hz.

    |H(j Omega)|^2 = 1 / (1 + w^4) with w = (Omega^2 - Wo^2) / (BW * Omega),
    evaluated at the prewarped frequency Omega = 2 fs tan(pi f / fs).
    """
    w1 = 2 * fs_hz * math.tan(math.pi * low_hz / fs_hz)
    w2 = 2 * fs_hz * math.tan(math.pi * high_hz / fs_hz)
    bw = w2 - w1
    wo2 = w1 * w2
    omega = 2 * fs_hz * math.tan(math.pi * f_hz / fs_hz)
    if omega == 0.0:
        return 0.0
    w_lp = (omega * omega - wo2) / (bw * omega)
    return 1.0 / math.sqrt(1.0 + w_lp ** 4)


def naive_dft(x):
    """Direct O(n^2) complex DFT."""
    x = np.asarray(x, dtype=np.complex128)
    n = len(x)
    out = np.zeros(n, dtype=np.complex128)
    for k in range(n):
        for t in range(n):
            out[k] += x[t] * np.exp(-2j * np.pi * k * t / n)
    return out


def naive_power_spectrum_onesided(frame):
    """|DFT|^2 for bins 0..len//2, via the direct definition."""
    full = naive_dft(frame)
    return np.abs(full[: len(frame) // 2 + 1]) ** 2


def naive_dct2_ortho(v):
    """Orthonormal DCT-II by the direct definition."""
    v = np.asarray(v, dtype=np.float64)
    n = len(v)
    out = np.zeros(n)
    for k in range(n):
        acc = 0.0
        for t in range(n):
            acc += v[t] * math.cos(math.pi * (2 * t + 1) * k / (2 * n))
        scale = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        out[k] = scale * acc
    return out


def _naive_hamming(n):
    return np.array(
        [0.54 - 0.46 * math.cos(2 * math.pi * i / (n - 1)) for i in range(n)]
    )


def _naive_mel(f):
    return 2595.0 * math.log10(1.0 + f / 700.0)


def _naive_mel_inv(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def naive_filterbank(n_mels, n_bins, fs_hz, f_min, f_max):
    """Peak-normalized triangular mel filters, built with explicit loops."""
    lo, hi = _naive_mel(f_min), _naive_mel(f_max)
    edges = [_naive_mel_inv(lo + (hi - lo) * i / (n_mels + 1))
             for i in range(n_mels + 2)]
    fft_len = (n_bins - 1) * 2
    weights = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, center, right = edges[m], edges[m + 1], edges[m + 2]
        for b in range(n_bins):
            f = b * fs_hz / fft_len
            if left < f < center:
                weights[m, b] = (f - left) / (center - left)
            elif center <= f < right:
                weights[m, b] = (right - f) / (right - center)
            elif f == center:
                weights[m, b] = 1.0
        peak = weights[m].max()
        if peak > 0:
            weights[m] /= peak
    return weights


def _dft_basis(n):
    """The DFT definition as an explicitly constructed matrix."""
    basis = np.zeros((n, n), dtype=np.complex128)
    for k in range(n):
        for t in range(n):
            basis[k, t] = np.exp(-2j * np.pi * k * t / n)
    return basis


def _dct2_ortho_basis(n):
    basis = np.zeros((n, n))
    for k in range(n):
        scale = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        for t in range(n):
            basis[k, t] = scale * math.cos(math.pi * (2 * t + 1) * k / (2 * n))
    return basis


def naive_mfcc(samples, fs_hz, frame_len=256, hop=64, n_mels=64, n_coeffs=52,
               f_min=0.0, f_max=500.0, alpha=0.97, floor=1e-10):
    """The whole feature pipeline from the direct definitions.

    The DFT and DCT bases are built entry by entry from their formulas and
    applied as plain matrix products; nothing is shared with the package's
    FFT-based pipeline.
    """
    x = np.asarray(samples, dtype=np.float64)
    emphasized = np.zeros_like(x)
    emphasized[0] = x[0]
    for i in range(1, len(x)):
        emphasized[i] = x[i] - alpha * x[i - 1]

    window = _naive_hamming(frame_len)
    n_frames = (len(x) - frame_len) // hop + 1
    n_bins = frame_len // 2 + 1
    weights = naive_filterbank(n_mels, n_bins, fs_hz, f_min, f_max)
    dft = _dft_basis(frame_len)[:n_bins]
    dct = _dct2_ortho_basis(n_mels)

    coeffs = np.zeros((n_frames, n_coeffs))
    for fi in range(n_frames):
        frame = emphasized[fi * hop: fi * hop + frame_len] * window
        power = np.abs(dft @ frame) ** 2
        energies = np.zeros(n_mels)
        for m in range(n_mels):
            energies[m] = float(np.dot(weights[m], power))
        logmel = np.log(np.maximum(energies, floor))
        coeffs[fi] = (dct @ logmel)[:n_coeffs]
    return coeffs.mean(axis=0)


def brute_metrics(cm):
    """Per-class precision/recall/F1/one-vs-rest accuracy in exact rationals."""
    cm = [[int(v) for v in row] for row in cm]
    k = len(cm)
    total = sum(sum(row) for row in cm)
    out = []
    for c in range(k):
        tp = cm[c][c]
        fp = sum(cm[r][c] for r in range(k)) - tp
        fn = sum(cm[c][p] for p in range(k)) - tp
        tn = total - tp - fp - fn
        precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else Fraction(0))
        accuracy = Fraction(tp + tn, total)
        out.append((precision, recall, f1, accuracy))
    return out


def adam_reference(theta, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar Adam recurrence scripted independently; returns theta history."""
    m = 0.0
    v = 0.0
    history = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
        history.append(theta)
    return history
