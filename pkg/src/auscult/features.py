"""MFCC feature extraction and label encoding.

A preprocessed clip (1000 Hz, 2500 samples) becomes 36 frames of 256
samples (hop 64, Hamming window), a one-sided power spectrum, 64 log mel
filterbank energies per frame, and finally the mean over frames of the
first 52 orthonormal DCT-II coefficients: the 52-dimensional feature
vector the classifier consumes.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct

from .errors import InvalidConfigError, ParseError, TooShortError

FRAME_LEN = 256
HOP = 64
N_MELS = 64
N_COEFFS = 52
F_MIN_HZ = 0.0
F_MAX_HZ = 500.0
LOG_FLOOR = 1e-10
PRE_EMPHASIS_ALPHA = 0.97

# Canonical class order: the five heart classes, then the six lung classes.
HEART_CLASSES = ("AS", "MS", "MR", "N", "MVP")
LUNG_CLASSES = ("COPD", "P", "BA", "BO", "H", "URTI")
CLASSES = HEART_CLASSES + LUNG_CLASSES
CLASS_INDEX = {name: i for i, name in enumerate(CLASSES)}
CLASS_ORGAN = {name: ("heart" if name in HEART_CLASSES else "lung") for name in CLASSES}


def parse_label(text):
    """Canonicalize a class label token; unknown tokens raise ParseError."""
    token = str(text).strip().upper()
    if token not in CLASS_INDEX:
        raise ParseError(
            f"unknown class label {text!r}; valid labels: {', '.join(CLASSES)}"
        )
    return token


def label_index(label):
    return CLASS_INDEX[parse_label(label)]


def label_organ(label):
    return CLASS_ORGAN[parse_label(label)]


def organ_indices(organ):
    """Canonical indices belonging to one organ ('heart' or 'lung')."""
    if organ not in ("heart", "lung"):
        raise InvalidConfigError(f"organ must be 'heart' or 'lung', got {organ!r}")
    return [i for i, name in enumerate(CLASSES) if CLASS_ORGAN[name] == organ]


def one_hot(label):
    vec = np.zeros(len(CLASSES))
    vec[label_index(label)] = 1.0
    return vec


def pre_emphasis(clip, alpha=PRE_EMPHASIS_ALPHA):
    """First-order high-pass difference: y[0] = x[0], y[n] = x[n] - alpha x[n-1]."""
    x = clip.samples
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - alpha * x[:-1]
    return clip.with_samples(y)


def frame_and_window(clip, frame_len=FRAME_LEN, hop=HOP):
    """Overlapping frames times the Hamming window, shape [n_frames, frame_len]."""
    x = clip.samples
    if len(x) < frame_len:
        raise TooShortError(
            f"clip has {len(x)} samples; one frame needs {frame_len}"
        )
    frames = sliding_window_view(x, frame_len)[::hop]
    return frames * np.hamming(frame_len)


def power_spectrum(frames):
    """One-sided |DFT|^2 per frame: [n_frames, frame_len // 2 + 1]."""
    spectrum = np.fft.rfft(frames, axis=-1)
    return np.abs(spectrum) ** 2


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    return 2595.0 * np.log10(1.0 + f / 700.0)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("mel value must be non-negative")
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


class MelFilterBank:
    """Triangular filters spaced evenly on the mel axis, each peak-normalized to 1."""

    def __init__(self, weights, center_freqs_hz):
        self.weights = weights
        self.center_freqs_hz = center_freqs_hz

    @property
    def n_mels(self):
        return self.weights.shape[0]


def build_mel_filterbank(n_mels=N_MELS, n_bins=FRAME_LEN // 2 + 1, fs_hz=1000.0,
                         f_min=F_MIN_HZ, f_max=F_MAX_HZ):
    if n_mels < 2:
        raise InvalidConfigError(f"need at least 2 mel filters, got {n_mels}")
    if not f_min < f_max <= fs_hz / 2:
        raise InvalidConfigError(
            f"need f_min < f_max <= fs/2, got f_min={f_min}, f_max={f_max}, fs={fs_hz}"
        )
    if n_mels > n_bins:
        raise InvalidConfigError(
            f"{n_mels} filters cannot be spaced over {n_bins} spectrum bins"
        )
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    bin_freqs = np.arange(n_bins) * fs_hz / ((n_bins - 1) * 2)
    weights = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        left, center, right = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        tri = np.maximum(0.0, np.minimum(rising, falling))
        peak = tri.max()
        if peak == 0.0:
            raise InvalidConfigError(
                f"mel filter {i} covers no spectrum bin; spacing infeasible"
            )
        weights[i] = tri / peak
    return MelFilterBank(weights, edges_hz[1:-1].copy())


_FB_CACHE = {}


def _default_filterbank(fs_hz):
    if fs_hz not in _FB_CACHE:
        _FB_CACHE[fs_hz] = build_mel_filterbank(fs_hz=fs_hz)
    return _FB_CACHE[fs_hz]


def mel_spectrogram(clip):
    """Log mel filterbank energies, shape [n_frames, n_mels].

    Runs the front half of the MFCC chain (pre-emphasis, framing, power
    spectrum, filterbank, floored log); also what the CLI exports for the
    before/after visual comparison.
    """
    frames = frame_and_window(pre_emphasis(clip))
    power = power_spectrum(frames)
    bank = _default_filterbank(float(clip.sample_rate_hz))
    energies = power @ bank.weights.T
    return np.log(np.maximum(energies, LOG_FLOOR))


def mfcc(clip):
    """The 52-dimensional feature vector: per-frame orthonormal DCT-II of the
    log mel energies, coefficients c0..c51, averaged over frames."""
    logmel = mel_spectrogram(clip)
    coeffs = dct(logmel, type=2, norm="ortho", axis=-1)[:, :N_COEFFS]
    return coeffs.mean(axis=0)


def save_mel_csv(mel, path):
    """Plain-text CSV, one frame per row, full precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.atleast_2d(mel):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def save_mel_pgm(mel, path):
    """8-bit binary portable graymap; frames left to right, high mels on top."""
    mel = np.atleast_2d(mel)
    lo, hi = float(mel.min()), float(mel.max())
    if hi > lo:
        img = np.round((mel - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        img = np.zeros(mel.shape, dtype=np.uint8)
    img = img.T[::-1]  # rows = mel bins (top = highest), cols = frames
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
