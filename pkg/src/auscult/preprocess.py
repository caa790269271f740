"""Waveform conditioning for auscultation audio.

Pipeline order: band-pass filter at the native rate (the 400 Hz cutoff
doubles as the anti-alias stage), resample to 1000 Hz, cut/pad to 2500
samples (2.5 s), peak-normalize to (-1, 1). Augmentation operates on the
standardized clip.
"""

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import sosfilt

from .errors import InvalidConfigError

__all__ = [
    "AudioClip",
    "BiquadSection",
    "BiquadCascade",
    "PreprocessConfig",
    "AugmentSpec",
    "design_bandpass",
    "cascade_response",
    "apply_filter",
    "resample",
    "standardize_length",
    "normalize_peak",
    "augment",
    "preprocess",
]


@dataclass
class AudioClip:
    """A sampled waveform. Amplitudes are dimensionless, nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int
    source_id: str | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InvalidConfigError("AudioClip.samples must be a non-empty 1-D array")
        if self.sample_rate_hz <= 0:
            raise InvalidConfigError(
                f"sample_rate_hz must be positive, got {self.sample_rate_hz}"
            )

    @property
    def duration_s(self):
        return len(self.samples) / self.sample_rate_hz

    def with_samples(self, samples):
        return replace(self, samples=np.asarray(samples, dtype=np.float64))


@dataclass(frozen=True)
class BiquadSection:
    """One second-order IIR section: b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def poles(self):
        return np.roots([1.0, self.a1, self.a2])


@dataclass(frozen=True)
class BiquadCascade:
    sections: tuple[BiquadSection, ...]
    design_fs_hz: float

    def as_sos(self):
        """Coefficients as a scipy second-order-sections array."""
        return np.array(
            [[s.b0, s.b1, s.b2, 1.0, s.a1, s.a2] for s in self.sections],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class PreprocessConfig:
    low_cut_hz: float = 25.0
    high_cut_hz: float = 400.0
    target_fs_hz: int = 1000
    target_len_samples: int = 2500
    norm_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if not 0 < self.low_cut_hz < self.high_cut_hz < self.target_fs_hz / 2:
            raise InvalidConfigError(
                "need 0 < low_cut_hz < high_cut_hz < target_fs_hz/2, got "
                f"low={self.low_cut_hz}, high={self.high_cut_hz}, fs={self.target_fs_hz}"
            )
        if self.target_len_samples <= 0:
            raise InvalidConfigError("target_len_samples must be positive")


@dataclass(frozen=True)
class AugmentSpec:
    """One randomized waveform transformation, deterministic given its seed."""

    kind: str  # noise | time_shift | speed
    snr_db: float = 20.0
    shift_samples: int = 0
    speed_factor: float = 1.0
    seed: int = 0

    def validate(self, clip_len):
        if self.kind not in ("noise", "time_shift", "speed"):
            raise InvalidConfigError(f"unknown augmentation kind {self.kind!r}")
        if self.kind == "noise" and not math.isfinite(self.snr_db):
            raise InvalidConfigError("snr_db must be finite")
        if self.kind == "time_shift" and abs(self.shift_samples) >= clip_len:
            raise InvalidConfigError(
                f"|shift_samples| must be < clip length {clip_len}, "
                f"got {self.shift_samples}"
            )
        if self.kind == "speed" and not (
            self.speed_factor > 0 and math.isfinite(self.speed_factor)
        ):
            raise InvalidConfigError(f"speed_factor must be > 0, got {self.speed_factor}")


# Order-2 Butterworth low-pass prototype poles (unit cutoff, unit gain).
_PROTO_POLES = (
    cmath.exp(1j * math.pi * 3 / 4),
    cmath.exp(1j * math.pi * 5 / 4),
)


def _prewarp(f_hz, fs_hz):
    """Analog frequency (rad/s) that the bilinear transform maps to f_hz."""
    return 2.0 * fs_hz * math.tan(math.pi * f_hz / fs_hz)


def _analog_bandpass_poles(low_hz, high_hz, fs_hz):
    """Poles of the prewarped analog band-pass, grouped in conjugate pairs."""
    w1 = _prewarp(low_hz, fs_hz)
    w2 = _prewarp(high_hz, fs_hz)
    bw = w2 - w1
    wo2 = w1 * w2
    pairs = []
    for p in _PROTO_POLES[: len(_PROTO_POLES) // 2]:
        # LP->BP substitution sends each prototype pole to a quadratic's roots;
        # conjugate prototype poles produce the conjugate roots.
        half = p * bw / 2.0
        root = cmath.sqrt(half * half - wo2)
        pairs.append((half + root, half - root))
    plus = [a for a, _ in pairs]
    minus = [b for _, b in pairs]
    poles = plus + [p.conjugate() for p in plus] + minus + [p.conjugate() for p in minus]
    # grouped: [p, conj(p)] per section
    sections = []
    for i in range(len(poles) // 2):
        sections.append((poles[2 * i], poles[2 * i + 1]))
    return sections, bw


def design_bandpass(low_hz, high_hz, fs_hz):
    """Design the order-2 Butterworth band-pass as two cascaded biquads.

    Order-2 low-pass prototype, low-pass-to-band-pass transform, bilinear
    discretization with corner prewarping. Gains at the corner frequencies
    are -3.01 dB relative to the passband peak.
    """
    if not (0 < low_hz < high_hz < fs_hz / 2):
        raise InvalidConfigError(
            f"corner frequencies out of range: need 0 < {low_hz} < {high_hz} < {fs_hz}/2"
        )
    pole_pairs, bw = _analog_bandpass_poles(low_hz, high_hz, fs_hz)
    c = 2.0 * fs_hz  # bilinear constant

    # Analog gain bw^2 puts the passband peak at unity; the bilinear map of the
    # two zeros at s=0 lands at z=+1, the two at infinity land at z=-1.
    gain = bw * bw * (c * c)
    z_pairs = []
    for pa, pb in pole_pairs:
        gain /= ((c - pa) * (c - pb)).real
        z_pairs.append(((c + pa) / (c - pa), (c + pb) / (c - pb)))

    section_gain = math.sqrt(gain)
    sections = []
    for za, zb in z_pairs:
        a1 = -(za + zb).real
        a2 = (za * zb).real
        # each section takes one zero at z=+1 and one at z=-1: (z-1)(z+1) = z^2 - 1
        sections.append(
            BiquadSection(
                b0=section_gain, b1=0.0, b2=-section_gain, a1=a1, a2=a2
            )
        )
    return BiquadCascade(sections=tuple(sections), design_fs_hz=float(fs_hz))


def cascade_response(cascade, f_hz):
    """Complex frequency response H(e^{j 2 pi f / fs}) of the cascade."""
    f = np.asarray(f_hz, dtype=np.float64)
    z1 = np.exp(-2j * np.pi * f / cascade.design_fs_hz)
    z2 = z1 * z1
    h = np.ones_like(z1)
    for s in cascade.sections:
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2)
    return h


def apply_filter(clip, cascade):
    """Run one causal forward pass of the cascade (zero initial state)."""
    if clip.sample_rate_hz != cascade.design_fs_hz:
        raise InvalidConfigError(
            f"clip rate {clip.sample_rate_hz} Hz does not match filter design rate "
            f"{cascade.design_fs_hz} Hz"
        )
    return clip.with_samples(sosfilt(cascade.as_sos(), clip.samples))


def resample(clip, target_fs_hz):
    """Linear-interpolation resampling on the uniform time grid.

    The caller is responsible for band-limiting below target_fs_hz/2; in this
    pipeline the 400 Hz band-pass guarantees that for the 1000 Hz target.
    """
    if target_fs_hz <= 0:
        raise InvalidConfigError(f"target_fs_hz must be positive, got {target_fs_hz}")
    if target_fs_hz == clip.sample_rate_hz:
        return clip.with_samples(clip.samples.copy())
    n_in = len(clip.samples)
    n_out = int(round(n_in * target_fs_hz / clip.sample_rate_hz))
    t_out = np.arange(n_out) / target_fs_hz
    t_in = np.arange(n_in) / clip.sample_rate_hz
    out = np.interp(t_out, t_in, clip.samples)
    return AudioClip(out, int(target_fs_hz), clip.source_id)


def standardize_length(clip, n):
    """Keep the first n samples; zero-pad short clips at the tail."""
    if n <= 0:
        raise InvalidConfigError(f"target length must be positive, got {n}")
    x = clip.samples
    if len(x) >= n:
        return clip.with_samples(x[:n].copy())
    return clip.with_samples(np.concatenate([x, np.zeros(n - len(x))]))


def normalize_peak(clip):
    """Scale so the absolute peak is 1; all-zero clips pass through unchanged."""
    peak = np.max(np.abs(clip.samples))
    if peak == 0.0:
        return clip.with_samples(clip.samples.copy())
    return clip.with_samples(clip.samples / peak)


def augment(clip, spec):
    """Apply one augmentation to a standardized clip; deterministic per seed.

    noise      additive white Gaussian at exactly spec.snr_db below clip power
    time_shift circular shift by spec.shift_samples
    speed      time-axis rescale by spec.speed_factor, then re-standardize length
    """
    x = clip.samples
    spec.validate(len(x))
    if spec.kind == "noise":
        rng = np.random.default_rng(spec.seed)
        signal_power = float(np.mean(x * x))
        noise_power = signal_power / (10.0 ** (spec.snr_db / 10.0))
        noise = rng.normal(0.0, 1.0, len(x))
        # rescale to hit the requested SNR exactly, not just in expectation
        emp = math.sqrt(float(np.mean(noise * noise)))
        if emp > 0 and noise_power > 0:
            noise *= math.sqrt(noise_power) / emp
        else:
            noise[:] = 0.0
        return clip.with_samples(x + noise)
    if spec.kind == "time_shift":
        return clip.with_samples(np.roll(x, spec.shift_samples))
    # speed: y[i] = x(i * factor), then pad/cut back to the original length
    n_new = int(round(len(x) / spec.speed_factor))
    positions = np.arange(n_new) * spec.speed_factor
    y = np.interp(positions, np.arange(len(x)), x)
    return standardize_length(clip.with_samples(y), len(x))


def _cascade_cache(low, high, fs, _cache={}):
    key = (low, high, fs)
    if key not in _cache:
        _cache[key] = design_bandpass(low, high, fs)
    return _cache[key]


def preprocess(raw, cfg=PreprocessConfig()):
    """Full conditioning chain: filter, resample, standardize length, normalize."""
    from .errors import UnsupportedRateError

    if raw.sample_rate_hz <= 2 * cfg.high_cut_hz:
        raise UnsupportedRateError(
            f"input rate {raw.sample_rate_hz} Hz too low; need > {2 * cfg.high_cut_hz} Hz "
            f"for the {cfg.high_cut_hz} Hz cutoff"
        )
    cascade = _cascade_cache(cfg.low_cut_hz, cfg.high_cut_hz, float(raw.sample_rate_hz))
    clip = apply_filter(raw, cascade)
    clip = resample(clip, cfg.target_fs_hz)
    clip = standardize_length(clip, cfg.target_len_samples)
    return normalize_peak(clip)
