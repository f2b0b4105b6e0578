"""Sampled signals and the numeric kernels shared by every stage of the simulator.

Everything in the pipeline (drive voltages, optical envelopes, photocurrents,
de-chirped and demodulated records) is a :class:`SampledSignal`.  Records are
normally one chirp period long and are treated as one period of a periodic
pulse train, which is why FIR filtering defaults to circular convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError

DEFAULT_SAMPLE_RATE = 40e9
DEFAULT_NUM_TAPS = 1025
# Kaiser design target; comfortably above the 60 dB stopband requirement.
DEFAULT_ATTENUATION_DB = 70.0
NO_NOISE = math.inf


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Uniformly sampled real or complex time series.

    Real signals keep a float64 array rather than a complex one with zero
    imaginary part; ``samples`` is read-only after construction.
    """

    sample_rate: float
    samples: np.ndarray
    start_time: float = 0.0

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        arr = np.asarray(self.samples)
        if np.iscomplexobj(arr):
            arr = arr.astype(np.complex128, copy=False)
        else:
            arr = arr.astype(np.float64, copy=False)
        if arr.ndim != 1:
            raise ConfigError("samples must be one-dimensional")
        if arr.flags.writeable:
            arr = arr.copy() if arr is self.samples else arr
            arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.samples)

    def time(self) -> np.ndarray:
        """Sample instants in seconds, including ``start_time``."""
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    def power(self) -> float:
        """Mean of ``|x|^2`` over the whole record."""
        return float(np.mean(np.abs(self.samples) ** 2))

    def replace(self, samples: np.ndarray) -> "SampledSignal":
        return SampledSignal(self.sample_rate, samples, self.start_time)

    def _check_compatible(self, other: "SampledSignal") -> None:
        if other.sample_rate != self.sample_rate or len(other) != len(self):
            raise ConfigError(
                "signals differ in sample rate or length: "
                f"({self.sample_rate}, {len(self)}) vs ({other.sample_rate}, {len(other)})"
            )

    def __add__(self, other: "SampledSignal") -> "SampledSignal":
        self._check_compatible(other)
        return self.replace(self.samples + other.samples)

    def __sub__(self, other: "SampledSignal") -> "SampledSignal":
        self._check_compatible(other)
        return self.replace(self.samples - other.samples)

    def __mul__(self, other):
        if isinstance(other, SampledSignal):
            self._check_compatible(other)
            return self.replace(self.samples * other.samples)
        return self.replace(self.samples * other)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Spectrum:
    """DFT of a (possibly zero-padded) record, in standard DFT bin order."""

    sample_rate: float
    bins: np.ndarray
    zero_pad_factor: int = 1
    freq_resolution: float = field(init=False)

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        bins.flags.writeable = False
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "freq_resolution", self.sample_rate / bins.size)

    def frequencies(self) -> np.ndarray:
        return np.fft.fftfreq(self.bins.size, d=1.0 / self.sample_rate)

    def magnitude_db(self, floor: float = 1e-300) -> np.ndarray:
        return 20.0 * np.log10(np.maximum(np.abs(self.bins), floor))


def _require_samples(signal: SampledSignal) -> None:
    if len(signal) == 0:
        raise ConfigError("empty input")


def fft(signal: SampledSignal, zero_pad_factor: int = 1) -> Spectrum:
    """Zero-padded DFT.  ``freq_resolution = fs / (len * zero_pad_factor)``."""
    _require_samples(signal)
    if int(zero_pad_factor) != zero_pad_factor or zero_pad_factor < 1:
        raise ConfigError(f"zero_pad_factor must be an integer >= 1, got {zero_pad_factor}")
    n = len(signal) * int(zero_pad_factor)
    return Spectrum(signal.sample_rate, np.fft.fft(signal.samples, n), int(zero_pad_factor))


def ifft(spectrum: Spectrum, length: int | None = None) -> SampledSignal:
    """Inverse of :func:`fft`; ``length`` trims the zero padding back off."""
    x = np.fft.ifft(spectrum.bins)
    if length is None:
        length = spectrum.bins.size // spectrum.zero_pad_factor
    return SampledSignal(spectrum.sample_rate, x[:length])


def normalized_correlation(a, b) -> float:
    """Zero-lag normalized correlation |<a, b>| / (|a| |b|)."""
    x = a.samples if isinstance(a, SampledSignal) else np.asarray(a)
    y = b.samples if isinstance(b, SampledSignal) else np.asarray(b)
    if x.shape != y.shape:
        raise ConfigError(f"length mismatch: {x.shape} vs {y.shape}")
    den = np.linalg.norm(x) * np.linalg.norm(y)
    if den == 0:
        return 0.0
    return float(abs(np.vdot(y, x)) / den)


# -- FIR design ------------------------------------------------------------


def kaiser_beta(attenuation_db: float) -> float:
    a = attenuation_db
    if a > 50:
        return 0.1102 * (a - 8.7)
    if a >= 21:
        return 0.5842 * (a - 21) ** 0.4 + 0.07886 * (a - 21)
    return 0.0


def kaiser_num_taps(transition_hz: float, sample_rate: float,
                    attenuation_db: float = DEFAULT_ATTENUATION_DB) -> int:
    """Smallest odd tap count meeting ``attenuation_db`` over ``transition_hz``."""
    dw = 2 * np.pi * transition_hz / sample_rate
    n = int(math.ceil((attenuation_db - 7.95) / (2.285 * dw))) + 1
    return n + 1 - n % 2


def _check_edges(edges, sample_rate):
    nyq = sample_rate / 2
    for e in edges:
        if not 0 < e < nyq:
            raise ConfigError(f"band out of range: edge {e:g} Hz outside (0, {nyq:g}) Hz")


@lru_cache(maxsize=64)
def _design(kind: str, edges: tuple, num_taps: int, sample_rate: float,
            attenuation_db: float) -> np.ndarray:
    n = np.arange(num_taps) - (num_taps - 1) / 2
    win = np.kaiser(num_taps, kaiser_beta(attenuation_db))
    fc = [e / sample_rate for e in edges]
    if kind == "lowpass":
        h = 2 * fc[0] * np.sinc(2 * fc[0] * n)
    elif kind == "bandpass":
        lo, hi = fc
        h = 2 * hi * np.sinc(2 * hi * n) - 2 * lo * np.sinc(2 * lo * n)
    else:
        raise ConfigError(f"unknown filter kind {kind!r}")
    h = h * win
    if kind == "lowpass":
        h /= h.sum()
    else:
        # unity gain at the band centre
        f_mid = 0.5 * (fc[0] + fc[1])
        h /= abs(np.sum(h * np.exp(-2j * np.pi * f_mid * n)))
    h.flags.writeable = False
    return h


def design_fir(kind: str, edges, num_taps: int = DEFAULT_NUM_TAPS,
               sample_rate: float = DEFAULT_SAMPLE_RATE,
               attenuation_db: float = DEFAULT_ATTENUATION_DB) -> np.ndarray:
    """Kaiser-windowed sinc taps (linear phase, odd length).

    ``edges`` is the cutoff for a lowpass or the ``(low, high)`` pair for a
    bandpass; each edge is the -6 dB point of the response.
    """
    edges = (float(edges),) if np.isscalar(edges) else tuple(float(e) for e in edges)
    if kind == "lowpass" and len(edges) != 1:
        raise ConfigError("lowpass takes a single cutoff")
    if kind == "bandpass" and (len(edges) != 2 or edges[0] >= edges[1]):
        raise ConfigError("bandpass takes (low, high) with low < high")
    _check_edges(edges, sample_rate)
    if num_taps < 1 or num_taps % 2 == 0:
        raise ConfigError(f"num_taps must be odd, got {num_taps}")
    return _design(kind, edges, int(num_taps), float(sample_rate), float(attenuation_db))


def frequency_response(taps: np.ndarray, freqs, sample_rate: float) -> np.ndarray:
    """Zero-phase (group-delay removed) response of centred taps at ``freqs``."""
    n = np.arange(taps.size) - (taps.size - 1) / 2
    f = np.atleast_1d(np.asarray(freqs, dtype=float)) / sample_rate
    return np.exp(-2j * np.pi * np.outer(f, n)) @ taps


def convolve_centered(x: np.ndarray, taps: np.ndarray, boundary: str = "periodic") -> np.ndarray:
    """Apply centred odd-length taps with zero net delay.

    ``periodic`` treats ``x`` as one period of a periodic record (circular
    convolution); ``zero`` assumes zeros outside the record.
    """
    n = x.size
    m = taps.size
    half = (m - 1) // 2
    if boundary == "zero":
        nfft = _fast_len(n + m - 1)
        y = _fft_conv(x, taps, nfft)
        return y[half:half + n]
    if boundary != "periodic":
        raise ConfigError(f"unknown boundary {boundary!r}")
    # wrap taps onto the record so tap `half` sits at index 0
    h = np.zeros(n, dtype=taps.dtype)
    np.add.at(h, (np.arange(m) - half) % n, taps)
    return _fft_conv(x, h, n)[:n]


def _fft_conv(x, h, nfft):
    if np.iscomplexobj(x) or np.iscomplexobj(h):
        return np.fft.ifft(np.fft.fft(x, nfft) * np.fft.fft(h, nfft))
    return np.fft.irfft(np.fft.rfft(x, nfft) * np.fft.rfft(h, nfft), nfft)


def _fast_len(n: int) -> int:
    """Next 5-smooth length >= n."""
    best = 1 << (n - 1).bit_length()
    p5 = 1
    while p5 < best:
        p35 = p5
        while p35 < best:
            q = p35
            while q < n:
                q *= 2
            best = min(best, q)
            p35 *= 3
        p5 *= 5
    return best


def fir_filter(signal: SampledSignal, kind: str, edges, num_taps: int = DEFAULT_NUM_TAPS,
               boundary: str = "periodic") -> SampledSignal:
    """Linear-phase windowed-sinc FIR, time-aligned with its input."""
    _require_samples(signal)
    taps = design_fir(kind, edges, num_taps, signal.sample_rate)
    y = convolve_centered(signal.samples, taps, boundary)
    if not signal.is_complex:
        y = np.real(y)
    return signal.replace(y)


def decimate(signal: SampledSignal, factor: int, cutoff: float | None = None,
             transition: float | None = None, boundary: str = "periodic") -> SampledSignal:
    """Anti-alias lowpass (Kaiser, sized from ``transition``) then keep every
    ``factor``-th sample."""
    _require_samples(signal)
    if int(factor) != factor or factor < 1:
        raise ConfigError(f"decimation factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return signal
    out_rate = signal.sample_rate / factor
    if cutoff is None:
        cutoff = 0.45 * out_rate
    if transition is None:
        transition = 2 * (0.5 * out_rate - cutoff)
    taps_n = kaiser_num_taps(transition, signal.sample_rate)
    filtered = fir_filter(signal, "lowpass", cutoff, taps_n, boundary)
    return SampledSignal(out_rate, filtered.samples[::factor], signal.start_time)


@lru_cache(maxsize=32)
def periodic_response(kind: str, edges, num_taps: int, sample_rate: float, n: int) -> np.ndarray:
    """DFT (length ``n``) of centred taps wrapped onto an ``n``-sample period."""
    taps = design_fir(kind, edges, num_taps, sample_rate)
    half = (taps.size - 1) // 2
    h = np.zeros(n)
    np.add.at(h, (np.arange(taps.size) - half) % n, taps)
    out = np.fft.fft(h)
    out.flags.writeable = False
    return out


def filter_decimate(x: np.ndarray, response: np.ndarray, factor: int) -> np.ndarray:
    """Circular filtering by ``response`` followed by keeping every ``factor``-th sample.

    Subsampling is done by folding the spectrum onto ``n / factor`` bins,
    which equals filtering in time and slicing, at one full-length FFT.
    """
    n = x.size
    if n % factor:
        raise ConfigError(f"record length {n} is not a multiple of {factor}")
    if np.iscomplexobj(x):
        spec = np.fft.fft(x)
    else:
        half = np.fft.rfft(x)
        spec = np.empty(n, dtype=complex)
        spec[:half.size] = half
        spec[half.size:] = np.conj(half[1:(n + 1) // 2][::-1])
    spec *= response
    folded = spec.reshape(factor, n // factor).sum(axis=0)
    y = np.fft.ifft(folded) / factor
    return y if np.iscomplexobj(x) else y.real


# -- delays ------------------------------------------------------------------


@lru_cache(maxsize=4096)
def _frac_delay_taps(frac: float, num_taps: int, attenuation_db: float) -> np.ndarray:
    # taps span offsets -(num_taps/2 - 1) .. num_taps/2
    j = np.arange(num_taps) - (num_taps // 2 - 1)
    x = j - frac
    half = num_taps / 2
    beta = kaiser_beta(attenuation_db)
    w = np.i0(beta * np.sqrt(np.clip(1 - (x / half) ** 2, 0, None))) / np.i0(beta)
    h = np.sinc(x) * w
    h.flags.writeable = False
    return h


def fractional_delay(signal: SampledSignal, delay: float, num_taps: int = 64,
                     attenuation_db: float = 80.0) -> SampledSignal:
    """Delay by ``delay`` seconds using a Kaiser-windowed sinc interpolator.

    The record is treated as periodic, so samples pushed past the end wrap to
    the start.  Integer-sample delays are exact shifts.
    """
    _require_samples(signal)
    d = delay * signal.sample_rate
    whole = math.floor(d)
    frac = d - whole
    x = np.roll(signal.samples, whole)
    if frac < 1e-12:
        return signal.replace(x)
    taps = _frac_delay_taps(round(frac, 12), num_taps, attenuation_db)
    lo = num_taps // 2 - 1
    hi = num_taps - 1 - lo
    # y[n] = sum_j h[j] x[n - j]; pad circularly then take the valid part
    xp = np.concatenate([x[-hi:], x, x[:lo]])
    y = np.convolve(xp, taps, mode="valid")
    return signal.replace(y)


# -- noise and power -----------------------------------------------------------


def add_awgn(signal: SampledSignal, snr_db: float, seed) -> SampledSignal:
    """Add white Gaussian noise at ``snr_db`` relative to the record's mean power.

    ``snr_db = NO_NOISE`` (``inf``) returns the input unchanged.  Complex
    signals get circular noise, half the power in each component.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return signal
    p = signal.power()
    if p == 0:
        raise ConfigError("undefined SNR: zero-power signal")
    noise_power = p / 10 ** (snr_db / 10)
    rng = np.random.default_rng(seed)
    n = len(signal)
    if signal.is_complex:
        noise = math.sqrt(noise_power / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    else:
        noise = math.sqrt(noise_power) * rng.standard_normal(n)
    return signal.replace(signal.samples + noise)


def measure_power_dbm(signal: SampledSignal, load_ohms: float = 50.0) -> float:
    """Mean power delivered into ``load_ohms`` in dBm; ``-inf`` for silence."""
    if not load_ohms > 0:
        raise ConfigError("load_ohms must be positive")
    p = np.mean(np.abs(signal.samples) ** 2) / load_ohms
    if p == 0:
        return -math.inf
    return float(10 * np.log10(p / 1e-3))
