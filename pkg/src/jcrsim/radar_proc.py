"""Radar side: echo synthesis, de-chirp ranging and range-Doppler ISAR.

Every pulse is processed as one period of a periodic pulse train, so delays
and filters wrap circularly within the period.  The de-chirp reference is the
transmitted sliced chirp itself, data phase included, which leaves the
``phi(t) - phi(t - delay)`` residue in the beat signal.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, SimulationError
from .photonic_link import analytic_period
from .signal_core import (
    DEFAULT_NUM_TAPS,
    SampledSignal,
    add_awgn,
    decimate,
    filter_decimate,
    fir_filter,
    fractional_delay,
    kaiser_num_taps,
    periodic_response,
)
from .waveform_gen import LfmParams, QpskFrame, gen_qpsk_frame

C_LIGHT = 2.9979e8
ELPF_CUTOFF = 1.4e9
DECHIRP_RATE = 20e6
WINDOWS = ("hann", "rect")


class DetectionError(SimulationError):
    pass


@dataclass(frozen=True)
class Scatterer:
    x: float
    y: float
    reflectivity: float = 1.0

    def __post_init__(self):
        if self.reflectivity < 0:
            raise ConfigError("reflectivity must be >= 0")


@dataclass(frozen=True)
class TargetScene:
    """Point scatterers in the turntable frame; ``y`` points along the line of sight."""

    scatterers: tuple
    standoff: float
    omega: float = 0.0
    c: float = C_LIGHT
    theta0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        if not self.standoff > 0:
            raise ConfigError("standoff distance must be positive")
        if not self.scatterers:
            raise ConfigError("scene has no scatterers")

    @classmethod
    def static(cls, distances, reflectivity=1.0, c=C_LIGHT) -> "TargetScene":
        """Targets on the line of sight at the given ranges."""
        d0 = float(min(distances))
        return cls(tuple(Scatterer(0.0, d - d0, reflectivity) for d in distances), d0, 0.0, c)

    def ranges(self, slow_time: float = 0.0) -> np.ndarray:
        th = self.theta0 + self.omega * slow_time
        xs = np.array([s.x for s in self.scatterers])
        ys = np.array([s.y for s in self.scatterers])
        return self.standoff + xs * math.sin(th) + ys * math.cos(th)

    def delays(self, slow_time: float = 0.0) -> np.ndarray:
        return 2 * self.ranges(slow_time) / self.c


@dataclass(frozen=True, eq=False)
class RangeProfile:
    beat_frequencies: np.ndarray
    magnitude_db: np.ndarray
    chirp_rate: float
    c: float = C_LIGHT

    @property
    def distances(self) -> np.ndarray:
        return self.c * self.beat_frequencies / (2 * self.chirp_rate)


@dataclass(frozen=True, eq=False)
class IsarImage:
    """Range-Doppler image in dB normalized to its peak; rows are range bins."""

    pixels: np.ndarray
    range_axis: np.ndarray
    crossrange_axis: np.ndarray
    predicted_res: tuple
    integration_time: float
    wavelength: float
    dynamic_range_db: float = 40.0

    def power(self) -> np.ndarray:
        return 10 ** (self.pixels / 10)


# -- per-pulse pipeline ---------------------------------------------------------


def synth_echo(tx: SampledSignal, scene: TargetScene, pulse_index: int, lfm: LfmParams,
               echo_scale: float = 1.0, slow_time_ref: float = 0.0,
               interp_taps: int = 64) -> SampledSignal:
    """Sum of scaled, delayed copies of one transmitted period."""
    slow_time = pulse_index * lfm.period - slow_time_ref
    delays = scene.delays(slow_time)
    if np.any(delays >= lfm.active_duration) or np.any(delays < 0):
        raise ConfigError(
            f"target beyond unambiguous range: delay {delays.max():.4g} s vs active "
            f"duration {lfm.active_duration:.4g} s"
        )
    out = np.zeros(len(tx))
    for s, tau in zip(scene.scatterers, delays):
        if s.reflectivity == 0:
            continue
        out += s.reflectivity * echo_scale * fractional_delay(tx, tau, interp_taps).samples
    return tx.replace(out)


def dechirp(echo: SampledSignal, reference: SampledSignal, elpf_cutoff: float = ELPF_CUTOFF,
            num_taps: int = DEFAULT_NUM_TAPS) -> SampledSignal:
    """Mixer product of echo and reference followed by the electrical lowpass."""
    return fir_filter(echo * reference, "lowpass", elpf_cutoff, num_taps)


def decimation_factor(sample_rate: float, out_rate: float) -> int:
    ratio = sample_rate / out_rate
    factor = round(ratio)
    if factor < 1 or abs(ratio - factor) > 1e-9 * ratio:
        nearest = sample_rate / max(1, factor)
        raise ConfigError(
            f"non-integer decimation {ratio:.6g}; nearest valid output rate is {nearest:.6g} Hz"
        )
    return int(factor)


def decimate_dechirped(signal: SampledSignal, out_rate: float = DECHIRP_RATE) -> SampledSignal:
    """Integer-factor decimation with an anti-alias filter that stops at ``out_rate/2``."""
    factor = decimation_factor(signal.sample_rate, out_rate)
    return decimate(signal, factor, cutoff=0.45 * out_rate, transition=0.1 * out_rate)


def dechirp_decimate(echo: SampledSignal, reference: SampledSignal,
                     elpf_cutoff: float = ELPF_CUTOFF, elpf_taps: int = DEFAULT_NUM_TAPS,
                     out_rate: float = DECHIRP_RATE) -> SampledSignal:
    """Same result as :func:`dechirp` then :func:`decimate_dechirped`, in one FFT pass."""
    echo._check_compatible(reference)
    fs, n = echo.sample_rate, len(echo)
    factor = decimation_factor(fs, out_rate)
    aa_taps = kaiser_num_taps(0.1 * out_rate, fs)
    response = (periodic_response("lowpass", float(elpf_cutoff), elpf_taps, fs, n)
                * periodic_response("lowpass", 0.45 * out_rate, aa_taps, fs, n))
    y = filter_decimate((echo * reference).samples, response, factor)
    return SampledSignal(fs / factor, y, echo.start_time)


@dataclass(frozen=True)
class RadarReceiver:
    """Processing knobs shared by ranging and imaging runs."""

    elpf_cutoff: float = ELPF_CUTOFF
    elpf_taps: int = DEFAULT_NUM_TAPS
    out_rate: float = DECHIRP_RATE
    echo_scale: float = 1.0
    interp_taps: int = 64
    snr_db: float = math.inf

    def pulse(self, lfm: LfmParams, frame: QpskFrame, scene: TargetScene, pulse_index: int,
              sample_rate: float, amp: float = 1.0, phase_enabled: bool = True,
              slow_time_ref: float = 0.0, seed: int = 0) -> np.ndarray:
        """De-chirped, decimated samples of one pulse."""
        tx = SampledSignal(sample_rate, analytic_period(lfm, frame, pulse_index % frame.num_periods,
                                                        amp, sample_rate, phase_enabled))
        echo = synth_echo(tx, scene, pulse_index, lfm, self.echo_scale, slow_time_ref,
                          self.interp_taps)
        if not math.isinf(self.snr_db):
            echo = add_awgn(echo, self.snr_db, seed=(seed, pulse_index))
        return dechirp_decimate(echo, tx, self.elpf_cutoff, self.elpf_taps, self.out_rate).samples

    def collect(self, lfm: LfmParams, frame: QpskFrame, scene: TargetScene, num_pulses: int,
                sample_rate: float, amp: float = 1.0, phase_enabled: bool = True,
                threads: int = 1, centered: bool = True, seed: int = 0) -> np.ndarray:
        """``M x N`` matrix of de-chirped pulses (fast time down the rows)."""
        ref = 0.5 * (num_pulses - 1) * lfm.period if centered else 0.0

        def one(p):
            return self.pulse(lfm, frame, scene, p, sample_rate, amp, phase_enabled, ref, seed)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                cols = list(pool.map(one, range(num_pulses)))
        else:
            cols = [one(p) for p in range(num_pulses)]
        return np.stack(cols, axis=1)


# -- ranging --------------------------------------------------------------------


def _window(name: str, n: int) -> np.ndarray:
    if name == "hann":
        return np.hanning(n)
    if name == "rect":
        return np.ones(n)
    raise ConfigError(f"unknown window {name!r}; choose from {WINDOWS}")


def range_profile(dechirped, chirp_rate: float, zero_pad: int = 8, window: str = "hann",
                  c: float = C_LIGHT, sample_rate: float | None = None) -> RangeProfile:
    """Windowed, zero-padded spectrum of one de-chirped pulse on a distance axis."""
    if isinstance(dechirped, SampledSignal):
        x, fs = dechirped.samples, dechirped.sample_rate
    else:
        x, fs = np.asarray(dechirped), sample_rate
        if fs is None:
            raise ConfigError("sample_rate required for bare arrays")
    x = np.real(x)
    n = x.size * int(zero_pad)
    spec = np.fft.rfft(x * _window(window, x.size), n)
    mag = np.abs(spec)
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag)
    return RangeProfile(np.fft.rfftfreq(n, 1 / fs), db, chirp_rate, c)


def parabolic_peak(y: np.ndarray, i: int) -> tuple[float, float]:
    """Vertex (offset, height) of the parabola through ``y[i-1:i+2]``."""
    if i <= 0 or i >= y.size - 1:
        return 0.0, float(y[i])
    a, b, g = y[i - 1], y[i], y[i + 1]
    den = a - 2 * b + g
    if den == 0 or not np.isfinite(den):
        return 0.0, float(b)
    p = 0.5 * (a - g) / den
    return p, float(b - 0.25 * (a - g) * p)


def find_peaks(y: np.ndarray, floor_db: float) -> list[int]:
    """Indices of local maxima no more than ``floor_db`` below the global max."""
    top = np.max(y)
    inner = (y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]) & (y[1:-1] >= top + floor_db)
    return list(np.nonzero(inner)[0] + 1)


def estimate_distances(profile: RangeProfile, num_targets: int = 1,
                       floor_db: float = -20.0) -> list[float]:
    """Distances of the ``num_targets`` strongest peaks, parabola-refined, ascending."""
    if num_targets < 1:
        raise ConfigError("num_targets must be >= 1")
    y = profile.magnitude_db
    peaks = find_peaks(y, floor_db)
    if len(peaks) < num_targets:
        raise DetectionError(
            f"found {len(peaks)} peak(s) within {-floor_db:g} dB of the maximum, "
            f"{num_targets} requested"
        )
    peaks = sorted(peaks, key=lambda i: -y[i])[:num_targets]
    df = profile.beat_frequencies[1] - profile.beat_frequencies[0]
    out = []
    for i in peaks:
        p, _ = parabolic_peak(y, i)
        out.append(profile.c * (profile.beat_frequencies[i] + p * df) / (2 * profile.chirp_rate))
    return sorted(out)


def peak_beat_frequency(profile: RangeProfile) -> float:
    i = int(np.argmax(profile.magnitude_db))
    p, _ = parabolic_peak(profile.magnitude_db, i)
    df = profile.beat_frequencies[1] - profile.beat_frequencies[0]
    return float(profile.beat_frequencies[i] + p * df)


def predict_resolution(bandwidth: float, wavelength: float, integration_time: float,
                       omega: float, c: float = C_LIGHT) -> tuple[float, float]:
    """Range resolution c/2B and cross-range resolution lambda/(2 Tr Omega)."""
    if min(bandwidth, wavelength, integration_time, omega) <= 0:
        raise ConfigError("resolution inputs must all be positive")
    return c / (2 * bandwidth), wavelength / (2 * integration_time * omega)


# -- imaging ----------------------------------------------------------------------


def isar_image(pulses: np.ndarray, sample_rate: float, lfm: LfmParams, wavelength: float,
               integration_time: float, omega: float, window: str = "hann",
               range_pad: int = 4, doppler_pad: int = 4, c: float = C_LIGHT,
               range_limits=None, crossrange_limits=None,
               dynamic_range_db: float = 40.0) -> IsarImage:
    """Range-Doppler image from an ``M x N`` matrix of de-chirped pulses."""
    pulses = np.real(np.asarray(pulses))
    if pulses.ndim != 2:
        raise ConfigError("pulses must be an M x N matrix")
    m, n = pulses.shape
    if n < 16:
        raise ConfigError(f"need at least 16 pulses, got {n}")
    if omega == 0:
        raise ConfigError("no cross-range diversity: turntable rate is zero")
    prf = n / integration_time
    fast = np.fft.rfft(pulses * _window(window, m)[:, None], m * range_pad, axis=0)
    slow = np.fft.fftshift(
        np.fft.fft(fast * _window(window, n)[None, :], n * doppler_pad, axis=1), axes=1
    )
    beat = np.fft.rfftfreq(m * range_pad, 1 / sample_rate)
    doppler = np.fft.fftshift(np.fft.fftfreq(n * doppler_pad, 1 / prf))
    r_axis = c * beat / (2 * lfm.chirp_rate)
    x_axis = doppler * wavelength / (2 * omega)
    p = np.abs(slow) ** 2
    if range_limits is not None:
        keep = (r_axis >= range_limits[0]) & (r_axis <= range_limits[1])
        p, r_axis = p[keep], r_axis[keep]
    if crossrange_limits is not None:
        keep = (x_axis >= crossrange_limits[0]) & (x_axis <= crossrange_limits[1])
        p, x_axis = p[:, keep], x_axis[keep]
    peak = p.max()
    if peak == 0:
        raise SimulationError("empty image")
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(p / peak)
    res = predict_resolution(lfm.bandwidth, wavelength, integration_time, omega, c)
    return IsarImage(db, r_axis, x_axis, res, integration_time, wavelength, dynamic_range_db)


def _width_at(y: np.ndarray, axis: np.ndarray, i: int, level: float) -> float:
    """Width of the lobe around ``y[i]`` where it stays above ``level``."""
    lo = i
    while lo > 0 and y[lo - 1] >= level:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi + 1] >= level:
        hi += 1

    def cross(a, b):
        # linear interpolation of the level crossing between samples a and b
        t = (level - y[a]) / (y[b] - y[a])
        return axis[a] + t * (axis[b] - axis[a])

    left = cross(lo - 1, lo) if lo > 0 else axis[0]
    right = cross(hi + 1, hi) if hi < y.size - 1 else axis[-1]
    return float(abs(right - left))


def psf_widths(image: IsarImage, level_db: float = -3.0) -> tuple[float, float]:
    """Range and cross-range widths of the brightest lobe at ``level_db``."""
    i, j = np.unravel_index(np.argmax(image.pixels), image.pixels.shape)
    wr = _width_at(image.pixels[:, j], image.range_axis, i, level_db)
    wx = _width_at(image.pixels[i, :], image.crossrange_axis, j, level_db)
    return wr, wx


def image_peaks(image: IsarImage, count: int, guard: tuple | None = None):
    """Positions and levels of the ``count`` strongest separated local maxima.

    ``guard`` is the ``(range, crossrange)`` half-size of the exclusion box
    around each accepted peak; defaults to one predicted resolution cell.
    """
    guard = guard or image.predicted_res
    db = image.pixels
    inner = np.ones_like(db, dtype=bool)
    padded = np.pad(db, 1, constant_values=-np.inf)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                inner &= db >= padded[1 + di:1 + di + db.shape[0], 1 + dj:1 + dj + db.shape[1]]
    cand = sorted(zip(*np.nonzero(inner)), key=lambda ij: -db[ij])
    found = []
    for i, j in cand:
        r, x = image.range_axis[i], image.crossrange_axis[j]
        if all(abs(r - fr) > guard[0] or abs(x - fx) > guard[1] for fr, fx, _ in found):
            found.append((float(r), float(x), float(db[i, j])))
        if len(found) == count:
            break
    return found


def background_level_db(image: IsarImage) -> float:
    """Median pixel level, a robust estimate of the image floor."""
    return float(np.median(image.pixels))


def image_contrast_db(image: IsarImage) -> float:
    """Peak over mean level of the image displayed within its dynamic range.

    Pixels are clipped at ``-dynamic_range_db`` first, so disturbances below
    the display floor leave the score unchanged.
    """
    shown = np.maximum(image.pixels, -image.dynamic_range_db)
    return float(-np.mean(shown))


def peak_to_islr_db(profile: RangeProfile, mainlobe_halfwidth_hz: float,
                    num_peaks: int = 1, floor_db: float = -20.0) -> float:
    """Mainlobe energy over integrated sidelobe energy of a range profile, dB.

    Mainlobes are the ``+-mainlobe_halfwidth_hz`` spans around the
    ``num_peaks`` strongest local maxima; everything else is sidelobe.
    """
    y = profile.magnitude_db
    p = 10 ** (y / 10)
    f = profile.beat_frequencies
    peaks = sorted(find_peaks(y, floor_db), key=lambda i: -y[i])[:num_peaks] or [int(np.argmax(y))]
    main = np.zeros(p.size, dtype=bool)
    for i in peaks:
        main |= np.abs(f - f[i]) <= mainlobe_halfwidth_hz
    side = p[~main].sum()
    return math.inf if side == 0 else float(10 * np.log10(p[main].sum() / side))


def mean_range_profile(pulses: np.ndarray, sample_rate: float, chirp_rate: float,
                       zero_pad: int = 8, window: str = "hann", c: float = C_LIGHT) -> RangeProfile:
    """Pulse-averaged power of the range profiles in an ``M x N`` matrix."""
    m = pulses.shape[0]
    spec = np.fft.rfft(np.real(pulses) * _window(window, m)[:, None], m * zero_pad, axis=0)
    power = np.mean(np.abs(spec) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(power)
    return RangeProfile(np.fft.rfftfreq(m * zero_pad, 1 / sample_rate), db, chirp_rate, c)


def wavelength_of(lfm: LfmParams, c: float = C_LIGHT) -> float:
    """Centre wavelength of the transmitted sweep."""
    return c / lfm.center_frequency


# -- data-phase residue study ------------------------------------------------------

SWEEP_SCATTERERS = (Scatterer(0.0, 0.15), Scatterer(-0.12, -0.10), Scatterer(0.10, -0.05))


@dataclass(frozen=True)
class SweepRow:
    distance: float
    symbol_duration: float
    delay_ratio: float
    pislr_db: float
    contrast_db: float
    baseline_pislr_db: float
    baseline_contrast_db: float

    @property
    def contrast_loss_db(self) -> float:
        return self.baseline_contrast_db - self.contrast_db


def symbol_durations_for_ratios(distance: float, ratios, lfm: LfmParams,
                                c: float = C_LIGHT) -> list[float]:
    """On-grid symbol durations whose delay ratio at ``distance`` is nearest each target."""
    tau = 2 * distance / c
    out = []
    for r in ratios:
        if not r > 0:
            raise ConfigError("delay ratios must be positive")
        n = max(1, round(lfm.active_duration * r / tau))
        out.append(lfm.active_duration / n)
    return out


@dataclass(frozen=True)
class PhaseSweepConfig:
    """Fixed imaging setup for the residue study (all rows share it)."""

    lfm: LfmParams
    scatterers: tuple = SWEEP_SCATTERERS
    num_pulses: int = 128
    rotation: float = 0.5125
    sample_rate: float = 40e9
    seeds: tuple = (0, 1, 2, 3)
    dynamic_range_db: float = 30.0
    crop_halfwidth: float = 0.6
    receiver: RadarReceiver = field(default_factory=RadarReceiver)
    threads: int = 1

    @property
    def integration_time(self) -> float:
        return self.num_pulses * self.lfm.period

    @property
    def omega(self) -> float:
        return self.rotation / self.integration_time


def _sweep_point(cfg: PhaseSweepConfig, distance: float, frame: QpskFrame, phase_enabled: bool):
    lfm = cfg.lfm
    scene = TargetScene(cfg.scatterers, distance, cfg.omega)
    x = cfg.receiver.collect(lfm, frame, scene, cfg.num_pulses, cfg.sample_rate,
                             phase_enabled=phase_enabled, threads=cfg.threads)
    fs_out = cfg.receiver.out_rate
    h = cfg.crop_halfwidth
    img = isar_image(x, fs_out, lfm, wavelength_of(lfm), cfg.integration_time, cfg.omega,
                     range_limits=(distance - h, distance + h), crossrange_limits=(-h, h),
                     dynamic_range_db=cfg.dynamic_range_db)
    prof = mean_range_profile(x, fs_out, lfm.chirp_rate)
    # Hann mainlobe spans two bins of the unpadded record either side
    halfwidth = 2 * fs_out / x.shape[0]
    return peak_to_islr_db(prof, halfwidth, len(cfg.scatterers)), image_contrast_db(img)


def phase_term_sweep(distances, symbol_durations, cfg: PhaseSweepConfig) -> list[SweepRow]:
    """Range and image quality with the data phase kept in echo and reference.

    Every (distance, symbol duration) pair is imaged once per seed and the
    metrics are averaged over seeds; the baseline is the same scene with the
    data phase removed.
    """
    distances, symbol_durations = list(distances), list(symbol_durations)
    if not distances or not symbol_durations:
        raise ConfigError("phase sweep needs at least one distance and one symbol duration")
    if not cfg.seeds:
        raise ConfigError("phase sweep needs at least one seed")
    rows = []
    for d in distances:
        base_frame = gen_qpsk_frame(2 / symbol_durations[0], cfg.lfm, cfg.num_pulses, seed=0)
        base = _sweep_point(cfg, d, base_frame, phase_enabled=False)
        for ts in symbol_durations:
            metrics = []
            for seed in cfg.seeds:
                frame = gen_qpsk_frame(2 / ts, cfg.lfm, cfg.num_pulses, seed=seed)
                metrics.append(_sweep_point(cfg, d, frame, phase_enabled=True))
            pislr, contrast = np.mean(metrics, axis=0)
            ratio = 2 * d / C_LIGHT / ts
            rows.append(SweepRow(d, ts, ratio, float(pislr), float(contrast), base[0], base[1]))
    return rows
