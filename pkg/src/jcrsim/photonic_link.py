"""Optical front end: DPol-DPMZM field models, polarizer, EDFA and photodiode.

Optical fields are complex envelopes relative to the laser frequency; the
``exp(j*2*pi*fc*t)`` factor is never sampled.  Modulators use the exact cosine
transfer of each sub-MZM, so higher-order sidebands come out of the model on
their own.  :func:`analytic_joint_signal` is the small-signal closed form of
the detected sliced chirp and serves as the transmitter for the radar and
communication receivers and as the oracle for the exact chain.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .signal_core import DEFAULT_NUM_TAPS, SampledSignal, fir_filter
from .waveform_gen import LfmParams, QpskFrame, period_grid, render_period, symbol_index

EBPF_BAND = (7.91e9, 11.1e9)
SMALL_SIGNAL_LIMIT = 0.5


@dataclass(frozen=True)
class OpticalCarrier:
    amplitude: float = 1.0
    # bookkeeping only: 1550.87 nm
    frequency: float = 193.307e12

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ConfigError("optical carrier amplitude must be positive")


@dataclass(frozen=True)
class ModulatorConfig:
    """Half-wave voltage and the three DC biases of one DPMZM."""

    v_pi: float
    bias_v1: float
    bias_v2: float
    bias_v3: float

    def __post_init__(self):
        if not self.v_pi > 0:
            raise ConfigError("v_pi must be positive")

    @classmethod
    def cs_ssb(cls, v_pi: float) -> "ModulatorConfig":
        """Sub-MZMs at null, parent at quadrature (also the IQ-modulator bias)."""
        return cls(v_pi, -v_pi, -v_pi, v_pi / 2)

    @property
    def m2(self) -> float:
        """Data modulation index per volt, pi / (2 V_pi)."""
        return math.pi / (2 * self.v_pi)

    def m1(self, v_rf: float) -> float:
        return math.pi * v_rf / (2 * self.v_pi)

    def v_rf_for(self, m1: float) -> float:
        return 2 * self.v_pi * m1 / math.pi


@dataclass(frozen=True)
class DetectorConfig:
    responsivity: float = 1.0
    edfa_gain: float = 1.0
    load: float = 50.0

    def __post_init__(self):
        if not (self.responsivity > 0 and self.edfa_gain > 0 and self.load > 0):
            raise ConfigError("responsivity, EDFA gain and load must be positive")


def _values(x):
    return x.samples if isinstance(x, SampledSignal) else np.asarray(x, dtype=float)


def xdpmzm_field(carrier: OpticalCarrier, vrf1, vrf2, cfg: ModulatorConfig):
    """Output envelope of the RF-driven DPMZM for drive voltages ``vrf1``, ``vrf2``.

    Accepts :class:`SampledSignal` (returns one) or bare arrays.
    """
    a, b = _values(vrf1), _values(vrf2)
    if a.shape != b.shape:
        raise ConfigError("vrf1 and vrf2 differ in length")
    if isinstance(vrf1, SampledSignal) and isinstance(vrf2, SampledSignal):
        vrf1._check_compatible(vrf2)
    k = math.pi / (2 * cfg.v_pi)
    arm1 = np.cos(k * (a + cfg.bias_v1)) * np.exp(1j * k * cfg.bias_v1)
    arm2 = (np.cos(k * (b + cfg.bias_v2)) * np.exp(1j * k * cfg.bias_v2)
            * np.exp(1j * math.pi * cfg.bias_v3 / cfg.v_pi))
    # (sqrt2/4) * sqrt2*E_in
    field = 0.5 * carrier.amplitude * (arm1 + arm2)
    return vrf1.replace(field) if isinstance(vrf1, SampledSignal) else field


def ydpmzm_field(carrier: OpticalCarrier, i_wave, q_wave, cfg: ModulatorConfig):
    """Output envelope of the data-driven DPMZM operated as an IQ modulator."""
    i, q = _values(i_wave), _values(q_wave)
    if i.shape != q.shape:
        raise ConfigError("I and Q drives differ in length")
    if max(np.max(np.abs(i), initial=0), np.max(np.abs(q), initial=0)) > cfg.v_pi:
        raise ConfigError("data drive exceeds v_pi")
    k = math.pi / (2 * cfg.v_pi)
    field = 0.5 * carrier.amplitude * (
        np.cos(k * (i + cfg.bias_v1))
        + np.cos(k * (q + cfg.bias_v2)) * np.exp(1j * math.pi * cfg.bias_v3 / cfg.v_pi)
    )
    return i_wave.replace(field) if isinstance(i_wave, SampledSignal) else field


def pol_combine(ex, ey):
    """Projection of two orthogonal polarizations onto a polarizer at 45 degrees."""
    if isinstance(ex, SampledSignal):
        ex._check_compatible(ey)
        return ex.replace((ex.samples + ey.samples) / math.sqrt(2))
    ex, ey = np.asarray(ex), np.asarray(ey)
    if ex.shape != ey.shape:
        raise ConfigError("fields differ in length")
    return (ex + ey) / math.sqrt(2)


def photodetect(field, det: DetectorConfig):
    """Square-law photocurrent after the EDFA's field gain."""
    e = field.samples if isinstance(field, SampledSignal) else np.asarray(field)
    current = det.responsivity * det.edfa_gain ** 2 * np.abs(e) ** 2
    return field.replace(current) if isinstance(field, SampledSignal) else current


def extract_joint_signal(current: SampledSignal, band=EBPF_BAND,
                         num_taps: int = DEFAULT_NUM_TAPS) -> SampledSignal:
    """Electrical band-pass that keeps the sliced chirp and drops the baseband terms."""
    return fir_filter(current, "bandpass", band, num_taps)


def joint_signal_amplitude(carrier: OpticalCarrier, x_mod: ModulatorConfig,
                           y_mod: ModulatorConfig, det: DetectorConfig, v_rf: float) -> float:
    """Small-signal amplitude per volt of envelope: 0.25 R eta m1 m2 G^2 E_in^2."""
    return (0.25 * det.load * det.responsivity * x_mod.m1(v_rf) * y_mod.m2
            * det.edfa_gain ** 2 * carrier.amplitude ** 2)


def analytic_period(lfm: LfmParams, frame: QpskFrame, period_index: int, amp: float,
                    sample_rate: float, phase_enabled: bool = True) -> np.ndarray:
    """One period of ``amp*g(t)*cos(chirp_phase + phi(t))``, zero in the dead time."""
    tau, active = period_grid(lfm.period, lfm.duty, sample_rate)
    idx = symbol_index(frame, tau, active)
    g = frame.envelope[period_index][idx]
    theta = lfm.phase(tau)
    if phase_enabled:
        theta = theta + frame.phase[period_index][idx]
    return np.where(active, amp * g * np.cos(theta), 0.0)


def analytic_joint_signal(lfm: LfmParams, frame: QpskFrame, amp: float, sample_rate: float,
                          num_periods: int | None = None, phase_enabled: bool = True,
                          first_period: int = 0) -> SampledSignal:
    """Closed-form QPSK-sliced chirp train (the small-signal detector output)."""
    if frame.period != lfm.period or frame.duty != lfm.duty:
        raise ConfigError("frame timing does not match the chirp")
    if not sample_rate > 2 * lfm.f_max:
        raise ConfigError(f"aliasing: sample rate {sample_rate:g} Hz below 2*(f0+B)")
    num_periods = frame.num_periods - first_period if num_periods is None else num_periods
    if first_period + num_periods > frame.num_periods:
        raise ConfigError("frame holds fewer periods than requested")
    parts = [analytic_period(lfm, frame, p, amp, sample_rate, phase_enabled)
             for p in range(first_period, first_period + num_periods)]
    return SampledSignal(sample_rate, np.concatenate(parts), first_period * lfm.period)


@dataclass(frozen=True)
class PhotonicTransmitter:
    """Exact-field chain: hybrid -> X-DPMZM, data -> Y-DPMZM, Pol, EDFA, PD, EBPF."""

    carrier: OpticalCarrier
    x_mod: ModulatorConfig
    y_mod: ModulatorConfig
    det: DetectorConfig
    band: tuple = EBPF_BAND
    num_taps: int = DEFAULT_NUM_TAPS

    def fields(self, lfm: LfmParams, frame: QpskFrame, period_index: int, sample_rate: float):
        """X-polarization, Y-polarization and combined envelopes for one period."""
        m1 = self.x_mod.m1(lfm.amplitude)
        if m1 > SMALL_SIGNAL_LIMIT:
            warnings.warn(f"m1 = {m1:.3f} exceeds the small-signal range ({SMALL_SIGNAL_LIMIT})",
                          stacklevel=2)
        tau, active = period_grid(lfm.period, lfm.duty, sample_rate)
        theta = lfm.phase(tau)
        vrf1 = np.where(active, lfm.amplitude * np.sin(theta), 0.0)
        vrf2 = np.where(active, lfm.amplitude * np.cos(theta), 0.0)
        ex = xdpmzm_field(self.carrier, vrf1, vrf2, self.x_mod)
        i_wave, q_wave = render_period(frame, period_index, sample_rate)
        ey = ydpmzm_field(self.carrier, i_wave, q_wave, self.y_mod)
        return ex, ey, pol_combine(ex, ey)

    def photocurrent(self, lfm, frame, period_index, sample_rate) -> SampledSignal:
        _, _, e1 = self.fields(lfm, frame, period_index, sample_rate)
        return SampledSignal(sample_rate, photodetect(e1, self.det), period_index * lfm.period)

    def transmit_period(self, lfm, frame, period_index, sample_rate) -> SampledSignal:
        """Transmitted voltage ``R * EBPF(i(t))`` for one chirp period."""
        i_pd = self.photocurrent(lfm, frame, period_index, sample_rate)
        return extract_joint_signal(i_pd, self.band, self.num_taps) * self.det.load

    def small_signal_amplitude(self, lfm: LfmParams) -> float:
        return joint_signal_amplitude(self.carrier, self.x_mod, self.y_mod, self.det, lfm.amplitude)


def default_transmitter(lfm: LfmParams | None = None, m1: float = 0.3, m2_level: float = 0.2,
                        nrz_level: float = 1.0, **kw) -> tuple[PhotonicTransmitter, LfmParams]:
    """Transmitter biased for CS-SSB / IQ with the given modulation depths.

    Returns the transmitter and ``lfm`` with its drive amplitude set for ``m1``.
    """
    v_pi = math.pi * nrz_level / (2 * m2_level)
    mod = ModulatorConfig.cs_ssb(v_pi)
    tx = PhotonicTransmitter(OpticalCarrier(kw.pop("e_in", 1.0)), mod, mod,
                             kw.pop("det", DetectorConfig()), **kw)
    if lfm is not None:
        lfm = LfmParams(lfm.f0, lfm.bandwidth, lfm.period, lfm.duty, mod.v_rf_for(m1))
    return tx, lfm


def line_powers_db(field: np.ndarray, sample_rate: float, tone: float, orders=range(-3, 4)):
    """Power of each optical line ``n * tone`` (dB), for a tone on an exact DFT bin."""
    n = field.size
    spec = np.fft.fft(field) / n
    step = tone * n / sample_rate
    if abs(step - round(step)) > 1e-9:
        raise ConfigError("tone must fall on an exact DFT bin of the record")
    out = {}
    for order in orders:
        p = abs(spec[int(round(order * step)) % n]) ** 2
        out[order] = 10 * math.log10(p) if p > 0 else -math.inf
    return out


def carrier_suppression_db(field: np.ndarray) -> float:
    """Total sideband power over the DC optical line, in dB."""
    dc = abs(np.mean(field)) ** 2
    total = np.mean(np.abs(field) ** 2)
    side = total - dc
    if dc == 0:
        return math.inf
    return 10 * math.log10(side / dc)


def single_tone_lines(mod: ModulatorConfig, m1: float, tone: float, sample_rate: float,
                      num_samples: int, carrier: OpticalCarrier = OpticalCarrier(),
                      orders=range(-3, 4)):
    """Optical line levels of the RF-driven DPMZM under a single-tone drive.

    The hybrid feeds ``V sin`` and ``V cos`` of the tone; levels are in dB
    relative to the -1st sideband (the one CS-SSB keeps).
    """
    t = np.arange(num_samples) / sample_rate
    v = mod.v_rf_for(m1)
    field = xdpmzm_field(carrier, v * np.sin(2 * np.pi * tone * t),
                         v * np.cos(2 * np.pi * tone * t), mod)
    lines = line_powers_db(field, sample_rate, tone, orders)
    ref = lines[-1]
    return {k: val - ref for k, val in lines.items()}, field
