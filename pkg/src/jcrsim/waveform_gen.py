"""Duty-cycled LFM drive pair and the QPSK frame riding on it.

Each chirp period ``T`` holds an active sweep over ``[0, duty*T)`` followed by
a dead interval.  Chirp phase restarts at zero every period and data symbols
are laid on a grid that exactly tiles the active interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .signal_core import SampledSignal

# Quoted bit rates (105.26, 210.52 Mbit/s) are rounded; snap within this.
RATE_SNAP_TOLERANCE = 1e-4


@dataclass(frozen=True)
class LfmParams:
    f0: float
    bandwidth: float
    period: float
    duty: float = 0.95
    amplitude: float = 1.0
    chirp_rate: float = field(init=False)

    def __post_init__(self):
        if not (self.f0 > 0 and self.bandwidth > 0 and self.period > 0):
            raise ConfigError("f0, bandwidth and period must be positive")
        if not 0 < self.duty <= 1:
            raise ConfigError(f"duty must lie in (0, 1], got {self.duty}")
        object.__setattr__(self, "chirp_rate", self.bandwidth / (self.duty * self.period))

    @property
    def active_duration(self) -> float:
        return self.duty * self.period

    @property
    def f_max(self) -> float:
        return self.f0 + self.bandwidth

    @property
    def center_frequency(self) -> float:
        return self.f0 + 0.5 * self.bandwidth

    def phase(self, tau: np.ndarray) -> np.ndarray:
        """Chirp phase 2*pi*(f0*tau + k*tau^2/2) at time ``tau`` into a period."""
        return 2 * np.pi * (self.f0 * tau + 0.5 * self.chirp_rate * tau * tau)

    def instantaneous_frequency(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.where(tau < self.active_duration, self.f0 + self.chirp_rate * tau, 0.0)


def samples_per_period(period: float, sample_rate: float) -> int:
    n = period * sample_rate
    ni = round(n)
    if ni < 1 or abs(n - ni) > 1e-6 * max(1.0, n):
        raise ConfigError(
            f"chirp period {period:g} s is not a whole number of samples at {sample_rate:g} Hz"
        )
    return int(ni)


def period_grid(period: float, duty: float, sample_rate: float):
    """``(tau, active)`` for one period: local time and active-interval mask."""
    n = samples_per_period(period, sample_rate)
    tau = np.arange(n) / sample_rate
    # small slack so float rounding of duty*T*fs cannot drop the last sample
    n_active = min(n, math.ceil(duty * period * sample_rate - 1e-9))
    active = np.zeros(n, dtype=bool)
    active[:n_active] = True
    return tau, active


def gen_lfm_pair(params: LfmParams, num_periods: int, sample_rate: float):
    """Sine- and cosine-phase chirp trains (the 90-degree hybrid outputs)."""
    if not sample_rate > 2 * params.f_max:
        raise ConfigError(
            f"aliasing: sample rate {sample_rate:g} Hz must exceed 2*(f0+B) = {2 * params.f_max:g} Hz"
        )
    if num_periods < 1:
        raise ConfigError("num_periods must be >= 1")
    tau, active = period_grid(params.period, params.duty, sample_rate)
    theta = params.phase(tau)
    s = np.where(active, params.amplitude * np.sin(theta), 0.0)
    c = np.where(active, params.amplitude * np.cos(theta), 0.0)
    return (SampledSignal(sample_rate, np.tile(s, num_periods)),
            SampledSignal(sample_rate, np.tile(c, num_periods)))


@dataclass(frozen=True, eq=False)
class QpskFrame:
    """Independent I and Q bit streams, one row of symbols per chirp period.

    ``aggregate_bit_rate`` counts both streams, so each stream runs at half of
    it and a symbol lasts ``2 / aggregate_bit_rate``.
    """

    aggregate_bit_rate: float
    i_bits: np.ndarray
    q_bits: np.ndarray
    symbol_duration: float
    symbols_per_chirp: int
    period: float
    duty: float
    nrz_level: float = 1.0

    def __post_init__(self):
        for name in ("i_bits", "q_bits"):
            b = np.asarray(getattr(self, name), dtype=np.uint8)
            if b.ndim != 2 or b.shape[1] != self.symbols_per_chirp:
                raise ConfigError(f"{name} must have shape (num_periods, {self.symbols_per_chirp})")
            b.flags.writeable = False
            object.__setattr__(self, name, b)
        if self.i_bits.shape != self.q_bits.shape:
            raise ConfigError("i_bits and q_bits differ in shape")

    @property
    def num_periods(self) -> int:
        return self.i_bits.shape[0]

    @property
    def i_levels(self) -> np.ndarray:
        return self.nrz_level * (2.0 * self.i_bits - 1.0)

    @property
    def q_levels(self) -> np.ndarray:
        return self.nrz_level * (2.0 * self.q_bits - 1.0)

    @property
    def symbols(self) -> np.ndarray:
        """Complex symbols I + jQ, shape ``(num_periods, symbols_per_chirp)``."""
        return self.i_levels + 1j * self.q_levels

    @property
    def envelope(self) -> np.ndarray:
        return np.abs(self.symbols)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.symbols)

    def bits(self) -> np.ndarray:
        """Interleaved bit stream [i0, q0, i1, q1, ...] in period order."""
        return np.stack([self.i_bits, self.q_bits], axis=-1).reshape(-1)

    def symbol_centers(self) -> np.ndarray:
        """Symbol-centre times relative to the start of a period."""
        return (np.arange(self.symbols_per_chirp) + 0.5) * self.symbol_duration

    def with_phase_disabled(self) -> "QpskFrame":
        """Same timing with every symbol at +1+1j, i.e. constant data phase."""
        ones = np.ones_like(self.i_bits)
        return QpskFrame(self.aggregate_bit_rate, ones, ones, self.symbol_duration,
                         self.symbols_per_chirp, self.period, self.duty, self.nrz_level)


def symbol_grid(bit_rate: float, lfm: LfmParams) -> tuple[float, int]:
    """Snap ``bit_rate`` onto the active interval; returns (symbol_duration, count)."""
    if not bit_rate > 0:
        raise ConfigError("bit rate must be positive")
    exact = lfm.active_duration * bit_rate / 2
    n = max(1, round(exact))
    if abs(exact - n) > RATE_SNAP_TOLERANCE * n:
        nearest = 2 * n / lfm.active_duration
        raise ConfigError(
            f"symbol grid misalignment: {bit_rate:g} bit/s gives {exact:.4f} symbols per "
            f"{lfm.active_duration:g} s chirp; nearest valid rate is {nearest:.6g} bit/s"
        )
    return lfm.active_duration / n, int(n)


def gen_qpsk_frame(bit_rate: float, lfm: LfmParams, num_periods: int, seed: int,
                   nrz_level: float = 1.0, i_bits=None, q_bits=None) -> QpskFrame:
    """Pseudo-random equiprobable I/Q bits aligned to the chirp grid.

    Explicit ``i_bits`` / ``q_bits`` (broadcast to the frame shape) override
    the generator, e.g. for all-zero test frames.
    """
    if num_periods < 1:
        raise ConfigError("num_periods must be >= 1")
    t_sym, n_sym = symbol_grid(bit_rate, lfm)
    rng = np.random.default_rng(seed)
    drawn = rng.integers(0, 2, size=(num_periods, 2, n_sym), dtype=np.uint8)
    shape = (num_periods, n_sym)
    ib = drawn[:, 0] if i_bits is None else np.broadcast_to(np.asarray(i_bits, np.uint8), shape)
    qb = drawn[:, 1] if q_bits is None else np.broadcast_to(np.asarray(q_bits, np.uint8), shape)
    return QpskFrame(bit_rate, np.array(ib), np.array(qb), t_sym, n_sym,
                     lfm.period, lfm.duty, nrz_level)


def symbol_index(frame: QpskFrame, tau: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Symbol index for each local time, clipped into range (dead samples get 0)."""
    idx = np.floor(tau / frame.symbol_duration + 1e-9).astype(np.int64)
    return np.where(active, np.clip(idx, 0, frame.symbols_per_chirp - 1), 0)


def render_period(frame: QpskFrame, period_index: int, sample_rate: float):
    """Rectangular-NRZ I and Q waveforms for one period as numpy arrays."""
    if sample_rate * frame.symbol_duration < 4:
        raise ConfigError(
            f"sampling too coarse: {sample_rate * frame.symbol_duration:.2f} samples per symbol (< 4)"
        )
    tau, active = period_grid(frame.period, frame.duty, sample_rate)
    idx = symbol_index(frame, tau, active)
    i_wave = np.where(active, frame.i_levels[period_index][idx], 0.0)
    q_wave = np.where(active, frame.q_levels[period_index][idx], 0.0)
    return i_wave, q_wave


def render_iq(frame: QpskFrame, sample_rate: float, num_periods: int | None = None):
    """I(t) and Q(t) drive waveforms across ``num_periods`` chirp periods."""
    num_periods = frame.num_periods if num_periods is None else num_periods
    if num_periods > frame.num_periods:
        raise ConfigError(f"frame holds {frame.num_periods} periods, {num_periods} requested")
    parts = [render_period(frame, p, sample_rate) for p in range(num_periods)]
    i_wave = np.concatenate([p[0] for p in parts])
    q_wave = np.concatenate([p[1] for p in parts])
    return SampledSignal(sample_rate, i_wave), SampledSignal(sample_rate, q_wave)
