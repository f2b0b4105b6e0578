"""Communication receiver: channel, LO down-conversion and coherent de-chirp demodulation.

``snr_db`` is the symbol SNR ``Es/N0`` at the decision point.  White noise is
added at the full simulation rate with the per-sample variance that yields
that ratio after an ideal matched filter, and the receiver's RF preselect
filter keeps mixer-image noise out of the IF band.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SimulationError
from .photonic_link import EBPF_BAND, PhotonicTransmitter, analytic_period, default_transmitter
from .signal_core import (
    DEFAULT_NUM_TAPS,
    NO_NOISE,
    SampledSignal,
    convolve_centered,
    design_fir,
    filter_decimate,
    fir_filter,
    periodic_response,
)
from .waveform_gen import (
    LfmParams,
    QpskFrame,
    gen_qpsk_frame,
    period_grid,
    samples_per_period,
    symbol_grid,
)

IF_RATE = 10e9
IF_LOWPASS = 3.0e9
BASEBAND_LOWPASS = 600e6
SYNC_THRESHOLD = 0.5


@dataclass(frozen=True)
class CommChannelConfig:
    path_scale: float = 1.0
    snr_db: float = NO_NOISE
    lo_frequency: float = 8e9
    lo_amplitude: float = 1.0
    preselect_band: tuple = EBPF_BAND

    def __post_init__(self):
        if not self.path_scale > 0:
            raise ConfigError("path_scale must be positive")
        if not self.lo_frequency > 0 or not self.lo_amplitude > 0:
            raise ConfigError("LO frequency and amplitude must be positive")
        if math.isnan(self.snr_db):
            raise ConfigError("snr_db is NaN")

    def check(self, lfm: LfmParams):
        if not self.lo_frequency < lfm.f0:
            raise ConfigError(
                f"LO at {self.lo_frequency:g} Hz must sit below the chirp start {lfm.f0:g} Hz"
            )


@dataclass(frozen=True, eq=False)
class DemodResult:
    i_symbols: np.ndarray
    q_symbols: np.ndarray
    decided_bits: np.ndarray
    evm_percent: float
    ber: float

    @property
    def constellation(self) -> np.ndarray:
        return self.i_symbols + 1j * self.q_symbols

    @property
    def num_symbols(self) -> int:
        return self.i_symbols.size


def snr_from_received_power(power_dbm: float, noise_floor_dbm: float) -> float:
    """Map a received-power axis onto ``Es/N0`` through one noise-floor figure."""
    return power_dbm - noise_floor_dbm


# -- channel --------------------------------------------------------------------


def noise_sigma(signal_power: float, sample_rate: float, symbol_duration: float,
                snr_db: float) -> float:
    """Per-sample std of real white noise giving ``Es/N0 = snr_db``.

    With two-sided density ``N0/2`` the sampled variance is ``N0*fs/2`` and
    ``Es = P*Ts`` for passband power ``P``.
    """
    return math.sqrt(signal_power * sample_rate * symbol_duration / (2 * 10 ** (snr_db / 10)))


def apply_channel(tx: SampledSignal, cfg: CommChannelConfig, frame: QpskFrame,
                  seed=0) -> SampledSignal:
    """Scaled copy of one transmitted period plus AWGN at ``cfg.snr_db``."""
    rx = tx * cfg.path_scale
    if math.isinf(cfg.snr_db) and cfg.snr_db > 0:
        return rx
    _, active = period_grid(frame.period, frame.duty, tx.sample_rate)
    if len(tx) % active.size:
        raise ConfigError("channel input must be whole chirp periods")
    mask = np.tile(active, len(tx) // active.size)
    p = float(np.mean(rx.samples[mask] ** 2))
    if p == 0:
        raise ConfigError("undefined SNR: zero-power signal")
    sigma = noise_sigma(p, tx.sample_rate, frame.symbol_duration, cfg.snr_db)
    rng = np.random.default_rng(seed)
    return rx.replace(rx.samples + sigma * rng.standard_normal(len(rx)))


def downconvert(rx: SampledSignal, cfg: CommChannelConfig, if_rate: float = IF_RATE,
                num_taps: int = DEFAULT_NUM_TAPS, if_cutoff: float = IF_LOWPASS) -> SampledSignal:
    """Preselect, mix with ``E_LO cos(2 pi f_LO t)``, keep the difference band, resample."""
    ratio = rx.sample_rate / if_rate
    factor = round(ratio)
    if factor < 1 or abs(ratio - factor) > 1e-9 * ratio:
        raise ConfigError(f"IF rate {if_rate:g} Hz is not an integer divisor of {rx.sample_rate:g} Hz")
    pre = fir_filter(rx, "bandpass", cfg.preselect_band, num_taps) if cfg.preselect_band else rx
    lo = cfg.lo_amplitude * np.cos(2 * np.pi * cfg.lo_frequency * rx.time())
    response = periodic_response("lowpass", float(if_cutoff), num_taps, rx.sample_rate, len(rx))
    y = filter_decimate(pre.samples * lo, response, factor)
    return SampledSignal(rx.sample_rate / factor, y, rx.start_time)


# -- demodulation -------------------------------------------------------------------


def _if_reference_phase(lfm: LfmParams, f_lo: float, tau: np.ndarray, t_abs: np.ndarray):
    return lfm.phase(tau) - 2 * np.pi * f_lo * t_abs


def _symbol_edges(frame: QpskFrame, sample_rate: float) -> np.ndarray:
    return np.rint(np.arange(frame.symbols_per_chirp + 1) * frame.symbol_duration
                   * sample_rate).astype(np.int64)


def demod_period(if_period: np.ndarray, t_start: float, sample_rate: float, lfm: LfmParams,
                 f_lo: float, frame: QpskFrame, lpf_cutoff: float = BASEBAND_LOWPASS,
                 num_taps: int = DEFAULT_NUM_TAPS) -> np.ndarray:
    """Complex symbol outputs ``I + jQ`` of one IF period starting at absolute ``t_start``."""
    tau = np.arange(if_period.size) / sample_rate
    theta = _if_reference_phase(lfm, f_lo, tau, t_start + tau)
    taps = design_fir("lowpass", lpf_cutoff, num_taps, sample_rate)
    i_branch = convolve_centered(if_period * np.cos(theta), taps)
    # Q comes out with a minus sign from the sine reference
    q_branch = -convolve_centered(if_period * np.sin(theta), taps)
    edges = _symbol_edges(frame, sample_rate)
    ci = np.concatenate([[0.0], np.cumsum(i_branch)])
    cq = np.concatenate([[0.0], np.cumsum(q_branch)])
    width = np.diff(edges)
    return ((ci[edges[1:]] - ci[edges[:-1]]) + 1j * (cq[edges[1:]] - cq[edges[:-1]])) / width


def evm_percent(z: np.ndarray, ideal: np.ndarray) -> float:
    """RMS error vector with both constellations scaled to unit RMS power, in percent."""
    z = np.asarray(z, dtype=complex).ravel()
    ideal = np.asarray(ideal, dtype=complex).ravel()
    pz = math.sqrt(np.mean(np.abs(z) ** 2))
    if pz == 0:
        raise SimulationError("received constellation is all zero")
    ref = ideal / math.sqrt(np.mean(np.abs(ideal) ** 2))
    return float(100 * math.sqrt(np.mean(np.abs(z / pz - ref) ** 2)))


def decide(z: np.ndarray, reference_bits: np.ndarray | None = None) -> DemodResult:
    """Sign decisions, EVM against the decided ideal points and BER against ``reference_bits``."""
    z = np.asarray(z, dtype=complex).ravel()
    ib = (z.real > 0).astype(np.uint8)
    qb = (z.imag > 0).astype(np.uint8)
    bits = np.stack([ib, qb], axis=-1).reshape(-1)
    ideal = (2.0 * ib - 1) + 1j * (2.0 * qb - 1)
    evm = evm_percent(z, ideal)
    ber = math.nan
    if reference_bits is not None:
        ref = np.asarray(reference_bits, dtype=np.uint8).ravel()
        if ref.size != bits.size:
            raise ConfigError(f"reference holds {ref.size} bits, decided {bits.size}")
        ber = float(np.mean(ref != bits))
    return DemodResult(z.real.copy(), z.imag.copy(), bits, evm, ber)


def _alignment_score(z: np.ndarray) -> float:
    # ideal QPSK points have z**4 real and negative
    z4 = z ** 4
    return float(-np.real(z4.sum()) / max(np.sum(np.abs(z4)), 1e-300))


def estimate_epoch(if_period_record: SampledSignal, lfm: LfmParams,
                   threshold: float = SYNC_THRESHOLD) -> int:
    """Sample index of the chirp start, from the envelope's correlation with the active mask."""
    n = samples_per_period(lfm.period, if_period_record.sample_rate)
    x = if_period_record.samples
    if x.size % n:
        raise ConfigError("sync needs whole chirp periods")
    # analytic-signal magnitude: x**2 alone carries a 2*f_IF ripple as strong as the gate
    spec = np.fft.fft(x.reshape(-1, n), axis=1)
    spec[:, (n + 1) // 2:] = 0
    spec[:, 1:(n + 1) // 2] *= 2
    env = (np.abs(np.fft.ifft(spec, axis=1)) ** 2).sum(axis=0)
    _, active = period_grid(lfm.period, lfm.duty, if_period_record.sample_rate)
    a = active - active.mean()
    e = env - env.mean()
    corr = np.fft.irfft(np.fft.rfft(e) * np.conj(np.fft.rfft(a)), n)
    den = np.linalg.norm(a) * np.linalg.norm(e)
    peak = int(np.argmax(corr))
    score = corr[peak] / den if den > 0 else 0.0
    if score < threshold:
        raise SimulationError(f"frame sync lost: envelope correlation {score:.3f} < {threshold}")
    return peak


def coherent_demod(if_signal: SampledSignal, lfm: LfmParams, f_lo: float, frame: QpskFrame,
                   first_period: int = 0, sync: bool = False,
                   lpf_cutoff: float = BASEBAND_LOWPASS, num_taps: int = DEFAULT_NUM_TAPS,
                   sync_threshold: float = SYNC_THRESHOLD) -> DemodResult:
    """De-chirp with the clean IF chirp, integrate over each symbol, decide.

    ``if_signal`` holds whole periods ``first_period, first_period+1, ...``
    of ``frame``.  With ``sync`` the chirp epoch is found from the data itself
    (capture offset below one period, circular record) instead of trusting
    ``if_signal.start_time``.
    """
    fs = if_signal.sample_rate
    n = samples_per_period(lfm.period, fs)
    if len(if_signal) % n:
        raise ConfigError("IF record must hold whole chirp periods")
    num = len(if_signal) // n
    if first_period + num > frame.num_periods:
        raise ConfigError("record runs past the end of the frame")
    x = if_signal.samples
    t0 = if_signal.start_time
    if sync:
        if abs(f_lo * lfm.period - round(f_lo * lfm.period)) > 1e-6:
            raise ConfigError("correlation sync needs a whole number of LO cycles per period")
        coarse = estimate_epoch(if_signal, lfm, sync_threshold)
        best = None
        for d in range(-3, 4):
            shift = (coarse + d) % n
            z = demod_period(np.roll(x[:n], -shift), 0.0, fs, lfm, f_lo, frame, lpf_cutoff, num_taps)
            s = _alignment_score(z)
            if best is None or s > best[0]:
                best = (s, shift)
        x = np.roll(x, -best[1])
        t0 = first_period * lfm.period
    rows = [demod_period(x[p * n:(p + 1) * n], t0 + p * lfm.period, fs, lfm, f_lo, frame,
                         lpf_cutoff, num_taps) for p in range(num)]
    ref = np.stack([frame.i_bits[first_period:first_period + num],
                    frame.q_bits[first_period:first_period + num]], axis=-1).reshape(-1)
    return decide(np.concatenate(rows), ref)


# -- end-to-end ---------------------------------------------------------------------


@dataclass(frozen=True)
class CommLink:
    """Transmitter, channel and receiver for whole-frame runs."""

    transmitter: PhotonicTransmitter
    lfm: LfmParams
    channel: CommChannelConfig = CommChannelConfig()
    sample_rate: float = 40e9
    if_rate: float = IF_RATE
    num_taps: int = DEFAULT_NUM_TAPS
    analytic: bool = False

    def transmit(self, frame: QpskFrame, p: int) -> SampledSignal:
        if self.analytic:
            amp = self.transmitter.small_signal_amplitude(self.lfm)
            x = analytic_period(self.lfm, frame, p, amp, self.sample_rate)
            return SampledSignal(self.sample_rate, x, p * self.lfm.period)
        return self.transmitter.transmit_period(self.lfm, frame, p, self.sample_rate)

    def receive(self, tx: SampledSignal, frame: QpskFrame, p: int, channel: CommChannelConfig,
                seed=0) -> np.ndarray:
        rx = apply_channel(tx, channel, frame, seed=(seed, p))
        if_sig = downconvert(rx, channel, self.if_rate, self.num_taps)
        return demod_period(if_sig.samples, if_sig.start_time, if_sig.sample_rate, self.lfm,
                            channel.lo_frequency, frame, num_taps=self.num_taps)

    def run(self, frame: QpskFrame, snrs=(NO_NOISE,), seed: int = 0, threads: int = 1):
        """Demodulate every period once per SNR; returns ``{snr: DemodResult}``."""
        self.channel.check(self.lfm)
        channels = [CommChannelConfig(self.channel.path_scale, s, self.channel.lo_frequency,
                                      self.channel.lo_amplitude, self.channel.preselect_band)
                    for s in snrs]

        def one(p):
            tx = self.transmit(frame, p)
            return [self.receive(tx, frame, p, ch, seed) for ch in channels]

        periods = range(frame.num_periods)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                per = list(pool.map(one, periods))
        else:
            per = [one(p) for p in periods]
        bits = frame.bits()
        return {s: decide(np.concatenate([row[k] for row in per]), bits)
                for k, s in enumerate(snrs)}


@dataclass(frozen=True)
class EvmRow:
    bandwidth: float
    bit_rate: float
    snr_db: float
    evm_percent: float
    ber: float
    num_bits: int
    constellation: np.ndarray


def periods_for_bits(bit_rate: float, lfm: LfmParams, min_bits: int) -> int:
    _, n_sym = symbol_grid(bit_rate, lfm)
    return max(1, math.ceil(min_bits / (2 * n_sym)))


def run_evm_sweep(bandwidths, bit_rates, snrs, seed: int = 0, min_bits: int = 10_000,
                  f0: float = 8.5e9, period: float = 4e-6, sample_rate: float = 40e9,
                  channel: CommChannelConfig = CommChannelConfig(), num_taps: int = DEFAULT_NUM_TAPS,
                  max_points: int = 1000, threads: int = 1) -> list[EvmRow]:
    """Full-chain EVM and BER for every (bandwidth, bit rate, SNR) combination."""
    rows = []
    for b in bandwidths:
        base = LfmParams(f0, b, period)
        tx, lfm = default_transmitter(base, num_taps=num_taps)
        for rb in bit_rates:
            frame = gen_qpsk_frame(rb, lfm, periods_for_bits(rb, lfm, min_bits), seed)
            link = CommLink(tx, lfm, channel, sample_rate, num_taps=num_taps)
            results = link.run(frame, snrs, seed, threads)
            for s in snrs:
                r = results[s]
                rows.append(EvmRow(b, rb, s, r.evm_percent, r.ber, r.decided_bits.size,
                                   r.constellation[:max_points]))
    return rows
