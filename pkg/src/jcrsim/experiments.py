"""Experiment runners behind the scenario files.

Each runner builds every configuration object first (so bad input fails
before any heavy computation) and returns a :class:`ResultBundle`.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np

from . import radar_proc as rp
from .comm_link import CommChannelConfig, CommLink, periods_for_bits, snr_from_received_power
from .errors import ConfigError
from .export import FORMATS, Image, ResultBundle, Table, export_artifacts
from .photonic_link import (
    DetectorConfig,
    analytic_joint_signal,
    default_transmitter,
    single_tone_lines,
)
from .scenario import Scenario
from .signal_core import normalized_correlation
from .waveform_gen import LfmParams, gen_qpsk_frame, samples_per_period, symbol_grid


def averaged_spectrum_db(x: np.ndarray, sample_rate: float, rbw: float):
    """Power spectrum averaged over ``rbw``-wide groups of DFT bins, dB re its peak.

    Real records give the one-sided spectrum, complex ones the two-sided
    spectrum centred on zero.
    """
    n = x.size
    if np.iscomplexobj(x):
        p = np.abs(np.fft.fftshift(np.fft.fft(x))) ** 2
        f = np.fft.fftshift(np.fft.fftfreq(n, 1 / sample_rate))
    else:
        p = np.abs(np.fft.rfft(x)) ** 2
        f = np.fft.rfftfreq(n, 1 / sample_rate)
    group = max(1, int(round(rbw * n / sample_rate)))
    m = (p.size // group) * group
    p = p[:m].reshape(-1, group).mean(axis=1)
    f = f[:m].reshape(-1, group).mean(axis=1)
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(p / p.max())
    return f, db


def occupied_band(freqs, db, level_db=-10.0, lo=None, hi=None):
    """First and last frequency where the spectrum is within ``level_db`` of its peak."""
    sel = np.ones(freqs.size, dtype=bool)
    if lo is not None:
        sel &= freqs >= lo
    if hi is not None:
        sel &= freqs <= hi
    f, d = freqs[sel], db[sel]
    above = np.nonzero(d >= d.max() + level_db)[0]
    return float(f[above[0]]), float(f[above[-1]])


# -- builders ------------------------------------------------------------------


def _lfm(sc: Scenario, bandwidth: float | None = None) -> LfmParams:
    w = sc["waveform"]
    return LfmParams(w["f0"], w["bandwidth"] if bandwidth is None else bandwidth,
                     w["period"], w["duty"])


def _transmitter(sc: Scenario, lfm: LfmParams):
    ln = sc["link"]
    det = DetectorConfig(ln["responsivity"], ln["edfa_gain"], ln["load"])
    return default_transmitter(lfm, m1=ln["m1"], m2_level=ln["m2_level"],
                               nrz_level=sc["waveform"]["nrz_level"], e_in=ln["e_in"], det=det,
                               num_taps=ln["ebpf_taps"])


def _receiver(sc: Scenario) -> rp.RadarReceiver:
    r = sc["radar"]
    return rp.RadarReceiver(r["elpf_cutoff"], r["elpf_taps"], r["out_rate"], r["echo_scale"])


def _list_or(single, many):
    return list(many) if many else [single]


def _channel(sc: Scenario, snr: float = math.inf) -> CommChannelConfig:
    c = sc["comm"]
    return CommChannelConfig(c["path_scale"], snr, c["lo_frequency"], c["lo_amplitude"])


def _snr_axis(sc: Scenario):
    """``(snr_db list, received power list or None)`` from the comm section."""
    c = sc["comm"]
    if c["snrs"]:
        return list(c["snrs"]), None
    if c["received_powers_dbm"]:
        powers = list(c["received_powers_dbm"])
        return [snr_from_received_power(p, c["noise_floor_dbm"]) for p in powers], powers
    return [c["snr_db"]], None


def _check_rate(sc: Scenario, lfm: LfmParams):
    fs = sc[""]["sample_rate"]
    if not fs > 2 * lfm.f_max:
        raise ConfigError(f"sample_rate: {fs:g} Hz is below 2*(f0+B) = {2 * lfm.f_max:g} Hz")
    samples_per_period(lfm.period, fs)
    return fs


# -- runners -----------------------------------------------------------------------


def run_spectra(sc: Scenario) -> ResultBundle:
    ln = sc["link"]
    bands = _list_or(sc["waveform"]["bandwidth"], sc["waveform"]["bandwidths"])
    lfms = [_lfm(sc, b) for b in bands]
    fs = max(_check_rate(sc, lfm) for lfm in lfms)
    txs = [_transmitter(sc, lfm) for lfm in lfms]
    frames = [gen_qpsk_frame(sc["waveform"]["bit_rate"], lfm, 1, sc.seed) for lfm in lfms]
    n = int(round(lfms[0].period * fs))
    if abs(ln["tone"] * n / fs - round(ln["tone"] * n / fs)) > 1e-9:
        raise ConfigError("link.tone: must fall on a DFT bin of one chirp period")

    tables, metrics = {}, {"bandwidths_hz": bands}
    x_mod = txs[0][0].x_mod
    lines, field = single_tone_lines(x_mod, ln["m1"], ln["tone"], fs, n)
    f, db = averaged_spectrum_db(field, fs, ln["rbw"])
    tables["optical_tone"] = Table(("freq_hz", "magnitude_db"), np.column_stack([f, db]))
    metrics["tone_lines_rel_db"] = {str(k): v for k, v in lines.items()}
    metrics["carrier_suppression_db"] = -lines[0]
    metrics["upper_sideband_suppression_db"] = -lines[1]

    bands_out = []
    for b, (tx, lfm), frame in zip(bands, txs, frames):
        tag = f"{b / 1e9:g}GHz"
        ex, _, _ = tx.fields(lfm, frame, 0, fs)
        f, db = averaged_spectrum_db(ex, fs, ln["rbw"])
        tables[f"optical_chirp_{tag}"] = Table(("freq_hz", "magnitude_db"), np.column_stack([f, db]))
        out = tx.transmit_period(lfm, frame, 0, fs)
        f, db = averaged_spectrum_db(out.samples, fs, ln["rbw"])
        tables[f"electrical_{tag}"] = Table(("freq_hz", "magnitude_db"), np.column_stack([f, db]))
        ref = analytic_joint_signal(lfm, frame, tx.small_signal_amplitude(lfm), fs)
        lo, hi = occupied_band(f, db, -10.0, tx.band[0], tx.band[1])
        bands_out.append({
            "bandwidth_hz": b,
            "band_low_hz": lo,
            "band_high_hz": hi,
            "chain_vs_analytic_correlation": normalized_correlation(out.samples, ref.samples),
            "amplitude_ratio": float(np.std(out.samples) / np.std(ref.samples)),
        })
    metrics["electrical"] = bands_out
    return _bundle(sc, metrics, tables)


def run_ranging(sc: Scenario) -> ResultBundle:
    r = sc["radar"]
    if not r["distances"]:
        raise ConfigError("radar.distances: empty target list")
    lfm = _lfm(sc)
    fs = _check_rate(sc, lfm)
    tx, lfm = _transmitter(sc, lfm)
    frame = gen_qpsk_frame(sc["waveform"]["bit_rate"], lfm, 1, sc.seed,
                           sc["waveform"]["nrz_level"])
    scene = rp.TargetScene.static(r["distances"])
    rx = _receiver(sc)
    rp.decimation_factor(fs, r["out_rate"])
    amp = tx.small_signal_amplitude(lfm)
    beat = rx.pulse(lfm, frame, scene, 0, fs, amp, sc["waveform"]["data_phase"])
    prof = rp.range_profile(beat, lfm.chirp_rate, r["zero_pad"], r["window"],
                            sample_rate=r["out_rate"])
    est = rp.estimate_distances(prof, len(r["distances"]), r["floor_db"])
    truth = sorted(r["distances"])
    errors = [e - t for e, t in zip(est, truth)]
    db = prof.magnitude_db - prof.magnitude_db.max()
    tables = {
        "range_profile": Table(("freq_hz", "magnitude_db"), np.column_stack([prof.beat_frequencies, db])),
        "range_profile_distance": Table(("distance_m", "magnitude_db"),
                                        np.column_stack([prof.distances, db])),
    }
    metrics = {
        "bandwidth_hz": lfm.bandwidth,
        "chirp_rate_hz_per_s": lfm.chirp_rate,
        "window": r["window"],
        "true_distances_m": truth,
        "estimated_distances_m": est,
        "errors_m": errors,
        "max_abs_error_m": max(abs(e) for e in errors),
        "predicted_beat_hz": [lfm.chirp_rate * 2 * d / rp.C_LIGHT for d in truth],
        "measured_beat_hz": [2 * lfm.chirp_rate * d / rp.C_LIGHT for d in est],
    }
    return _bundle(sc, metrics, tables)


def isar_setup(sc: Scenario):
    """Scene, timing and waveform of an imaging scenario (validated)."""
    r = sc["radar"]
    if not r["targets"]:
        raise ConfigError("radar.targets: empty target list")
    lfm = _lfm(sc)
    fs = _check_rate(sc, lfm)
    tx, lfm = _transmitter(sc, lfm)
    n = r["num_pulses"]
    if n < 16:
        raise ConfigError(f"radar.num_pulses: need at least 16, got {n}")
    wl = rp.wavelength_of(lfm)
    if (r["rotation"] > 0) == (r["crossrange_resolution"] > 0):
        raise ConfigError("radar: give exactly one of rotation or crossrange_resolution")
    rotation = r["rotation"] or wl / (2 * r["crossrange_resolution"])
    t_r = n * lfm.period
    omega = rotation / t_r
    scene = rp.TargetScene(tuple(rp.Scatterer(t["x"], t["y"], t["reflectivity"])
                                 for t in r["targets"]), r["standoff"], omega)
    rp.decimation_factor(fs, r["out_rate"])
    frame = gen_qpsk_frame(sc["waveform"]["bit_rate"], lfm, n, sc.seed, sc["waveform"]["nrz_level"])
    return lfm, tx, frame, scene, fs, t_r, omega, rotation, wl


def run_isar(sc: Scenario) -> ResultBundle:
    r = sc["radar"]
    lfm, tx, frame, scene, fs, t_r, omega, rotation, wl = isar_setup(sc)
    rx = _receiver(sc)
    amp = tx.small_signal_amplitude(lfm)
    pulses = rx.collect(lfm, frame, scene, r["num_pulses"], fs, amp, sc["waveform"]["data_phase"],
                        threads=sc[""]["threads"])
    h = r["crop_halfwidth"]
    img = rp.isar_image(pulses, r["out_rate"], lfm, wl, t_r, omega, r["window"],
                        range_limits=(scene.standoff - h, scene.standoff + h),
                        crossrange_limits=(-h, h), dynamic_range_db=r["dynamic_range_db"])
    peaks = rp.image_peaks(img, len(scene.scatterers))
    bg = rp.background_level_db(img)
    psf = rp.psf_widths(img)
    metrics = {
        "bandwidth_hz": lfm.bandwidth,
        "wavelength_m": wl,
        "integration_time_s": t_r,
        "omega_rad_s": omega,
        "rotation_rad": rotation,
        "predicted_resolution_m": list(img.predicted_res),
        "psf_width_m": list(psf),
        "background_db": bg,
        "peaks": [{"range_m": p[0], "crossrange_m": p[1], "level_db": p[2],
                   "over_background_db": p[2] - bg} for p in peaks],
        "true_positions_m": [{"range_m": scene.standoff + s.y, "crossrange_m": s.x}
                             for s in scene.scatterers],
    }
    images = {"isar": Image(img.pixels, img.range_axis, img.crossrange_axis, "range_m",
                            "crossrange_m", img.dynamic_range_db)}
    return _bundle(sc, metrics, {}, images)


def _comm_setup(sc: Scenario, bandwidth: float, bit_rate: float):
    lfm = _lfm(sc, bandwidth)
    fs = _check_rate(sc, lfm)
    tx, lfm = _transmitter(sc, lfm)
    symbol_grid(bit_rate, lfm)
    ch = _channel(sc)
    ch.check(lfm)
    frame = gen_qpsk_frame(bit_rate, lfm, periods_for_bits(bit_rate, lfm, sc["comm"]["min_bits"]),
                           sc.seed, sc["waveform"]["nrz_level"])
    link = CommLink(tx, lfm, ch, fs, num_taps=sc["link"]["ebpf_taps"])
    return lfm, frame, link


def _constellation_table(z: np.ndarray, max_points: int) -> Table:
    z = z[:max_points]
    z = z / math.sqrt(np.mean(np.abs(z) ** 2)) * math.sqrt(2) if z.size else z
    return Table(("i", "q"), np.column_stack([z.real, z.imag]))


def run_loopback(sc: Scenario) -> ResultBundle:
    c = sc["comm"]
    rb = sc["waveform"]["bit_rate"]
    lfm, frame, link = _comm_setup(sc, sc["waveform"]["bandwidth"], rb)
    snrs, _ = _snr_axis(sc)
    res = link.run(frame, snrs[:1], sc.seed, sc[""]["threads"])[snrs[0]]
    n_show = int(np.sum(frame.symbol_centers() < c["display_window"]))
    z = res.constellation[:n_show]
    z = z / math.sqrt(np.mean(np.abs(res.constellation) ** 2)) * math.sqrt(2)
    tables = {
        "baseband_window": Table(
            ("time_s", "i_sent", "q_sent", "i_recovered", "q_recovered"),
            np.column_stack([frame.symbol_centers()[:n_show], frame.i_levels[0][:n_show],
                             frame.q_levels[0][:n_show], z.real, z.imag])),
        "constellation": _constellation_table(res.constellation, c["max_points"]),
    }
    metrics = {
        "bandwidth_hz": lfm.bandwidth,
        "bit_rate_bps": rb,
        "snr_db": snrs[0],
        "num_bits": int(res.decided_bits.size),
        "bit_errors": int(round(res.ber * res.decided_bits.size)),
        "ber": res.ber,
        "evm_percent": res.evm_percent,
    }
    return _bundle(sc, metrics, tables)


def _evm_rows(sc: Scenario, bandwidths, bit_rates):
    c = sc["comm"]
    snrs, powers = _snr_axis(sc)
    setups = [(b, rb, _comm_setup(sc, b, rb)) for b in bandwidths for rb in bit_rates]
    rows, tables = [], {}
    for b, rb, (lfm, frame, link) in setups:
        results = link.run(frame, snrs, sc.seed, sc[""]["threads"])
        for k, s in enumerate(snrs):
            res = results[s]
            row = {"bandwidth_hz": b, "bit_rate_bps": rb, "snr_db": s,
                   "evm_percent": res.evm_percent, "ber": res.ber,
                   "num_bits": int(res.decided_bits.size)}
            tag = f"{b / 1e9:g}GHz_{rb / 1e6:.2f}Mbps"
            if powers is not None:
                row["received_power_dbm"] = powers[k]
                tag += f"_{powers[k]:g}dBm"
            else:
                tag += f"_{_snr_tag(s)}"
            rows.append(row)
            tables[f"constellation_{tag}"] = _constellation_table(res.constellation, c["max_points"])
    return rows, tables, powers


def _snr_tag(s: float) -> str:
    return "noiseless" if math.isinf(s) else f"{s:g}dB"


def run_evm_grid(sc: Scenario) -> ResultBundle:
    w = sc["waveform"]
    rows, tables, _ = _evm_rows(sc, _list_or(w["bandwidth"], w["bandwidths"]),
                                _list_or(w["bit_rate"], w["bit_rates"]))
    return _bundle(sc, {"rows": rows}, tables)


def run_evm_vs_snr(sc: Scenario) -> ResultBundle:
    w = sc["waveform"]
    rows, tables, powers = _evm_rows(sc, [w["bandwidth"]], [w["bit_rate"]])
    x = powers if powers is not None else [r["snr_db"] for r in rows]
    tables["evm_curve"] = Table(
        ("received_power_dbm" if powers is not None else "snr_db", "evm_percent"),
        np.column_stack([x, [r["evm_percent"] for r in rows]]))
    return _bundle(sc, {"rows": rows}, tables)


def sweep_setup(sc: Scenario):
    s = sc["sweep"]
    lfm = _lfm(sc)
    fs = _check_rate(sc, lfm)
    if not s["seeds"]:
        raise ConfigError("sweep.seeds: need at least one seed")
    if not (s["distances"] and s["symbol_durations"]) and not s["ratios"]:
        raise ConfigError("sweep: give distances with symbol_durations, or ratios")
    if bool(s["distances"]) != bool(s["symbol_durations"]):
        raise ConfigError("sweep: distances and symbol_durations go together")
    rp.decimation_factor(fs, sc["radar"]["out_rate"])
    cfg = rp.PhaseSweepConfig(
        lfm, num_pulses=s["num_pulses"], rotation=s["rotation"], sample_rate=fs,
        seeds=tuple(sc.seed + k for k in s["seeds"]), dynamic_range_db=s["dynamic_range_db"],
        receiver=_receiver(sc), threads=sc[""]["threads"])
    ratio_durations = (rp.symbol_durations_for_ratios(s["ratio_distance"], s["ratios"], lfm)
                       if s["ratios"] else [])
    for ts in list(s["symbol_durations"]) + ratio_durations:
        symbol_grid(2 / ts, lfm)
        if ts * fs < 4:
            raise ConfigError(f"sweep: symbol duration {ts:g} s is under 4 samples")
    for d in list(s["distances"]) + ([s["ratio_distance"]] if s["ratios"] else []):
        if 2 * d / rp.C_LIGHT >= lfm.active_duration:
            raise ConfigError(f"sweep: distance {d:g} m is beyond unambiguous range")
    return cfg, ratio_durations


def run_phase_sweep(sc: Scenario) -> ResultBundle:
    s = sc["sweep"]
    cfg, ratio_durations = sweep_setup(sc)
    groups = []
    if s["ratios"]:
        groups.append(("ratio", rp.phase_term_sweep([s["ratio_distance"]], ratio_durations, cfg)))
    if s["distances"]:
        groups.append(("grid", rp.phase_term_sweep(s["distances"], s["symbol_durations"], cfg)))
    cols = ("distance_m", "symbol_duration_s", "delay_ratio", "pislr_db", "contrast_db",
            "baseline_pislr_db", "baseline_contrast_db")
    rows, table_rows = [], []
    for group, out in groups:
        for r in out:
            vals = (r.distance, r.symbol_duration, r.delay_ratio, r.pislr_db, r.contrast_db,
                    r.baseline_pislr_db, r.baseline_contrast_db)
            table_rows.append(vals)
            rows.append({"group": group, **dict(zip(cols, vals)),
                         "contrast_loss_db": r.contrast_loss_db})
    metrics = {"bandwidth_hz": cfg.lfm.bandwidth, "num_pulses": cfg.num_pulses,
               "rotation_rad": cfg.rotation, "seeds": list(cfg.seeds),
               "dynamic_range_db": cfg.dynamic_range_db, "rows": rows}
    return _bundle(sc, metrics, {"phase_sweep": Table(cols, np.array(table_rows))})


RUNNERS = {
    "spectra": run_spectra,
    "ranging": run_ranging,
    "isar": run_isar,
    "loopback": run_loopback,
    "evm_grid": run_evm_grid,
    "evm_vs_snr": run_evm_vs_snr,
    "phase_sweep": run_phase_sweep,
}


def _bundle(sc: Scenario, metrics, tables, images=None) -> ResultBundle:
    return ResultBundle(sc.name, sc.experiment, sc.seed, sc.echo(), metrics, tables, images or {})


def execute(sc: Scenario) -> ResultBundle:
    """Run a validated scenario in memory."""
    t0 = time.perf_counter()
    bundle = RUNNERS[sc.experiment](sc)
    bundle.wall_time_s = time.perf_counter() - t0
    return bundle


def run_scenario(sc: Scenario, out_dir=None, formats=FORMATS) -> tuple[ResultBundle, Path]:
    """Execute ``sc`` and write its artifacts; returns the bundle and the output directory."""
    target = Path(out_dir or sc["outputs"]["directory"] or Path("results") / sc.name)
    bundle = execute(sc)
    return bundle, export_artifacts(bundle, target, formats)
