"""Wall-clock timings of the hot paths, one chirp period at 40 GSa/s each.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Reports the median of ``--repeat`` runs per kernel.  The direct-convolution
row is a reference for the periodic FFT filter used everywhere else.
"""

import argparse
import statistics
import time

import numpy as np

from jcrsim.comm_link import CommLink
from jcrsim.photonic_link import default_transmitter
from jcrsim.radar_proc import RadarReceiver, TargetScene
from jcrsim.signal_core import SampledSignal, convolve_centered, design_fir, fir_filter
from jcrsim.waveform_gen import LfmParams, gen_qpsk_frame

FS = 40e9


def timed(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    base = LfmParams(8.5e9, 1e9, 4e-6)
    tx, lfm = default_transmitter(base)
    frame = gen_qpsk_frame(105.26e6, lfm, 4, 0)
    x = SampledSignal(FS, np.random.default_rng(0).standard_normal(160_000))
    taps = design_fir("bandpass", (7.91e9, 11.1e9), 1025, FS)
    rx = RadarReceiver()
    scene = TargetScene.static([0.96, 1.13])
    link = CommLink(tx, lfm)

    cases = [
        ("fir 1025 taps, periodic FFT", lambda: fir_filter(x, "bandpass", (7.91e9, 11.1e9))),
        ("fir 1025 taps, direct np.convolve", lambda: np.convolve(x.samples, taps, "same")),
        ("fir 1025 taps, zero boundary", lambda: convolve_centered(x.samples, taps, "zero")),
        ("photonic chain, one period", lambda: tx.transmit_period(lfm, frame, 0, FS)),
        ("radar pulse: echo + dechirp + decimate", lambda: rx.pulse(lfm, frame, scene, 0, FS)),
        ("comm: one period end to end", lambda: link.receive(link.transmit(frame, 0), frame, 0,
                                                             link.channel)),
    ]
    width = max(len(name) for name, _ in cases)
    for name, fn in cases:
        fn()  # warm caches and FFT plans
        print(f"{name:<{width}}  {1e3 * timed(fn, args.repeat):8.2f} ms")


if __name__ == "__main__":
    main()
