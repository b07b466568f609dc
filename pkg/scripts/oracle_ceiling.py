"""SI-SNR gain of oracle IRM masking on seeded single-speaker mixtures, per SNR."""
import argparse

import numpy as np

from tsekit.dsp import StftConfig, Waveform, istft, si_snr, stft
from tsekit.masks import apply_mask, ideal_ratio_mask
from tsekit.mixsim import ArrayGeometry, RoomSpec, build_training_example, speech_shaped_noise, synthetic_speech


def gain(seed, snr, cfg):
    rng = np.random.default_rng(seed)
    sim = build_training_example([[synthetic_speech(rng.uniform(2.0, 3.0), rng)]],
                                 [speech_shaped_noise(4.0, rng)], RoomSpec(),
                                 ArrayGeometry.circular([3.0, 2.5, 1.2]), snr, seed, 3.5)
    ref, mix = sim.clean_refs[0], sim.mixture.channel(0)
    mask = ideal_ratio_mask(stft(ref, cfg), stft(Waveform(mix.samples - ref.samples), cfg))
    out = istft(apply_mask(stft(mix, cfg), mask), length=mix.length)
    return si_snr(out, ref) - si_snr(mix, ref)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument('--seeds', type=int, default=50)
    ap.add_argument('--snr', type=float, nargs='+', default=[-10, -5, 0, 5, 10, 15, 20])
    args = ap.parse_args()
    cfg = StftConfig()
    print(f"{'SNR':>6}  {'min':>6}  {'median':>6}  {'max':>6}")
    for snr in args.snr:
        g = [gain(s, snr, cfg) for s in range(args.seeds)]
        print(f'{snr:6.1f}  {min(g):6.2f}  {np.median(g):6.2f}  {max(g):6.2f}')


if __name__ == '__main__':
    main()
