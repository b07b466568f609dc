"""Compare front-end stages on simulated sessions, one row per stage.

Reports SI-SNR gain over the reference channel, pooled over every written
segment, in the same row-per-system layout as the CER report.
"""
import argparse
import tempfile
from pathlib import Path

import numpy as np

from tsekit import pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument('--sessions', type=int, default=3)
    ap.add_argument('--seed', type=int, default=0)
    ap.add_argument('--out', default=None, help='keep outputs here (default: temporary)')
    args = ap.parse_args()
    root = Path(args.out or tempfile.mkdtemp(prefix='stages_'))
    cfg = pipeline.RunConfig(seed=args.seed,
                             simulation=pipeline.SimulationConfig(sessions=args.sessions, snr_grid=(0.0, 5.0, 10.0)))
    manifests = [pipeline.load_manifest(p) for p in pipeline.simulate(cfg, root / 'sim')]
    rows = []
    for stage in pipeline.STAGES:
        res = pipeline.run_extraction(manifests, cfg.replace(stage=stage), root / stage)
        gains = [r['si_snr'] - r['si_snr_mixture'] for r in res.records if 'si_snr' in r]
        rows.append((stage, len(res.records), len(res.failures), gains))
    res = pipeline.oracle_enhance(manifests, cfg, root / 'oracle_irm')
    rows.append(('oracle_irm', len(res.records), len(res.failures),
                 [r['si_snr'] - r['si_snr_mixture'] for r in res.records]))
    print(f"{'System':<14}{'segs':>6}{'fail':>6}{'median dB':>11}{'mean dB':>9}")
    for name, n, fails, g in rows:
        print(f'{name:<14}{n:>6}{fails:>6}{np.median(g):>11.2f}{np.mean(g):>9.2f}')
    print(f'outputs in {root}')


if __name__ == '__main__':
    main()
