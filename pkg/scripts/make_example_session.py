"""Render the bundled example manifest to audio so the CLI can run on it.

    python3 scripts/make_example_session.py out/example
    tsekit extract --manifest out/example/manifest.json --out out/example_gss
"""
import argparse

from tsekit import pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument('out')
    ap.add_argument('--seed', type=int, default=0)
    ap.add_argument('--snr', type=float, default=10.0, help='speech-to-noise ratio in dB')
    args = ap.parse_args()
    manifest = pipeline.load_manifest(pipeline.EXAMPLE_MANIFEST)
    rendered = pipeline.render_session(manifest, args.out, args.seed, args.snr)
    print(rendered.base_dir / 'manifest.json')


if __name__ == '__main__':
    main()
