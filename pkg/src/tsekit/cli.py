"""Command line entry point: ``tsekit {simulate,extract,score,oracle-enhance,report}``.

Exit status: 0 success, 1 invalid input (nothing processed), 2 finished with
failures recorded in ``failures.json``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import evalkit, pipeline

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 1, 2
log = logging.getLogger('tsekit')


def _config(args) -> pipeline.RunConfig:
    config = pipeline.load_config(args.config) if args.config else pipeline.RunConfig()
    return config.replace(seed=args.seed, jobs=args.jobs, out=args.out,
                          stage=getattr(args, 'stage', None))


def _manifests(args) -> list[pipeline.SessionManifest]:
    if not args.manifest:
        raise pipeline.ValidationError('at least one --manifest is required')
    return [pipeline.load_manifest(p) for p in args.manifest]


def _finish(result: pipeline.RunResult, what: str) -> int:
    print(f'{what}: {len(result.records)} segment(s) written to {result.out}')
    if result.failures:
        print(f'{len(result.failures)} failure(s) recorded in {result.out / "failures.json"}', file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _config(args)
    sources = args.manifest[0] if args.manifest else None
    paths = pipeline.simulate(config, args.out, sources)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_extract(args) -> int:
    return _finish(pipeline.run_extraction(_manifests(args), _config(args), args.out), 'extract')


def cmd_oracle(args) -> int:
    return _finish(pipeline.oracle_enhance(_manifests(args), _config(args), args.out), 'oracle-enhance')


def cmd_score(args) -> int:
    hyps = {}
    for item in args.hyp:
        name, sep, path = item.partition('=')
        if not sep or not name or not path:
            raise pipeline.ValidationError(f'--hyp expects SYSTEM=PATH, got {item!r}')
        hyps[name] = path
    if args.ref:
        refs = evalkit.read_transcripts(args.ref)
    else:
        refs = {}
        for m in _manifests(args):
            refs.update(m.transcripts())
    report = pipeline.score_run(hyps, refs, args.out)
    print(report.render(), end='')
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        data = json.loads(Path(args.report).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as exc:
        raise pipeline.ValidationError(f'{args.report}: {exc}') from exc
    if not isinstance(data, dict) or 'rows' not in data:
        raise pipeline.ValidationError(f'{args.report}: not a score report')
    print(evalkit.render_table(data), end='')
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='tsekit', description=__doc__.splitlines()[0])
    parser.add_argument('-v', '--verbose', action='store_true')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p, stage=False):
        p.add_argument('--manifest', action='append', default=[], metavar='PATH')
        p.add_argument('--config', metavar='PATH', help='RunConfig JSON')
        p.add_argument('--out', metavar='DIR')
        p.add_argument('--seed', type=int)
        p.add_argument('--jobs', type=int, help='worker processes (sessions run in parallel)')
        if stage:
            p.add_argument('--stage', choices=pipeline.STAGES)
        return p

    common(sub.add_parser('simulate', help='write simulated sessions (synthetic talkers, '
                          'or the source list given with --manifest)')).set_defaults(func=cmd_simulate)
    common(sub.add_parser('extract', help='enhance every speaker of every session'),
           stage=True).set_defaults(func=cmd_extract)
    common(sub.add_parser('oracle-enhance', help='IRM upper bound from reference audio')
           ).set_defaults(func=cmd_oracle)
    score = common(sub.add_parser('score', help='CER report for one or more systems'))
    score.add_argument('--hyp', action='append', default=[], required=True, metavar='SYSTEM=PATH')
    score.add_argument('--ref', metavar='PATH', help='reference transcripts (default: from manifests)')
    score.set_defaults(func=cmd_score)
    report = sub.add_parser('report', help='render a JSON score report as text')
    report.add_argument('report', metavar='REPORT_JSON')
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(message)s')
    try:
        return args.func(args)
    except (pipeline.ValidationError, ValueError) as exc:
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_INVALID


if __name__ == '__main__':
    sys.exit(main())
