"""Command-line driver: ``synth``, ``extract`` and ``eval``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import dimred, evaluation, imaging, synth
from .config import Config, ConfigError, load_config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

log = logging.getLogger("imgrank")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def cmd_synth(args) -> int:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = synth.synthesize(out, args.classes, args.per_class, args.seed)
    except OSError as exc:
        print(f"error: cannot write corpus to {out}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"wrote {len(paths)} images in {args.classes} classes to {out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    try:
        dataset = imaging.extract_corpus(args.root)
    except (imaging.CorpusError, imaging.ImageDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    imaging.write_features(dataset, args.out)
    print(f"wrote {len(dataset)} feature vectors ({len(dataset.classes)} classes) to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        config = load_config(args.config) if args.config else Config()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    try:
        dataset = imaging.read_features(args.features)
    except (OSError, imaging.FeatureFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    partition = evaluation.make_folds(dataset, config.n_folds, config.seed)
    try:
        reports, models = evaluation.run_methods(
            dataset, partition, evaluation.METHOD_ORDER, config,
            keep_models=args.model_dir is not None)
    except evaluation.FoldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    text = evaluation.write_reports(args.out_dir, reports, config)
    if args.model_dir is not None:
        for fold, fm in enumerate(models):
            if fm is not None:
                dimred.save_models(Path(args.model_dir) / f"fold_{fold}", fm.nmf, fm.pca)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="imgrank", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic image corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="compute the feature cache of a corpus")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="cross-validate the five methods")
    p.add_argument("--features", required=True)
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--model-dir", help="also save per-fold NMF/PCA models here")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
