"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 runtime/data error,
3 numeric abort (non-finite loss).
"""

from __future__ import annotations

import argparse
import logging
import sys

from msnilm import pipeline
from msnilm.checkpoint import CheckpointError
from msnilm.data.series import DataError
from msnilm.data.shards import ShardError
from msnilm.data.synth import TemplateError
from msnilm.layers import ConfigError
from msnilm.manifest import ManifestError, load_manifest
from msnilm.training import NumericAbort

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_NUMERIC = 0, 1, 2, 3

logger = logging.getLogger("msnilm")


def _manifest(args):
    return load_manifest(args.manifest, seed=args.seed, output_dir=args.out)


def cmd_synth(args):
    written = pipeline.run_synth(_manifest(args))
    for house, files in written.items():
        print(f"{house}: " + ", ".join(f"{k}={v}" for k, v in files.items()))


def cmd_prepare(args):
    summary = pipeline.run_prepare(_manifest(args), workers=args.workers)
    print(pipeline.format_summary(summary), end="")


def cmd_train(args):
    m = _manifest(args)
    results = pipeline.run_train(m)
    for appliance, res in results.items():
        ckpt = pipeline.model_dir(m, appliance) / "checkpoint.bin"
        if res is None:
            print(f"{appliance}: zero epochs, wrote initial checkpoint {ckpt}")
        else:
            print(f"{appliance}: {res.epochs_run} epochs, best epoch {res.best_epoch}, "
                  f"best val loss {res.best_val_loss}, checkpoint {ckpt}")


def cmd_evaluate(args):
    reports = pipeline.run_evaluate(_manifest(args), args.checkpoint, dump=args.dump)
    print("\n\n".join(r.table() for r in reports))


def cmd_inspect(args):
    print(pipeline.inspect_checkpoint(args.checkpoint))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msnilm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_manifest(p):
        p.add_argument("--manifest", required=True, help="experiment manifest (YAML)")
        p.add_argument("--seed", type=int, default=None, help="override the manifest's master seed")
        p.add_argument("--workers", type=int, default=1, help="cap on worker processes")
        p.add_argument("--out", default=None, help="override the manifest's output directory")
        return p

    with_manifest(sub.add_parser("synth", help="write synthetic household CSVs")).set_defaults(func=cmd_synth)
    with_manifest(sub.add_parser("prepare", help="build train/test sample shards")).set_defaults(func=cmd_prepare)
    with_manifest(sub.add_parser("train", help="train one model per target appliance")).set_defaults(func=cmd_train)
    p = with_manifest(sub.add_parser("evaluate", help="score checkpoints on the test shards"))
    p.add_argument("--checkpoint", default=None, help="checkpoint to evaluate (default: trained one)")
    p.add_argument("--dump", action="store_true", help="also write per-point predictions as CSV")
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("inspect", help="print layer shapes, receptive fields and parameter count")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ManifestError, ConfigError, TemplateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ShardError, CheckpointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
