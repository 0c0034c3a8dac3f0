"""Command-line entry point: run pipeline stages against a workspace."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PipelineConfig
from .pipeline import STAGES, FingerprintMismatchError, MissingArtifactError, Pipeline

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_DEPENDENCY = 2
EXIT_FINGERPRINT_MISMATCH = 3

log = logging.getLogger("facelift")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facelift",
        description="Rank synthetic urban scenes by beauty, beautify them in "
                    "latent space, and report the urban-design differences.",
    )
    parser.add_argument("stage", choices=(*STAGES, "all"),
                        help="pipeline stage to run ('all' runs the full chain)")
    parser.add_argument("--config", help="JSON config file (defaults used if omitted)")
    parser.add_argument("--workspace", default="workspace",
                        help="artifact directory (default: ./workspace)")
    parser.add_argument("--seed", type=int,
                        help="override the config's global seed")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes for per-scene fan-out")
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective config as JSON and exit")
    parser.add_argument("-q", "--quiet", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = (PipelineConfig.from_file(args.config) if args.config
                  else PipelineConfig())
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.print_config:
            print(config.to_json())
            return EXIT_OK
        pipeline = Pipeline(config, args.workspace, workers=args.workers)
        log.info("running stage %r in %s (fingerprint %s)", args.stage,
                 args.workspace, pipeline.fingerprint)
        pipeline.run(args.stage)
    except MissingArtifactError as exc:
        print(f"facelift: missing dependency: {exc}", file=sys.stderr)
        return EXIT_MISSING_DEPENDENCY
    except FingerprintMismatchError as exc:
        print(f"facelift: fingerprint mismatch: {exc}", file=sys.stderr)
        return EXIT_FINGERPRINT_MISMATCH
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"facelift: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
