"""``fd-sense <mode> --config <file> [--out <file>] [--curves <file>]``.

Exit codes: 0 on success, 2 for configuration or input-file errors, 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import MODES, load_config
from .errors import ConfigError, DataFormatError, FdSenseError
from .io import export_curves
from .pipeline import run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fd-sense", description="Fisher-divergence sensitivity analysis from posterior samples.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="YAML or JSON run configuration")
    p.add_argument("--out", help="write the JSON report here (default: stdout)")
    p.add_argument("--curves", help="write plot-ready curves as CSV here")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, mode=args.mode)
        report = run(cfg)
        text = report.to_json()
        if args.curves:
            try:
                export_curves(report.curves, args.curves)
            except DataFormatError as exc:
                raise DataFormatError(f"--curves: {exc}") from None
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    except (ConfigError, DataFormatError) as exc:
        print(f"fd-sense: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FdSenseError as exc:
        print(f"fd-sense: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"fd-sense: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
