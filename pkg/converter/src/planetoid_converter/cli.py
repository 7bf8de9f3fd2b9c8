"""planetoid-convert: turn a Planetoid pickle bundle into a PANDS v1 file.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import sys

from .convert import DATASET_NAMES, ConverterError, PlanetoidBundle, convert


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="planetoid-convert")
    parser.add_argument("--name", required=True, choices=DATASET_NAMES)
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="directory with the ind.<name>.* files")
    parser.add_argument("--out", required=True, help="output PANDS file")
    args = parser.parse_args(argv)
    try:
        bundle = PlanetoidBundle.locate(args.name, args.in_dir)
        stats = convert(bundle, args.out)
    except (ConverterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for line in stats.lines():
        print(line)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
