"""mfe-plot: render a figure from an mfelab artifact.

Usage: mfe-plot <plotspec.json>

The spec is a JSON document: {"kind": <branch|quantization|concentration|
family_slope|heatmap>, "input": <artifact path>, "output": <image path>,
"options": {...}}.  Exit codes: 0 rendered, 2 bad spec or schema mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys

from .readers import SchemaError
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mfe-plot", description=__doc__)
    parser.add_argument("spec", help="plot spec JSON path")
    args = parser.parse_args(argv)
    try:
        with open(args.spec) as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read plot spec {args.spec}: {exc}", file=sys.stderr)
        return 2
    try:
        out = render(spec)
    except (SchemaError, OSError) as exc:
        print(f"render failed: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
