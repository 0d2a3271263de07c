"""Command line for figure rendering: flags or a key=value spec file."""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURE_KINDS, FigureSpec, PlotError, render


def spec_from_file(path) -> FigureSpec:
    fields = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise PlotError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in body.split("=", 1))
            fields[key] = value
    known = {"kind", "input", "out", "title", "dpi", "columns"}
    unknown = set(fields) - known
    if unknown:
        raise PlotError(f"unknown figure-spec keys: {sorted(unknown)}")
    for req in ("kind", "input", "out"):
        if req not in fields:
            raise PlotError(f"figure spec is missing the {req!r} key")
    return FigureSpec(
        kind=fields["kind"],
        inputs=tuple(p.strip() for p in fields["input"].split(",") if p.strip()),
        out=fields["out"],
        title=fields.get("title", ""),
        dpi=int(fields.get("dpi", 120)),
        columns=tuple(c.strip() for c in fields.get("columns", "").split(",") if c.strip()),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdns-plots",
        description="Render figures from sdns CSV outputs (schema v1).",
    )
    parser.add_argument("--spec", type=str, default=None,
                        help="figure-spec file (key = value lines)")
    parser.add_argument("--kind", choices=FIGURE_KINDS, default=None)
    parser.add_argument("--input", type=str, default=None,
                        help="input CSV path(s), comma separated")
    parser.add_argument("--out", type=str, default=None, help="output image path")
    parser.add_argument("--title", type=str, default="")
    parser.add_argument("--dpi", type=int, default=120)
    parser.add_argument("--columns", type=str, default="",
                        help="columns to draw (timeseries kind)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.spec:
            spec = spec_from_file(args.spec)
        else:
            missing = [k for k in ("kind", "input", "out") if getattr(args, k) is None]
            if missing:
                raise PlotError(f"missing required flags: {missing} (or use --spec)")
            spec = FigureSpec(
                kind=args.kind,
                inputs=tuple(p.strip() for p in args.input.split(",") if p.strip()),
                out=args.out,
                title=args.title,
                dpi=args.dpi,
                columns=tuple(c.strip() for c in args.columns.split(",") if c.strip()),
            )
        path = render(spec)
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
