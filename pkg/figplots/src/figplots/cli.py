"""Command line entry point: ``figplots render --recipe <path> --out <dir>``."""

from __future__ import annotations

import argparse
import sys

from .recipes import MissingColumnError, RecipeError, load_recipe
from .render import EmptyDataError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="figplots",
                                     description="Render simulation CSVs into figures")
    sub = parser.add_subparsers(dest="command", required=True)
    render_parser = sub.add_parser("render", help="render one recipe")
    render_parser.add_argument("--recipe", required=True, help="recipe JSON path")
    render_parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    try:
        recipe = load_recipe(args.recipe)
        target = render(recipe, args.out)
    except (RecipeError, MissingColumnError, EmptyDataError, FileNotFoundError) as exc:
        print(exc, file=sys.stderr)
        return 2
    print(target)
    return 0


if __name__ == "__main__":
    sys.exit(main())
