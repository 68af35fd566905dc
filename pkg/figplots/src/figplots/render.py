"""Turn a recipe plus its CSV inputs into one raster image."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .recipes import FigureRecipe, MissingColumnError

__all__ = ["EmptyDataError", "read_csv", "build_figure", "render"]

DPI = 150
_LINESTYLES = {"solid": "-", "dashed": "--", "dotted": ":"}


class EmptyDataError(ValueError):
    """CSV input has a header but no data rows."""


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Documented CSV schema: one header line, then numeric rows."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path.name}: no header line") from None
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyDataError(f"{path.name}: no data rows")
    data = np.array([[float(value) for value in row] for row in rows])
    if data.shape[1] != len(header):
        raise ValueError(f"{path.name}: rows do not match the header width")
    return {name: data[:, k] for k, name in enumerate(header)}


def _check_columns(recipe: FigureRecipe, tables: list[dict[str, np.ndarray]]):
    for idx, (path, table) in enumerate(zip(recipe.inputs, tables)):
        wanted = [recipe.x_column]
        for series in recipe.series:
            if series.input == idx:
                wanted.append(series.column)
                if series.stderr:
                    wanted.append(series.stderr)
        missing = sorted(set(name for name in wanted if name not in table))
        if missing:
            raise MissingColumnError(path, missing)


def build_figure(recipe: FigureRecipe):
    """Figure object for a recipe; callers own showing/saving/closing it."""
    tables = [read_csv(path) for path in recipe.inputs]
    _check_columns(recipe, tables)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for series in recipe.series:
        table = tables[series.input]
        x = table[recipe.x_column]
        y = table[series.column]
        if recipe.x_scale == "log":
            keep = x > 0.0
            x, y = x[keep], y[keep]
            err = table[series.stderr][keep] if series.stderr else None
        else:
            err = table[series.stderr] if series.stderr else None
        style = _LINESTYLES[series.style]
        if err is not None:
            ax.errorbar(x, y, yerr=err, linestyle=style, marker=".", capsize=2.0,
                        label=series.label)
        else:
            ax.plot(x, y, linestyle=style, label=series.label)
    ax.set_xscale(recipe.x_scale)
    ax.set_yscale(recipe.y_scale)
    ax.set_xlabel(recipe.x_label)
    ax.set_ylabel(recipe.y_label)
    if recipe.title:
        ax.set_title(recipe.title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    return fig


def render(recipe: FigureRecipe, out_dir: str | Path) -> Path:
    """Render one recipe to ``<out_dir>/<figure>.png``; returns the path.

    Rendering is deterministic given the input files, so re-rendering
    overwrites the image with identical bytes.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig = build_figure(recipe)
    target = out_dir / f"{recipe.figure}.png"
    try:
        fig.savefig(target, dpi=DPI, metadata={"Software": "figplots"})
    finally:
        plt.close(fig)
    return target
