"""Recipe files: which CSV columns become which plot series.

A recipe is a small JSON document:

    {
      "figure": "fig5",
      "inputs": ["fig5_telegraph.csv"],
      "x": {"column": "lambda", "scale": "log", "label": "flip rate"},
      "y": {"label": "absorbed probability"},
      "series": [
        {"column": "mean_wgk_4", "stderr": "stderr_wgk_4", "label": "amplitude 4"},
        {"column": "markov_wgk_4", "label": "Markovian reference", "style": "dashed"}
      ]
    }

Relative input paths resolve against the recipe file's directory. A series may
name its ``input`` by index when the recipe reads several CSVs (default 0).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["RecipeError", "MissingColumnError", "Series", "FigureRecipe", "load_recipe"]

_FIGURE_ID = re.compile(r"^fig\d+[a-z]?$")
_SCALES = {"linear", "log"}


class RecipeError(ValueError):
    """Recipe file is malformed."""


class MissingColumnError(KeyError):
    """A recipe references columns absent from its CSV input."""

    def __init__(self, path, columns):
        self.path = Path(path)
        self.columns = tuple(columns)
        super().__init__(f"{self.path.name}: missing columns {', '.join(self.columns)}")

    def __str__(self):
        return f"{self.path.name}: missing columns {', '.join(self.columns)}"


@dataclass(frozen=True)
class Series:
    column: str
    label: str
    input: int = 0
    stderr: str | None = None
    style: str = "solid"


@dataclass(frozen=True)
class FigureRecipe:
    figure: str
    inputs: tuple[Path, ...]
    x_column: str
    x_scale: str
    x_label: str
    y_label: str
    y_scale: str = "linear"
    series: tuple[Series, ...] = field(default_factory=tuple)
    title: str = ""


def _require(condition: bool, message: str):
    if not condition:
        raise RecipeError(message)


def load_recipe(path: str | Path) -> FigureRecipe:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise RecipeError(f"{path.name}: not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), f"{path.name}: top level must be an object")

    figure = doc.get("figure", "")
    _require(bool(_FIGURE_ID.match(figure)), f"{path.name}: bad figure id {figure!r}")

    raw_inputs = doc.get("inputs", [])
    _require(isinstance(raw_inputs, list) and raw_inputs, f"{path.name}: needs at least one input")
    inputs = tuple((path.parent / p).resolve() if not Path(p).is_absolute() else Path(p)
                   for p in raw_inputs)

    x = doc.get("x", {})
    _require(isinstance(x, dict) and "column" in x, f"{path.name}: x.column is required")
    x_scale = x.get("scale", "linear")
    _require(x_scale in _SCALES, f"{path.name}: unknown x scale {x_scale!r}")
    y = doc.get("y", {})
    y_scale = y.get("scale", "linear")
    _require(y_scale in _SCALES, f"{path.name}: unknown y scale {y_scale!r}")

    raw_series = doc.get("series", [])
    _require(isinstance(raw_series, list) and raw_series, f"{path.name}: needs at least one series")
    series = []
    for k, entry in enumerate(raw_series):
        _require(isinstance(entry, dict) and "column" in entry,
                 f"{path.name}: series {k} needs a column")
        idx = int(entry.get("input", 0))
        _require(0 <= idx < len(inputs), f"{path.name}: series {k} input index {idx} out of range")
        style = entry.get("style", "solid")
        _require(style in {"solid", "dashed", "dotted"},
                 f"{path.name}: series {k} unknown style {style!r}")
        series.append(Series(
            column=entry["column"],
            label=entry.get("label", entry["column"]),
            input=idx,
            stderr=entry.get("stderr"),
            style=style,
        ))
    return FigureRecipe(
        figure=figure,
        inputs=inputs,
        x_column=x["column"],
        x_scale=x_scale,
        x_label=x.get("label", x["column"]),
        y_label=y.get("label", "value"),
        y_scale=y_scale,
        series=tuple(series),
        title=doc.get("title", ""),
    )
