"""Figure rendering for simulation CSV output, driven by JSON recipes."""

from .recipes import FigureRecipe, MissingColumnError, RecipeError, load_recipe
from .render import EmptyDataError, build_figure, read_csv, render

__version__ = "0.1.0"

__all__ = [
    "FigureRecipe",
    "MissingColumnError",
    "RecipeError",
    "EmptyDataError",
    "load_recipe",
    "read_csv",
    "build_figure",
    "render",
]
