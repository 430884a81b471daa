"""CLI front end: config parsing, subcommands, reports, SVG plots."""

from .config import DataError, ModelSpec, RunConfig, UsageError, load_config
from .main import main
from .report import read_json, render_rows, write_json, write_report
from .svg import PlotSpec, emit_svg

__all__ = ["DataError", "ModelSpec", "RunConfig", "UsageError", "load_config",
           "main", "read_json", "render_rows", "write_json", "write_report",
           "PlotSpec", "emit_svg"]
