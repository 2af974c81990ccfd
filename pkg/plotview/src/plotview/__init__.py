"""Static figure companion for mfelab batch artifacts."""

__version__ = "0.1.0"

from .readers import SchemaError, read_branch_csv, read_diagnostics_json, read_family_csv, read_field_dump
from .render import PLOT_KINDS, render

__all__ = ["PLOT_KINDS", "SchemaError", "read_branch_csv", "read_diagnostics_json",
           "read_family_csv", "read_field_dump", "render", "__version__"]
