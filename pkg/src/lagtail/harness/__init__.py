"""Command-line harness: estimate, approx, table, sample."""

from .cli import build_parser, main
from .config import RunConfig, TableRow, TableSpec
from .display import format_log_prob

__all__ = ["RunConfig", "TableRow", "TableSpec", "build_parser", "format_log_prob", "main"]
