"""Double-spend simulator entry point."""

from __future__ import annotations

from tap_doublespend.cli import cli

cli()
