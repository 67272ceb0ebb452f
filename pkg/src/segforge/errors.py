"""Shared exception base for the segforge pipeline.

Every module defines its own domain errors; they all inherit from
:class:`SegforgeError` so callers (notably the CLI) can catch pipeline
failures without blanket ``except Exception`` blocks.
"""

from __future__ import annotations


class SegforgeError(Exception):
    """Base class for all pipeline errors."""
