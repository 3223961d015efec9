"""Feature and word-vector export into the anyshot file formats.

This package talks to the retrieval engine only through its on-disk
formats (SPFX feature containers and plain-text word vectors); it never
imports the engine.
"""
from __future__ import annotations

from .errors import BackboneError, ExportError, ManifestError, MissingTokenError

__all__ = [
    "BackboneError",
    "ExportError",
    "ManifestError",
    "MissingTokenError",
]
