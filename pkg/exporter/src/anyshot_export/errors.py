"""Exporter error hierarchy."""
from __future__ import annotations


class ExportError(Exception):
    """Base class for everything this package raises on purpose."""


class ManifestError(ExportError):
    """Manifest file missing, malformed, or inconsistent."""


class BackboneError(ExportError):
    """Backbone weights unavailable or incompatible."""


class MissingTokenError(ExportError):
    """Classes that resolve to no word-vector token."""

    def __init__(self, names: list[str]):
        self.names = list(names)
        super().__init__("unresolvable classes: " + ", ".join(self.names))
