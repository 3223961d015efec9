"""Exception taxonomy shared across the package."""
from __future__ import annotations


class AnyshotError(Exception):
    """Base class for all package errors."""


class ShapeError(AnyshotError):
    """Array dimensions do not match what an operation requires."""


class ContractError(AnyshotError):
    """An API precondition was violated by the caller."""


class NumericError(AnyshotError):
    """A computation produced non-finite values."""


class FeatureFormatError(AnyshotError):
    """A feature file is structurally invalid."""


class FeatureTruncationError(FeatureFormatError):
    """A feature file ends before the data its header promises."""


class FeatureCorruptionError(AnyshotError):
    """A feature file parses but carries invalid content."""


class SplitError(AnyshotError):
    """A class split cannot be formed as requested."""


class EpisodeError(AnyshotError):
    """An episode cannot be sampled from the given split."""


class SideInfoError(AnyshotError):
    """Side information could not be parsed or assembled."""


class TaxonomyError(SideInfoError):
    """A taxonomy file or structure is invalid."""


class MissingEmbeddingError(SideInfoError):
    """One or more class names resolve to no word vector."""

    def __init__(self, class_names: list[str]):
        self.class_names = list(class_names)
        super().__init__("no word vector for: " + ", ".join(self.class_names))


class CheckpointError(AnyshotError):
    """A checkpoint file is missing, malformed, or inconsistent."""


class RankError(AnyshotError):
    """Input data is too degenerate for the requested decomposition."""


class EvaluationError(AnyshotError):
    """A retrieval evaluation is undefined for the given inputs."""


class ConfigError(AnyshotError):
    """An experiment config file is missing keys or malformed."""
