"""Exception types shared across the toolkit."""

from __future__ import annotations


class BehalignError(Exception):
    """Base class for all toolkit errors."""


class MalformedRowError(BehalignError):
    """A log row has the wrong field count or an unparseable field."""


class UnknownActionError(BehalignError):
    """A log header names an action the catalog does not know."""


class NonMonotonicFrameError(BehalignError):
    """frame_index did not strictly increase within a session stream."""


class UnknownGameError(BehalignError):
    """A game id is not covered by the available profiles/config."""


class BadMagicError(BehalignError):
    """An embedding-table file does not start with the expected magic."""


class VersionMismatchError(BehalignError):
    """An embedding-table file declares an unsupported format version."""


class TruncatedFileError(BehalignError):
    """An embedding-table file ended early or carries trailing bytes."""


class DimMismatchError(BehalignError):
    """Declared dimensions disagree (header vs ids, input vs network, ...)."""


class MissingEmbeddingError(BehalignError):
    """Manifest ids are absent from an embedding table."""

    def __init__(self, missing: tuple[str, ...]):
        self.missing = missing
        preview = ", ".join(missing[:5]) + (", ..." if len(missing) > 5 else "")
        super().__init__(f"{len(missing)} manifest id(s) missing from table: {preview}")


class UnknownPhraseError(BehalignError):
    """A caption contains a phrase outside the embedder vocabulary."""


class ZeroVectorError(BehalignError):
    """A cosine-based operation received a (near-)zero vector."""


class EmptyDatasetError(BehalignError):
    """An operation requiring samples received none."""


class EmptyInputError(BehalignError):
    """An operation requiring points received none."""


class SingleClusterError(BehalignError):
    """Silhouette needs at least two distinct labels."""


class SingleClassError(BehalignError):
    """Binary classification needs both classes present."""
