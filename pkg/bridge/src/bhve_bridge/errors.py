class BridgeError(Exception):
    """Base class for bridge failures."""


class ManifestError(BridgeError):
    """The window manifest is missing or malformed."""


class ModelLoadError(BridgeError):
    """A pretrained encoder could not be constructed or loaded."""


class FrameSourceError(BridgeError):
    """A window's frame stack is missing or has the wrong shape."""
