"""Export frozen pretrained encoder outputs into BHVE embedding tables.

The bridge owns no science: it reads window manifests, runs a frozen text or
video encoder in batches, L2-normalizes the outputs, and emits the BHVE
binary table plus its ids sidecar so the alignment toolkit can consume them.
"""

from .encoders import EncoderSpec, build_encoder, spec_for
from .errors import BridgeError, FrameSourceError, ManifestError, ModelLoadError
from .export import export_text_embeddings, export_video_embeddings
from .formats import read_manifest_captions, write_bhve_table

__version__ = "0.1.0"
