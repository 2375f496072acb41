"""Behaviour-aligned embedding spaces for synchronized gameplay logs.

The toolkit turns raw keypress/mouse logs into windowed, captioned samples,
trains an alignment projector from frozen video encodings onto caption
encodings, and quantifies alignment quality and cross-game transfer.
"""

from .align import (
    Adam,
    MlpProjector,
    TrainConfig,
    TrainReport,
    backward,
    cosine_loss,
    forward,
    load_checkpoint,
    mse_loss,
    preference_loss,
    project,
    save_checkpoint,
    train_alignment,
)
from .dataset import (
    ActionCatalog,
    ActionEntry,
    Category,
    Device,
    GameProfile,
    MouseMode,
    TimestepRecord,
    default_catalog,
    detect_discontinuities,
    load_profiles,
    parse_log,
    save_profiles,
    serialize_log,
)
from .embeddings import (
    EmbeddingTable,
    PairedDataset,
    TextEmbedder,
    TextEmbedderConfig,
    embed_caption,
    join,
    l2_normalize,
    read_table,
    write_table,
)
from .evaluate import (
    ClassifierConfig,
    ClassifierModel,
    IdmReport,
    SilhouetteReport,
    TransferReport,
    accuracy,
    idm_marginal,
    pca_2d,
    predict_proba,
    run_transfer_experiment,
    silhouette,
    train_classifier,
    transferability,
)
from .preprocess import (
    IDLE_CAPTION,
    CategoryFlags,
    WindowSample,
    categorize,
    collapse_window,
    discretize_pan,
    make_windows,
    mouse_deltas,
    propagate_labels,
    read_manifest,
    run_pipeline,
    semantic_action_mapper,
    write_manifest,
)
from .synth import (
    GameStyle,
    SynthConfig,
    behaviour_signal_scale,
    generate_foundation_embeddings,
    generate_logs,
    generate_windows,
)

__version__ = "0.1.0"
