"""Perceptual bug detection in gameplay recordings.

Train a spatiotemporal autoencoder on bug-free play, score recordings with
per-frame Regularity Scores, cluster the score diagrams with DBSCAN to
identify bug categories, and evaluate with the homogeneity score. The
``glitchguard`` CLI ties the stages together; a deterministic synthetic
corpus generator provides labeled data for verification.
"""

from glitchguard.clustering import (
    ClusterResult,
    CurveDescriptor,
    LabelAssignment,
    cluster_curves,
    dbscan,
    featurize,
    homogeneity,
)
from glitchguard.config import RunConfig
from glitchguard.data import (
    Clip,
    CorpusManifest,
    FrameSequence,
    load_frames,
    load_manifest,
    split_corpus,
    to_clips,
)
from glitchguard.model import (
    AutoencoderConfig,
    ModelCheckpoint,
    TrainingHyper,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from glitchguard.scoring import (
    AnomalySegment,
    RegularityCurve,
    detect_anomalies,
    frame_errors,
    regularity_score,
    score_sequence,
)
from glitchguard.synth import (
    BugInjection,
    SceneSpec,
    SpriteSpec,
    inject_bug,
    make_labeled_corpus,
    render_normal,
)

__version__ = "0.1.0"
