"""Attacker signatures for audio deepfake attribution.

Low-level acoustic signatures, a recurrent embedding network trained with an
angular prototypical objective, class-conditional variance cluster metrics and
a downstream attacker-ID classifier, all runnable on a seeded synthetic corpus.
"""

from .corpus import (
    AttackerProfile,
    ConfigError,
    DatasetManifest,
    SynthAttackerConfig,
    UtteranceRecord,
    Waveform,
    WavFormatError,
    default_synth_config,
    parse_asvspoof_protocol,
    read_wav,
    split_in_domain,
    split_out_of_domain,
    synth_corpus,
    write_wav,
)
from .features import (
    FEATURE_NAMES,
    FrameConfig,
    LowLevelSignature,
    PitchTrack,
    extract_signature,
    track_pitch,
)
from .metrics import (
    ClusterReport,
    Projection2D,
    avg_class_conditional_variance,
    class_variance,
    pca_2d,
    standard_normalize,
)

__version__ = "0.1.0"

__all__ = [
    "AttackerProfile",
    "ClusterReport",
    "ConfigError",
    "DatasetManifest",
    "FEATURE_NAMES",
    "FrameConfig",
    "LowLevelSignature",
    "PitchTrack",
    "Projection2D",
    "SynthAttackerConfig",
    "UtteranceRecord",
    "Waveform",
    "WavFormatError",
    "avg_class_conditional_variance",
    "class_variance",
    "default_synth_config",
    "extract_signature",
    "parse_asvspoof_protocol",
    "pca_2d",
    "read_wav",
    "split_in_domain",
    "split_out_of_domain",
    "standard_normalize",
    "synth_corpus",
    "track_pitch",
    "write_wav",
]
