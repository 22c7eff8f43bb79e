"""Passive voice-liveness detection from circular microphone-array recordings."""

from .audio_io import (
    AudioFormatError,
    DatasetManifest,
    ManifestEntry,
    ManifestError,
    MultiChannelAudio,
    load_manifest,
    load_wav,
    save_wav,
    write_manifest,
)
from .classifier import (
    EvaluationReport,
    LivenessClassifier,
    Model,
    TrainingError,
    compute_eer,
    evaluate,
    load_model,
    predict,
    save_model,
    train,
)
from .features import ArrayFeatureExtractor, FeatureConfig, FeatureError, FeatureVector, extract
from .geometry import ArrayGeometry, mic_distances, sigma_d, sigma_sweep
from .synthesis import CorpusConfig, Scene, SourceProfile, generate_corpus, synthesize_scene

__version__ = "0.1.0"
