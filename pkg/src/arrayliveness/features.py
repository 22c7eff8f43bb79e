"""Array-fingerprint feature extraction.

The feature vector has a fixed layout ``[sap (n_sap), sdp (n_ch + 2*len(thr)),
lpc (2*(order+1))]``; with the defaults that is 40 + 30 + 32 = 102 values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import dsp
from .audio_io import MultiChannelAudio
from .dsp import Spectrogram, StftConfig


class FeatureError(ValueError):
    """Feature extraction failed; the message names the failing component."""


@dataclass(frozen=True)
class FeatureConfig:
    f_sap_cutoff_hz: float = 5000.0
    f_sdp_cutoff_hz: float = 1000.0
    grid_rows: int = 100
    grid_cols: int = 20
    n_sap: int = 40
    n_ch: int = 20
    sdp_thresholds: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    lpcc_order: int = 15
    smoothing_width: int = 5
    stft: StftConfig = field(default_factory=StftConfig)
    direction_hp_hz: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "sdp_thresholds", tuple(float(t) for t in self.sdp_thresholds))
        if min(self.grid_rows, self.grid_cols, self.n_sap, self.n_ch) < 2:
            raise ValueError("grid_rows, grid_cols, n_sap and n_ch must all be >= 2")
        thr = np.asarray(self.sdp_thresholds)
        if len(thr) == 0 or np.any(thr <= 0) or np.any(thr >= 1) or np.any(np.diff(thr) <= 0):
            raise ValueError("sdp_thresholds must be strictly increasing inside (0, 1)")

    @property
    def n_features(self) -> int:
        return self.n_sap + self.n_ch + 2 * len(self.sdp_thresholds) + 2 * (self.lpcc_order + 1)

    def feature_names(self) -> list[str]:
        n_sdp = self.n_ch + 2 * len(self.sdp_thresholds)
        return (
            [f"sap_{i:02d}" for i in range(self.n_sap)]
            + [f"sdp_{i:02d}" for i in range(n_sdp)]
            + [f"lpc_{i:02d}" for i in range(2 * (self.lpcc_order + 1))]
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sdp_thresholds"] = list(self.sdp_thresholds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        d = dict(d)
        if isinstance(d.get("stft"), dict):
            d["stft"] = StftConfig(**d["stft"])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def check_rate(self, sample_rate_hz: float) -> None:
        nyq = sample_rate_hz / 2
        if self.f_sap_cutoff_hz >= nyq or self.f_sdp_cutoff_hz >= nyq:
            raise FeatureError(f"cutoffs must lie below Nyquist ({nyq} Hz)")


def retained_bins(cutoff_hz: float, n_fft: int, sample_rate_hz: float) -> int:
    """Number of low-frequency STFT rows kept under ``cutoff_hz``."""
    return int(np.floor(cutoff_hz * n_fft / sample_rate_hz))


def spectrograms(audio: MultiChannelAudio, cfg: FeatureConfig) -> list[Spectrogram]:
    return [dsp.stft(audio.channel(k), cfg.stft, audio.sample_rate_hz) for k in range(audio.n_channels)]


def detect_direction(audio: MultiChannelAudio, cfg: FeatureConfig = FeatureConfig()) -> int:
    """1-based index of the mic with the smallest alignment error.

    E_i is the mean squared difference between channel i and its circular
    predecessor, computed after a high-pass filter.
    """
    if audio.n_channels < 2:
        raise FeatureError("direction detection needs at least two channels")
    v = dsp.highpass(audio.samples, cfg.direction_hp_hz, audio.sample_rate_hz)
    errors = alignment_errors(v)
    return int(np.argmin(errors)) + 1


def alignment_errors(v: np.ndarray) -> np.ndarray:
    return np.mean((np.roll(v, 1, axis=1) - v) ** 2, axis=0)


def spectrogram_grid(spec: Spectrogram, rows: int, cols: int, cutoff_hz: float,
                     n_fft: int, sample_rate_hz: float) -> np.ndarray:
    """Sum STFT magnitudes over a rows x cols grid of the band below ``cutoff_hz``.

    Trailing rows and frames that do not fill a whole chunk are dropped.
    """
    m_spec = retained_bins(cutoff_hz, n_fft, sample_rate_hz)
    if m_spec < rows:
        raise FeatureError(f"only {m_spec} frequency rows below {cutoff_hz} Hz, need >= {rows}")
    n_s = spec.n_frames
    if n_s < cols:
        raise FeatureError(
            f"only {n_s} STFT frames, need >= {cols}; use audio at least "
            f"{(cols - 1) * spec.frame_hop} samples longer than one analysis window"
        )
    s_m, s_n = m_spec // rows, n_s // cols
    block = spec.magnitudes[: rows * s_m, : cols * s_n]
    return block.reshape(rows, s_m, cols, s_n).sum(axis=(1, 3))


def _grids(specs, rows, cols, cutoff_hz, cfg: FeatureConfig, fs) -> np.ndarray:
    return np.stack([spectrogram_grid(s, rows, cols, cutoff_hz, cfg.stft.n_fft, fs) for s in specs])


def f_sap(audio: MultiChannelAudio, cfg: FeatureConfig = FeatureConfig(), specs=None) -> np.ndarray:
    """Spectrogram array fingerprint: cross-channel spread of the spectrogram grid."""
    if audio.n_channels < 2:
        raise FeatureError("f_sap needs at least two channels")
    cfg.check_rate(audio.sample_rate_hz)
    specs = spectrograms(audio, cfg) if specs is None else specs
    grids = _grids(specs, cfg.grid_rows, cfg.grid_cols, cfg.f_sap_cutoff_hz, cfg, audio.sample_rate_hz)
    # sorting across channels fixes the summation order, making the result exactly permutation-invariant
    spread = np.std(np.sort(grids, axis=0), axis=0, ddof=1)
    profile = spread.mean(axis=1)
    smooth = dsp.moving_average(profile, cfg.smoothing_width)
    # normalising after the resample keeps the output's extremes at exactly 0 and 1
    out = dsp.resample_linear(smooth, cfg.n_sap)
    lo, hi = out.min(), out.max()
    if not hi - lo > 0:
        return np.zeros(cfg.n_sap)
    return (out - lo) / (hi - lo)


def cumulative_indices(strength: np.ndarray, thresholds) -> np.ndarray:
    """Index mu with Cum(mu) <= thr < Cum(mu + 1), Cum(i) being the share of the first i chunks.

    Cum(0) = 0, so a threshold below the first chunk's share maps to 0.
    """
    total = strength.sum()
    if not total > 0:
        raise FeatureError("channel frequency strength is all zero; cannot normalise")
    cum = np.concatenate([[0.0], np.cumsum(strength) / total])
    cum[-1] = 1.0
    return (np.searchsorted(cum, np.asarray(thresholds), side="right") - 1).astype(np.float64)


def f_sdp(audio: MultiChannelAudio, cfg: FeatureConfig = FeatureConfig(), specs=None) -> np.ndarray:
    """Spectrogram distribution fingerprint ``[mean strength, D_mean, D_std]``."""
    if audio.n_channels < 2:
        raise FeatureError("f_sdp needs at least two channels")
    cfg.check_rate(audio.sample_rate_hz)
    specs = spectrograms(audio, cfg) if specs is None else specs
    # one frequency row spanning the whole retained band
    grids = _grids(specs, 1, cfg.grid_cols, cfg.f_sdp_cutoff_hz, cfg, audio.sample_rate_hz)
    strength = grids[:, 0, :]
    mean_strength = dsp.resample_linear(strength.mean(axis=0), cfg.n_ch)
    mu = np.stack([cumulative_indices(ch, cfg.sdp_thresholds) for ch in strength])
    return np.concatenate([mean_strength, mu.mean(axis=0), mu.std(axis=0, ddof=1)])


def opposite_mic(mic: int, n_mics: int) -> int:
    """1-based mic across the array from ``mic``."""
    return 1 + ((mic - 1 + n_mics // 2) % n_mics)


def f_lpc(audio: MultiChannelAudio, cfg: FeatureConfig = FeatureConfig(), closest_mic: int = 1) -> np.ndarray:
    """LPCCs of the closest mic followed by those of the opposite mic."""
    n = audio.n_channels
    if n < 2:
        raise FeatureError("f_lpc needs at least two channels")
    if not 1 <= closest_mic <= n:
        raise FeatureError(f"closest_mic {closest_mic} outside 1..{n}")
    other = opposite_mic(closest_mic, n)
    return np.concatenate([
        dsp.lpcc(audio.channel(closest_mic - 1), cfg.lpcc_order),
        dsp.lpcc(audio.channel(other - 1), cfg.lpcc_order),
    ])


@dataclass
class FeatureVector:
    f_sap: np.ndarray
    f_sdp: np.ndarray
    f_lpc: np.ndarray
    closest_mic: int = 1

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.f_sap, self.f_sdp, self.f_lpc])

    def __len__(self):
        return len(self.f_sap) + len(self.f_sdp) + len(self.f_lpc)


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except (FeatureError, dsp.LpcError, ValueError) as exc:
        raise FeatureError(f"{name}: {exc}") from exc


def extract(audio: MultiChannelAudio, cfg: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """Run direction detection and all three feature blocks."""
    specs = _stage("stft", spectrograms, audio, cfg)
    mic = _stage("detect_direction", detect_direction, audio, cfg)
    sap = _stage("f_sap", f_sap, audio, cfg, specs)
    sdp = _stage("f_sdp", f_sdp, audio, cfg, specs)
    lpc = _stage("f_lpc", f_lpc, audio, cfg, mic)
    fv = FeatureVector(sap, sdp, lpc, mic)
    if not np.all(np.isfinite(fv.to_array())):
        raise FeatureError("extract: non-finite feature values")
    return fv


class ArrayFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping recordings to fixed-length feature rows.

    ``X`` is a sequence of :class:`MultiChannelAudio` (or paths to WAV files).
    """

    def __init__(self, f_sap_cutoff_hz=5000.0, f_sdp_cutoff_hz=1000.0, grid_rows=100,
                 grid_cols=20, n_sap=40, n_ch=20, sdp_thresholds=(0.1, 0.3, 0.5, 0.7, 0.9),
                 lpcc_order=15, window_len=1024, overlap=728, n_fft=4096, direction_hp_hz=100.0):
        self.f_sap_cutoff_hz = f_sap_cutoff_hz
        self.f_sdp_cutoff_hz = f_sdp_cutoff_hz
        self.grid_rows = grid_rows
        self.grid_cols = grid_cols
        self.n_sap = n_sap
        self.n_ch = n_ch
        self.sdp_thresholds = sdp_thresholds
        self.lpcc_order = lpcc_order
        self.window_len = window_len
        self.overlap = overlap
        self.n_fft = n_fft
        self.direction_hp_hz = direction_hp_hz

    @classmethod
    def from_config(cls, cfg: FeatureConfig) -> "ArrayFeatureExtractor":
        d = cfg.to_dict()
        stft = d.pop("stft")
        d.pop("smoothing_width")
        return cls(**d, **stft)

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(
            f_sap_cutoff_hz=self.f_sap_cutoff_hz,
            f_sdp_cutoff_hz=self.f_sdp_cutoff_hz,
            grid_rows=self.grid_rows,
            grid_cols=self.grid_cols,
            n_sap=self.n_sap,
            n_ch=self.n_ch,
            sdp_thresholds=tuple(self.sdp_thresholds),
            lpcc_order=self.lpcc_order,
            stft=StftConfig(self.window_len, self.overlap, self.n_fft),
            direction_hp_hz=self.direction_hp_hz,
        )

    def fit(self, X=None, y=None):
        cfg = self.feature_config()
        self.config_ = cfg
        self.config_hash_ = cfg.config_hash()
        self.n_features_out_ = cfg.n_features
        return self

    def transform(self, X):
        from .audio_io import load_wav

        cfg = getattr(self, "config_", None) or self.feature_config()
        rows = []
        for item in X:
            audio = item if isinstance(item, MultiChannelAudio) else load_wav(item)
            rows.append(extract(audio, cfg).to_array())
        return np.asarray(rows, dtype=np.float64).reshape(len(rows), cfg.n_features)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(self.feature_config().feature_names(), dtype=object)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags


def with_overrides(cfg: FeatureConfig, **overrides) -> FeatureConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides) if overrides else cfg
