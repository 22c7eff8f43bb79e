"""Synthetic multichannel scenes: live talkers, loudspeaker replays and modulated replays.

Sources are point emitters of harmonic, syllable-modulated signals. Each mic
receives the source delayed by its path length and shaped by the
frequency-dependent decay ``C * exp(-absorption_per_hz * f * d)``.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .audio_io import DatasetManifest, ManifestEntry, MultiChannelAudio, save_wav, write_manifest
from .geometry import ArrayGeometry, mic_distances

SAMPLE_RATE_HZ = 48000
INVERSE_CLAMP_DB = 20.0
SOURCE_KINDS = ("human", "device", "modulated")


@dataclass(frozen=True)
class DeviceFilter:
    """Analog Butterworth high-pass approximating a small loudspeaker's bass roll-off."""

    corner_hz: float
    order: int

    def response(self, freqs_hz) -> np.ndarray:
        f = np.asarray(freqs_hz, dtype=np.float64)
        b, a = sps.butter(self.order, 2.0 * np.pi * self.corner_hz, btype="highpass", analog=True)
        _, h = sps.freqs(b, a, worN=2.0 * np.pi * f)
        return h

    def magnitude(self, freqs_hz) -> np.ndarray:
        f = np.asarray(freqs_hz, dtype=np.float64)
        with np.errstate(divide="ignore"):
            ratio = np.where(f > 0, self.corner_hz / np.where(f > 0, f, 1.0), np.inf)
        return 1.0 / np.sqrt(1.0 + ratio ** (2 * self.order))

    def inverse_gain(self, freqs_hz, clamp_db: float = INVERSE_CLAMP_DB) -> np.ndarray:
        """Magnitude inverse of the response, limited to +/- ``clamp_db``."""
        lim = 10.0 ** (clamp_db / 20.0)
        mag = self.magnitude(freqs_hz)
        with np.errstate(divide="ignore"):
            inv = np.where(mag > 0, 1.0 / np.where(mag > 0, mag, 1.0), np.inf)
        return np.clip(inv, 1.0 / lim, lim)


DEVICE_PRESETS = {
    "dev_a": DeviceFilter(200.0, 2),
    "dev_b": DeviceFilter(300.0, 4),
    "dev_c": DeviceFilter(500.0, 4),
}


@dataclass(frozen=True)
class SourceProfile:
    fundamental_hz: float
    n_harmonics: int
    # (hz, linear gain) breakpoints, interpolated linearly and held flat past the ends
    envelope: tuple = ((0.0, 1.0), (24000.0, 1.0))
    device_filter: DeviceFilter | None = None

    def harmonic_freqs(self) -> np.ndarray:
        return self.fundamental_hz * np.arange(1, self.n_harmonics + 1)

    def envelope_gain(self, freqs_hz) -> np.ndarray:
        hz, gain = np.asarray(self.envelope, dtype=np.float64).T
        return np.interp(freqs_hz, hz, gain)


@dataclass(frozen=True)
class Scene:
    geometry: ArrayGeometry = ArrayGeometry()
    source_distance_m: float = 1.0
    source_kind: str = "human"
    device_id: str | None = None
    attenuation_c: float = 1.0
    absorption_per_hz: float = 1e-5
    speed_of_sound: float = 343.0
    snr_db: float | None = None

    def __post_init__(self):
        if self.source_kind not in SOURCE_KINDS:
            raise ValueError(f"source_kind must be one of {SOURCE_KINDS}")
        if self.source_distance_m <= self.geometry.radius_m:
            raise ValueError("source must lie outside the array (L > r)")
        if self.attenuation_c <= 0 or self.absorption_per_hz < 0:
            raise ValueError("need attenuation_c > 0 and absorption_per_hz >= 0")

    def mic_gains(self, freqs_hz) -> np.ndarray:
        """Per-mic propagation gain, shape (n_mics, n_freqs)."""
        d = mic_distances(self.geometry, self.source_distance_m)
        f = np.asarray(freqs_hz, dtype=np.float64)
        return self.attenuation_c * np.exp(-self.absorption_per_hz * np.outer(d, f))


def voice_profile(rng: np.random.Generator, fundamental_hz=None, formants=None,
                  device_filter: DeviceFilter | None = None, top_hz: float = 5000.0) -> SourceProfile:
    """Random voiced-speech-like profile: glottal tilt plus two formant bumps."""
    f0 = float(fundamental_hz if fundamental_hz is not None else rng.uniform(90.0, 240.0))
    if formants is None:
        formants = (rng.uniform(350.0, 900.0), rng.uniform(1000.0, 2500.0))
    f1, f2 = formants
    hz = np.linspace(0.0, top_hz, 101)
    tilt_db = -12.0 * np.log2(np.maximum(hz, 150.0) / 150.0)
    bumps_db = 12.0 * np.exp(-0.5 * ((hz - f1) / 120.0) ** 2) + 9.0 * np.exp(-0.5 * ((hz - f2) / 200.0) ** 2)
    gain = 10.0 ** ((tilt_db + bumps_db) / 20.0)
    n_harm = max(1, int(top_hz // f0))
    return SourceProfile(f0, n_harm, tuple(zip(hz.tolist(), gain.tolist())), device_filter)


def _source_signal(profile: SourceProfile, n: int, fs: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / fs
    freqs = profile.harmonic_freqs()
    keep = freqs < fs / 2
    freqs = freqs[keep]
    gains = profile.envelope_gain(freqs)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=len(profile.harmonic_freqs()))[keep]
    x = np.zeros(n)
    for f, g, ph in zip(freqs, gains, phases):
        x += g * np.sin(2.0 * np.pi * f * t + ph)
    rate = rng.uniform(2.0, 8.0)
    env_phase = rng.uniform(0.0, 2.0 * np.pi)
    syllables = 0.55 + 0.45 * np.sin(2.0 * np.pi * rate * t + env_phase)
    return x * syllables


def _render(scene: Scene, profile: SourceProfile, duration_s: float, seed: int,
            modulated: bool, peak_normalize: bool = True) -> MultiChannelAudio:
    if duration_s < 0.5:
        raise ValueError("duration must be at least 0.5 s")
    if (profile.device_filter is None) != (scene.source_kind == "human"):
        raise ValueError("a device filter is required exactly when the source is not human")
    fs = SAMPLE_RATE_HZ
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * fs))
    d = mic_distances(scene.geometry, scene.source_distance_m)
    pad = int(np.ceil(d.max() / scene.speed_of_sound * fs)) + 64
    total = n + pad

    x = _source_signal(profile, total, fs, rng)
    freqs = np.fft.rfftfreq(total, 1.0 / fs)
    X = np.fft.rfft(x)
    if profile.device_filter is not None:
        if modulated:
            X = X * profile.device_filter.inverse_gain(freqs)
        X = X * profile.device_filter.response(freqs)

    delays = d / scene.speed_of_sound
    Y = X[None, :] * scene.mic_gains(freqs) * np.exp(-2j * np.pi * np.outer(delays, freqs))
    # delayed samples that wrap around land in the discarded lead-in
    y = np.fft.irfft(Y, n=total, axis=1)[:, pad:].T

    if scene.snr_db is not None:
        noise_std = np.sqrt(np.mean(y ** 2) / 10.0 ** (scene.snr_db / 10.0))
        y = y + noise_std * rng.standard_normal(y.shape)

    if peak_normalize:
        peak = np.max(np.abs(y))
        if peak > 0:
            y = y * (0.5 / peak)
        assert np.max(np.abs(y)) <= 1.0
    return MultiChannelAudio(y, fs)


def synthesize_scene(scene: Scene, profile: SourceProfile, duration_s: float = 1.0,
                     seed: int = 0, peak_normalize: bool = True) -> MultiChannelAudio:
    """Render the scene to an (M, N) recording at 48 kHz, peak-normalised to 0.5.

    Modulated sources get the same treatment as in :func:`synthesize_modulated`.
    """
    return _render(scene, profile, duration_s, seed,
                   modulated=scene.source_kind == "modulated", peak_normalize=peak_normalize)


def synthesize_modulated(scene: Scene, profile: SourceProfile, duration_s: float = 1.0,
                         seed: int = 0, peak_normalize: bool = True) -> MultiChannelAudio:
    """Replay pre-filtered by the clamped inverse of the device response."""
    if scene.source_kind != "modulated":
        raise ValueError("synthesize_modulated needs a scene with source_kind='modulated'")
    return _render(scene, profile, duration_s, seed, modulated=True, peak_normalize=peak_normalize)


def log_envelope(audio: MultiChannelAudio, channel: int = 0, band_hz=(50.0, 5000.0),
                 n_bands: int = 60) -> np.ndarray:
    """Mean-removed log spectral envelope of one channel on log-spaced bands."""
    x = audio.channel(channel)
    f, pxx = sps.welch(x, fs=audio.sample_rate_hz, nperseg=4096)
    edges = np.geomspace(band_hz[0], band_hz[1], n_bands + 1)
    idx = np.digitize(f, edges) - 1
    power = np.array([pxx[idx == b].mean() if np.any(idx == b) else 0.0 for b in range(n_bands)])
    env = 10.0 * np.log10(power + 1e-20)
    return env - env.mean()


def envelope_distance(a: MultiChannelAudio, b: MultiChannelAudio, channel: int = 0) -> float:
    """L2 distance (dB) between single-channel log envelopes."""
    return float(np.linalg.norm(log_envelope(a, channel) - log_envelope(b, channel)))


@dataclass
class CorpusConfig:
    counts: dict = field(default_factory=lambda: {"authentic": 100, "spoof": 100})
    distances_m: list = field(default_factory=lambda: [0.6, 1.2, 1.8, 2.4])
    device_presets: list = field(default_factory=lambda: list(DEVICE_PRESETS))
    snr_db: float | None = 30.0
    seed: int = 0
    duration_s: float = 1.0
    n_mics: int = 6
    radius_m: float = 0.05
    absorption_per_hz: float = 1e-5
    n_users: int = 10

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown corpus config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        bad = set(self.counts) - {"authentic", "spoof", "modulated"}
        if bad:
            raise ValueError(f"unknown count classes: {sorted(bad)}")
        if any(int(v) < 0 for v in self.counts.values()):
            raise ValueError("counts must be non-negative")
        if not self.distances_m:
            raise ValueError("distances_m must be non-empty")
        if (self.counts.get("spoof", 0) or self.counts.get("modulated", 0)) and not self.device_presets:
            raise ValueError("spoof renders need at least one device preset")
        for p in self.device_presets:
            if p not in DEVICE_PRESETS:
                raise ValueError(f"unknown device preset {p!r}; known: {sorted(DEVICE_PRESETS)}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class RenderJob:
    """Everything needed to render one corpus file."""

    filename: str
    label: str
    kind: str
    distance_m: float
    device_id: str | None
    user_id: str
    profile_seed: int
    render_seed: int
    rotation_rad: float


def _user_voices(n_users: int, rng: np.random.Generator) -> list[tuple[float, tuple[float, float]]]:
    return [
        (rng.uniform(90.0, 240.0), (rng.uniform(350.0, 900.0), rng.uniform(1000.0, 2500.0)))
        for _ in range(n_users)
    ]


def plan_corpus(cfg: CorpusConfig) -> list[RenderJob]:
    """Deterministic render plan, stratified over distance and device preset."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n_d = len(cfg.distances_m)
    jobs = []
    for kind in ("authentic", "spoof", "modulated"):
        count = int(cfg.counts.get(kind, 0))
        for i in range(count):
            distance = float(cfg.distances_m[i % n_d])
            device = None
            if kind != "authentic":
                device = cfg.device_presets[(i // n_d) % len(cfg.device_presets)]
            label = "authentic" if kind == "authentic" else "spoof"
            jobs.append(RenderJob(
                filename=f"{kind}_{i:05d}.wav",
                label=label,
                kind="human" if kind == "authentic" else ("device" if kind == "spoof" else "modulated"),
                distance_m=distance,
                device_id=device,
                user_id=f"u{i % cfg.n_users:02d}",
                profile_seed=int(rng.integers(2**31)),
                render_seed=int(rng.integers(2**31)),
                rotation_rad=float(rng.uniform(0.0, 2.0 * np.pi)),
            ))
    return jobs


def render_job(cfg: CorpusConfig, job: RenderJob) -> MultiChannelAudio:
    users = _user_voices(cfg.n_users, np.random.default_rng([cfg.seed, 1]))
    f0, formants = users[int(job.user_id[1:])]
    prng = np.random.default_rng(job.profile_seed)
    # per-utterance variation around the user's voice
    f0 = f0 * prng.uniform(0.9, 1.1)
    formants = tuple(f * prng.uniform(0.92, 1.08) for f in formants)
    device = DEVICE_PRESETS[job.device_id] if job.device_id else None
    profile = voice_profile(prng, f0, formants, device_filter=device)
    scene = Scene(
        geometry=ArrayGeometry(cfg.n_mics, cfg.radius_m, job.rotation_rad),
        source_distance_m=job.distance_m,
        source_kind=job.kind,
        device_id=job.device_id,
        absorption_per_hz=cfg.absorption_per_hz,
        snr_db=cfg.snr_db,
    )
    return synthesize_scene(scene, profile, cfg.duration_s, job.render_seed)


def generate_corpus(cfg: CorpusConfig, out_dir, seed: int | None = None) -> DatasetManifest:
    """Render every planned file into ``out_dir`` and write ``manifest.csv`` there."""
    if seed is not None:
        cfg = CorpusConfig(**{**cfg.to_dict(), "seed": seed})
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"output directory not writable: {out_dir}")
    entries = []
    for job in plan_corpus(cfg):
        audio = render_job(cfg, job)
        path = out_dir / job.filename
        save_wav(audio, path, bit_depth="16")
        entries.append(ManifestEntry(str(path), job.label, job.distance_m, job.device_id, job.user_id))
    manifest = DatasetManifest(entries)
    write_manifest(manifest, out_dir / "manifest.csv", relative_to=out_dir)
    return manifest


def config_digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
