"""Multichannel PCM WAV I/O and dataset manifests."""

from __future__ import annotations

import csv
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

LABELS = ("authentic", "spoof")
MANIFEST_HEADER = ["path", "label", "distance_m", "device_id", "user_id"]
MAX_CHANNELS = 16

_INT_SCALE = {
    np.dtype("int16"): 32768.0,
    np.dtype("int32"): 2147483648.0,
}


class AudioFormatError(ValueError):
    """Raised for unreadable, unsupported or invalid audio."""


class ManifestError(ValueError):
    """Raised for a malformed manifest row."""


@dataclass
class MultiChannelAudio:
    """An (M, N) sample matrix: rows are time, columns are channels."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise AudioFormatError(f"expected a non-empty (M, N) matrix, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise AudioFormatError("samples contain non-finite values")
        if int(self.sample_rate_hz) <= 0:
            raise AudioFormatError(f"sample rate must be positive, got {self.sample_rate_hz}")
        self.samples = samples
        self.sample_rate_hz = int(self.sample_rate_hz)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def channel(self, k: int) -> np.ndarray:
        """Channel ``k`` (0-based) as a 1-D view."""
        return self.samples[:, k]


def load_wav(path) -> MultiChannelAudio:
    """Read a PCM WAV file (int16, int32 or float32) into a MultiChannelAudio.

    Integer PCM is divided by the magnitude of the type's most negative value,
    so the full negative range maps to exactly -1.0.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises ValueError / struct.error for bad headers
        raise AudioFormatError(f"{path}: unreadable WAV ({exc})") from exc

    if data.dtype in _INT_SCALE:
        samples = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"{path}: unsupported sample encoding {data.dtype}")

    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] == 0:
        raise AudioFormatError(f"{path}: zero-length stream")
    if samples.shape[1] > MAX_CHANNELS:
        raise AudioFormatError(f"{path}: {samples.shape[1]} channels exceeds {MAX_CHANNELS}")
    return MultiChannelAudio(samples, rate)


def save_wav(audio: MultiChannelAudio, path, bit_depth="16") -> None:
    """Write ``audio`` as 16-bit integer or 32-bit float PCM.

    Samples outside [-1, 1] are rejected, never clipped.
    """
    bit_depth = str(bit_depth)
    x = audio.samples
    if np.any(np.abs(x) > 1.0):
        raise AudioFormatError(
            f"samples outside [-1, 1] (peak {np.max(np.abs(x)):.4g}); refusing to clip"
        )
    if audio.n_channels > MAX_CHANNELS:
        raise AudioFormatError(f"{audio.n_channels} channels exceeds {MAX_CHANNELS}")
    if bit_depth == "16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    elif bit_depth in ("32f", "32"):
        data = x.astype(np.float32)
    else:
        raise ValueError(f"bit_depth must be '16' or '32f', got {bit_depth!r}")
    wavfile.write(Path(path), audio.sample_rate_hz, data)


@dataclass
class ManifestEntry:
    path: str
    label: str
    distance_m: float | None = None
    device_id: str | None = None
    user_id: str | None = None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def counts(self) -> dict[str, int]:
        c = Counter(e.label for e in self.entries)
        return {label: c.get(label, 0) for label in LABELS}


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Parse a manifest CSV. Relative audio paths resolve against the manifest's directory."""
    path = Path(path)
    base = path.parent
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise ManifestError(f"{path}:1: expected header {','.join(MANIFEST_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise ManifestError(
                    f"{path}:{lineno}: expected {len(MANIFEST_HEADER)} columns, got {len(row)}"
                )
            p, label, dist, device, user = row
            if label not in LABELS:
                raise ManifestError(f"{path}:{lineno}: unknown label {label!r}")
            try:
                distance = float(dist) if dist else None
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: bad distance_m {dist!r}") from None
            resolved = p if os.path.isabs(p) else str(base / p)
            if check_files and not os.access(resolved, os.R_OK):
                raise ManifestError(f"{path}:{lineno}: audio file not readable: {p}")
            entries.append(ManifestEntry(resolved, label, distance, device or None, user or None))
    return DatasetManifest(entries)


def write_manifest(manifest: DatasetManifest, path, relative_to=None) -> None:
    """Write a manifest CSV with LF line endings.

    Paths are written relative to ``relative_to`` when given.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            p = os.path.relpath(e.path, relative_to) if relative_to is not None else e.path
            writer.writerow([
                p,
                e.label,
                "" if e.distance_m is None else repr(float(e.distance_m)),
                e.device_id or "",
                e.user_id or "",
            ])
