"""Signal primitives: STFT, high-pass filtering, LPC/LPCC, smoothing, resampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 1024
    overlap: int = 728
    n_fft: int = 4096

    def __post_init__(self):
        if not 0 <= self.overlap < self.window_len <= self.n_fft:
            raise ValueError(
                "need 0 <= overlap < window_len <= n_fft, got "
                f"overlap={self.overlap}, window_len={self.window_len}, n_fft={self.n_fft}"
            )

    @property
    def hop(self) -> int:
        return self.window_len - self.overlap

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window_len:
            return 0
        return (n_samples - self.window_len) // self.hop + 1


@dataclass
class Spectrogram:
    """Linear STFT magnitudes, shape (n_fft // 2 + 1, n_frames)."""

    magnitudes: np.ndarray
    bin_hz: float
    frame_hop: int

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[1]


def hann(n: int) -> np.ndarray:
    """Symmetric Hann window, w[k] = 0.5 - 0.5 cos(2 pi k / (n - 1))."""
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / (n - 1))


def stft(x, cfg: StftConfig = StftConfig(), sample_rate_hz: float = 48000.0) -> Spectrogram:
    """Magnitude STFT with a symmetric Hann window; partial trailing frames are dropped."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("stft expects a 1-D signal")
    n_frames = cfg.n_frames(len(x))
    if n_frames < 1:
        raise ValueError(f"signal of {len(x)} samples is shorter than one window ({cfg.window_len})")
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len)[:: cfg.hop][:n_frames]
    spec = np.abs(np.fft.rfft(frames * hann(cfg.window_len), n=cfg.n_fft, axis=1)).T
    return Spectrogram(spec, sample_rate_hz / cfg.n_fft, cfg.hop)


def highpass(x, cutoff_hz: float, sample_rate_hz: float, order: int = 4) -> np.ndarray:
    """Causal Butterworth high-pass (cascaded biquads, bilinear transform)."""
    if not 0 < cutoff_hz < sample_rate_hz / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz outside (0, {sample_rate_hz / 2}) Hz")
    sos = sps.butter(order, cutoff_hz, btype="highpass", fs=sample_rate_hz, output="sos")
    return sps.sosfilt(sos, np.asarray(x, dtype=np.float64), axis=0)


class LpcError(ValueError):
    pass


def autocorrelation(x, max_lag: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    X = np.fft.rfft(x, nfft)
    r = np.fft.irfft(X * np.conj(X), nfft)[: max_lag + 1]
    return r


def levinson_durbin(r, order: int) -> tuple[np.ndarray, float]:
    """Solve the Toeplitz normal equations for the prediction polynomial.

    Returns ``(a, err)`` with a[0] = 1 and the final prediction error power.
    """
    r = np.asarray(r, dtype=np.float64)
    if r[0] <= 0:
        raise LpcError("zero autocorrelation; signal is silent")
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1 : 0 : -1])
        k = -acc / err
        a[1:i] = a[1:i] + k * a[i - 1 : 0 : -1]
        a[i] = k
        err *= 1.0 - k * k
        if err <= r[0] * 1e-14:
            raise LpcError(f"singular recursion at order {i} (prediction error vanished)")
    return a, err


def lpc(x, order: int) -> np.ndarray:
    """Autocorrelation-method LPC, ``a[0..order]`` with a[0] = 1.

    The predictor is x[n] ~ -sum_{k>=1} a[k] x[n-k].
    """
    x = np.asarray(x, dtype=np.float64)
    if order < 1 or len(x) <= order:
        raise LpcError(f"need 1 <= order < len(signal), got order={order}, len={len(x)}")
    r = autocorrelation(x, order)
    # FFT round-off leaves tiny nonzero lags for an all-zero input
    if not np.any(x):
        raise LpcError("zero autocorrelation; signal is silent")
    a, _ = levinson_durbin(r, order)
    return a


def lpc_to_lpcc(a) -> np.ndarray:
    """Cepstral recursion on LPC coefficients, with c[0] = ln(p)."""
    a = np.asarray(a, dtype=np.float64)
    p = len(a) - 1
    c = np.zeros(p + 1)
    c[0] = np.log(p)
    for i in range(1, p + 1):
        k = np.arange(1, i)
        c[i] = -a[i] - np.sum((1.0 - k / i) * a[k] * c[i - k])
    return c


def lpcc(x, order: int) -> np.ndarray:
    return lpc_to_lpcc(lpc(x, order))


def moving_average(v, width: int) -> np.ndarray:
    """Centered moving average; edges average over the neighbours that exist."""
    v = np.asarray(v, dtype=np.float64)
    if width < 1 or width % 2 == 0:
        raise ValueError(f"width must be a positive odd integer, got {width}")
    if width > len(v):
        raise ValueError(f"width {width} exceeds vector length {len(v)}")
    kernel = np.ones(width)
    sums = np.convolve(v, kernel, mode="same")
    counts = np.convolve(np.ones(len(v)), kernel, mode="same")
    return sums / counts


def resample_linear(v, out_len: int) -> np.ndarray:
    """Linear interpolation onto ``out_len`` evenly spaced points; endpoints kept exactly."""
    v = np.asarray(v, dtype=np.float64)
    if len(v) < 2 or out_len < 2:
        raise ValueError(f"need len(v) >= 2 and out_len >= 2, got {len(v)} and {out_len}")
    if out_len == len(v):
        return v.copy()
    pos = np.arange(out_len) * ((len(v) - 1) / (out_len - 1))
    out = np.interp(pos, np.arange(len(v)), v)
    out[-1] = v[-1]
    return out
