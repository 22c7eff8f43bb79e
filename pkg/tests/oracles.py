"""Straight-line reference implementations used as independent test oracles.

These deliberately avoid the package's vectorised code paths.
"""

import math

import numpy as np


def dft_magnitude(frame, n_fft):
    """Direct O(n^2) DFT magnitude of a zero-padded frame, bins 0..n_fft/2."""
    x = np.zeros(n_fft)
    x[: len(frame)] = frame
    n = np.arange(n_fft)
    out = np.empty(n_fft // 2 + 1)
    for k in range(n_fft // 2 + 1):
        out[k] = abs(np.sum(x * np.exp(-2j * math.pi * k * n / n_fft)))
    return out


def lpc_normal_equations(x, p):
    """LPC by solving the autocorrelation normal equations with a dense solver."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    r = np.array([np.dot(x[: n - k], x[k:]) for k in range(p + 1)])
    R = np.array([[r[abs(i - j)] for j in range(p)] for i in range(p)])
    coef = np.linalg.solve(R, -r[1:])
    return np.concatenate([[1.0], coef])


def lpcc_direct(a):
    """Cepstral recursion written out with plain Python loops."""
    a = [float(v) for v in a]
    p = len(a) - 1
    c = [0.0] * (p + 1)
    c[0] = math.log(p)
    for i in range(1, p + 1):
        acc = 0.0
        for k in range(1, i):
            acc += (1.0 - k / i) * a[k] * c[i - k]
        c[i] = -a[i] - acc
    return c


def eer_bruteforce(auth, spoof):
    """Convex-hull EER by enumerating every pair of operating points.

    The hull EER is the smallest value at which any segment between two
    operating points (or a single point) meets the far == frr diagonal.
    """
    auth = list(auth)
    spoof = list(spoof)
    thresholds = sorted(set(auth) | set(spoof)) + [float("inf")]
    points = [(0.0, 1.0), (1.0, 0.0)]
    for t in thresholds:
        far = sum(1 for s in spoof if s >= t) / len(spoof)
        frr = sum(1 for s in auth if s < t) / len(auth)
        points.append((far, frr))
    best = 1.0
    for i, (x1, y1) in enumerate(points):
        if x1 == y1:
            best = min(best, x1)
        for x2, y2 in points[i + 1:]:
            d1, d2 = x1 - y1, x2 - y2
            if (d1 < 0 < d2) or (d2 < 0 < d1):
                lam = d1 / (d1 - d2)
                best = min(best, x1 + lam * (x2 - x1))
    return best


def mlp_forward(weights, biases, mean, std, x):
    """Affine chain with ReLU hiddens and a logistic output, one row at a time."""
    h = [(xi - m) / s for xi, m, s in zip(x, mean, std)]
    for li, (W, b) in enumerate(zip(weights, biases)):
        out = []
        for j in range(len(b)):
            acc = b[j]
            for i in range(len(h)):
                acc += h[i] * W[i][j]
            out.append(acc)
        if li < len(weights) - 1:
            out = [max(v, 0.0) for v in out]
        h = out
    return 1.0 / (1.0 + math.exp(-h[0]))


def sample_std(values):
    n = len(values)
    m = sum(values) / n
    return math.sqrt(sum((v - m) ** 2 for v in values) / (n - 1))


def eq6_distances(r, n_mics, L, theta):
    return [
        r * math.sqrt(1 + (L / r) ** 2 - 2 * (L / r) * math.cos(theta + 2 * math.pi * k / n_mics))
        for k in range(n_mics)
    ]
