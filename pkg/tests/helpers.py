"""Shared test oracles, independent of the library's evaluation paths."""

import numpy as np


def cpd_brute(factors) -> np.ndarray:
    """Elementwise sum-of-rank-one evaluation by explicit loops."""
    mats = [np.asarray(a) for a in factors]
    shape = tuple(a.shape[0] for a in mats)
    rank = mats[0].shape[1]
    out = np.zeros(shape)
    for idx in np.ndindex(*shape):
        acc = 0.0
        for r in range(rank):
            term = 1.0
            for n, a in enumerate(mats):
                term *= a[idx[n], r]
            acc += term
        out[idx] = acc
    return out


def masked_loss_brute(elem, x, t, mask) -> float:
    """Loss as an explicit loop over the observed index set."""
    total = 0.0
    for idx in np.ndindex(*np.asarray(x).shape):
        if mask[idx]:
            total += elem(float(x[idx]), float(t[idx]))
    return total


def central_diff(f, x: float, h: float = 1e-6) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def rel_err(got, want) -> float:
    got = np.asarray(got, dtype=float)
    want = np.asarray(want, dtype=float)
    return float(np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-300))


def make_test_image(h: int, w: int, seed: int = 7) -> np.ndarray:
    """Photo-like color field: smooth bumps over a gradient, photon-noise
    sampled, quantized to integers in [0, 255]."""
    rng = np.random.default_rng(seed)
    yy = np.linspace(0.0, 1.0, h)[:, None]
    xx = np.linspace(0.0, 1.0, w)[None, :]
    lum = 0.35 + 0.3 * yy + 0.2 * xx
    chans = []
    for _ in range(3):
        field = lum.copy()
        for _ in range(5):
            cy, cx = rng.uniform(0.1, 0.9, 2)
            sy, sx = rng.uniform(0.08, 0.35, 2)
            amp = rng.uniform(-0.5, 0.9)
            field = field + amp * np.exp(-((yy - cy) / sy) ** 2) * np.exp(
                -((xx - cx) / sx) ** 2
            )
        chans.append(field)
    img = np.stack(chans, axis=2)
    img -= img.min()
    img /= img.max()
    photons = np.random.default_rng(seed + 1).poisson(5.0 + 235.0 * img)
    return np.clip(photons, 0, 255).astype(np.float64)
