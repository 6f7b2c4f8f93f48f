"""Experiment support: netpbm image I/O, seeded corruption, PSNR, synthetic instances.

Images are float64 tensors of shape (height, width, channels) with values
in [0, 255] and channels in {1, 3}. Binary PPM (P6, RGB) and PGM (P5,
grayscale) with maxval 255 are supported; header comments are accepted on
read and never written.

Observation masks are boolean tensors congruent with the image. On disk a
mask is a P5 PGM with 255 = observed and 0 = missing; a per-voxel mask of
a C-channel image is stored with the channel planes stacked vertically
(height C*H), while a plain H x W mask file is broadcast across channels
on read.
"""

from __future__ import annotations

import csv
import math
from typing import Sequence

import numpy as np

from .tensor_ops import FactorSet, reconstruct

PEAK = 255.0


def _read_header_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # Skip whitespace and '#' comments, then collect one token.
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ValueError("malformed netpbm header: missing token")
    return buf[start:pos], pos


def read_ppm(path) -> np.ndarray:
    """Read a binary P6/P5 file into an (H, W, C) float64 tensor, C in {1, 3}."""
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        magic, pos = _read_header_token(buf, 0)
        if magic not in (b"P6", b"P5"):
            raise ValueError(f"unsupported magic {magic!r}; expected P6 or P5")
        fields = []
        for _ in range(3):
            tok, pos = _read_header_token(buf, pos)
            if not tok.isdigit():
                raise ValueError(f"malformed netpbm header: non-numeric field {tok!r}")
            fields.append(int(tok))
        width, height, maxval = fields
        if width < 1 or height < 1:
            raise ValueError(f"bad image dimensions {width}x{height}")
        if maxval != 255:
            raise ValueError(f"unsupported maxval {maxval}; only 255 is handled")
        # Exactly one whitespace byte separates the header from the payload.
        if pos >= len(buf) or not buf[pos : pos + 1].isspace():
            raise ValueError("malformed netpbm header: missing payload separator")
        pos += 1
        channels = 3 if magic == b"P6" else 1
        need = width * height * channels
        payload = buf[pos : pos + need]
        if len(payload) < need:
            raise ValueError(
                f"truncated payload: expected {need} bytes, found {len(payload)}"
            )
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    data = np.frombuffer(payload, dtype=np.uint8, count=need)
    return data.reshape(height, width, channels).astype(np.float64)


def _quantize(img: np.ndarray) -> np.ndarray:
    # Round half up, then clamp into the byte range.
    return np.clip(np.floor(img + 0.5), 0.0, PEAK).astype(np.uint8)


def write_ppm(img: np.ndarray, path) -> None:
    """Write an image tensor as binary P6 (3 channels) or P5 (1 channel or 2-D)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected an (H, W, 1|3) image, got shape {img.shape}")
    h, w, c = img.shape
    magic = b"P6" if c == 3 else b"P5"
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(_quantize(img).tobytes())


def write_mask_pgm(mask: np.ndarray, path) -> None:
    """Write a boolean mask (H, W[, C]) as a P5 PGM, 255=observed, channels stacked."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 2:
        plane = mask
    elif mask.ndim == 3:
        h, w, c = mask.shape
        plane = mask.transpose(2, 0, 1).reshape(c * h, w)
    else:
        raise ValueError(f"expected an (H, W[, C]) mask, got shape {mask.shape}")
    write_ppm(np.where(plane, PEAK, 0.0), path)


def read_mask_pgm(path, shape: Sequence[int]) -> np.ndarray:
    """Read a mask PGM for an image of `shape` (H, W, C).

    Accepts an H x W file (applied to every channel) or a stacked
    (C*H) x W file (one plane per channel). Pixels must be exactly 0 or
    255.
    """
    h, w, c = (int(s) for s in shape)
    img = read_ppm(path)
    if img.shape[2] != 1:
        raise ValueError(f"{path}: mask must be grayscale (P5)")
    plane = img[:, :, 0]
    if not np.isin(plane, (0.0, PEAK)).all():
        raise ValueError(f"{path}: mask pixels must be 0 or 255")
    if plane.shape == (h, w):
        mask = np.repeat((plane == PEAK)[:, :, None], c, axis=2)
    elif plane.shape == (c * h, w):
        mask = (plane == PEAK).reshape(c, h, w).transpose(1, 2, 0)
    else:
        raise ValueError(
            f"{path}: mask of shape {plane.shape} fits neither ({h}, {w}) "
            f"nor ({c * h}, {w})"
        )
    return mask


def corrupt(t: np.ndarray, missing_rate: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Hide exactly round(missing_rate * numel) entries chosen by a seeded shuffle.

    Returns (tensor, mask); the tensor values are returned unchanged (the
    mask alone is authoritative) and the mask is True where observed.
    """
    t = np.asarray(t, dtype=np.float64)
    if not 0 <= missing_rate < 1:
        raise ValueError(f"missing_rate must be in [0, 1), got {missing_rate}")
    numel = t.size
    n_missing = int(round(missing_rate * numel))
    if n_missing >= numel:
        raise ValueError(
            f"missing_rate {missing_rate} leaves no observed entries for {numel} elements"
        )
    rng = np.random.default_rng(seed)
    missing = rng.permutation(numel)[:n_missing]
    mask = np.ones(numel, dtype=bool)
    mask[missing] = False
    return t.copy(), mask.reshape(t.shape)


def psnr(a: np.ndarray, b: np.ndarray, where: np.ndarray | None = None) -> float:
    """Peak signal-to-noise ratio in dB against a peak of 255.

    Both inputs are clamped to [0, 255] first; the MSE runs over all
    voxels, or over the True entries of `where` when given. Identical
    inputs give math.inf.
    """
    a = np.clip(np.asarray(a, dtype=np.float64), 0.0, PEAK)
    b = np.clip(np.asarray(b, dtype=np.float64), 0.0, PEAK)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    if where is not None:
        where = np.asarray(where, dtype=bool)
        if where.shape != a.shape:
            raise ValueError(f"selection shape {where.shape} does not match {a.shape}")
        d = d[where]
        if d.size == 0:
            raise ValueError("selection is empty; PSNR undefined")
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


def synth_poisson_lowrank(
    shape: Sequence[int], rank: int, scale: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded synthetic instance: a strictly positive low-rank ground truth
    and one Poisson draw per entry with that ground truth as the mean.

    Factor entries are drawn uniform on (0, scale], so the ground truth is
    strictly positive with entries on the order of scale**len(shape). The
    factor draw and the sampling use independent child seeds; the pair is
    reproduced exactly by the same (shape, rank, scale, seed).
    """
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    seq = np.random.SeedSequence(seed)
    rng_factors, rng_noise = (np.random.default_rng(s) for s in seq.spawn(2))
    factors = FactorSet(
        [scale * (1.0 - rng_factors.random((int(s), rank))) for s in shape]
    )
    ground_truth = reconstruct(factors)
    sample = rng_noise.poisson(ground_truth).astype(np.float64)
    return ground_truth, sample


def write_history_csv(history: Sequence[float], path) -> None:
    """Objective-per-sweep CSV with header ``sweep,objective``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sweep", "objective"])
        for i, obj in enumerate(history):
            writer.writerow([i, repr(float(obj))])


def read_history_csv(path) -> list[float]:
    """Parse a file written by :func:`write_history_csv` back into values."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["sweep", "objective"]:
        raise ValueError(f"{path}: missing 'sweep,objective' header")
    return [float(row[1]) for row in rows[1:]]
