"""Quadratic-variation smoothness prior on factor matrices.

The prior charges 0.5 * rho_n * sum of squared adjacent differences down
each column of each factor, weighted per mode by a nonnegative vector rho.
A zero rho entry (or a zero vector) switches the prior off for that mode,
which is also how the prior-free solver configuration is expressed.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def qv_value(factors: Sequence[np.ndarray], rho: Sequence[float]) -> float:
    """Total smoothness penalty over all modes; a length-1 mode contributes 0."""
    mats = [np.asarray(a, dtype=np.float64) for a in factors]
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (len(mats),):
        raise ValueError(
            f"rho has {rho.size} weights but there are {len(mats)} factor matrices"
        )
    if np.any(rho < 0):
        raise ValueError("rho weights must be nonnegative")
    total = 0.0
    for a, r in zip(mats, rho):
        if r == 0.0 or a.shape[0] < 2:
            continue
        d = np.diff(a, axis=0)
        total += 0.5 * r * float(np.sum(d * d))
    return total


def qv_grad(a: np.ndarray, rho_n: float) -> np.ndarray:
    """Gradient of the single-mode penalty with respect to the factor matrix `a`.

    Rows apply the weighted second-difference stencil: interior row j gets
    rho_n * (2a[j] - a[j-1] - a[j+1]), the first and last rows get the
    one-sided differences rho_n * (a[0] - a[1]) and rho_n * (a[-1] - a[-2]).
    A single-row factor has zero gradient; with two rows both rows are
    boundary rows. Linear in rho_n.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("qv_grad expects a factor matrix")
    s = np.zeros_like(a)
    if a.shape[0] < 2 or rho_n == 0.0:
        return s
    d = np.diff(a, axis=0)
    s[:-1] -= d
    s[1:] += d
    s *= rho_n
    return s
