"""Dense N-way tensor algebra for CP-format models.

Tensors and matrices are plain float64 ``numpy.ndarray`` values; modes are
0-based. The mode-n unfolding sends element (i_0, ..., i_{N-1}) to row i_n
and to the column obtained by linearizing the remaining indices with the
lowest surviving mode varying fastest. This is the layout under which

    unfold(reconstruct(factors), n) == factors[n] @ kr_except(factors, n).T

holds exactly, with ``kr_except`` chaining Khatri-Rao products over the
other factors in descending mode order. That identity, not the memory
order, is the contract; every routine here is written against it.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np


class FactorSet:
    """CP factor matrices sharing a common column count (the rank).

    Acts as a read-only sequence of 2-D float64 arrays. The modeled tensor
    has shape ``(factors[0].shape[0], ..., factors[-1].shape[0])``.
    """

    def __init__(self, factors: Iterable[np.ndarray]):
        mats = [np.ascontiguousarray(a, dtype=np.float64) for a in factors]
        if not mats:
            raise ValueError("FactorSet needs at least one factor matrix")
        for a in mats:
            if a.ndim != 2:
                raise ValueError(f"factor matrices must be 2-D, got shape {a.shape}")
            if a.shape[0] < 1 or a.shape[1] < 1:
                raise ValueError(f"factor extents must be positive, got shape {a.shape}")
        rank = mats[0].shape[1]
        if any(a.shape[1] != rank for a in mats):
            raise ValueError(
                "factor matrices must share a column count, got "
                + str([a.shape for a in mats])
            )
        self.factors = mats

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self.factors)

    def copy(self) -> "FactorSet":
        return FactorSet([a.copy() for a in self.factors])

    def min(self) -> float:
        return min(float(a.min()) for a in self.factors)

    def __len__(self) -> int:
        return len(self.factors)

    def __getitem__(self, n: int) -> np.ndarray:
        return self.factors[n]

    def __iter__(self):
        return iter(self.factors)

    def __repr__(self) -> str:
        return f"FactorSet(shape={self.shape}, rank={self.rank})"


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-`mode` unfolding of a tensor into an I_mode x (prod of rest) matrix."""
    t = np.asarray(t)
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for an order-{t.ndim} tensor")
    return np.reshape(np.moveaxis(t, mode, 0), (t.shape[mode], -1), order="F")


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild the tensor of `shape` from its mode-`mode` unfolding."""
    m = np.asarray(m)
    shape = tuple(int(s) for s in shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for shape {shape}")
    rest = shape[:mode] + shape[mode + 1 :]
    if m.ndim != 2 or m.shape != (shape[mode], math.prod(rest)):
        raise ValueError(
            f"matrix of shape {m.shape} cannot fold into {shape} at mode {mode}"
        )
    return np.moveaxis(m.reshape((shape[mode],) + rest, order="F"), 0, mode)


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product in the usual block layout: block (i, j) is a[i, j] * b."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("kronecker expects two matrices")
    return np.kron(a, b)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product: column r of the result is kron(a[:, r], b[:, r])."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"khatri_rao needs equal column counts, got {a.shape[1]} and {b.shape[1]}"
        )
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def kr_except(factors: Sequence[np.ndarray], skip: int) -> np.ndarray:
    """Chained Khatri-Rao of all factors but `skip`, in descending mode order.

    For factors A(0)..A(N-1) this is A(N-1) ⊙ ... ⊙ A(skip+1) ⊙ A(skip-1)
    ⊙ ... ⊙ A(0), the matrix whose transpose right-multiplies A(skip) in the
    mode-`skip` unfolding of the reconstructed tensor.
    """
    mats = list(factors)
    if len(mats) < 2:
        raise ValueError("kr_except needs at least two factor matrices")
    if not 0 <= skip < len(mats):
        raise ValueError(f"skip index {skip} out of range for {len(mats)} factors")
    out = None
    for n in range(len(mats) - 1, -1, -1):
        if n == skip:
            continue
        out = np.asarray(mats[n]) if out is None else khatri_rao(out, mats[n])
    return out


def reconstruct(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Dense tensor of the CP model: sum over r of the outer products of the factor columns.

    Evaluated as fold(A(0) @ kr_except(factors, 0).T, 0, shape); the result
    is independent of which mode anchors the evaluation.
    """
    mats = [np.asarray(a) for a in factors]
    if len(mats) == 1:
        return mats[0].sum(axis=1)
    shape = tuple(a.shape[0] for a in mats)
    return fold(mats[0] @ kr_except(mats, 0).T, 0, shape)


def mttkrp(y: np.ndarray, factors: Sequence[np.ndarray], mode: int) -> np.ndarray:
    """Matricized tensor times Khatri-Rao product: unfold(y, mode) @ kr_except(factors, mode)."""
    y = np.asarray(y)
    mats = [np.asarray(a) for a in factors]
    if y.shape != tuple(a.shape[0] for a in mats):
        raise ValueError(
            f"tensor shape {y.shape} does not match factor row extents "
            f"{tuple(a.shape[0] for a in mats)}"
        )
    return unfold(y, mode) @ kr_except(mats, mode)
