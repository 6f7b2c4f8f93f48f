"""Per-element negative log-likelihood losses over observed entries.

A loss scores a model tensor ``x`` against data ``t`` on the entries where
a boolean observation mask is True, and exposes the matching elementwise
derivative with respect to ``x``. Masks are plain boolean arrays congruent
with the data.

Two likelihoods are provided:

* ``gaussian`` — 0.5 * (x - t)**2 per entry, gradient (x - t). Constant
  factors of the underlying normal density only rescale the objective and
  are dropped.
* ``poisson``  — x - t * log(x) per entry, gradient (x - t) / x, for
  nonnegative count-like data. The additive log-factorial term of the
  Poisson mass function does not depend on x and is dropped. Model values
  must be strictly positive wherever observed; violations raise rather
  than clamp, keeping the caller responsible for staying in-domain.
"""

from __future__ import annotations

import numpy as np


def _observed(x, t, mask):
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if x.shape != t.shape or x.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: model {x.shape}, data {t.shape}, mask {mask.shape}"
        )
    return x[mask], t[mask]


class GaussianLoss:
    """Squared-error likelihood for real-valued data."""

    name = "gaussian"

    def value(self, x, t, mask) -> float:
        xo, to = _observed(x, t, mask)
        d = xo - to
        return 0.5 * float(d @ d)

    def elem_grad(self, x, t):
        return np.asarray(x, dtype=np.float64) - t


class PoissonLoss:
    """Count likelihood for nonnegative integer-like data."""

    name = "poisson"

    def value(self, x, t, mask) -> float:
        xo, to = _observed(x, t, mask)
        if xo.size and not np.all(xo > 0):
            raise ValueError(
                "poisson loss needs strictly positive model values at observed entries"
            )
        return float(np.sum(xo - to * np.log(xo)))

    def elem_grad(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        if not np.all(x > 0):
            raise ValueError("poisson gradient needs strictly positive model values")
        return (x - t) / x


LOSSES = {
    "gaussian": GaussianLoss(),
    "poisson": PoissonLoss(),
}


def get_loss(loss):
    """Resolve a loss name or pass through a loss instance."""
    if isinstance(loss, (GaussianLoss, PoissonLoss)):
        return loss
    try:
        return LOSSES[loss]
    except KeyError:
        raise ValueError(
            f"unknown loss {loss!r}; expected one of {sorted(LOSSES)}"
        ) from None


def build_y(loss, x, t, mask) -> np.ndarray:
    """Masked elementwise gradient tensor: d(loss)/dx where observed, exactly 0 elsewhere."""
    loss = get_loss(loss)
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if x.shape != t.shape or x.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: model {x.shape}, data {t.shape}, mask {mask.shape}"
        )
    y = np.zeros(x.shape, dtype=np.float64)
    if mask.any():
        y[mask] = loss.elem_grad(x[mask], t[mask])
    return y
