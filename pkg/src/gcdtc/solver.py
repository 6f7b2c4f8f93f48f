"""Block coordinate descent for masked CP fitting, plus completion.

One sweep visits the modes in order. For mode n it forms the partial
Khatri-Rao product B of the other factors, evaluates the model in mode-n
unfolded layout as A @ B.T shifted elementwise by epsilon, builds the
masked gradient tensor of the element loss, and takes a single gradient
step on A combining the MTTKRP term with the smoothness gradient. With
``nonnegative`` the step is projected onto the nonnegative orthant by
elementwise clamping at zero.

The epsilon shift exists to keep every model value the Poisson loss sees
at or above epsilon; it is applied to the reconstruction, where it bounds
the model away from zero, and is included consistently in the objective
and in the final completion values.

Sweeping stops when the relative objective change drops below ``tol``,
when ``max_sweeps`` is reached, or when the fitted reconstruction is
identically zero ("collapsed" — the failure mode of an oversized step
size, which clamping then locks in). The completed tensor copies the data
at observed entries and the model everywhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .losses import build_y, get_loss
from .smoothness import qv_grad, qv_value
from .tensor_ops import FactorSet, kr_except, reconstruct, unfold


class NonFiniteError(RuntimeError):
    """Raised when factors or the objective stop being finite mid-solve."""

    def __init__(self, sweep: int, what: str):
        super().__init__(f"non-finite {what} at sweep {sweep}")
        self.sweep = sweep


@dataclass
class SolverConfig:
    """Knobs for :func:`solve`.

    rank        number of CP components.
    alpha       gradient step size; no safe default exists, tune it or use
                :func:`alpha_ramp`.
    loss        "poisson" or "gaussian" (or a loss instance).
    rho         per-mode smoothness weights; None means no smoothing.
    epsilon     elementwise shift of the reconstruction; must be positive
                for the poisson loss.
    nonnegative clamp factors at zero after every update.
    max_sweeps  hard sweep limit.
    tol         relative objective-change threshold; 0 disables early stop.
    seed        seed for the uniform-(0,1] factor initialization.
    """

    rank: int
    alpha: float
    loss: str = "poisson"
    rho: Sequence[float] | None = None
    epsilon: float = 1e-3
    nonnegative: bool = True
    max_sweeps: int = 500
    tol: float = 1e-6
    seed: int = 0

    def validate(self, order: int | None = None) -> None:
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if get_loss(self.loss).name == "poisson" and self.epsilon == 0:
            raise ValueError("epsilon must be > 0 with the poisson loss")
        if self.max_sweeps < 0:
            raise ValueError(f"max_sweeps must be >= 0, got {self.max_sweeps}")
        if self.tol < 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")
        if order is not None:
            _resolve_rho(self.rho, order)


def _resolve_rho(rho, order: int) -> np.ndarray:
    if rho is None:
        return np.zeros(order)
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (order,):
        raise ValueError(f"rho needs {order} weights, got {rho.size}")
    if np.any(rho < 0):
        raise ValueError("rho weights must be nonnegative")
    return rho


@dataclass
class SolverState:
    """Factors plus bookkeeping between sweeps.

    The objective history always includes the value at initialization, so
    its length is the number of completed sweeps plus one. reconstruction
    caches the epsilon-shifted model tensor matching the last history
    entry.
    """

    factors: FactorSet
    sweeps: int
    history: list[float] = field(default_factory=list)
    reconstruction: np.ndarray | None = None


@dataclass
class CompletionResult:
    completed: np.ndarray
    factors: FactorSet
    history: list[float]
    sweeps: int
    reason: str  # "converged" | "max_sweeps" | "collapsed"


def init_factors(shape: Sequence[int], rank: int, seed: int) -> FactorSet:
    """Seeded factor matrices with entries drawn i.i.d. uniform on (0, 1]."""
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    rng = np.random.default_rng(seed)
    # 1 - U[0,1) has support (0,1]: strictly positive as required.
    return FactorSet([1.0 - rng.random((int(s), rank)) for s in shape])


def complete(t: np.ndarray, mask: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Completed tensor: the data where observed, the model elsewhere."""
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if t.shape != x.shape or t.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: data {t.shape}, model {x.shape}, mask {mask.shape}"
        )
    return np.where(mask, t, x)


def objective(factors, t, mask, cfg: SolverConfig) -> float:
    """Masked loss of the epsilon-shifted reconstruction plus the smoothness penalty."""
    mats = list(factors)
    loss = get_loss(cfg.loss)
    rho = _resolve_rho(cfg.rho, len(mats))
    return loss.value(reconstruct(mats) + cfg.epsilon, t, mask) + qv_value(mats, rho)


def _sweep_modes(factors, t_unf, m_unf, loss, rho, alpha, epsilon, nonnegative):
    """One in-place pass over all modes. t_unf/m_unf are per-mode unfoldings."""
    for n in range(len(factors)):
        b = kr_except(factors, n)
        x_n = factors[n] @ b.T + epsilon
        y_n = np.zeros_like(x_n)
        obs = m_unf[n]
        if obs.any():
            y_n[obs] = loss.elem_grad(x_n[obs], t_unf[n][obs])
        g = y_n @ b
        if rho[n] != 0.0:
            g += qv_grad(factors[n], rho[n])
        a = factors[n] - alpha * g
        if nonnegative:
            np.maximum(a, 0.0, out=a)
        factors[n] = a


def init_state(t, mask, cfg: SolverConfig) -> SolverState:
    """Fresh seeded state with the initial objective already recorded."""
    t = np.asarray(t, dtype=np.float64)
    factors = init_factors(t.shape, cfg.rank, cfg.seed)
    x = reconstruct(factors) + cfg.epsilon
    rho = _resolve_rho(cfg.rho, t.ndim)
    obj = get_loss(cfg.loss).value(x, t, mask) + qv_value(factors, rho)
    return SolverState(factors, 0, [obj], x)


def sweep(state: SolverState, t, mask, cfg: SolverConfig) -> SolverState:
    """Run one full sweep and return the updated state (input state untouched)."""
    t = np.asarray(t, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    loss = get_loss(cfg.loss)
    rho = _resolve_rho(cfg.rho, t.ndim)
    factors = [a.copy() for a in state.factors]
    t_unf = [unfold(t, n) for n in range(t.ndim)]
    m_unf = [unfold(mask, n) for n in range(t.ndim)]
    _sweep_modes(factors, t_unf, m_unf, loss, rho, cfg.alpha, cfg.epsilon, cfg.nonnegative)
    x = reconstruct(factors) + cfg.epsilon
    obj = loss.value(x, t, mask) + qv_value(factors, rho)
    return SolverState(FactorSet(factors), state.sweeps + 1, state.history + [obj], x)


def solve(
    t,
    mask,
    cfg: SolverConfig,
    progress: Callable[[int, float], None] | None = None,
) -> CompletionResult:
    """Fit factors to the observed entries of `t` and fill in the rest.

    progress, if given, is called after every sweep with (sweep index,
    objective). Identical inputs (including the seed) give a bitwise
    identical result.
    """
    t = np.asarray(t, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if t.shape != mask.shape:
        raise ValueError(f"mask shape {mask.shape} does not match data {t.shape}")
    if not mask.any():
        raise ValueError("observation mask has no observed entries")
    cfg.validate(order=t.ndim)
    loss = get_loss(cfg.loss)
    rho = _resolve_rho(cfg.rho, t.ndim)

    factors = list(init_factors(t.shape, cfg.rank, cfg.seed))
    t_unf = [unfold(t, n) for n in range(t.ndim)]
    m_unf = [unfold(mask, n) for n in range(t.ndim)]

    xrec = reconstruct(factors)
    history = [loss.value(xrec + cfg.epsilon, t, mask) + qv_value(factors, rho)]
    reason = "max_sweeps"
    sweeps = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, cfg.max_sweeps + 1):
            _sweep_modes(
                factors, t_unf, m_unf, loss, rho, cfg.alpha, cfg.epsilon, cfg.nonnegative
            )
            sweeps = k
            if not all(np.isfinite(a).all() for a in factors):
                raise NonFiniteError(k, "factor matrices")
            xrec = reconstruct(factors)
            obj = loss.value(xrec + cfg.epsilon, t, mask) + qv_value(factors, rho)
            if not math.isfinite(obj):
                raise NonFiniteError(k, "objective")
            history.append(obj)
            if progress is not None:
                progress(k, obj)
            if not xrec.any():
                reason = "collapsed"
                break
            if cfg.tol > 0:
                prev = history[-2]
                if abs(obj - prev) / max(abs(prev), 1.0) < cfg.tol:
                    reason = "converged"
                    break

    completed = complete(t, mask, xrec + cfg.epsilon)
    return CompletionResult(completed, FactorSet(factors), history, sweeps, reason)


def alpha_ramp(
    t,
    mask,
    cfg: SolverConfig,
    ramp_factor: float = 2.0,
    probe_sweeps: int = 10,
    max_steps: int = 60,
) -> float:
    """Largest step size that survives a short probe run.

    Starting from cfg.alpha, multiply by ramp_factor and re-probe from the
    same seed until the probe collapses, diverges, or ends with a higher
    objective than it started with; return the last surviving alpha. The
    starting alpha itself failing is an error (pick a smaller start).
    """
    if not ramp_factor > 1:
        raise ValueError(f"ramp_factor must be > 1, got {ramp_factor}")
    if probe_sweeps < 1:
        raise ValueError(f"probe_sweeps must be >= 1, got {probe_sweeps}")

    def survives(alpha: float) -> bool:
        probe_cfg = replace(cfg, alpha=alpha, max_sweeps=probe_sweeps, tol=0.0)
        try:
            res = solve(t, mask, probe_cfg)
        except NonFiniteError:
            return False
        if res.reason == "collapsed":
            return False
        return res.history[-1] <= res.history[0]

    if not survives(cfg.alpha):
        raise ValueError(
            f"initial alpha {cfg.alpha} already collapses or oscillates; start smaller"
        )
    alpha = cfg.alpha
    for _ in range(max_steps):
        bigger = alpha * ramp_factor
        if not survives(bigger):
            return alpha
        alpha = bigger
    raise RuntimeError(
        f"no unstable alpha found within {max_steps} ramp steps from {cfg.alpha}"
    )
