import math
from dataclasses import replace

import numpy as np
import pytest

from gcdtc.losses import build_y
from gcdtc.solver import (
    CompletionResult,
    NonFiniteError,
    SolverConfig,
    alpha_ramp,
    complete,
    init_factors,
    init_state,
    objective,
    solve,
    sweep,
)
from gcdtc.smoothness import qv_value
from gcdtc.tensor_ops import FactorSet, mttkrp, reconstruct
from helpers import masked_loss_brute


def rank1_instance(shape=(8, 8, 3), seed=42):
    t = reconstruct(init_factors(shape, 1, seed))
    mask = np.ones(shape, dtype=bool)
    return t, mask


class TestInitFactors:
    def test_seed_determinism(self):
        a = init_factors((4, 5), 3, seed=9)
        b = init_factors((4, 5), 3, seed=9)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_support(self):
        f = init_factors((100, 500), 2, seed=0)
        for a in f:
            assert (a > 0.0).all() and (a <= 1.0).all()

    def test_different_seeds_differ(self):
        a = init_factors((4, 5), 3, seed=1)
        b = init_factors((4, 5), 3, seed=2)
        assert any(not np.array_equal(x, y) for x, y in zip(a, b))

    def test_rank_validation(self):
        with pytest.raises(ValueError):
            init_factors((3, 3), 0, seed=0)


class TestConfig:
    def test_valid_defaults(self):
        SolverConfig(rank=2, alpha=1e-3).validate(order=3)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(rank=0, alpha=1e-3),
            dict(rank=2, alpha=0.0),
            dict(rank=2, alpha=-1.0),
            dict(rank=2, alpha=1e-3, epsilon=-1.0),
            dict(rank=2, alpha=1e-3, loss="poisson", epsilon=0.0),
            dict(rank=2, alpha=1e-3, max_sweeps=-1),
            dict(rank=2, alpha=1e-3, tol=-1e-6),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs).validate()

    def test_gaussian_allows_zero_epsilon(self):
        SolverConfig(rank=1, alpha=1e-3, loss="gaussian", epsilon=0.0).validate()

    def test_rho_length_checked(self):
        cfg = SolverConfig(rank=1, alpha=1e-3, rho=(1.0, 2.0))
        with pytest.raises(ValueError):
            cfg.validate(order=3)


class TestSweep:
    def test_zero_alpha_is_null_step(self):
        t, mask = rank1_instance((4, 4, 2), seed=5)
        cfg = SolverConfig(rank=2, alpha=0.0, rho=(0, 0, 0), seed=1)
        state = init_state(t, mask, cfg)
        after = sweep(state, t, mask, cfg)
        for a, b in zip(state.factors, after.factors):
            assert np.array_equal(a, b)
        assert after.history == state.history + [state.history[-1]]
        assert after.sweeps == 1

    def test_nonnegative_clamps_to_exact_zero(self):
        t = np.full((3, 3), 0.05)
        mask = np.ones_like(t, dtype=bool)
        cfg = SolverConfig(rank=1, alpha=10.0, loss="gaussian", rho=(0, 0),
                           epsilon=0.0, nonnegative=True, seed=0)
        state = init_state(t, mask, cfg)
        after = sweep(state, t, mask, cfg)
        values = np.concatenate([a.ravel() for a in after.factors])
        assert (values >= 0.0).all()
        assert (values == 0.0).any()

    def test_objective_decreases_with_calibrated_alpha(self):
        t, mask = rank1_instance()
        alpha = 1e-2
        cfg = SolverConfig(rank=1, alpha=alpha, rho=(0, 0, 0), seed=0)
        state = init_state(t, mask, cfg)
        for _ in range(10):
            state = sweep(state, t, mask, cfg)
        assert state.history[-1] < state.history[0]

    def test_history_length_tracks_sweeps(self):
        t, mask = rank1_instance((4, 4, 2), seed=6)
        cfg = SolverConfig(rank=1, alpha=1e-3, rho=(0, 0, 0), seed=0)
        state = init_state(t, mask, cfg)
        for k in range(3):
            state = sweep(state, t, mask, cfg)
            assert len(state.history) == state.sweeps + 1


class TestComplete:
    def test_all_observed_returns_data_bitwise(self):
        rng = np.random.default_rng(40)
        t = rng.random((3, 4))
        x = rng.random((3, 4))
        assert np.array_equal(complete(t, np.ones_like(t, dtype=bool), x), t)

    def test_none_observed_returns_model_bitwise(self):
        rng = np.random.default_rng(41)
        t = rng.random((3, 4))
        x = rng.random((3, 4))
        assert np.array_equal(complete(t, np.zeros_like(t, dtype=bool), x), x)

    def test_single_observed_entry(self):
        t = np.array([[7.0, 0.0], [0.0, 0.0]])
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        mask = np.array([[True, False], [False, False]])
        assert np.array_equal(complete(t, mask, x), np.array([[7.0, 2.0], [3.0, 4.0]]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            complete(np.zeros((2, 2)), np.ones((2, 2), bool), np.zeros((2, 3)))


class TestObjective:
    def test_exact_fit_gaussian_is_zero(self):
        f = init_factors((3, 4), 2, seed=3)
        t = reconstruct(f)
        mask = np.ones_like(t, dtype=bool)
        cfg = SolverConfig(rank=2, alpha=1e-3, loss="gaussian", rho=(0, 0), epsilon=0.0)
        assert objective(f, t, mask, cfg) == 0.0

    def test_additivity(self):
        rng = np.random.default_rng(42)
        f = init_factors((3, 3, 2), 2, seed=7)
        t = rng.uniform(0.5, 2.0, (3, 3, 2))
        mask = rng.random((3, 3, 2)) < 0.7
        cfg = SolverConfig(rank=2, alpha=1e-3, loss="poisson", rho=(2.0, 1.0, 0.0),
                           epsilon=1e-3)
        from gcdtc.losses import get_loss

        l1 = get_loss("poisson").value(reconstruct(f) + cfg.epsilon, t, mask)
        l2 = qv_value(list(f), cfg.rho)
        assert objective(f, t, mask, cfg) == l1 + l2

    def test_against_independent_summation(self):
        rng = np.random.default_rng(43)
        f = init_factors((3, 3, 2), 2, seed=11)
        t = rng.uniform(0.5, 2.0, (3, 3, 2))
        mask = rng.random((3, 3, 2)) < 0.8
        cfg = SolverConfig(rank=2, alpha=1e-3, loss="poisson", rho=(2.0, 1.0, 0.5),
                           epsilon=1e-3)
        x = reconstruct(f) + cfg.epsilon
        want = masked_loss_brute(lambda xi, ti: xi - ti * math.log(xi), x, t, mask)
        # QV summed column by column, independently of qv_grad machinery
        for n, a in enumerate(f):
            for r in range(a.shape[1]):
                col = a[:, r]
                want += 0.5 * cfg.rho[n] * sum(
                    (col[i] - col[i + 1]) ** 2 for i in range(len(col) - 1)
                )
        got = objective(f, t, mask, cfg)
        assert abs(got - want) <= 1e-12 * abs(want)


class TestSolve:
    def test_exact_rank1_fully_observed(self):
        t = np.array([[3.0, 4.0], [6.0, 8.0]])
        mask = np.ones_like(t, dtype=bool)
        cfg = SolverConfig(rank=1, alpha=1e-2, loss="poisson", rho=(0, 0),
                           epsilon=1e-3, max_sweeps=500, tol=1e-10, seed=0)
        res = solve(t, mask, cfg)
        assert np.array_equal(res.completed, t)
        x = reconstruct(res.factors)
        assert np.linalg.norm(x - t) / np.linalg.norm(t) <= 1e-2

    def test_recovers_missing_entry_of_rank1_tensor(self):
        t = np.array([[3.0, 4.0], [6.0, 8.0]])
        mask = np.ones_like(t, dtype=bool)
        mask[0, 1] = False
        cfg = SolverConfig(rank=1, alpha=1e-2, loss="poisson", rho=(0, 0),
                           epsilon=1e-3, max_sweeps=500, tol=1e-10, seed=0)
        res = solve(t, mask, cfg)
        assert abs(res.completed[0, 1] - 4.0) / 4.0 <= 0.05

    def test_max_sweeps_zero(self):
        t, mask = rank1_instance((4, 4, 2), seed=8)
        cfg = SolverConfig(rank=1, alpha=1e-3, rho=(0, 0, 0), max_sweeps=0, seed=0)
        res = solve(t, mask, cfg)
        assert res.reason == "max_sweeps"
        assert res.sweeps == 0
        assert len(res.history) == 1
        init_model = reconstruct(init_factors(t.shape, 1, 0)) + cfg.epsilon
        assert np.array_equal(res.completed, complete(t, mask, init_model))

    def test_empty_mask_rejected(self):
        t = np.zeros((2, 2))
        cfg = SolverConfig(rank=1, alpha=1e-3, rho=(0, 0))
        with pytest.raises(ValueError):
            solve(t, np.zeros_like(t, dtype=bool), cfg)

    def test_determinism_bitwise(self):
        t, mask = rank1_instance((6, 5, 2), seed=12)
        mask = mask & (np.random.default_rng(1).random(t.shape) < 0.8)
        cfg = SolverConfig(rank=2, alpha=5e-3, rho=(1.0, 1.0, 0.0),
                           max_sweeps=40, tol=0.0, seed=3)
        a = solve(t, mask, cfg)
        b = solve(t, mask, cfg)
        assert np.array_equal(a.completed, b.completed)
        assert a.history == b.history
        assert a.reason == b.reason
        for x, y in zip(a.factors, b.factors):
            assert np.array_equal(x, y)

    def test_observed_entries_preserved_bitwise(self):
        rng = np.random.default_rng(44)
        t = rng.uniform(0.0, 9.0, (5, 6, 2))
        mask = rng.random(t.shape) < 0.6
        cfg = SolverConfig(rank=2, alpha=1e-3, rho=(0, 0, 0), max_sweeps=30, seed=0)
        res = solve(t, mask, cfg)
        assert np.array_equal(res.completed[mask], t[mask])

    def test_progress_callback(self):
        t, mask = rank1_instance((4, 4, 2), seed=13)
        cfg = SolverConfig(rank=1, alpha=1e-3, rho=(0, 0, 0), max_sweeps=5, tol=0.0, seed=0)
        seen = []
        res = solve(t, mask, cfg, progress=lambda k, obj: seen.append((k, obj)))
        assert [k for k, _ in seen] == [1, 2, 3, 4, 5]
        assert [obj for _, obj in seen] == res.history[1:]

    def test_collapse_detected(self):
        t, mask = rank1_instance((5, 5, 2), seed=14)
        cfg = SolverConfig(rank=1, alpha=50.0, loss="poisson", rho=(0, 0, 0),
                           epsilon=1e-3, max_sweeps=50, tol=0.0, seed=0)
        res = solve(t, mask, cfg)
        assert res.reason == "collapsed"
        assert not reconstruct(res.factors).any()

    def test_nonfinite_raises_with_sweep_index(self):
        t, mask = rank1_instance((5, 5, 2), seed=15)
        cfg = SolverConfig(rank=1, alpha=1e6, loss="gaussian", rho=(0, 0, 0),
                           epsilon=0.0, nonnegative=False, max_sweeps=100, tol=0.0,
                           seed=0)
        with pytest.raises(NonFiniteError) as err:
            solve(t, mask, cfg)
        assert err.value.sweep >= 1
        assert "sweep" in str(err.value)

    def test_poisson_model_stays_at_or_above_epsilon(self):
        t, mask = rank1_instance((5, 4, 2), seed=16)
        cfg = SolverConfig(rank=2, alpha=2e-3, loss="poisson", rho=(0, 0, 0),
                           epsilon=1e-3, max_sweeps=20, tol=0.0, seed=2)
        state = init_state(t, mask, cfg)
        for _ in range(20):
            state = sweep(state, t, mask, cfg)
            assert state.reconstruction.min() >= cfg.epsilon


def test_gaussian_reduction_gradient_matches_finite_differences():
    # gaussian loss, no prior, no shift, no clamp: the per-mode update
    # direction is the gradient of 0.5 * sum over observed (x - t)^2
    rng = np.random.default_rng(50)
    shape, rank = (4, 3, 2), 2
    t = rng.uniform(0.0, 2.0, shape)
    mask = rng.random(shape) < 0.7
    factors = init_factors(shape, rank, seed=5)
    cfg = SolverConfig(rank=rank, alpha=1e-4, loss="gaussian", rho=(0, 0, 0),
                       epsilon=0.0, nonnegative=False, seed=5)

    def scalar_objective(mats):
        x = reconstruct(mats)
        return 0.5 * float(np.sum((x[mask] - t[mask]) ** 2))

    h = 1e-6
    for n in range(len(shape)):
        y = build_y("gaussian", reconstruct(factors), t, mask)
        grad = mttkrp(y, factors, n)
        for i in range(shape[n]):
            for r in range(rank):
                fp = factors.copy()
                fp[n][i, r] += h
                fm = factors.copy()
                fm[n][i, r] -= h
                fd = (scalar_objective(fp) - scalar_objective(fm)) / (2 * h)
                assert abs(grad[i, r] - fd) <= 1e-4 * max(1.0, abs(fd))

    # and one sweep's first-mode delta is exactly -alpha times that gradient
    state = init_state(t, mask, cfg)
    y0 = build_y("gaussian", reconstruct(state.factors), t, mask)
    g0 = mttkrp(y0, state.factors, 0)
    after = sweep(state, t, mask, cfg)
    delta = (after.factors[0] - state.factors[0]) / -cfg.alpha
    assert np.allclose(delta, g0, rtol=1e-10, atol=1e-12)


class TestAlphaRamp:
    def test_unstable_start_rejected(self):
        t, mask = rank1_instance((5, 5, 2), seed=17)
        cfg = SolverConfig(rank=1, alpha=100.0, loss="poisson", rho=(0, 0, 0), seed=0)
        with pytest.raises(ValueError):
            alpha_ramp(t, mask, cfg, ramp_factor=2.0, probe_sweeps=5)

    def test_ramp_only_increases(self):
        t, mask = rank1_instance((5, 5, 2), seed=18)
        cfg = SolverConfig(rank=1, alpha=1e-6, loss="poisson", rho=(0, 0, 0), seed=0)
        chosen = alpha_ramp(t, mask, cfg, ramp_factor=2.0, probe_sweeps=5)
        assert chosen >= cfg.alpha

    def test_one_more_step_fails(self):
        t, mask = rank1_instance((5, 5, 2), seed=18)
        cfg = SolverConfig(rank=1, alpha=1e-4, loss="poisson", rho=(0, 0, 0), seed=0)
        chosen = alpha_ramp(t, mask, cfg, ramp_factor=2.0, probe_sweeps=10)
        probe = replace(cfg, alpha=chosen * 2.0, max_sweeps=10, tol=0.0)
        try:
            res = solve(t, mask, probe)
            failed = res.reason == "collapsed" or res.history[-1] > res.history[0]
        except NonFiniteError:
            failed = True
        assert failed

    def test_bad_ramp_factor(self):
        t, mask = rank1_instance((4, 4, 2), seed=19)
        cfg = SolverConfig(rank=1, alpha=1e-6, rho=(0, 0, 0))
        with pytest.raises(ValueError):
            alpha_ramp(t, mask, cfg, ramp_factor=1.0, probe_sweeps=5)


def test_result_type_fields():
    t, mask = rank1_instance((3, 3, 2), seed=20)
    cfg = SolverConfig(rank=1, alpha=1e-3, rho=(0, 0, 0), max_sweeps=3, tol=0.0, seed=0)
    res = solve(t, mask, cfg)
    assert isinstance(res, CompletionResult)
    assert isinstance(res.factors, FactorSet)
    assert res.sweeps == 3
    assert len(res.history) == 4
    assert res.reason == "max_sweeps"
