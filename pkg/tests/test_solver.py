import numpy as np
import pytest

import tucker_si.solver as solver_mod
from conftest import make_instance
from tucker_si.geometry import (
    AmbientVector,
    FeatureBasis,
    MetricContext,
    TuckerPoint,
    horizontal_defect,
    metric_inner,
    project_horizontal,
    project_tangent,
    retract,
    tangent_defect,
)
from tucker_si.objective import ProblemData, cost, riem_grad
from tucker_si.observations import ObservationSet
from tucker_si.solver import (
    LineSearchError,
    SolverConfig,
    beta_fr_plus,
    beta_pr_plus,
    compose_direction,
    init_point,
    initial_step,
    line_search,
    solve_rcg,
)
from tucker_si.synth import ScenarioSpec, build_problem
from tucker_si.tensor import uf


def small_problem(seed=0, os=3.0, alpha=1.0, dims=(20, 20, 20), rank=(3, 3, 3), **kw):
    spec = ScenarioSpec(dims=dims, rank=rank, os=os, alpha=alpha / 1000, seed=seed, **kw)
    return build_problem(spec)


def truth_point(truth):
    """The ground truth as a Tucker point with orthonormal factors."""
    qs = [np.linalg.qr(B) for B in truth.factors]
    core = truth.core
    for k, (_, R) in enumerate(qs):
        core = np.moveaxis(np.tensordot(R, core, axes=(1, k)), 0, k)
    return TuckerPoint(core, tuple(Q for Q, _ in qs))


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(max_iters=0),
            dict(grad_tol=0),
            dict(nrmse_target=-1.0),
            dict(metric="newton"),
            dict(armijo_c=1.0),
            dict(backtrack=0.0),
            dict(max_trials=0),
            dict(beta_rule="hs"),
            dict(init_mode="svd"),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_defaults(self):
        c = SolverConfig()
        assert (c.max_iters, c.grad_tol, c.armijo_c, c.backtrack, c.max_trials) == (300, 1e-8, 1e-4, 0.5, 30)
        assert c.nrmse_target is None and c.init_mode == "random" and c.metric == "precond"


class TestBeta:
    def test_zero_new(self, rng):
        point, data, ctx = make_instance(rng)
        xi = riem_grad(ctx, point, data)
        assert beta_fr_plus(ctx, AmbientVector.zeros_like(point), ctx, xi) == 0

    def test_same_point(self, rng):
        point, data, ctx = make_instance(rng)
        xi = riem_grad(ctx, point, data)
        assert beta_fr_plus(ctx, xi, ctx, xi) == pytest.approx(1.0, rel=1e-14)
        # the gradient is tangent, and its horizontal part is all that PR subtracts
        assert beta_pr_plus(ctx, xi, ctx, xi) >= 0

    def test_zero_old(self, rng):
        point, data, ctx = make_instance(rng)
        xi = riem_grad(ctx, point, data)
        assert beta_fr_plus(ctx, xi, ctx, AmbientVector.zeros_like(point)) == 0
        assert beta_pr_plus(ctx, xi, ctx, AmbientVector.zeros_like(point)) == 0

    def test_pr_clamped(self, rng):
        point, data, ctx = make_instance(rng)
        xi = project_horizontal(ctx, riem_grad(ctx, point, data))
        # xi_old = 2 xi gives <xi, xi - 2 xi> < 0 before the clamp
        assert beta_pr_plus(ctx, xi, ctx, 2.0 * xi) == 0

    def test_restart_on_non_descent(self, rng):
        point, data, ctx = make_instance(rng)
        xi = project_horizontal(ctx, riem_grad(ctx, point, data))
        eta, beta = compose_direction(ctx, xi, 5.0, 2.0 * xi)
        assert beta == 0
        assert (eta + xi).norm() == 0

    def test_descent_kept(self, rng):
        point, data, ctx = make_instance(rng)
        xi = project_horizontal(ctx, riem_grad(ctx, point, data))
        prev = project_horizontal(ctx, project_tangent(ctx, AmbientVector.random(point, rng)))
        prev = prev * (0.01 * xi.norm() / prev.norm())
        eta, beta = compose_direction(ctx, xi, 0.5, prev)
        assert beta == 0.5
        assert metric_inner(ctx, eta, xi) < 0
        assert (eta - (-xi + 0.5 * prev)).norm() <= 1e-10 * eta.norm()


class TestInitialStep:
    def test_exact_quadratic_minimizer(self, rng):
        # full observation and no regularizer: the model is exact in the linearized move
        dims = (4, 5, 3)
        R = rng.standard_normal(dims)
        train = ObservationSet.from_dense(R, np.argwhere(np.ones(dims)))
        data = ProblemData(train, FeatureBasis.none(dims, train.values.size), (2, 2, 2))
        point, _, _ = make_instance(rng, dims=dims, rank=(2, 2, 2))
        ctx = MetricContext(point, data.features)
        xi = riem_grad(ctx, point, data)
        eta = -project_horizontal(ctx, xi)
        slope = metric_inner(ctx, xi, eta)
        D = np.einsum("abc,ia,jb,kc->ijk", eta.core, *point.factors)
        for k in range(3):
            factors = list(point.factors)
            factors[k] = eta.factors[k]
            D += np.einsum("abc,ia,jb,kc->ijk", point.core, *factors)
        X = point.full()
        t_star = np.sum(D * (R - X)) / np.sum(D * D)
        assert initial_step(point, data, eta, slope) == pytest.approx(t_star, rel=1e-10)

    def test_zero_curvature(self, rng):
        point, data, ctx = make_instance(rng)
        assert initial_step(point, data, AmbientVector.zeros_like(point), -1.0) == 1.0


class TestLineSearch:
    def test_near_converged_accepts_t0(self):
        data, truth = small_problem(seed=3)
        p0 = truth_point(truth)
        rng = np.random.default_rng(0)
        ctx = MetricContext(p0, data.features)
        eta = project_horizontal(ctx, project_tangent(ctx, AmbientVector.random(p0, rng)))
        p = retract(p0, eta, 1e-4)
        ctx = MetricContext(p, data.features)
        xi = riem_grad(ctx, p, data)
        eta = -xi
        t0 = initial_step(p, data, eta, metric_inner(ctx, xi, eta))
        t, q, f = line_search(p, data, ctx, eta, xi)
        assert t == t0
        assert f.total < cost(p, data).total

    def test_inflated_step_backtracks(self, rng):
        point, data, ctx = make_instance(rng)
        xi = riem_grad(ctx, point, data)
        eta = -xi
        slope = metric_inner(ctx, xi, eta)
        big = 1e6 * initial_step(point, data, eta, slope)
        f0 = cost(point, data).total
        t, q, f = line_search(point, data, ctx, eta, xi, t_init=big)
        k = np.log2(big / t)
        assert t < big and k == pytest.approx(round(k))
        assert f.total <= f0 + 1e-4 * t * slope
        # the previous trial was rejected
        assert cost(retract(point, eta, 2 * t), data).total > f0 + 1e-4 * 2 * t * slope

    def test_not_descent(self, rng):
        point, data, ctx = make_instance(rng)
        xi = riem_grad(ctx, point, data)
        with pytest.raises(ValueError):
            line_search(point, data, ctx, xi, xi)

    def test_exhausted(self, rng):
        point, data, ctx = make_instance(rng)
        xi = riem_grad(ctx, point, data)
        with pytest.raises(LineSearchError):
            line_search(point, data, ctx, -xi, xi, SolverConfig(max_trials=1), t_init=1e8)


class TestInitPoint:
    def test_deterministic(self):
        data, _ = small_problem()
        for mode in ("random", "hosvd"):
            a = init_point(data, SolverConfig(seed=5, init_mode=mode))
            b = init_point(data, SolverConfig(seed=5, init_mode=mode))
            np.testing.assert_array_equal(a.core, b.core)
            for u, v in zip(a.factors, b.factors):
                np.testing.assert_array_equal(u, v)

    def test_random_invariants(self):
        data, _ = small_problem()
        p = init_point(data, SolverConfig(seed=1))
        assert p.orthonormality_error() <= 1e-10
        assert p.rank == data.rank

    def test_hosvd_full_observation(self, rng):
        dims, rank = (6, 7, 5), (2, 3, 2)
        X = np.einsum(
            "abc,ia,jb,kc->ijk", rng.standard_normal(rank), *(rng.standard_normal((n, r)) for n, r in zip(dims, rank))
        )
        train = ObservationSet.from_dense(X, np.argwhere(np.ones(dims)))
        data = ProblemData(train, FeatureBasis.none(dims, X.size), rank)
        p = init_point(data, SolverConfig(init_mode="hosvd"))
        assert p.orthonormality_error() <= 1e-10
        np.testing.assert_allclose(p.full(), X, atol=1e-10 * np.abs(X).max())

    def test_hosvd_degenerate_warns(self, rng):
        # a handful of entries in a big tensor: the projected core loses rank
        dims = (40, 40, 40)
        lin = rng.choice(40**3, size=30, replace=False)
        idx = np.stack(np.unravel_index(lin, dims), axis=1)
        train = ObservationSet(dims, idx, rng.standard_normal(30))
        data = ProblemData(train, FeatureBasis.none(dims, 30), (3, 3, 3))
        with pytest.warns(RuntimeWarning, match="rank deficient"):
            init_point(data, SolverConfig(init_mode="hosvd"))


class TestSolve:
    def test_stationary_start(self):
        data, truth = small_problem(feature_noise=0.0)
        res = solve_rcg(data, SolverConfig(), init=truth_point(truth))
        assert res.reason == "grad_tol"
        assert res.iterations == 0
        assert len(res.trace) == 1

    def test_trace_invariants(self):
        data, _ = small_problem(os=1.5)
        seen = []
        res = solve_rcg(data, SolverConfig(max_iters=40), sink=seen.append)
        assert seen == res.trace
        costs = [t.cost for t in res.trace]
        assert all(b <= a for a, b in zip(costs, costs[1:]))
        secs = [t.seconds for t in res.trace]
        assert all(b >= a for a, b in zip(secs, secs[1:]))
        assert all(t.grad_norm_sq >= 0 for t in res.trace)
        assert [t.iter for t in res.trace] == list(range(len(res.trace)))
        assert res.point.orthonormality_error() <= 1e-10
        assert res.trace[-1].test_rmse is not None

    def test_directions_horizontal(self, monkeypatch):
        data, _ = small_problem(os=1.5)
        defects = []
        original = solver_mod.line_search

        def spy(point, data, ctx, eta, xi, *args, **kw):
            defects.append(max(horizontal_defect(ctx, eta), tangent_defect(point, eta)))
            return original(point, data, ctx, eta, xi, *args, **kw)

        monkeypatch.setattr(solver_mod, "line_search", spy)
        solve_rcg(data, SolverConfig(max_iters=15))
        assert len(defects) == 15
        assert max(defects) <= 1e-8

    def test_deterministic(self):
        data, _ = small_problem(os=1.5)
        a = solve_rcg(data, SolverConfig(max_iters=20, seed=4))
        b = solve_rcg(data, SolverConfig(max_iters=20, seed=4))
        strip = lambda tr: [(t.iter, t.cost, t.grad_norm_sq, t.step, t.beta, t.train_rmse, t.test_rmse) for t in tr]
        assert strip(a.trace) == strip(b.trace)
        np.testing.assert_array_equal(a.point.core, b.point.core)

    def test_metric_ablation_same_objective(self):
        data, _ = small_problem(os=5.0, alpha=5.0, seed=0)
        cfg = dict(grad_tol=1e-20, max_iters=300)
        pre = solve_rcg(data, SolverConfig(metric="precond", **cfg))
        ls = solve_rcg(data, SolverConfig(metric="ls", **cfg))
        assert pre.trace[-1].cost == pytest.approx(ls.trace[-1].cost, abs=1e-6)

    def test_vanilla_exact_recovery(self):
        # no side information, least-squares metric, generous sampling
        data, _ = small_problem(os=5.0, alpha=0.0, dims=(30, 30, 30), seed=1)
        vanilla = ProblemData(data.train, FeatureBasis.none(data.dims, len(data.train)), data.rank, data.test)
        res = solve_rcg(vanilla, SolverConfig(metric="ls", init_mode="hosvd", grad_tol=1e-24))
        assert res.trace[-1].train_rmse <= 1e-6

    def test_nrmse_target(self):
        data, _ = small_problem(os=3.0)
        res = solve_rcg(data, SolverConfig(nrmse_target=0.003))
        assert res.reason == "nrmse_target"
        spread = np.ptp(data.train.values)
        assert res.trace[-1].train_rmse / spread <= 0.003
        assert res.trace[-2].train_rmse / spread > 0.003

    def test_max_iters(self):
        data, _ = small_problem(os=1.0)
        res = solve_rcg(data, SolverConfig(max_iters=3))
        assert res.reason == "max_iters" and res.iterations == 3

    def test_line_search_failure(self):
        data, _ = small_problem(os=1.0)
        res = solve_rcg(data, SolverConfig(max_trials=1, armijo_c=0.999, max_iters=50))
        assert res.reason == "line_search_failure"
        assert res.point.orthonormality_error() <= 1e-10

    def test_bad_init(self):
        data, _ = small_problem()
        p = TuckerPoint(np.ones((2, 2, 2)), tuple(uf(np.random.default_rng(0).standard_normal((20, 2))) for _ in range(3)))
        with pytest.raises(ValueError):
            solve_rcg(data, init=p)
