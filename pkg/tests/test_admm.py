import numpy as np
import pytest

from oracles_util import (
    auglag_ref,
    best_unit_vector_on_grid,
    d_oracle_ref,
    gd_quadratic_min,
)
from toaloc import (
    AdmmConfig,
    AdmmState,
    LossSpec,
    Measurements,
    Scenario,
    augmented_lagrangian,
    kkt_residuals,
    solve,
    true_ranges,
)
from toaloc.admm import (
    admm_step,
    beta_update,
    d_update,
    init_state,
    lambda_update,
    objective_value,
    stopping_sum,
    x_update,
)
from toaloc.model import NegativeRangeWarning, rng_from_seed

LOSSES = [LossSpec.huber(1.0), LossSpec.lp(1.3), LossSpec.l1(), LossSpec.l2()]


def _random_state(gen, scenario, ranges):
    L, H = scenario.sensors.shape
    beta = gen.standard_normal((L, H))
    beta /= np.linalg.norm(beta, axis=1)[:, None]
    return AdmmState(
        x=gen.uniform(-10, 10, H),
        d=np.abs(ranges + gen.standard_normal(L)),
        beta=beta,
        lam=gen.standard_normal((L, H)),
    )


def _random_scenario(gen, L=5):
    return Scenario(
        dimension=2,
        source=gen.uniform(-10, 10, 2),
        sensors=gen.uniform(-10, 10, (L, 2)),
    )


class TestXUpdate:
    def test_centroid_of_two_targets(self):
        with pytest.warns(UserWarning):
            sc = Scenario(dimension=2, source=np.zeros(2),
                          sensors=np.array([[0.0, 0.0], [0.0, 2.0]]))
        # targets w_i = x_i + beta_i d_i - lam_i/rho chosen as (0,0) and (2,2)
        state = AdmmState(
            x=np.zeros(2),
            d=np.array([0.0, 2.0]),
            beta=np.array([[1.0, 0.0], [1.0, 0.0]]),
            lam=np.zeros((2, 2)),
        )
        got = x_update(state, sc, AdmmConfig())
        np.testing.assert_allclose(got, [1.0, 1.0])

    def test_fixed_point_at_feasibility(self, fixed_scenario):
        x_star = fixed_scenario.source
        d = true_ranges(fixed_scenario)
        beta = (x_star - fixed_scenario.sensors) / d[:, None]
        state = AdmmState(x=x_star, d=d, beta=beta, lam=np.zeros((8, 2)))
        np.testing.assert_allclose(
            x_update(state, fixed_scenario, AdmmConfig()), x_star, atol=1e-12
        )

    def test_matches_quadratic_oracle(self):
        gen = rng_from_seed(31)
        cfg = AdmmConfig()
        for _ in range(20):
            sc = _random_scenario(gen)
            state = _random_state(gen, sc, true_ranges(sc))
            targets = sc.sensors + state.beta * state.d[:, None] - state.lam / cfg.rho
            want = gd_quadratic_min(targets, cfg.rho)
            np.testing.assert_allclose(x_update(state, sc, cfg), want, atol=1e-6)


class TestBetaUpdate:
    def test_normalization(self):
        with pytest.warns(UserWarning):
            sc = Scenario(dimension=2, source=np.zeros(2), sensors=np.array([[0.0, 0.0]]))
        state = AdmmState(
            x=np.array([3.0, 4.0]),
            d=np.array([1.0]),
            beta=np.array([[1.0, 0.0]]),
            lam=np.zeros((1, 2)),
        )
        np.testing.assert_allclose(
            beta_update(state, sc, AdmmConfig()), [[0.6, 0.8]], atol=1e-15
        )

    def test_idempotent_on_unit_vectors(self):
        gen = rng_from_seed(32)
        sc = _random_scenario(gen)
        cfg = AdmmConfig()
        state = _random_state(gen, sc, true_ranges(sc))
        once = beta_update(state, sc, cfg)
        twice = beta_update(
            AdmmState(x=state.x, d=state.d, beta=once, lam=state.lam), sc, cfg
        )
        np.testing.assert_allclose(once, twice, atol=1e-15)

    def test_zero_direction_keeps_previous(self):
        with pytest.warns(UserWarning):
            sc = Scenario(dimension=2, source=np.zeros(2), sensors=np.array([[1.0, 1.0]]))
        prev = np.array([[0.6, 0.8]])
        state = AdmmState(
            x=np.array([1.0, 1.0]), d=np.array([1.0]), beta=prev, lam=np.zeros((1, 2))
        )
        np.testing.assert_array_equal(beta_update(state, sc, AdmmConfig()), prev)

    def test_maximizes_over_angular_grid(self):
        gen = rng_from_seed(33)
        cfg = AdmmConfig()
        for _ in range(50):
            sc = _random_scenario(gen)
            state = _random_state(gen, sc, true_ranges(sc))
            beta = beta_update(state, sc, cfg)
            v = (state.x - sc.sensors) + state.lam / cfg.rho
            for i in range(sc.n_sensors):
                grid, best = best_unit_vector_on_grid(v[i])
                assert v[i] @ beta[i] >= v[i] @ best - 1e-12


class TestDUpdate:
    def test_l1_hand_value(self):
        # rho = 5 (tau = 0.2), r = 10, ||v|| = 9: soft threshold of 1 is 0.8
        with pytest.warns(UserWarning):
            sc = Scenario(dimension=2, source=np.zeros(2), sensors=np.array([[0.0, 0.0]]))
        state = AdmmState(
            x=np.array([9.0, 0.0]),
            d=np.array([1.0]),
            beta=np.array([[1.0, 0.0]]),
            lam=np.zeros((1, 2)),
        )
        meas = Measurements(ranges=np.array([10.0]))
        d = d_update(state, sc, meas, LossSpec.l1(), AdmmConfig(rho=5.0))
        assert d[0] == pytest.approx(9.2)

    def test_zero_prox_argument(self, fixed_scenario):
        # ||v_i|| == r_i makes the prox argument 0, so d = r
        r = true_ranges(fixed_scenario)
        beta = (fixed_scenario.source - fixed_scenario.sensors) / r[:, None]
        state = AdmmState(
            x=fixed_scenario.source, d=r, beta=beta, lam=np.zeros((8, 2))
        )
        meas = Measurements(ranges=r)
        for spec in LOSSES:
            d = d_update(state, fixed_scenario, meas, spec, AdmmConfig())
            np.testing.assert_allclose(d, r, atol=1e-12)

    def test_huber_matches_constrained_grid_oracle(self):
        gen = rng_from_seed(34)
        cfg = AdmmConfig(rho=5.0)
        spec = LossSpec.huber(1.0)
        with pytest.warns(UserWarning):
            sc = Scenario(dimension=2, source=np.zeros(2), sensors=np.array([[0.0, 0.0]]))
        for _ in range(40):
            r = float(gen.uniform(0.0, 20.0))
            nv = float(gen.uniform(0.0, 20.0))
            state = AdmmState(
                x=np.array([nv, 0.0]),
                d=np.array([1.0]),
                beta=np.array([[1.0, 0.0]]),
                lam=np.zeros((1, 2)),
            )
            d = d_update(state, sc, Measurements(ranges=np.array([r])), spec, cfg)
            want = d_oracle_ref("huber", 1.0, cfg.rho, r, nv)
            assert d[0] == pytest.approx(want, abs=1e-4)
            assert d[0] >= -1e-12

    def test_nonnegative_for_all_losses(self):
        gen = rng_from_seed(35)
        cfg = AdmmConfig(rho=5.0)
        for _ in range(50):
            sc = _random_scenario(gen)
            r = np.abs(true_ranges(sc) + 3 * gen.standard_normal(sc.n_sensors))
            state = _random_state(gen, sc, r)
            for spec in LOSSES:
                d = d_update(state, sc, Measurements(ranges=r), spec, cfg)
                assert d.min() >= -1e-12


class TestLambdaUpdate:
    def test_feasible_state_unchanged(self, fixed_scenario):
        r = true_ranges(fixed_scenario)
        beta = (fixed_scenario.source - fixed_scenario.sensors) / r[:, None]
        gen = rng_from_seed(36)
        lam = gen.standard_normal((8, 2))
        state = AdmmState(x=fixed_scenario.source, d=r, beta=beta, lam=lam)
        np.testing.assert_allclose(
            lambda_update(state, fixed_scenario, AdmmConfig()), lam, atol=1e-12
        )

    def test_single_violation(self):
        with pytest.warns(UserWarning):
            sc = Scenario(dimension=2, source=np.zeros(2),
                          sensors=np.array([[0.0, 0.0], [4.0, 0.0]]))
        u = np.array([0.3, -0.7])
        # sensor 0 feasible, sensor 1 violated by exactly u
        state = AdmmState(
            x=np.array([2.0, 0.0]),
            d=np.array([2.0, 2.0]),
            beta=np.array([[1.0, 0.0], [(u[0] - 2.0) / 2.0, u[1] / 2.0]]),
            lam=np.zeros((2, 2)),
        )
        state = AdmmState(
            x=state.x,
            d=state.d,
            beta=np.array([[1.0, 0.0], [-1.0, 0.0]]),
            lam=np.zeros((2, 2)),
        )
        # residual for sensor 1: x - x_1 - beta_1 d_1 = (-2,0) + (2,0) = 0 ... build directly
        resid_target = np.array([[0.0, 0.0], u])
        state = AdmmState(
            x=state.x,
            d=state.d,
            beta=(state.x - sc.sensors - resid_target) / state.d[:, None],
            lam=np.zeros((2, 2)),
        )
        cfg = AdmmConfig(rho=5.0)
        lam = lambda_update(state, sc, cfg)
        np.testing.assert_allclose(lam[0], [0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(lam[1], cfg.rho * u, atol=1e-12)

    def test_random_increment_equals_rho_residual(self):
        gen = rng_from_seed(37)
        cfg = AdmmConfig(rho=3.0)
        for _ in range(20):
            sc = _random_scenario(gen)
            state = _random_state(gen, sc, true_ranges(sc))
            lam = lambda_update(state, sc, cfg)
            for i in range(sc.n_sensors):
                resid = state.x - sc.sensors[i] - state.beta[i] * state.d[i]
                np.testing.assert_allclose(lam[i] - state.lam[i], cfg.rho * resid, atol=1e-12)


class TestSolve:
    @pytest.mark.parametrize("spec", LOSSES, ids=lambda s: s.kind.value)
    def test_noiseless_consistency(self, fixed_scenario, spec):
        meas = Measurements(ranges=true_ranges(fixed_scenario))
        result = solve(fixed_scenario, meas, spec)
        assert result.converged
        assert np.linalg.norm(result.estimate - fixed_scenario.source) <= 1e-3

    def test_objective_decreases_early(self, fixed_scenario, noisy_measurements):
        meas = noisy_measurements(42)
        spec = LossSpec.huber(1.0)
        result = solve(fixed_scenario, meas, spec, AdmmConfig(trace=True))
        obj = result.trace.objective
        idx = min(30, len(obj) - 1)
        assert obj[idx] < 0.5 * obj[0]

    def test_fixed_point_init_stops_immediately(self, fixed_scenario):
        r = true_ranges(fixed_scenario)
        beta = (fixed_scenario.source - fixed_scenario.sensors) / r[:, None]
        init = AdmmState(
            x=np.array(fixed_scenario.source), d=r, beta=beta, lam=np.zeros((8, 2))
        )
        meas = Measurements(ranges=r)
        result = solve(fixed_scenario, meas, LossSpec.huber(1.0), init=init)
        assert result.converged
        assert result.iterations == 1
        assert result.primal_residual < 1e-5

    def test_deterministic(self, fixed_scenario, noisy_measurements):
        meas = noisy_measurements(7)
        a = solve(fixed_scenario, meas, LossSpec.lp(1.3))
        b = solve(fixed_scenario, meas, LossSpec.lp(1.3))
        assert a.estimate.tobytes() == b.estimate.tobytes()
        assert a.iterations == b.iterations

    def test_trace_row_count(self, fixed_scenario, noisy_measurements):
        result = solve(
            fixed_scenario, noisy_measurements(3), LossSpec.huber(1.0),
            AdmmConfig(trace=True),
        )
        assert result.trace.n_rows == result.iterations + 1
        assert result.trace.x.shape == (result.iterations + 1, 2)

    def test_unit_norm_invariant(self, fixed_scenario, noisy_measurements):
        for seed in range(5):
            result = solve(fixed_scenario, noisy_measurements(seed), LossSpec.lp(1.3))
            norms = np.sum(result.state.beta**2, axis=1)
            assert np.max(np.abs(norms - 1.0)) <= 1e-12

    def test_min_d_nonnegative(self, fixed_scenario, noisy_measurements):
        for spec in LOSSES:
            result = solve(fixed_scenario, noisy_measurements(11), spec)
            assert result.min_d >= -1e-12

    def test_successive_differences_vanish(self, fixed_scenario, noisy_measurements):
        cfg = AdmmConfig(trace=True)
        for seed in range(5):
            result = solve(fixed_scenario, noisy_measurements(seed), LossSpec.huber(1.0), cfg)
            assert result.converged
            tr = result.trace
            for series in (tr.dx, tr.dd, tr.dbeta, tr.dlambda):
                assert series[-1] <= 10 * cfg.delta

    def test_negative_ranges_clamped_with_warning(self, fixed_scenario):
        r = true_ranges(fixed_scenario).copy()
        r[2] = -5.0
        with pytest.warns(NegativeRangeWarning):
            result = solve(fixed_scenario, Measurements(ranges=r), LossSpec.l1())
        assert np.isfinite(result.estimate).all()
        assert result.min_d >= -1e-12

    def test_welsch_rejected(self, fixed_scenario):
        meas = Measurements(ranges=true_ranges(fixed_scenario))
        with pytest.raises(ValueError, match="not supported"):
            solve(fixed_scenario, meas, LossSpec.welsch(1.0))

    def test_non_finite_iterate_aborts_with_diagnostic(self, fixed_scenario):
        r = true_ranges(fixed_scenario)
        init = init_state(fixed_scenario, Measurements(ranges=r))
        lam = np.zeros((8, 2))
        lam[0] = 1e308  # ||v_0|| overflows in the first distance update
        huge = AdmmState(x=init.x, d=init.d, beta=init.beta, lam=lam)
        with pytest.raises(FloatingPointError, match="update"):
            solve(fixed_scenario, Measurements(ranges=r), LossSpec.l2(), init=huge)

    def test_length_mismatch_rejected(self, fixed_scenario):
        with pytest.raises(ValueError, match="match"):
            solve(fixed_scenario, Measurements(ranges=np.ones(3)), LossSpec.l1())

    def test_random_init_reproducible(self, fixed_scenario, noisy_measurements):
        meas = noisy_measurements(4)
        i1 = init_state(fixed_scenario, meas, seed=5)
        i2 = init_state(fixed_scenario, meas, seed=5)
        np.testing.assert_array_equal(i1.x, i2.x)
        np.testing.assert_array_equal(i1.beta, i2.beta)
        assert np.max(np.abs(np.sum(i1.beta**2, axis=1) - 1.0)) <= 1e-12
        assert (i1.d >= 0).all()
        result = solve(fixed_scenario, meas, LossSpec.huber(1.0), init=i1)
        assert result.converged

    def test_step_matches_kernel_iteration(self, fixed_scenario, noisy_measurements):
        # one composed reference step == first iteration of the solve loop
        meas = noisy_measurements(13)
        spec = LossSpec.huber(1.0)
        cfg = AdmmConfig(max_iters=1)
        state0 = init_state(fixed_scenario, meas)
        stepped = admm_step(state0, fixed_scenario, meas, spec, cfg)
        result = solve(fixed_scenario, meas, spec, cfg)
        np.testing.assert_allclose(result.state.x, stepped.x, atol=1e-12)
        np.testing.assert_allclose(result.state.d, stepped.d, atol=1e-12)
        np.testing.assert_allclose(result.state.beta, stepped.beta, atol=1e-12)
        np.testing.assert_allclose(result.state.lam, stepped.lam, atol=1e-12)


class TestAugmentedLagrangian:
    def test_feasible_reduces_to_loss_sum(self, fixed_scenario):
        # feasible state (x - x_i = beta_i d_i), arbitrary multipliers:
        # both residual terms vanish, leaving sum_i f(r_i - d_i)
        r = true_ranges(fixed_scenario)
        beta = (fixed_scenario.source - fixed_scenario.sensors) / r[:, None]
        gen = rng_from_seed(38)
        state = AdmmState(
            x=fixed_scenario.source, d=r, beta=beta, lam=gen.standard_normal((8, 2))
        )
        meas = Measurements(ranges=r + 0.5)  # r_i - d_i = 0.5 everywhere
        got = augmented_lagrangian(
            state, fixed_scenario, meas, LossSpec.huber(1.0), AdmmConfig()
        )
        assert got == pytest.approx(8 * 0.25, abs=1e-9)

    def test_all_terms_vanish(self, fixed_scenario):
        r = true_ranges(fixed_scenario)
        beta = (fixed_scenario.source - fixed_scenario.sensors) / r[:, None]
        state = AdmmState(x=fixed_scenario.source, d=r, beta=beta, lam=np.zeros((8, 2)))
        meas = Measurements(ranges=r)
        for spec in LOSSES:
            assert augmented_lagrangian(
                state, fixed_scenario, meas, spec, AdmmConfig()
            ) == pytest.approx(0.0, abs=1e-12)

    def test_matches_independent_reimplementation(self):
        gen = rng_from_seed(39)
        cfg = AdmmConfig(rho=5.0)
        for spec, kind, param in (
            (LossSpec.huber(1.0), "huber", 1.0),
            (LossSpec.lp(1.3), "lp", 1.3),
            (LossSpec.l1(), "l1", None),
            (LossSpec.l2(), "l2", None),
        ):
            for _ in range(10):
                sc = _random_scenario(gen)
                r = np.abs(true_ranges(sc) + gen.standard_normal(sc.n_sensors))
                state = _random_state(gen, sc, r)
                got = augmented_lagrangian(state, sc, Measurements(ranges=r), spec, cfg)
                want = auglag_ref(state, sc, r, kind, param, cfg.rho)
                assert got == pytest.approx(want, abs=1e-12 * max(1.0, abs(want)))


class TestKktResiduals:
    def test_constructed_certificate(self, fixed_scenario):
        # noiseless feasible point with multipliers chosen to satisfy the
        # distance-block stationarity and a zero multiplier sum
        r = true_ranges(fixed_scenario)
        beta = (fixed_scenario.source - fixed_scenario.sensors) / r[:, None]
        state = AdmmState(
            x=fixed_scenario.source, d=r, beta=beta, lam=np.zeros((8, 2)), k=1
        )
        meas = Measurements(ranges=r)
        from toaloc.admm import SolveResult

        result = SolveResult(
            estimate=state.x, iterations=1, converged=True,
            primal_residual=0.0, state=state,
        )
        rep = kkt_residuals(result, fixed_scenario, meas, LossSpec.huber(1.0))
        assert rep.dual_x_residual <= 1e-12
        assert rep.d_stationarity <= 1e-12
        assert rep.beta_stationarity <= 1e-12
        assert rep.primal_feasibility <= 1e-12
        assert rep.beta_norm_violation <= 1e-12

    def test_converged_huber_run(self, fixed_scenario, noisy_measurements):
        meas = noisy_measurements(42)
        spec = LossSpec.huber(1.0)
        result = solve(fixed_scenario, meas, spec)
        assert result.converged
        rep = kkt_residuals(result, fixed_scenario, meas, spec)
        assert rep.dual_x_residual <= 1e-3
        assert rep.d_stationarity <= 1e-3
        assert rep.primal_feasibility <= 1e-5
        assert rep.beta_norm_violation <= 1e-12

    def test_report_for_unconverged_run(self, fixed_scenario, noisy_measurements):
        result = solve(
            fixed_scenario, noisy_measurements(1), LossSpec.huber(1.0),
            AdmmConfig(max_iters=3),
        )
        assert not result.converged
        rep = kkt_residuals(result, fixed_scenario, noisy_measurements(1), LossSpec.huber(1.0))
        assert np.isfinite(rep.dual_x_residual)
        assert rep.primal_feasibility >= 0.0


class TestObjective:
    def test_objective_at_truth_noiseless_is_zero(self, fixed_scenario):
        meas = Measurements(ranges=true_ranges(fixed_scenario))
        for spec in LOSSES:
            assert objective_value(fixed_scenario.source, fixed_scenario, meas, spec) == 0.0

    def test_stopping_sum_zero_at_feasible(self, fixed_scenario):
        r = true_ranges(fixed_scenario)
        beta = (fixed_scenario.source - fixed_scenario.sensors) / r[:, None]
        state = AdmmState(x=fixed_scenario.source, d=r, beta=beta, lam=np.zeros((8, 2)))
        assert stopping_sum(state, fixed_scenario) <= 1e-12
