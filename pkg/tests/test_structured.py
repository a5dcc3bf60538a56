import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import (central_difference, example_cost, example_model,
                      rel_err, random_stable_instance)
from lqrsynth import (ArmijoStep, ConstantStep, CostSpec, DiminishingStep,
                      PgdConfig, StructureMask, SystemModel, dare_oracle,
                      gradient_model_based, pgd_run, project_structure)
from lqrsynth.errors import DimensionError, InstabilityError
from lqrsynth.structured import ModelObjective, exact_cost

finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestMask:
    def test_binary_only(self):
        with pytest.raises(ValueError):
            StructureMask([[1, 0.5]])

    def test_all_ones_identity(self, rng):
        F = rng.normal(size=(2, 3))
        np.testing.assert_array_equal(project_structure(F, StructureMask.full(2, 3)), F)

    def test_all_zeros(self, rng):
        F = rng.normal(size=(2, 3))
        np.testing.assert_array_equal(project_structure(F, StructureMask(np.zeros((2, 3)))), 0)

    def test_output_feedback_pattern(self):
        mask = StructureMask([[1, 0, 0, 1]])
        assert mask.contains([[-1.8359, 0.0, 0.0, 1.8120]])
        np.testing.assert_array_equal(mask.project([[1.0, 2.0, 3.0, 4.0]]), [[1.0, 0.0, 0.0, 4.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            project_structure(np.ones((1, 3)), StructureMask.full(1, 4))

    @settings(max_examples=60)
    @given(arrays(np.int8, (3, 4), elements=st.integers(0, 1)),
           arrays(float, (3, 4), elements=finite),
           arrays(float, (3, 4), elements=finite),
           finite)
    def test_projection_properties(self, pattern, X, Y, c):
        mask = StructureMask(pattern)
        PX, PY = mask.project(X), mask.project(Y)
        np.testing.assert_array_equal(mask.project(PX), PX)
        assert mask.contains(PX)
        np.testing.assert_allclose(mask.project(X + c * Y), PX + c * PY, rtol=1e-12, atol=1e-6)
        assert np.linalg.norm(PX - PY) <= np.linalg.norm(X - Y) * (1 + 1e-12)


class TestStepRules:
    @pytest.mark.parametrize("kwargs", [dict(sigma=0), dict(sigma=1), dict(beta=1.2), dict(gamma_max=0)])
    def test_armijo_validation(self, kwargs):
        with pytest.raises(ValueError):
            ArmijoStep(**kwargs)

    def test_positive_steps(self):
        with pytest.raises(ValueError):
            ConstantStep(0.0)
        with pytest.raises(ValueError):
            DiminishingStep(-1.0)


class TestGradient:
    def test_vanishes_at_riccati_gain(self):
        m, c = example_model(0.9), example_cost()
        _, g = dare_oracle(m, c)
        G = gradient_model_based(m, g.F, c, z=[1.0, -1.0])
        J = exact_cost(m, g.F, c, z=[1.0, -1.0])
        assert np.linalg.norm(G) <= 1e-6 * (1 + J)

    def test_no_input_path(self):
        m = SystemModel([[0.5, 0.1], [0.0, 0.3]], np.zeros((2, 1)))
        G = gradient_model_based(m, np.zeros((1, 2)), CostSpec(np.eye(2), [[1.0]]), z=[1.0, 2.0])
        np.testing.assert_allclose(G, 0, atol=1e-14)

    def test_double_integrator_fd(self):
        m, c = example_model(0.9), example_cost()
        F = np.array([[-0.4, -1.2]])
        z = np.array([1.0, -1.0])
        G = gradient_model_based(m, F, c, z=z)
        fd = central_difference(lambda X: exact_cost(m, X, c, z=z), F)
        assert rel_err(G, fd) <= 1e-5

    @pytest.mark.parametrize("seed", range(20))
    def test_fd_random(self, seed):
        rng = np.random.default_rng(1000 + seed)
        model, cost, F = random_stable_instance(rng, target=rng.uniform(0.3, 0.8))
        z = rng.normal(size=model.n)
        G = gradient_model_based(model, F, cost, z=z)
        fd = central_difference(lambda X: exact_cost(model, X, cost, z=z), F)
        assert rel_err(G, fd) <= 1e-5

    @pytest.mark.parametrize("seed", range(10))
    def test_simulated_matches_exact(self, seed):
        rng = np.random.default_rng(2000 + seed)
        model, cost, F = random_stable_instance(rng, target=rng.uniform(0.3, 0.8))
        z = rng.normal(size=model.n)
        ex = ModelObjective(model, cost, z=z).cost_and_gradient(F)
        sim = ModelObjective(model, cost, z=z, mode="simulated").cost_and_gradient(F)
        assert sim[0] == pytest.approx(ex[0], rel=1e-6)
        assert rel_err(sim[1], ex[1]) <= 1e-5

    def test_unstable(self):
        with pytest.raises(InstabilityError):
            gradient_model_based(example_model(), np.zeros((1, 2)), example_cost(), z=[1.0, 0.0])

    def test_exact_cost_unstable_is_inf(self):
        assert exact_cost(example_model(), np.zeros((1, 2)), example_cost(), z=[1.0, 0.0]) == np.inf


class TestPgd:
    def setup_method(self):
        self.m = example_model(0.9)
        self.c = example_cost()
        self.F0 = np.array([[-0.3, -1.0]])

    def test_huge_tolerance_returns_F0(self):
        run = pgd_run(self.m, self.c, StructureMask.full(1, 2), self.F0, [1.0, -1.0],
                      PgdConfig(grad_tol=1e12))
        assert run.steps == 0 and run.reason == "converged"
        np.testing.assert_array_equal(run.gain.F, self.F0)

    def test_F0_outside_mask(self):
        with pytest.raises(ValueError):
            pgd_run(self.m, self.c, StructureMask([[1, 0]]), self.F0, [1.0, -1.0])

    def test_F0_unstable(self):
        with pytest.raises(InstabilityError):
            pgd_run(self.m, self.c, StructureMask.full(1, 2), [[1.0, 1.0]], [1.0, -1.0])

    def test_constant_step_blowup_names_iteration(self):
        with pytest.raises(InstabilityError) as info:
            pgd_run(self.m, self.c, StructureMask.full(1, 2), self.F0, [1.0, -1.0],
                    PgdConfig(step_rule=ConstantStep(10.0)))
        assert info.value.iteration == 1 and "iterate 1" in str(info.value)

    def test_recovers_riccati_gain(self):
        run = pgd_run(self.m, self.c, StructureMask.full(1, 2), self.F0, np.eye(2),
                      PgdConfig(grad_tol=1e-6, max_iter=5000))
        _, g = dare_oracle(self.m, self.c)
        assert run.reason == "converged"
        np.testing.assert_allclose(run.gain.F, g.F, atol=1e-2)
        assert np.all(np.diff(run.costs) <= 0)

    def test_diminishing_decreases_cost(self):
        run = pgd_run(self.m, self.c, StructureMask.full(1, 2), self.F0, np.eye(2),
                      PgdConfig(step_rule=DiminishingStep(1e-3), max_iter=200))
        assert run.costs[-1] < run.costs[0]

    def test_structured_stationarity(self):
        # 1 x 4 output-feedback pattern on a stable four-state chain
        A = 0.5 * np.eye(4) + 0.3 * np.eye(4, k=1)
        B = np.array([[0.0], [0.0], [0.0], [1.0]])
        m = SystemModel(A, B, 0.9)
        c = CostSpec(np.eye(4), [[0.5]])
        mask = StructureMask([[1, 0, 0, 1]])
        z = np.array([1.0, -1.0, 0.5, 1.0])
        run = pgd_run(m, c, mask, np.zeros((1, 4)), z, PgdConfig(grad_tol=1e-4, max_iter=5000))
        assert run.reason == "converged"
        assert np.all(np.diff(run.costs) <= 0)
        for it in run.iterates:
            assert mask.contains(it.F)
        assert np.linalg.norm(mask.project(gradient_model_based(m, run.gain.F, c, z=z))) <= 1e-4

    def test_armijo_sufficient_decrease(self):
        rule = ArmijoStep()
        run = pgd_run(self.m, self.c, StructureMask.full(1, 2), self.F0, np.eye(2),
                      PgdConfig(step_rule=rule, grad_tol=1e-6, max_iter=200))
        its = run.iterates
        for a, b in zip(its, its[1:]):
            step = np.linalg.norm(b.F - a.F)
            gamma = step / a.grad_norm
            assert b.J <= a.J - rule.sigma * gamma * a.grad_norm ** 2 + 1e-12 * abs(a.J)

    def test_simulated_mode(self):
        run = pgd_run(self.m, self.c, StructureMask.full(1, 2), self.F0, np.eye(2),
                      PgdConfig(grad_tol=1e-5, max_iter=2000), mode="simulated")
        _, g = dare_oracle(self.m, self.c)
        np.testing.assert_allclose(run.gain.F, g.F, atol=1e-2)

    def test_history_off_keeps_last(self):
        run = pgd_run(self.m, self.c, StructureMask.full(1, 2), self.F0, np.eye(2),
                      PgdConfig(max_iter=5, record_history=False))
        assert len(run.iterates) == 1 and run.steps == 5
