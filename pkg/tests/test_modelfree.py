import numpy as np
import pytest

from conftest import (central_difference, example_cost, example_model,
                      random_psd, random_stable_instance, rel_err)
from lqrsynth import (BlockSym, CostSpec, ExcitationSpec, LinearSystemSource,
                      PgdConfig, StructureMask, closed_loop, dare_oracle,
                      gradient_model_based, gradient_model_free,
                      pgd_modelfree_run, pgd_run, rollout_augmented,
                      solve_stein_covariance, solve_stein_value,
                      solve_value_from_data)
from lqrsynth.errors import ExcitationError, InstabilityError
from lqrsynth.modelfree import DataObjective
from lqrsynth.structured import exact_cost
from lqrsynth.trajectory import auto_horizon


def exact_data(model, F, Gamma):
    S = solve_stein_covariance(model, F, Gamma)
    return S, closed_loop(model, F) @ S.M


class TestValueFromData:
    def test_zero_discount_returns_lambda(self, rng):
        c = CostSpec(np.diag([1.0, 2.0]), [[0.3]])
        S = BlockSym(random_psd(rng, 3, shift=0.5), 2)
        P = solve_value_from_data(S, rng.normal(size=(3, 3)), c, 0.0)
        np.testing.assert_allclose(P.M, c.Lambda, atol=1e-10)

    @pytest.mark.parametrize("seed", range(20))
    def test_exact_data_matches_stein(self, seed):
        rng = np.random.default_rng(seed)
        model, cost, F = random_stable_instance(rng)
        S, W = exact_data(model, F, np.eye(model.n + model.m))
        P = solve_value_from_data(S, W, cost, model.alpha)
        ref = solve_stein_value(model, F, cost.Lambda)
        assert np.linalg.norm(P.M - ref.M) <= 1e-6 * np.linalg.norm(ref.M)

    @pytest.mark.parametrize("seed", range(10))
    def test_truncated_data(self, seed):
        rng = np.random.default_rng(50 + seed)
        model, cost, F = random_stable_instance(rng, target=rng.uniform(0.3, 0.8))
        k = model.n + model.m
        S, W = rollout_augmented(model, F, np.eye(k), auto_horizon(model, F))
        P = solve_value_from_data(S, W, cost, model.alpha)
        ref = solve_stein_value(model, F, cost.Lambda)
        assert np.linalg.norm(P.M - ref.M) <= 1e-4 * np.linalg.norm(ref.M)

    def test_any_finite_horizon_is_exact(self, rng):
        # W = A_F S~ holds at every M, so P is exact no matter how S~ was formed
        model, cost, F = random_stable_instance(rng)
        k = model.n + model.m
        S, W = rollout_augmented(model, F, rng.normal(size=(k, k)), 3)
        P = solve_value_from_data(S, W, cost, model.alpha)
        ref = solve_stein_value(model, F, cost.Lambda)
        assert np.linalg.norm(P.M - ref.M) <= 1e-6 * np.linalg.norm(ref.M)

    def test_singular_excitation(self):
        c = example_cost()
        S = BlockSym(np.diag([1.0, 1.0, 0.0]), 2)
        with pytest.raises(ExcitationError):
            solve_value_from_data(S, np.zeros((3, 3)), c, 0.9)


class TestGradientModelFree:
    def test_zero_weight(self, rng):
        G = random_psd(rng, 3, shift=1.0)
        S = BlockSym(G.copy(), 2)
        P = BlockSym(random_psd(rng, 3), 2)
        np.testing.assert_allclose(gradient_model_free(P, S, rng.normal(size=(1, 2)), G), 0, atol=1e-12)

    def test_zero_gain_and_cross_block(self, rng):
        P = BlockSym(np.diag([1.0, 2.0, 3.0]), 2)
        S = BlockSym(random_psd(rng, 3, shift=1.0), 2)
        g = gradient_model_free(P, S, np.zeros((1, 2)), ExcitationSpec(Gamma=np.eye(3)))
        np.testing.assert_array_equal(g, 0)

    @pytest.mark.parametrize("seed", range(20))
    def test_fd_random(self, seed):
        rng = np.random.default_rng(3000 + seed)
        model, cost, F = random_stable_instance(rng, target=rng.uniform(0.3, 0.8))
        k = model.n + model.m
        Gamma = random_psd(rng, k, shift=0.5)
        S, W = exact_data(model, F, Gamma)
        P = solve_value_from_data(S, W, cost, model.alpha)
        g = gradient_model_free(P, S, F, Gamma)
        fd = central_difference(lambda X: exact_cost(model, X, cost, Gamma=Gamma), F)
        assert rel_err(g, fd) <= 1e-5

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_model_based(self, seed):
        rng = np.random.default_rng(4000 + seed)
        model, cost, F = random_stable_instance(rng)
        k = model.n + model.m
        Gamma = random_psd(rng, k, shift=0.5)
        S, W = exact_data(model, F, Gamma)
        g = gradient_model_free(solve_value_from_data(S, W, cost, model.alpha), S, F, Gamma)
        ref = gradient_model_based(model, F, cost, Gamma=Gamma)
        assert np.linalg.norm(g - ref) <= 1e-6 * (1 + np.linalg.norm(ref))


class TestPgdModelFree:
    def setup_method(self):
        self.model = example_model(0.9)
        self.src = LinearSystemSource(self.model)
        self.cost = example_cost()
        self.F0 = np.array([[-0.3, -1.0]])

    def test_huge_tolerance(self):
        run = pgd_modelfree_run(self.src, self.cost, StructureMask.full(1, 2), self.F0,
                                cfg=PgdConfig(grad_tol=1e12))
        assert run.steps == 0
        np.testing.assert_array_equal(run.gain.F, self.F0)

    def test_unstable_start(self):
        with pytest.raises(InstabilityError):
            pgd_modelfree_run(self.src, self.cost, StructureMask.full(1, 2), [[1.0, 1.0]])

    def test_rank_deficient_seeds(self):
        with pytest.raises(ExcitationError):
            pgd_modelfree_run(self.src, self.cost, StructureMask.full(1, 2), self.F0,
                              v_set=np.eye(3)[:2])

    def test_pilot_radius_identifies_loop(self):
        obj = DataObjective(self.src, self.cost, np.eye(3))
        from lqrsynth import spectral_radius
        expect = np.sqrt(0.9) * spectral_radius(self.model.A + self.model.B @ self.F0)
        assert obj.radius(self.F0) == pytest.approx(expect, rel=1e-8)

    def test_converges_to_riccati(self):
        run = pgd_modelfree_run(self.src, self.cost, StructureMask.full(1, 2), self.F0,
                                cfg=PgdConfig(grad_tol=1e-4))
        _, g = dare_oracle(self.model, self.cost)
        assert run.reason == "converged"
        np.testing.assert_allclose(run.gain.F, g.F, atol=5e-2)
        assert np.all(np.diff(run.costs) <= 0)

    def test_per_iteration_direction_agrees(self):
        cfg = PgdConfig(grad_tol=1e-4, max_iter=15)
        mask = StructureMask.full(1, 2)
        free = pgd_modelfree_run(self.src, self.cost, mask, self.F0, cfg=cfg)
        for it in free.iterates:
            obj = DataObjective(self.src, self.cost, np.eye(3))
            _, d_free = obj.cost_and_gradient(it.F)
            d_based = gradient_model_based(self.model, it.F, self.cost, Gamma=np.eye(3))
            assert np.linalg.norm(d_free - d_based) <= 1e-3 * (1 + np.linalg.norm(d_based))

    def test_structured_mask(self):
        mask = StructureMask([[0, 1]])
        F0 = np.array([[0.0, -1.0]])
        free = pgd_modelfree_run(self.src, self.cost, mask, F0, cfg=PgdConfig(grad_tol=1e-4))
        based = pgd_run(self.model, self.cost, mask, F0, None, PgdConfig(grad_tol=1e-6),
                        Gamma=np.eye(3))
        assert free.gain.F[0, 0] == 0
        np.testing.assert_allclose(free.gain.F, based.gain.F, atol=5e-2)
