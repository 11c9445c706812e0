import numpy as np
import pytest

import vectorhost as vh
from vectorhost import verify
from vectorhost.errors import AdmissibilityError, ValidationError

from helpers import constants_coeffs, make_state


class TestThresholdExperiment:
    def test_endemic_scenario(self, neumann):
        mesh = vh.build_mesh(0, 1, 101)
        coeffs = constants_coeffs(mesh)
        init = make_state(mesh, 0.1, 0.8, 0.2)
        cfg = vh.StepperConfig(dt=0.0625, t_end=150.0)
        rep = verify.run_threshold_experiment(coeffs, neumann, init, cfg)
        assert rep.predicted_attractor == verify.ENDEMIC
        assert rep.lambda_system == pytest.approx(1 - np.sqrt(2), abs=1e-8)
        assert rep.final_sup_distance < 1e-4
        assert rep.time_to_tolerance is not None
        assert not rep.slow_regime
        assert np.allclose(rep.attractor.h_i.values, 1.0, atol=1e-8)
        # settled trajectories sit on the computed equilibrium, and the
        # uninfected-vector limit is V_B - V_i*
        assert rep.steady
        assert rep.final_sup_distance <= 10 * cfg.steady_tol
        eq = rep.equilibrium
        assert np.allclose(eq.v_u.values, rep.v_b.values - eq.v_i.values, atol=1e-12)

    def test_disease_free_scenario(self, neumann):
        mesh = vh.build_mesh(0, 1, 101)
        coeffs = constants_coeffs(mesh, h_u=0.5)
        init = make_state(mesh, 0.1, 0.8, 0.2)
        cfg = vh.StepperConfig(dt=0.0625, t_end=150.0)
        rep = verify.run_threshold_experiment(coeffs, neumann, init, cfg)
        assert rep.predicted_attractor == verify.DISEASE_FREE
        assert rep.lambda_system > 0
        assert rep.final_sup_distance < 1e-4
        assert np.allclose(rep.attractor.v_u.values, 1.0, atol=1e-9)

    def test_extinct_scenario(self, dirichlet):
        mesh = vh.build_mesh(0, np.pi, 101)
        coeffs = constants_coeffs(mesh, beta=0.5)
        bump = np.sin(mesh.nodes)
        init = vh.State(0.0,
                        vh.ScalarField(mesh, 0.2 * bump),
                        vh.ScalarField(mesh, 0.5 * bump),
                        vh.ScalarField(mesh, 0.2 * bump))
        dt = vh.stability_dt_max(coeffs, init)
        rep = verify.run_threshold_experiment(coeffs, dirichlet, init,
                                              vh.StepperConfig(dt=dt, t_end=150.0))
        assert rep.predicted_attractor == verify.EXTINCT
        assert rep.lambda_beta == pytest.approx(0.5, abs=2e-3)
        assert rep.lambda_system is None
        assert rep.final_sup_distance < 1e-4

    def test_requires_positive_interior_initial(self, neumann):
        mesh = vh.build_mesh(0, 1, 51)
        coeffs = constants_coeffs(mesh)
        init = make_state(mesh, 0.0, 0.8, 0.2)
        with pytest.raises(ValidationError):
            verify.run_threshold_experiment(coeffs, neumann, init,
                                            vh.StepperConfig(dt=0.05, t_end=1.0))

    def test_neumann_lambda_beta_always_negative(self, neumann):
        mesh = vh.build_mesh(0, 1, 101)
        for seed in range(5):
            rng = np.random.default_rng(500 + seed)
            coeffs = verify.random_coefficients(mesh, rng)
            eig = vh.principal_eigen_scalar(coeffs.d2, coeffs.beta, neumann)
            assert eig.lam <= -coeffs.beta.values.min() + 1e-9

    def test_threshold_boundary_smoke(self, neumann):
        """Exactly critical coupling (lambda = 0): the infection still decays
        toward disease-free, just slowly; the run is flagged slow-regime."""
        mesh = vh.build_mesh(0, 1, 101)
        coeffs = constants_coeffs(mesh, h_u=1.0)  # sigma1 h_u sigma2 V_B = 1 = rho mu V_B
        init = make_state(mesh, 0.1, 0.8, 0.2)
        cfg = vh.StepperConfig(dt=0.0625, t_end=100.0)
        rep = verify.run_threshold_experiment(coeffs, neumann, init, cfg)
        assert abs(rep.lambda_system) < 1e-8
        assert rep.predicted_attractor == verify.DISEASE_FREE
        assert rep.slow_regime
        final = rep.final_state
        assert vh.sup_norm(final.h_i) < 0.5 * vh.sup_norm(init.h_i)
        assert abs(final.v_u.values.mean() + final.v_i.values.mean() - 1.0) < 1e-5

    def test_classification_matches_empirics(self, neumann):
        """Away from the threshold the trajectory heads for the predicted
        attractor and not for either alternative."""
        mesh = vh.build_mesh(0, 1, 101)
        checked = 0
        seed = 0
        while checked < 6:
            seed += 1
            rng = np.random.default_rng(np.random.SeedSequence([2024, seed]))
            scenario = verify.random_scenario(mesh, neumann, rng)
            coeffs = scenario.coeffs
            eig = vh.principal_eigen_scalar(coeffs.d2, coeffs.beta, neumann)
            log = vh.solve_logistic(coeffs, neumann, scalar_eig=eig)
            sys_eig = vh.principal_eigen_system(coeffs, log.v_b, neumann)
            if abs(sys_eig.lam) < 0.05:
                continue
            checked += 1
            dt = vh.stability_dt_max(coeffs, scenario.initial)
            rep = verify.run_threshold_experiment(
                coeffs, neumann, scenario.initial,
                vh.StepperConfig(dt=dt, t_end=300.0))
            final = rep.final_state
            zero = vh.field_from_constant(mesh, 0.0)
            candidates = {
                verify.DISEASE_FREE: (zero, log.v_b, zero),
                verify.ENDEMIC: None,
            }
            if rep.equilibrium is not None:
                eq = rep.equilibrium
                candidates[verify.ENDEMIC] = (eq.h_i, eq.v_u, eq.v_i)
            dists = {}
            for name, trio in candidates.items():
                if trio is None:
                    continue
                dists[name] = max(
                    vh.sup_distance(final.h_i, trio[0]),
                    vh.sup_distance(final.v_u, trio[1]),
                    vh.sup_distance(final.v_i, trio[2]),
                )
            assert min(dists, key=dists.get) == rep.predicted_attractor, (
                f"seed {seed}: predicted {rep.predicted_attractor}, dists {dists}"
            )


class TestEnvelope:
    def _setup(self, beta=2.0):
        mesh = vh.build_mesh(0, np.pi, 201)
        coeffs = constants_coeffs(mesh, beta=beta)
        return mesh, coeffs

    def test_from_equilibrium_holds_immediately(self, dirichlet):
        mesh, coeffs = self._setup()
        log = vh.solve_logistic(coeffs, dirichlet)
        half = vh.ScalarField(mesh, 0.5 * log.v_b.values)
        init = vh.State(0.0, vh.ScalarField(mesh, np.zeros(mesh.n) + 0.0), half, half)
        # h_i is irrelevant to the scalar envelope; keep it zero
        dt = vh.stability_dt_max(coeffs, init)
        env = verify.check_envelope_dirichlet(coeffs, init, 0.05,
                                              vh.StepperConfig(dt=dt, t_end=20.0))
        assert env.t_eps == 0.0
        assert env.held_until_end

    def test_entry_time_found_and_held(self, dirichlet):
        mesh, coeffs = self._setup()
        bump = np.sin(mesh.nodes)
        small = vh.ScalarField(mesh, 0.05 * bump)
        init = vh.State(0.0, small, small, small)
        dt = vh.stability_dt_max(coeffs, init)
        env = verify.check_envelope_dirichlet(coeffs, init, 0.05,
                                              vh.StepperConfig(dt=dt, t_end=100.0))
        assert env.t_eps is not None and env.t_eps > 0
        assert env.held_until_end

    def test_inadmissible_eps_named(self, dirichlet):
        mesh, coeffs = self._setup()
        bump = np.sin(mesh.nodes)
        small = vh.ScalarField(mesh, 0.05 * bump)
        init = vh.State(0.0, small, small, small)
        with pytest.raises(AdmissibilityError):
            verify.check_envelope_dirichlet(coeffs, init, 5.0,
                                            vh.StepperConfig(dt=0.05, t_end=10.0))

    def test_requires_negative_lambda_beta(self, dirichlet):
        mesh, coeffs = self._setup(beta=0.5)
        bump = np.sin(mesh.nodes)
        small = vh.ScalarField(mesh, 0.05 * bump)
        init = vh.State(0.0, small, small, small)
        with pytest.raises(ValidationError):
            verify.check_envelope_dirichlet(coeffs, init, 0.05,
                                            vh.StepperConfig(dt=0.05, t_end=10.0))


class TestEndemicAbsence:
    def test_confirmed_for_weak_coupling(self, neumann):
        mesh = vh.build_mesh(0, 1, 101)
        rep = verify.check_endemic_absence(constants_coeffs(mesh, h_u=0.5), neumann)
        assert rep.applicable
        assert rep.absent_confirmed
        assert rep.collapse_sup < 1e-6
        assert rep.confirmed

    def test_not_applicable_for_strong_coupling(self, neumann):
        mesh = vh.build_mesh(0, 1, 101)
        rep = verify.check_endemic_absence(constants_coeffs(mesh, h_u=2.0), neumann)
        assert not rep.applicable
        assert rep.lambda_system < 0

    def test_coupling_sweep_absent_on_positive_side(self, neumann):
        mesh = vh.build_mesh(0, 1, 101)
        rng = np.random.default_rng(13)
        coeffs = verify.random_coefficients(mesh, rng)
        log = vh.solve_logistic(coeffs, neumann)
        for scale in (2.0, 1.0, 0.5, 0.25, 0.1, 0.02):
            scaled = vh.CoefficientSet(
                d1=coeffs.d1, d2=coeffs.d2, rho=coeffs.rho, sigma1=coeffs.sigma1,
                sigma2=coeffs.sigma2, beta=coeffs.beta, mu=coeffs.mu,
                h_u=vh.ScalarField(mesh, scale * coeffs.h_u.values),
            )
            eig = vh.principal_eigen_system(scaled, log.v_b, neumann)
            res = vh.solve_endemic(scaled, neumann, logistic=log, eigenpair=eig)
            if eig.lam > 1e-8:
                assert isinstance(res, vh.EndemicAbsent)
            elif eig.lam < -1e-8:
                assert isinstance(res, vh.EndemicEquilibrium)


class TestScenarioGenerator:
    def test_deterministic_for_fixed_seed(self, unit_mesh, neumann):
        a = verify.random_scenario(unit_mesh, neumann, np.random.default_rng(42))
        b = verify.random_scenario(unit_mesh, neumann, np.random.default_rng(42))
        assert np.array_equal(a.coeffs.beta.values, b.coeffs.beta.values)
        assert np.array_equal(a.initial.h_i.values, b.initial.h_i.values)
        c = verify.random_scenario(unit_mesh, neumann, np.random.default_rng(43))
        assert not np.array_equal(a.coeffs.beta.values, c.coeffs.beta.values)

    def test_coefficient_ranges(self, unit_mesh):
        rng = np.random.default_rng(1)
        for _ in range(20):
            f = verify.wavy_field(unit_mesh, rng)
            assert f.values.min() > 0
            assert 0.1 <= f.values.min() and f.values.max() <= 7.5

    def test_dirichlet_initial_zeroed_at_walls(self, unit_mesh, dirichlet):
        s = verify.random_initial(unit_mesh, dirichlet, np.random.default_rng(5))
        for f in (s.h_i, s.v_u, s.v_i):
            assert f.values[0] == 0.0 and f.values[-1] == 0.0
            assert f.values[unit_mesh.interior].min() > 0
