import numpy as np
import pytest

import vectorhost as vh
from vectorhost.errors import SingularSystemError, ValidationError
from vectorhost.operators import ShiftedSolve, assemble, solve


def unit_d(mesh):
    return vh.field_from_constant(mesh, 1.0)


class TestAssembly:
    def test_neumann_matrix_five_nodes(self):
        mesh = vh.build_mesh(0, 1, 5)  # h = 0.25, 1/h^2 = 16
        op = assemble(unit_d(mesh), vh.BoundarySpec.neumann())
        expected = np.array(
            [
                [32, -32, 0, 0, 0],
                [-16, 32, -16, 0, 0],
                [0, -16, 32, -16, 0],
                [0, 0, -16, 32, -16],
                [0, 0, 0, -32, 32],
            ],
            dtype=float,
        )
        assert np.allclose(op.matrix(), expected, atol=1e-12)
        assert np.allclose(op.matrix().sum(axis=1), 0.0, atol=1e-12)

    def test_dirichlet_matrix_five_nodes(self):
        mesh = vh.build_mesh(0, 1, 5)
        op = assemble(unit_d(mesh), vh.BoundarySpec.dirichlet())
        expected = np.array([[32, -16, 0], [-16, 32, -16], [0, -16, 32]], dtype=float)
        assert np.allclose(op.matrix(), expected, atol=1e-12)

    def test_robin_adds_wall_terms(self):
        mesh = vh.build_mesh(0, 1, 5)
        op = assemble(unit_d(mesh), vh.BoundarySpec.robin(2.0, 3.0))
        m = op.matrix()
        # wall diagonal gains 2 b d_face / h
        assert m[0, 0] == pytest.approx(32 + 2 * 2.0 / 0.25)
        assert m[-1, -1] == pytest.approx(32 + 2 * 3.0 / 0.25)
        assert m[0, 1] == -32.0

    def test_robin_zero_matches_neumann(self, unit_mesh):
        a = assemble(unit_d(unit_mesh), vh.BoundarySpec.neumann()).matrix()
        b = assemble(unit_d(unit_mesh), vh.BoundarySpec.robin(0.0, 0.0)).matrix()
        assert np.array_equal(a, b)

    def test_rejects_nonpositive_diffusion(self, unit_mesh):
        bad = np.ones(unit_mesh.n)
        bad[3] = -0.5
        with pytest.raises(ValidationError):
            assemble(vh.ScalarField(unit_mesh, bad), vh.BoundarySpec.neumann())

    def test_spd_with_weights(self, unit_mesh):
        rng = np.random.default_rng(5)
        d = vh.ScalarField(unit_mesh, 1.0 + rng.uniform(0, 2, unit_mesh.n))
        for bc in (vh.BoundarySpec.neumann(), vh.BoundarySpec.robin(1.0, 0.5),
                   vh.BoundarySpec.dirichlet()):
            op = assemble(d, bc)
            wa = op.weights[:, None] * op.matrix()
            assert np.allclose(wa, wa.T, atol=1e-10)
            eigs = np.linalg.eigvalsh(0.5 * (wa + wa.T))
            assert eigs.min() >= -1e-9


class TestApply:
    def test_constants_in_neumann_kernel(self, unit_mesh):
        op = assemble(unit_d(unit_mesh), vh.BoundarySpec.neumann())
        lu = op.apply(vh.field_from_constant(unit_mesh, 1.0))
        assert np.abs(lu).max() < 1e-12

    @pytest.mark.parametrize("kind", ["neumann", "dirichlet"])
    def test_exact_on_quadratic_interior(self, unit_mesh, kind):
        bc = vh.BoundarySpec(kind)
        op = assemble(unit_d(unit_mesh), bc)
        u = vh.ScalarField(unit_mesh, unit_mesh.nodes**2)
        lu = op.apply(u)
        assert np.allclose(lu[1:-1], 2.0, atol=1e-10)

    def test_dirichlet_sine_second_derivative(self):
        mesh = vh.build_mesh(0, np.pi, 201)
        op = assemble(unit_d(mesh), vh.BoundarySpec.dirichlet())
        u = vh.ScalarField(mesh, np.sin(mesh.nodes))
        lu = op.apply(u)
        err = np.abs(lu[1:-1] + np.sin(mesh.nodes[1:-1])).max()
        # second-difference truncation ~ h^2/12 for sin
        assert err < 1e-4

    def test_weighted_symmetry_random_fields(self, unit_mesh):
        rng = np.random.default_rng(11)
        d = vh.ScalarField(unit_mesh, 0.5 + rng.uniform(0, 2, unit_mesh.n))
        for bc in (vh.BoundarySpec.neumann(), vh.BoundarySpec.robin(0.7, 1.3)):
            op = assemble(d, bc)
            for _ in range(10):
                u = rng.normal(size=unit_mesh.n)
                v = rng.normal(size=unit_mesh.n)
                lhs = float((op.weights * op.matvec(u) * v).sum())
                rhs = float((op.weights * u * op.matvec(v)).sum())
                scale = 1.0 + abs(lhs) + abs(rhs)
                assert abs(lhs - rhs) <= 1e-12 * scale


class TestSolve:
    def test_constant_solution(self, unit_mesh):
        op = assemble(unit_d(unit_mesh), vh.BoundarySpec.neumann())
        u = solve(op, vh.field_from_constant(unit_mesh, 1.0),
                  vh.field_from_constant(unit_mesh, 3.0))
        assert np.allclose(u.values, 3.0, atol=1e-12)

    def test_singular_neumann_reported(self, unit_mesh):
        op = assemble(unit_d(unit_mesh), vh.BoundarySpec.neumann())
        with pytest.raises(SingularSystemError):
            solve(op, vh.field_from_constant(unit_mesh, 0.0),
                  vh.field_from_constant(unit_mesh, 1.0))
        # Robin with b = 0 has the same kernel
        opr = assemble(unit_d(unit_mesh), vh.BoundarySpec.robin(0.0, 0.0))
        with pytest.raises(SingularSystemError):
            solve(opr, vh.field_from_constant(unit_mesh, 0.0),
                  vh.field_from_constant(unit_mesh, 1.0))

    def test_negative_potential_rejected(self, unit_mesh):
        op = assemble(unit_d(unit_mesh), vh.BoundarySpec.neumann())
        with pytest.raises(ValidationError):
            solve(op, vh.field_from_constant(unit_mesh, -1.0),
                  vh.field_from_constant(unit_mesh, 1.0))

    def test_dirichlet_sine_analytic(self):
        # -u'' = sin on (0, pi) with zero walls has solution sin
        mesh = vh.build_mesh(0, np.pi, 201)
        op = assemble(unit_d(mesh), vh.BoundarySpec.dirichlet())
        u = solve(op, vh.field_from_constant(mesh, 0.0),
                  vh.ScalarField(mesh, np.sin(mesh.nodes)))
        assert u.values[0] == 0.0 and u.values[-1] == 0.0
        assert np.abs(u.values - np.sin(mesh.nodes)).max() < 1e-4

    def test_solve_residual_random(self, unit_mesh):
        rng = np.random.default_rng(3)
        d = vh.ScalarField(unit_mesh, 0.5 + rng.uniform(0, 1, unit_mesh.n))
        c = 0.1 + rng.uniform(0, 1, unit_mesh.n)
        for bc in (vh.BoundarySpec.neumann(), vh.BoundarySpec.dirichlet(),
                   vh.BoundarySpec.robin(1.0, 2.0)):
            op = assemble(d, bc)
            shifted = ShiftedSolve(op, c)
            f = rng.normal(size=unit_mesh.n)
            u = shifted.solve(f)
            ua = op.restrict(u)
            res = op.matvec(ua) + c[op.sl] * ua - f[op.sl]
            assert np.abs(res).max() <= 1e-12 * (1 + np.abs(f).max() + np.abs(op.diag).max() * np.abs(ua).max())

    def test_discrete_maximum_principle(self, unit_mesh):
        rng = np.random.default_rng(9)
        op = assemble(unit_d(unit_mesh), vh.BoundarySpec.dirichlet())
        f = np.abs(rng.normal(size=unit_mesh.n))
        u = solve(op, vh.field_from_constant(unit_mesh, 1.0), vh.ScalarField(unit_mesh, f))
        assert u.values[unit_mesh.interior].min() > 0

    def test_comparison_ordered_rhs(self, unit_mesh):
        rng = np.random.default_rng(21)
        d = vh.ScalarField(unit_mesh, 0.5 + rng.uniform(0, 1, unit_mesh.n))
        c = vh.ScalarField(unit_mesh, 0.2 + rng.uniform(0, 1, unit_mesh.n))
        for bc in (vh.BoundarySpec.neumann(), vh.BoundarySpec.dirichlet()):
            op = assemble(d, bc)
            for _ in range(10):
                f1 = rng.normal(size=unit_mesh.n)
                f2 = f1 + rng.uniform(0, 1, size=unit_mesh.n)
                u1 = solve(op, c, vh.ScalarField(unit_mesh, f1)).values
                u2 = solve(op, c, vh.ScalarField(unit_mesh, f2)).values
                assert np.all(u2 - u1 >= -1e-12 * (1 + np.abs(u1).max()))

    def test_order_of_accuracy(self):
        # manufactured: u = cos(pi x), d = 1 + 0.5 sin(pi x), c = 1 on (0,1), Neumann
        def solve_err(n):
            mesh = vh.build_mesh(0, 1, n)
            x = mesh.nodes
            d = vh.ScalarField(mesh, 1 + 0.5 * np.sin(np.pi * x))
            u_exact = np.cos(np.pi * x)
            f = (
                np.pi**2 * np.cos(np.pi * x) * (1 + 0.5 * np.sin(np.pi * x))
                + 0.5 * np.pi**2 * np.sin(np.pi * x) * np.cos(np.pi * x)
                + u_exact
            )
            op = assemble(d, vh.BoundarySpec.neumann())
            u = solve(op, vh.field_from_constant(mesh, 1.0), vh.ScalarField(mesh, f))
            return np.abs(u.values - u_exact).max()

        e1, e2 = solve_err(101), solve_err(201)
        assert 3.5 < e1 / e2 < 4.5, f"expected ~4x error reduction, got {e1 / e2:.2f}"


class TestShiftedSolve:
    def test_reusable_factorization(self, unit_mesh):
        rng = np.random.default_rng(17)
        op = assemble(unit_d(unit_mesh), vh.BoundarySpec.neumann())
        shifted = ShiftedSolve(op, np.full(unit_mesh.n, 2.0))
        for _ in range(5):
            f = rng.normal(size=unit_mesh.n)
            u = shifted.solve(f)
            res = op.matvec(u) + 2.0 * u - f
            assert np.abs(res).max() <= 1e-11 * (1 + np.abs(f).max())

    def test_scalar_potential_accepted(self, unit_mesh):
        op = assemble(unit_d(unit_mesh), vh.BoundarySpec.neumann())
        shifted = ShiftedSolve(op, 1.5)
        u = shifted.solve(np.full(unit_mesh.n, 3.0))
        assert np.allclose(u, 2.0, atol=1e-12)
