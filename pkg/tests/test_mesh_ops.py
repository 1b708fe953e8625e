"""
演算子組み立てのテスト（対称性・レイアウト・境界寄与）
"""
import numpy as np
import pytest

from backend.models.grid import BoundaryCondition, BoundaryKind, GridSpec
from backend.models.operators import ActuatorDisk
from backend.utils.cases import inflow_profile
from backend.utils.error_helpers import ValidationError
from backend.utils.mesh_ops import (
    assemble_body_force, build_fom_operators, build_grid, convection, convection_jacobian,
    convection_matrix,
)
from conftest import TWO_PI, make_periodic_ops, random_solenoidal


class TestLayout:

    def test_periodic_layout_has_two_unknowns_per_cell(self, periodic_ops):
        assert periodic_ops.n_V == 2 * periodic_ops.n_p
        assert periodic_ops.n_u == periodic_ops.n_p

    def test_cavity_drops_wall_normal_faces(self, cavity_setup):
        grid = cavity_setup.grid
        assert grid.n_u == (grid.nx - 1) * grid.ny
        assert grid.n_v == grid.nx * (grid.ny - 1)

    def test_actuator_keeps_outflow_faces(self, actuator_setup):
        grid = actuator_setup.grid
        assert (grid.k_first, grid.k_last) == (1, grid.nx)
        assert (grid.l_first, grid.l_last) == (0, grid.ny)
        assert grid.n_u == 24 * 8
        assert grid.n_v == 24 * 9

    def test_periodic_faces_wrap(self):
        grid = GridSpec(4, 4, (0.0, 1.0), (0.0, 1.0))
        assert grid.u_index(0, 0) == grid.u_index(4, 0)
        assert grid.v_index(0, -1) == grid.v_index(0, 3)


class TestGridValidation:

    def test_single_cell_rejected(self):
        with pytest.raises(ValidationError):
            build_grid(GridSpec(1, 4, (0.0, 1.0), (0.0, 1.0)))

    def test_unpaired_periodic_rejected(self):
        spec = GridSpec(4, 4, (0.0, 1.0), (0.0, 1.0), bc_east=BoundaryCondition.no_slip())
        with pytest.raises(ValidationError):
            build_grid(spec)

    def test_dirichlet_without_profile_rejected(self):
        wall = BoundaryCondition.no_slip()
        spec = GridSpec(4, 4, (0.0, 1.0), (0.0, 1.0), bc_west=wall, bc_east=wall, bc_south=wall,
                        bc_north=BoundaryCondition(BoundaryKind.DIRICHLET))
        with pytest.raises(ValidationError):
            build_grid(spec)

    def test_empty_range_rejected(self):
        with pytest.raises(ValidationError):
            build_grid(GridSpec(4, 4, (1.0, 1.0), (0.0, 1.0)))


class TestSymmetries:

    @pytest.mark.parametrize('name', ['periodic', 'cavity', 'actuator'])
    def test_gradient_is_negative_divergence_transpose(self, name, periodic_ops, cavity_setup, actuator_setup):
        ops = {'periodic': periodic_ops, 'cavity': cavity_setup.ops, 'actuator': actuator_setup.ops}[name]
        assert abs(ops.G + ops.M.T).max() == 0.0

    def test_convection_is_skew_symmetric_for_solenoidal_fields(self, periodic_ops, rng):
        for V in random_solenoidal(periodic_ops, rng, 50).T:
            C = convection_matrix(periodic_ops, V).toarray()
            assert np.abs(C + C.T).max() <= 1e-14 * np.abs(C).max()

    def test_convection_does_no_work(self, periodic_ops, rng):
        V = random_solenoidal(periodic_ops, rng)[:, 0]
        C = convection(periodic_ops, V, V)
        assert abs(V @ C) <= 1e-12 * np.abs(V).max() * np.abs(C).sum()

    def test_convection_matrix_matches_bilinear_form(self, periodic_ops, rng):
        V_c, V_u = rng.standard_normal((2, periodic_ops.n_V))
        np.testing.assert_allclose(convection_matrix(periodic_ops, V_c) @ V_u,
                                   convection(periodic_ops, V_c, V_u), rtol=0.0, atol=1e-12)

    @pytest.mark.parametrize('name', ['periodic', 'cavity', 'actuator'])
    def test_diffusion_is_negative_semidefinite(self, name, periodic_ops, cavity_setup, actuator_setup):
        ops = {'periodic': periodic_ops, 'cavity': cavity_setup.ops, 'actuator': actuator_setup.ops}[name]
        D = ops.D.toarray()
        scale = np.abs(D).max()
        assert np.abs(D - D.T).max() <= 1e-14 * scale
        assert np.linalg.eigvalsh(D).max() <= 1e-12 * scale

    def test_poisson_matrix_is_symmetric(self, cavity_setup):
        L = cavity_setup.ops.L.toarray()
        assert np.abs(L - L.T).max() <= 1e-14 * np.abs(L).max()

    def test_periodic_poisson_null_space_is_constant(self):
        ops = make_periodic_ops(6)
        np.testing.assert_allclose(ops.L @ np.ones(ops.n_p), 0.0, atol=1e-12)

    def test_convection_matrix_rejects_outflow_grids(self, actuator_setup):
        with pytest.raises(ValidationError):
            convection_matrix(actuator_setup.ops, np.zeros(actuator_setup.ops.n_V))


def _skew_form(ops, V):
    """周期格子での歪対称形 ½[F_e u_E - F_w u_W + F_n u_N - F_s u_S]（面フラックスは隣接平均）"""
    grid = ops.grid
    dx, dy = grid.dx, grid.dy

    def u(k, j):
        return V[grid.u_index(k, j)]

    def v(i, l):
        return V[grid.v_index(i, l)]

    out = np.zeros(ops.n_V)
    for idx, k, j in grid.u_unknowns():
        F_e = dy * (u(k, j) + u(k + 1, j)) / 2
        F_w = dy * (u(k - 1, j) + u(k, j)) / 2
        F_n = dx * (v(k - 1, j + 1) + v(k, j + 1)) / 2
        F_s = dx * (v(k - 1, j) + v(k, j)) / 2
        out[idx] = 0.5 * (F_e * u(k + 1, j) - F_w * u(k - 1, j) + F_n * u(k, j + 1) - F_s * u(k, j - 1))
    for idx, i, l in grid.v_unknowns():
        F_n = dx * (v(i, l) + v(i, l + 1)) / 2
        F_s = dx * (v(i, l - 1) + v(i, l)) / 2
        F_e = dy * (u(i + 1, l - 1) + u(i + 1, l)) / 2
        F_w = dy * (u(i, l - 1) + u(i, l)) / 2
        out[idx] = 0.5 * (F_e * v(i + 1, l) - F_w * v(i - 1, l) + F_n * v(i, l + 1) - F_s * v(i, l - 1))
    return out


class TestConvectionForms:

    def test_momentum_sums_telescope(self, periodic_ops, rng):
        C = convection(periodic_ops, *rng.standard_normal((2, periodic_ops.n_V)))
        n_u = periodic_ops.n_u
        assert abs(C[:n_u].sum()) <= 1e-13 * np.abs(C).sum()
        assert abs(C[n_u:].sum()) <= 1e-13 * np.abs(C).sum()

    def test_divergence_form_equals_skew_form(self, rng):
        ops = build_fom_operators(GridSpec(8, 6, (0.0, TWO_PI), (0.0, 1.0)))
        for V in random_solenoidal(ops, rng, 5).T:
            C = convection(ops, V, V)
            assert np.abs(C - _skew_form(ops, V)).max() <= 1e-13 * np.abs(C).max()

    def test_interpolation_rows_average_two_neighbours(self, periodic_ops):
        A = periodic_ops.A_op.tocsr()
        assert np.all(np.diff(A.indptr) == 2)
        np.testing.assert_allclose(A.data, 0.5)
        I_op = periodic_ops.I_op.tocsr()
        assert np.all(np.diff(I_op.indptr) == 2)


class TestStencils:

    def test_two_by_two_divergence_rows(self):
        grid = GridSpec(2, 2, (0.0, TWO_PI), (0.0, 1.0))
        M = build_fom_operators(grid).M.tocsr()
        expected = sorted([grid.dy, -grid.dy, grid.dx, -grid.dx])
        for c in range(grid.n_p):
            row = M.getrow(c)
            assert row.nnz == 4
            np.testing.assert_allclose(sorted(row.data), expected, rtol=1e-15)

    def test_periodic_diffusion_stencil(self):
        grid = GridSpec(8, 6, (0.0, TWO_PI), (0.0, 1.0))
        D = build_fom_operators(grid).D.tocsr()
        rx, ry = grid.dy / grid.dx, grid.dx / grid.dy
        for idx, k, j in grid.u_unknowns():
            assert D.getrow(idx).nnz == 5
            assert D[idx, idx] == pytest.approx(-2.0 * rx - 2.0 * ry, rel=1e-14)
            for nb in (grid.u_index(k + 1, j), grid.u_index(k - 1, j)):
                assert D[idx, nb] == pytest.approx(rx, rel=1e-14)
            for nb in (grid.u_index(k, j + 1), grid.u_index(k, j - 1)):
                assert D[idx, nb] == pytest.approx(ry, rel=1e-14)
        for idx, i, l in grid.v_unknowns():
            assert D.getrow(idx).nnz == 5
            assert D[idx, idx] == pytest.approx(-2.0 * rx - 2.0 * ry, rel=1e-14)
            for nb in (grid.v_index(i + 1, l), grid.v_index(i - 1, l)):
                assert D[idx, nb] == pytest.approx(rx, rel=1e-14)
            for nb in (grid.v_index(i, l + 1), grid.v_index(i, l - 1)):
                assert D[idx, nb] == pytest.approx(ry, rel=1e-14)


class TestBoundaryContributions:

    def test_lid_enters_diffusion_not_divergence(self, cavity_setup):
        ops, grid = cavity_setup.ops, cavity_setup.grid
        assert not np.any(ops.y_M)

        top_row = {grid.u_index(k, grid.ny - 1) for k in range(grid.k_first, grid.k_last + 1)}
        assert set(np.flatnonzero(ops.y_D)) == top_row
        np.testing.assert_allclose(ops.y_D[sorted(top_row)], 2.0 * grid.dx / grid.dy)

    def test_inflow_enters_divergence(self, actuator_setup):
        ops, grid = actuator_setup.ops, actuator_setup.grid
        for j in range(grid.ny):
            expected = grid.dy * inflow_profile(grid.y_center(j))[0]
            assert ops.y_M[j * grid.nx] == pytest.approx(expected)
        assert np.count_nonzero(ops.y_M) == grid.ny

    def test_outflow_pressure_enters_gradient_vector(self):
        wall = BoundaryCondition.no_slip()
        spec = GridSpec(4, 3, (0.0, 2.0), (0.0, 1.5), bc_west=wall, bc_east=BoundaryCondition.outflow(2.0),
                        bc_south=wall, bc_north=wall)
        ops = build_fom_operators(spec)
        east = [spec.u_index(spec.nx, j) for j in range(spec.ny)]
        np.testing.assert_allclose(ops.y_G[east], 2.0 * spec.dy)
        assert np.count_nonzero(ops.y_G) == spec.ny
        assert not ops.singular_poisson

    def test_convection_jacobian_matches_finite_differences(self, cavity_setup, rng):
        ops = cavity_setup.ops
        V = rng.standard_normal(ops.n_V)
        dV = rng.standard_normal(ops.n_V)
        h = 1e-4
        fd = (convection(ops, V + h * dV, V + h * dV) - convection(ops, V - h * dV, V - h * dV)) / (2.0 * h)
        exact = convection_jacobian(ops, V) @ dV
        assert np.abs(fd - exact).max() <= 1e-8 * np.abs(exact).max()


class TestBodyForce:

    def test_actuator_rows_and_strength(self, actuator_setup):
        grid, force = actuator_setup.grid, actuator_setup.ops.force
        rows = np.flatnonzero(force.spatial)
        assert len(rows) == 2
        np.testing.assert_allclose(force.spatial[rows], -0.5 * grid.dy)
        k = int(round((0.0 - grid.x_range[0]) / grid.dx))
        assert set(rows) == {grid.u_index(k, j) for j in (3, 4)}
        assert force.time_factor == 'one_plus_sin_pi'
        assert force.g(0.5) == pytest.approx(2.0)

    def test_actuator_outside_domain_rejected(self):
        grid = GridSpec(8, 4, (0.0, TWO_PI), (0.0, 1.0))
        with pytest.raises(ValidationError):
            assemble_body_force(grid, ActuatorDisk(x0=-1.0))

    def test_zero_thrust_gives_zero_force(self):
        grid = GridSpec(8, 4, (-1.0, 1.0), (-1.0, 1.0))
        assert assemble_body_force(grid, ActuatorDisk(C_T=0.0)).is_zero
