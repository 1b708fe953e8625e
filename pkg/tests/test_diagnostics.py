"""
誤差ノルム・比較トレース・CSV 出力のテスト
"""
import numpy as np
import pandas as pd
import pytest

from backend.utils.diagnostics import (
    EXTRA_COLUMNS, TRACE_COLUMNS, basis_projection_error, build_trace, divergence_residual,
    energy_error_decomposition, error_pressure, error_velocity, write_trace_csv,
)
from backend.utils.error_helpers import ValidationError
from backend.utils.pod_basis import build_rom_basis, initial_coeffs
from backend.utils.rom_core import precompute_rom_operators, run_rom
from config.run_config import IntegratorConfig, TimeIntegrator


@pytest.fixture(scope='module')
def cavity_trace(cavity_setup, cavity_snapshots):
    ops, snaps = cavity_setup.ops, cavity_snapshots
    basis = build_rom_basis(ops, snaps.X, snaps.P, 4, 4)
    rops = precompute_rom_operators(ops, basis, snaps.V_bc, snaps.nu)
    a0 = initial_coeffs(basis, ops.omega, snaps.velocity(0), snaps.V_bc)
    times, coeffs = run_rom(rops, a0, IntegratorConfig(method=TimeIntegrator.IMPLICIT_MIDPOINT,
                                                       dt=0.01, t_end=0.2))
    return build_trace(ops, snaps, basis, times, coeffs, rops), basis, times, coeffs


class TestErrorNorms:

    def test_identical_fields_have_zero_error(self, cavity_setup, rng):
        ops = cavity_setup.ops
        V = rng.standard_normal(ops.n_V)
        assert error_velocity(V, V, ops.omega, 1.0) == 0.0

    def test_velocity_error_scales_with_reference(self, cavity_setup, rng):
        ops = cavity_setup.ops
        V_a, V_b = rng.standard_normal((2, ops.n_V))
        assert error_velocity(V_a, V_b, ops.omega, 2.0) == pytest.approx(0.5 * error_velocity(V_a, V_b, ops.omega, 1.0))

    def test_pressure_error_ignores_constant_shift(self, cavity_setup, rng):
        ops = cavity_setup.ops
        p = rng.standard_normal(ops.n_p)
        assert error_pressure(p + 3.5, p, ops.omega_p, 1.0) == pytest.approx(0.0, abs=1e-13)

    @pytest.mark.parametrize('func', [error_velocity, error_pressure])
    def test_zero_reference_rejected(self, func, cavity_setup):
        ops = cavity_setup.ops
        n = ops.n_V if func is error_velocity else ops.n_p
        omega = ops.omega if func is error_velocity else ops.omega_p
        with pytest.raises(ValidationError):
            func(np.zeros(n), np.zeros(n), omega, 0.0)

    def test_weight_vector_and_operator_agree(self, cavity_setup, cavity_snapshots, rng):
        ops = cavity_setup.ops
        V_a, V_b = rng.standard_normal((2, ops.n_V))
        p_a, p_b = rng.standard_normal((2, ops.n_p))
        assert error_velocity(V_a, V_b, ops.Omega, 1.0) == pytest.approx(error_velocity(V_a, V_b, ops.omega, 1.0),
                                                                        rel=1e-14)
        assert error_pressure(p_a, p_b, ops.Omega_p, 1.0) == pytest.approx(
            error_pressure(p_a, p_b, ops.omega_p, 1.0), rel=1e-14)
        basis = build_rom_basis(ops, cavity_snapshots.X, cavity_snapshots.P, 3, 2)
        assert basis_projection_error(basis, ops.Omega, V_a) == pytest.approx(
            basis_projection_error(basis, ops.omega, V_a), rel=1e-14)

    def test_length_mismatch_rejected(self, cavity_setup):
        ops = cavity_setup.ops
        with pytest.raises(ValidationError):
            error_velocity(np.zeros(3), np.zeros(ops.n_V), ops.omega, 1.0)

    def test_projection_error_vanishes_in_span(self, shear_setup, shear_snapshots):
        ops, snaps = shear_setup.ops, shear_snapshots
        basis = build_rom_basis(ops, snaps.X, snaps.P, 4, 2)
        V = basis.Phi @ np.array([1.0, -2.0, 0.5, 3.0]) + snaps.V_bc
        assert basis_projection_error(basis, ops.omega, V, snaps.V_bc) <= 1e-12

    def test_energy_terms_sum_to_total_error(self):
        terms = energy_error_decomposition(1.3, 1.5, 1.6, 1.1)
        assert sum(terms) == pytest.approx(1.3 - 1.1)

    def test_divergence_residual_of_snapshot(self, actuator_setup, actuator_snapshots):
        assert divergence_residual(actuator_setup.ops, actuator_snapshots.velocity(3)) <= 1e-10


class TestTrace:

    def test_columns_and_rows(self, cavity_trace, cavity_snapshots):
        trace, _, _, _ = cavity_trace
        frame = trace.to_frame()
        assert list(frame.columns) == TRACE_COLUMNS + EXTRA_COLUMNS
        assert len(frame) == cavity_snapshots.K
        np.testing.assert_allclose(frame['t'], cavity_snapshots.times)

    def test_initial_row_matches_fom(self, cavity_trace):
        trace, _, _, _ = cavity_trace
        row = trace.rows[0]
        # 初期速度ゼロは基底の張る空間に含まれる
        assert row['eps_V'] == pytest.approx(0.0, abs=1e-14)
        assert row['K_fom'] == pytest.approx(row['K_rom'], abs=1e-14)

    def test_energy_terms_match_homogeneous_energy_gap(self, cavity_trace, cavity_snapshots, cavity_setup):
        trace, _, _, _ = cavity_trace
        omega = cavity_setup.ops.omega
        terms = trace.energy_error_terms()
        X = cavity_snapshots.X
        K_hom_fom = 0.5 * np.einsum('in,i,in->n', X, omega, X)
        np.testing.assert_allclose(terms.sum(axis=1), trace.column('K_rom_hom') - K_hom_fom,
                                   atol=1e-12 * max(1.0, K_hom_fom.max()))

    def test_reduced_velocity_error_bounded_below_by_projection(self, cavity_trace, cavity_setup):
        trace, _, _, _ = cavity_trace
        eps_V = trace.column('eps_V') * np.sqrt(cavity_setup.ops.omega.sum())
        best = trace.column('eps_V_best')
        assert np.all(eps_V >= best - 1e-12)

    def test_pressure_error_is_reported(self, cavity_trace):
        trace, _, _, _ = cavity_trace
        assert np.all(np.isfinite(trace.column('eps_p')))

    def test_pressure_error_missing_without_operators(self, cavity_trace, cavity_setup, cavity_snapshots):
        _, basis, times, coeffs = cavity_trace
        trace = build_trace(cavity_setup.ops, cavity_snapshots, basis, times, coeffs)
        assert np.all(np.isnan(trace.column('eps_p')))

    def test_time_mismatch_rejected(self, cavity_trace, cavity_setup, cavity_snapshots):
        _, basis, times, coeffs = cavity_trace
        with pytest.raises(ValidationError):
            build_trace(cavity_setup.ops, cavity_snapshots, basis, times + 0.005, coeffs)
        with pytest.raises(ValidationError):
            build_trace(cavity_setup.ops, cavity_snapshots, basis, times[:-1], coeffs[:, :-1])

    def test_csv_keeps_full_precision(self, cavity_trace, tmp_path):
        trace, _, _, _ = cavity_trace
        path = tmp_path / 'trace.csv'
        write_trace_csv(trace, str(path))
        frame = pd.read_csv(path, float_precision='round_trip')
        assert list(frame.columns) == TRACE_COLUMNS + EXTRA_COLUMNS
        np.testing.assert_array_equal(frame['K_rom'].to_numpy(), trace.column('K_rom'))
