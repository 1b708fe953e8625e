"""
テストケース定義のテスト
"""
import math

import numpy as np
import pytest

from backend.models.grid import BoundaryCondition
from backend.utils.cases import (
    case_actuator, case_lid_driven_cavity, case_shear_layer, case_taylor_green, setup_case,
)
from backend.utils.error_helpers import ValidationError
from backend.utils.fom_solver import momentum
from config.run_config import load_run_config


class TestShearLayer:

    def test_defaults(self):
        setup = case_shear_layer({}, grid_size=(16, 16))
        assert setup.nu == 0.0
        assert setup.grid.fully_periodic
        assert setup.grid.x_range == pytest.approx((0.0, 2.0 * math.pi))
        assert np.abs(setup.ops.M @ setup.init.V).max() <= 1e-12

    def test_no_perturbation_gives_zero_cross_flow(self):
        setup = case_shear_layer({'epsilon': 0.0}, grid_size=(16, 16))
        v = setup.init.V[setup.grid.n_u:]
        assert np.abs(v).max() <= 1e-14

    def test_momentum_components_differ(self):
        setup = case_shear_layer({}, grid_size=(16, 16))
        P_u, P_v = momentum(setup.ops, setup.init.V)
        assert abs(P_u - P_v) > 1.0

    def test_non_periodic_boundary_rejected(self):
        with pytest.raises(ValidationError):
            case_shear_layer({}, grid_size=(8, 8), boundary=BoundaryCondition.no_slip())

    def test_non_positive_thickness_rejected(self):
        with pytest.raises(ValidationError):
            case_shear_layer({'delta': 0.0}, grid_size=(8, 8))


class TestLidDrivenCavity:

    def test_viscosity_from_reynolds_number(self):
        setup = case_lid_driven_cavity({'Re': 400.0}, grid_size=(8, 8))
        assert setup.nu == pytest.approx(1.0 / 400.0)
        assert not np.any(setup.init.V)

    def test_lid_does_not_enter_divergence(self, cavity_setup):
        assert not np.any(cavity_setup.ops.y_M)
        assert cavity_setup.ops.singular_poisson

    def test_non_positive_reynolds_number_rejected(self):
        with pytest.raises(ValidationError):
            case_lid_driven_cavity({'Re': -1.0}, grid_size=(8, 8))


class TestActuator:

    def test_mean_inflow_is_one(self, actuator_setup):
        grid, ops = actuator_setup.grid, actuator_setup.ops
        inflow = ops.y_M[[j * grid.nx for j in range(grid.ny)]].sum()
        height = grid.y_range[1] - grid.y_range[0]
        assert inflow / height == pytest.approx(1.0, abs=1e-2)

    def test_outflow_makes_poisson_regular(self, actuator_setup):
        assert not actuator_setup.ops.singular_poisson

    def test_force_is_time_dependent(self, actuator_setup):
        assert actuator_setup.ops.force.time_factor == 'one_plus_sin_pi'
        assert not actuator_setup.ops.force.is_zero

    def test_initial_field_satisfies_inflow(self, actuator_setup):
        ops = actuator_setup.ops
        assert np.abs(ops.M @ actuator_setup.init.V - ops.y_M).max() <= 1e-10


class TestSetupCase:

    def test_builds_from_manifest(self, tmp_path):
        manifest = tmp_path / 'cavity.json'
        manifest.write_text('{"case": "lid_driven_cavity", "grid": [8, 8], "params": {"Re": 50},'
                            ' "references": {"V_ref": 2.0}}')
        setup = setup_case(load_run_config(str(manifest)))
        assert setup.name == 'lid_driven_cavity'
        assert (setup.grid.nx, setup.grid.ny) == (8, 8)
        assert setup.nu == pytest.approx(0.02)
        assert setup.references['V_ref'] == 2.0

    def test_unknown_case_rejected(self, tmp_path):
        config = load_run_config(None, {'case': 'shear_layer', 'grid': [8, 8]})
        config.case = 'channel'
        with pytest.raises(ValidationError):
            setup_case(config)

    def test_taylor_green_is_divergence_free(self):
        setup = case_taylor_green(n=8)
        assert np.abs(setup.ops.M @ setup.init.V).max() <= 1e-12
