"""
共通フィクスチャ（小さな格子・短い FOM 計算）
"""
import math
import os

os.environ.setdefault('ECROM_ENV', 'testing')

import numpy as np
import pytest

from backend.models.grid import GridSpec
from backend.utils.cases import case_actuator, case_lid_driven_cavity, case_shear_layer
from backend.utils.fom_solver import project_velocity, run_fom
from backend.utils.mesh_ops import build_fom_operators
from config.run_config import IntegratorConfig, TimeIntegrator

TWO_PI = 2.0 * math.pi


def make_periodic_ops(n: int = 8):
    return build_fom_operators(GridSpec(n, n, (0.0, TWO_PI), (0.0, TWO_PI)))


def random_solenoidal(ops, rng, count: int = 1) -> np.ndarray:
    """射影済みのランダム速度場（N_V × count）。2回射影して発散を丸め誤差まで落とす"""
    fields = [project_velocity(ops, project_velocity(ops, rng.standard_normal(ops.n_V))) for _ in range(count)]
    return np.column_stack(fields)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def periodic_ops():
    return make_periodic_ops(8)


@pytest.fixture(scope='module')
def shear_setup():
    return case_shear_layer({'nu': 0.0}, grid_size=(16, 16))


@pytest.fixture(scope='module')
def cavity_setup():
    return case_lid_driven_cavity({'Re': 100.0}, grid_size=(12, 12))


@pytest.fixture(scope='module')
def actuator_setup():
    return case_actuator({'Re': 500.0}, grid_size=(24, 8))


@pytest.fixture(scope='module')
def shear_snapshots(shear_setup):
    cfg = IntegratorConfig(method=TimeIntegrator.EXPLICIT_RK4, dt=0.01, t_end=1.0, snapshot_stride=5)
    return run_fom(shear_setup.ops, shear_setup.init, cfg, shear_setup.nu)


@pytest.fixture(scope='module')
def cavity_snapshots(cavity_setup):
    cfg = IntegratorConfig(method=TimeIntegrator.EXPLICIT_RK4, dt=0.01, t_end=0.2)
    return run_fom(cavity_setup.ops, cavity_setup.init, cfg, cavity_setup.nu)


@pytest.fixture(scope='module')
def actuator_snapshots(actuator_setup):
    cfg = IntegratorConfig(method=TimeIntegrator.EXPLICIT_RK4, dt=0.025, t_end=0.5)
    return run_fom(actuator_setup.ops, actuator_setup.init, cfg, actuator_setup.nu)
