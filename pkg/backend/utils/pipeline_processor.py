"""
FOM → POD → ROM → 比較 の一括処理
ステージごとに成果物を出力ディレクトリへ書き出し、処理時間を timings.csv に残す
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from backend.models.artifact_store import ArtifactStore
from backend.models.snapshots import SnapshotSet
from backend.utils.cases import CaseSetup, setup_case
from backend.utils.diagnostics import build_trace, write_trace_csv
from backend.utils.error_helpers import ArtifactError
from backend.utils.fom_solver import run_fom, validate_snapshots
from backend.utils.logger import log_performance_metric, log_solver_event
from backend.utils.pod_basis import build_rom_basis, initial_coeffs
from backend.utils.rom_core import (
    gershgorin_bound, oracle_residual, precompute_rom_operators, rom_kinetic_energy, run_rom,
)
from config.run_config import CaseConfig

logger = logging.getLogger(__name__)

STAGES = ('fom', 'pod', 'rom', 'compare')
DUMPED_OPERATORS = ('M', 'G', 'D', 'L')


class PipelineProcessor:
    """パイプライン処理クラス"""

    def __init__(self, config: CaseConfig, out_dir: str):
        self.config = config
        self.store = ArtifactStore(out_dir)
        self._setup: Optional[CaseSetup] = None
        self.timings: List[Tuple[str, float]] = []
        self.processing_results: List[Dict[str, Any]] = []

    @property
    def setup(self) -> CaseSetup:
        """ケース（格子・演算子・初期状態）は初回参照時に構築"""
        if self._setup is None:
            self._setup = setup_case(self.config)
        return self._setup

    def _record_timing(self, stage: str, seconds: float, **metrics: Any) -> None:
        self.timings.append((stage, seconds))
        log_performance_metric(f"{self.config.case}:{stage}", seconds, metrics or None)

    def _load_snapshots(self) -> SnapshotSet:
        snaps = self.store.load_snapshots()
        ops = self.setup.ops
        if snaps.n_V != ops.n_V or snaps.n_p != ops.n_p:
            raise ArtifactError(
                f"スナップショットの次元が格子と一致しません: N_V={snaps.n_V}/{ops.n_V}, N_p={snaps.n_p}/{ops.n_p}"
            )
        return snaps

    # ---- ステージ ----
    def run_fom_stage(self) -> Dict[str, Any]:
        """FOM を時間発展してスナップショットを保存"""
        setup = self.setup
        start_time = datetime.now()
        snaps = run_fom(setup.ops, setup.init, self.config.fom, setup.nu)
        seconds = (datetime.now() - start_time).total_seconds()
        self._record_timing('fom', seconds, K=snaps.K, N_V=snaps.n_V)

        self.store.save_snapshots(snaps)
        if self.config.dump_operators:
            self.dump_operators()

        log_solver_event('FOM', f"{self.config.case}: K={snaps.K}, N_V={snaps.n_V}, N_p={snaps.n_p}")
        return {'stage': 'fom', 'snapshots': snaps.K, 'seconds': seconds}

    def dump_operators(self) -> None:
        """M, G, D, L を ECROM1 形式で保存"""
        ops = self.setup.ops
        for name in DUMPED_OPERATORS:
            self.store.save_operator(name, getattr(ops, name))

    def run_pod_stage(self) -> Dict[str, Any]:
        """各 M について基底を作って保存"""
        snaps = self._load_snapshots()
        ops = self.setup.ops
        validate_snapshots(ops, snaps)
        start_time = datetime.now()
        ranks = {}
        for M in self.config.modes:
            basis = build_rom_basis(
                ops, snaps.X, snaps.P, M, self.config.pressure_mode_count(M),
                constrained=self.config.constrained,
            )
            self.store.save_basis(basis)
            ranks[M] = (basis.M, basis.M_p, basis.n_c)
        seconds = (datetime.now() - start_time).total_seconds()
        self._record_timing('svd', seconds, modes=list(self.config.modes))

        log_solver_event('POD', f"基底を保存: {ranks}, constrained={self.config.constrained}")
        return {'stage': 'pod', 'bases': ranks, 'seconds': seconds}

    def _rom_for_mode(self, M: int, snaps: SnapshotSet) -> Dict[str, Any]:
        setup = self.setup
        ops = setup.ops
        basis = self.store.load_basis(M)

        start_time = datetime.now()
        rops = precompute_rom_operators(ops, basis, snaps.V_bc, snaps.nu)
        precompute_seconds = (datetime.now() - start_time).total_seconds()
        self.store.save_rom_operators(M, rops)

        a0 = initial_coeffs(basis, ops.omega, snaps.velocity(0), snaps.V_bc)
        max_real, max_abs = gershgorin_bound(rops, a0)
        log_solver_event('ROM', f"M={M}: Gershgorin bound Re<={max_real:.3e}, |lambda|<={max_abs:.3e}, "
                                f"dt*|lambda|={self.config.rom.dt * max_abs:.3e}", level='debug')

        start_time = datetime.now()
        times, history = run_rom(rops, a0, self.config.rom, float(snaps.times[0]))
        online_seconds = (datetime.now() - start_time).total_seconds()
        self.store.save_coefficients(M, times, history)

        K0 = rom_kinetic_energy(history[:, 0])
        drift = max(abs(rom_kinetic_energy(history[:, n]) - K0) for n in range(history.shape[1]))
        return {
            'M': M,
            'precompute_seconds': precompute_seconds,
            'online_seconds': online_seconds,
            'energy_drift': drift / K0 if K0 > 0.0 else drift,
        }

    def run_rom_stage(self) -> Dict[str, Any]:
        """各 M について ROM 演算子を前計算し、係数を時間発展"""
        snaps = self._load_snapshots()
        modes = list(self.config.modes)
        _ = self.setup  # 並列化の前にケースを構築

        if self.config.workers > 1 and len(modes) > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                results = list(pool.map(lambda M: self._rom_for_mode(M, snaps), modes))
        else:
            results = [self._rom_for_mode(M, snaps) for M in modes]

        for result in results:
            M = result['M']
            self._record_timing(f'precompute_M{M}', result['precompute_seconds'])
            self._record_timing(f'online_M{M}', result['online_seconds'])
            log_solver_event('ROM', f"M={M}: 相対エネルギー変化の最大値={result['energy_drift']:.3e}")
            self.processing_results.append(result)

        return {'stage': 'rom', 'results': results}

    def run_compare_stage(self) -> Dict[str, Any]:
        """FOM と ROM を比較してトレース CSV を書き出す"""
        snaps = self._load_snapshots()
        ops = self.setup.ops
        references = self.setup.references
        rng = np.random.default_rng(self.config.seed)

        start_time = datetime.now()
        summary = {}
        for M in self.config.modes:
            basis = self.store.load_basis(M)
            rops = self.store.load_rom_operators(M, ops.force.time_factor)
            times, coeffs = self.store.load_coefficients(M)

            trace = build_trace(ops, snaps, basis, times, coeffs, rops,
                                V_ref=references.get('V_ref', 1.0), p_ref=references.get('p_ref', 1.0))
            write_trace_csv(trace, self.store.trace_path(M))

            a = rng.standard_normal(M)
            residual = oracle_residual(ops, basis, rops, snaps.V_bc, snaps.nu, a, float(times[0]))
            eps_V = trace.column('eps_V')
            summary[M] = {'eps_V_final': float(eps_V[-1]), 'oracle_residual': residual}
            log_solver_event('COMPARE', f"M={M}: eps_V(T)={eps_V[-1]:.3e}, oracle residual={residual:.3e}")

        seconds = (datetime.now() - start_time).total_seconds()
        self._record_timing('compare', seconds)
        return {'stage': 'compare', 'results': summary, 'seconds': seconds}

    # ---- 実行 ----
    def write_timings(self) -> None:
        """既存の timings.csv に今回のステージを上書き統合"""
        previous = self.store.read_timings()
        current = pd.DataFrame(self.timings, columns=['stage', 'seconds'])
        if not previous.empty:
            previous = previous[~previous['stage'].isin(current['stage'])]
            current = pd.concat([previous, current], ignore_index=True)
        self.store.write_timings(list(current.itertuples(index=False, name=None)))

    def run(self, stage: str) -> Dict[str, Any]:
        """
        指定ステージ（fom | pod | rom | compare | all）を実行

        Args:
            stage: ステージ名

        Returns:
            Dict: 処理結果
        """
        runners = {
            'fom': self.run_fom_stage,
            'pod': self.run_pod_stage,
            'rom': self.run_rom_stage,
            'compare': self.run_compare_stage,
        }
        selected = STAGES if stage == 'all' else (stage,)

        start_time = datetime.now()
        log_solver_event('PIPELINE', f"開始: case={self.config.case}, stages={','.join(selected)}, "
                                     f"grid={self.config.grid}, modes={self.config.modes}")
        details = []
        try:
            for name in selected:
                details.append(runners[name]())
        finally:
            if self.timings:
                self.write_timings()

        processing_time = (datetime.now() - start_time).total_seconds()
        log_solver_event('PIPELINE', f"完了: {processing_time:.3f}s")
        return {
            'success': True,
            'message': f"{','.join(selected)} の処理が完了しました",
            'summary': {'stages': list(selected), 'processing_time_seconds': processing_time},
            'details': details,
        }
