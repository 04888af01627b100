"""End-to-end workflows shared by the command line and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .digital_control import DigitalControl, WindowGrid
from .dyson_engine import expectation
from .noise_models import NoiseModel, SpectrumIndex, SpectrumTable, exact_table
from .qns_protocols import build_protocol, load_fixture, reconstruct
from .symmetry_engine import all_indices, enumerate_learnable, saturation_order
from .trajectory_sim import SimulationConfig, free_coherence_curve, sample_paths, simulate_protocol

PLUS = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)


def predicted_coherence(table: SpectrumTable, L: int, K: int, indices: Sequence[SpectrumIndex]) -> np.ndarray:
    """Free-evolution coherence at ``t = m T / L`` for ``m = 1..L`` from one table.

    Uses ``|<X> - i <Y>|`` for the initial state ``|+>``; the prediction at
    ``m T / L`` keeps only indices supported on the first ``m`` windows.
    """
    ident = DigitalControl.identity(L)
    out = np.empty(L)
    for m in range(1, L + 1):
        use = [i for i in indices if i.n[0] <= m]
        x = expectation(ident, PLUS, "X", table, K, indices=use).real
        y = expectation(ident, PLUS, "Y", table, K, indices=use).real
        out[m - 1] = abs(x - 1j * y)
    return out


@dataclass
class CoherenceRun:
    times: np.ndarray
    predicted: np.ndarray
    mc: np.ndarray
    mc_err: np.ndarray
    raw: Optional[np.ndarray]
    tables: List[Tuple[float, SpectrumTable]]

    def rows(self) -> List[Dict[str, float]]:
        out = []
        for j, t in enumerate(self.times):
            r = {"time": float(t), "predicted": float(self.predicted[j]), "mc": float(self.mc[j]),
                 "mc_stderr": float(self.mc_err[j])}
            if self.raw is not None:
                r["raw_truncated"] = float(self.raw[j])
            out.append(r)
        return out


def coherence_pipeline(model: NoiseModel, T_M: float, n_T: int = 20, L: int = 4,
                       config: SimulationConfig = SimulationConfig(20000, 0),
                       protocol: str = "fundamental_1q_L4", raw_order: Optional[int] = None) -> CoherenceRun:
    """Learn spectra at ``n_T`` measurement times and predict the free coherence.

    At each ``T = j T_M / n_T`` the fundamental protocol is simulated, the
    learnable spectra are reconstructed and the coherence is predicted at
    ``m T / L``. The Monte Carlo reference is evaluated on the same paths.
    With ``raw_order`` set, the prediction from exact spectra truncated at
    that order (no binding folded in) is added for comparison.
    """
    K = saturation_order(L, 1)
    learnable = enumerate_learnable(L, 1, "classical", K)
    paths = sample_paths(model, T_M, config)
    times, pred, mc, err, raw, tables = [], [], [], [], [], []
    raw_idx = list(all_indices(L, 1, "classical", raw_order)) if raw_order else None
    for j in range(1, n_T + 1):
        T = j * T_M / n_T
        experiments = load_fixture(protocol, T)
        prot = build_protocol(experiments, learnable, K)
        y, _ = simulate_protocol(experiments, model, config, paths)
        table = reconstruct(prot, y)
        tables.append((T, table))
        ts = np.arange(1, L + 1) * T / L
        times.extend(ts)
        pred.extend(predicted_coherence(table, L, K, learnable))
        v, e = free_coherence_curve(model, ts, config, paths)
        mc.extend(v)
        err.extend(e)
        if raw_idx is not None:
            rt = exact_table(model, WindowGrid(L, T), raw_idx)
            raw.extend(predicted_coherence(rt, L, raw_order, raw_idx))
    return CoherenceRun(np.array(times), np.array(pred), np.array(mc), np.array(err),
                        np.array(raw) if raw_idx is not None else None, tables)
