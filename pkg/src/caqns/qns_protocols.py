"""CA QNS protocol design, design-matrix assembly and spectral reconstruction.

A protocol is a list of experiments (control, pseudo-initial Pauli state,
observable) whose truncated Dyson expectations are affine in the learnable
spectra. Stacking the affine coefficients gives a square design matrix that
is inverted, in the least-squares sense, to recover the spectra.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .algebra import PauliIndex, as_pauli, pauli_matrix
from .digital_control import DigitalControl, WindowGrid, toggled_observable
from .dyson_engine import coefficient_matrix
from .noise_models import SpectrumIndex, SpectrumTable, dump_json

RANK_TOL = 1e-8

FIXTURES = ("k2c", "k2q", "k4c", "k4q", "fundamental_1q_L4", "fundamental_2q_L2")

# discrete switching alphabet of the published single-qubit tables
_S = np.sqrt(0.5)
ALPHABET = np.array(
    [[1, 0, 0], [0, 1, 0], [0, 0, 1],
     [_S, _S, 0], [_S, 0, _S], [0, _S, _S]],
    dtype=float,
)


@dataclass
class Experiment:
    """One QNS setting.

    ``rho`` is a pseudo-initial Pauli operator (expectations are linear in
    it) and ``obs`` the measured Pauli observable.
    """

    control: DigitalControl
    rho: PauliIndex
    obs: PauliIndex
    grid: WindowGrid

    def __post_init__(self):
        nq = self.control.nqubits
        self.rho = as_pauli(self.rho, nq)
        self.obs = as_pauli(self.obs, nq)
        if self.obs.code == 0:
            raise ValueError("the identity is not a useful observable")
        if self.control.L != self.grid.L:
            raise ValueError("control and grid disagree on L")

    def to_record(self) -> dict:
        rec = self.control.to_record()
        rec["rho"] = self.rho.label
        rec["obs"] = self.obs.label
        return rec


@dataclass
class Protocol:
    experiments: List[Experiment]
    learnable: List[SpectrumIndex]
    K: int
    design_matrix: np.ndarray = field(repr=False)
    offset: np.ndarray = field(repr=False)
    condition_number: float = np.inf

    @property
    def grid(self) -> WindowGrid:
        return self.experiments[0].grid

    @property
    def nqubits(self) -> int:
        return self.experiments[0].control.nqubits


# ---------------------------------------------------------------------------
# design matrices


def _stack(experiments: Sequence[Experiment]):
    h = np.array([e.control.toggled for e in experiments])
    Ot = np.array([toggled_observable(e.control, e.obs) for e in experiments])
    rho = np.array([pauli_matrix(e.rho) for e in experiments])
    return h, Ot, rho


def assemble_design_matrix(experiments: Sequence[Experiment], learnable: Sequence[SpectrumIndex],
                           K: int) -> Tuple[np.ndarray, np.ndarray]:
    """Affine map from learnable spectra to expectations.

    Returns
    -------
    matrix : ndarray, shape (len(experiments), len(use))
        Coefficient of each learnable spectrum of order at most ``K``.
    offset : ndarray
        Noiseless term ``Tr[rho O]`` per experiment.
    """
    if not experiments:
        return np.zeros((0, len(learnable)), dtype=complex), np.zeros(0)
    use = [i for i in learnable if i.k <= K]
    if len(use) != len(learnable):
        raise ValueError("learnable set contains indices above K")
    h, Ot, rho = _stack(experiments)
    A = coefficient_matrix(h, Ot, rho, use)
    offset = np.einsum("bij,bji->b", rho, Ot).real
    return A, offset


def pivoted_rank_select(rows: np.ndarray, N: int, order: Sequence[int], tol: float = RANK_TOL) -> List[int]:
    """Greedy Gram-Schmidt selection of linearly independent rows.

    Rows are visited in ``order``; a row is accepted when its component
    orthogonal to the accepted span exceeds ``tol`` relative to its norm.
    Rows shorter than ``tol`` times the longest row are skipped.
    """
    basis = []
    chosen = []
    # rows at roundoff level are numerically zero, not independent
    floor = tol * float(np.max(np.linalg.norm(rows, axis=1), initial=0.0))
    for i in order:
        r = rows[i].astype(complex)
        nr = np.linalg.norm(r)
        if nr <= floor:
            continue
        v = r.copy()
        for _ in range(2):
            for b in basis:
                v -= np.vdot(b, v) * b
        nv = np.linalg.norm(v)
        if nv > tol * nr:
            basis.append(v / nv)
            chosen.append(int(i))
            if len(chosen) == N:
                break
    return chosen


def random_experiments(m: int, grid: WindowGrid, nqubits: int, rng: np.random.Generator,
                       snap: bool = False, obs: Optional[Iterable] = None) -> List[Experiment]:
    """Random candidate experiments.

    Single-qubit switching vectors are uniform on the sphere (or drawn from
    the axis and diagonal alphabet when ``snap``); two-qubit KAK angles are
    uniform in ``[-1, 1]``. Pseudo-initial states and observables are random
    Paulis, observables restricted to ``obs`` when given.
    """
    d2 = 4**nqubits
    obs_pool = [as_pauli(o, nqubits).code for o in obs] if obs is not None else list(range(1, d2))
    out = []
    for _ in range(m):
        if nqubits == 1:
            if snap:
                y = ALPHABET[rng.integers(len(ALPHABET), size=grid.L)]
            else:
                y = rng.normal(size=(grid.L, 3))
                y /= np.linalg.norm(y, axis=1, keepdims=True)
            c = DigitalControl.from_vectors(y)
        else:
            c = DigitalControl.from_kak(rng.uniform(-1, 1, size=(grid.L, 15)))
        rho = PauliIndex.from_code(int(rng.integers(d2)), nqubits)
        o = PauliIndex.from_code(int(obs_pool[rng.integers(len(obs_pool))]), nqubits)
        out.append(Experiment(c, rho, o, grid))
    return out


def design_protocol(learnable: Sequence[SpectrumIndex], grid: WindowGrid, nqubits: int = 1,
                    K: Optional[int] = None, m: Optional[int] = None, M: int = 50,
                    rng: Optional[np.random.Generator] = None, snap: bool = False,
                    candidates: Optional[Sequence[Experiment]] = None) -> Protocol:
    """Random-shuffle protocol design.

    Draws ``m`` candidate experiments (default ``5 N``), then for each of
    ``M`` shuffles greedily keeps the first ``N`` rows that are linearly
    independent. The selection with the smallest 2-norm condition number
    is returned.

    Raises
    ------
    RuntimeError
        If the candidate pool does not contain ``N`` independent rows.
    """
    learnable = list(learnable)
    N = len(learnable)
    K = max(i.k for i in learnable) if K is None else K
    if M < 1:
        raise ValueError("M must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    if candidates is None:
        m = 5 * N if m is None else m
        candidates = random_experiments(m, grid, nqubits, rng, snap=snap)
    candidates = list(candidates)
    A, offset = assemble_design_matrix(candidates, learnable, K)
    best = None
    for _ in range(M):
        order = rng.permutation(len(candidates))
        sel = pivoted_rank_select(A, N, order)
        if len(sel) < N:
            raise RuntimeError(f"only {len(sel)} of {N} independent rows; increase m")
        sel = sorted(sel)
        kappa = float(np.linalg.cond(A[sel]))
        if best is None or kappa < best[0]:
            best = (kappa, sel)
    kappa, sel = best
    return Protocol([candidates[i] for i in sel], learnable, K, A[sel], offset[sel], kappa)


def build_protocol(experiments: Sequence[Experiment], learnable: Sequence[SpectrumIndex], K: int) -> Protocol:
    """Protocol from a fixed experiment list, e.g. one loaded from disk."""
    A, offset = assemble_design_matrix(experiments, learnable, K)
    kappa = float(np.linalg.cond(A)) if A.size else np.inf
    return Protocol(list(experiments), list(learnable), K, A, offset, kappa)


# ---------------------------------------------------------------------------
# reconstruction


def sample_shots(expectations: np.ndarray, shots: int, rng: np.random.Generator, dim: int = 1) -> np.ndarray:
    """Finite-shot estimates of Pauli-normalised expectations.

    ``Tr[rho~ U^dag O U]`` with a Pauli pseudo-state equals ``dim`` times the
    physical expectation for ``rho = (I + rho~) / dim``. The physical value
    is clipped to ``[-1, 1]``, resampled binomially and rescaled.
    """
    e = np.clip(np.asarray(expectations, dtype=float) / dim, -1, 1)
    k = rng.binomial(shots, (1 + e) / 2)
    return dim * (2 * k / shots - 1)


def reconstruct(protocol: Protocol, measurements) -> SpectrumTable:
    """Least-squares solve of ``design_matrix x = measurements - offset``.

    Raises
    ------
    np.linalg.LinAlgError
        When the design matrix is rank deficient.
    """
    y = np.asarray(measurements, dtype=float)
    A = protocol.design_matrix
    if y.shape != (A.shape[0],):
        raise ValueError(f"expected {A.shape[0]} measurements, got {y.shape}")
    x, _, rank, _ = np.linalg.lstsq(A, y - protocol.offset, rcond=None)
    if rank < A.shape[1]:
        raise np.linalg.LinAlgError(f"design matrix has rank {rank} < {A.shape[1]}")
    entries = {idx: complex(v) for idx, v in zip(protocol.learnable, x)}
    return SpectrumTable(entries, "reconstructed", protocol.grid)


def predict_measurements(protocol: Protocol, spectra: SpectrumTable) -> np.ndarray:
    x = np.array([spectra.get(i, 0j) for i in protocol.learnable])
    return (protocol.offset + protocol.design_matrix @ x).real


# ---------------------------------------------------------------------------
# protocol files


def experiment_from_record(rec: dict, grid: WindowGrid, tol: float = 1e-3) -> Experiment:
    try:
        if "windows" in rec:
            c = DigitalControl.from_vectors(rec["windows"], tol=tol)
        elif "kak" in rec:
            c = DigitalControl.from_kak(rec["kak"])
        else:
            raise ValueError("row needs 'windows' or 'kak'")
        return Experiment(c, rec["rho"], rec["obs"], grid)
    except KeyError as e:
        raise ValueError(f"row is missing {e}") from None


def load_protocol_table(path, T: Optional[float] = None) -> List[Experiment]:
    """Experiments from a protocol JSON file.

    The file holds ``{"nqubits", "L", "experiments": [...]}`` and optionally
    ``"T"``. An explicit ``T`` argument takes precedence over the file; with
    neither, ``T = 1``.
    """
    doc = json.loads(Path(path).read_text())
    return _experiments_from_doc(doc, T)


def _experiments_from_doc(doc, T):
    if isinstance(doc, list):
        doc = {"experiments": doc}
    rows = doc.get("experiments")
    if not rows:
        raise ValueError("protocol has no experiments")
    first = rows[0]
    L = doc.get("L") or len(first.get("windows") or first.get("kak"))
    grid = WindowGrid(int(L), float(T if T is not None else doc.get("T", 1.0)))
    out = []
    for i, rec in enumerate(rows):
        try:
            out.append(experiment_from_record(rec, grid))
        except ValueError as e:
            raise ValueError(f"experiments[{i}]: {e}") from None
    return out


def protocol_document(experiments: Sequence[Experiment], name: str = "", T: Optional[float] = None) -> dict:
    e0 = experiments[0]
    doc = {"name": name, "nqubits": e0.control.nqubits, "L": e0.grid.L}
    if T is not None:
        doc["T"] = T
    doc["experiments"] = [e.to_record() for e in experiments]
    return doc


def save_protocol_table(experiments: Sequence[Experiment], path, name: str = "", T: Optional[float] = None) -> None:
    Path(path).write_text(dump_json(protocol_document(experiments, name, T)))


def load_fixture(name: str, T: Optional[float] = None) -> List[Experiment]:
    """Bundled protocol tables: ``k2c``, ``k2q``, ``k4c``, ``k4q``,
    ``fundamental_1q_L4`` and ``fundamental_2q_L2``."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    text = resources.files("caqns").joinpath("data", "protocols", f"{name}.json").read_text()
    return _experiments_from_doc(json.loads(text), T)
