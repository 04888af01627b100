"""Monte Carlo ground truth for dephasing under telegraph noise.

For classical noise the toggled Hamiltonian ``g beta(t) h(n)`` commutes with
itself inside a window, so the window propagator is the exact rotation
``exp(-i g phi_n h(n))`` with ``phi_n`` the window integral of ``beta``. The
toy quantum bath couples the qubit to an auxiliary qubit through
``g [beta(t) h x tau_x + beta(t + shift) h x tau_y]``; that Hamiltonian changes
at every switch of either branch and is integrated segment by segment.

Trajectories are drawn in fixed-size chunks, each from its own child of a
``SeedSequence``, so results depend only on the seed and the trajectory
count. Evaluating several experiments with one configuration reuses the same
paths (common random numbers).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .algebra import SIGMA, pauli_matrix
from .digital_control import WindowGrid, toggled_observable
from .noise_models import NoiseModel, batch_cumulative, batch_modulated_integral, sample_batch

CHUNK = 4096

_TX = SIGMA[1]
_TY = SIGMA[2]
RHO_AUX = np.array([[1, 0], [0, 0]], dtype=complex)


@dataclass(frozen=True)
class SimulationConfig:
    """Monte Carlo settings.

    Parameters
    ----------
    n_traj : int
        Number of noise trajectories.
    seed : int
        Root seed; chunk streams are spawned from it.
    shots : int, optional
        Finite-shot emulation per experiment. ``None`` returns the exact
        trajectory average.
    segment_tolerance : float
        Toy-bath breakpoints closer than this (in seconds) are merged.
    """

    n_traj: int = 10000
    seed: int = 0
    shots: Optional[int] = None
    segment_tolerance: float = 1e-15

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be positive")

    def to_dict(self) -> dict:
        return {"n_traj": self.n_traj, "seed": self.seed, "shots": self.shots,
                "segment_tolerance": self.segment_tolerance}


@dataclass
class Paths:
    """Batch of telegraph paths, one array pair per fluctuator."""

    init: List[np.ndarray]
    times: List[np.ndarray]
    horizon: float

    @property
    def n(self) -> int:
        return self.init[0].size


def _chunk_sizes(n):
    sizes = [CHUNK] * (n // CHUNK)
    if n % CHUNK:
        sizes.append(n % CHUNK)
    return sizes


def sample_paths(model: NoiseModel, horizon: float, config: SimulationConfig, nfluct: int = 1) -> Paths:
    """Deterministic batch of paths on ``[0, horizon + shift]``."""
    sizes = _chunk_sizes(config.n_traj)
    children = np.random.SeedSequence(config.seed).spawn(len(sizes))
    inits = [[] for _ in range(nfluct)]
    times = [[] for _ in range(nfluct)]
    for size, ss in zip(sizes, children):
        rng = np.random.default_rng(ss)
        for f in range(nfluct):
            i, t, _ = sample_batch(model, horizon, size, rng)
            inits[f].append(i)
            times[f].append(t)
    out_t = []
    for f in range(nfluct):
        width = max(t.shape[1] for t in times[f])
        out_t.append(np.vstack([np.pad(t, ((0, 0), (0, width - t.shape[1])), constant_values=np.inf)
                                for t in times[f]]))
    return Paths([np.concatenate(i) for i in inits], out_t, horizon)


def _n_fluctuators(model: NoiseModel, nqubits: int) -> int:
    return nqubits if model.topology == "independent_per_qubit" and nqubits > 1 else 1


def window_phases(paths: Paths, grid: WindowGrid, omega: float = 0.0) -> np.ndarray:
    """Window integrals ``int_W beta(t) cos(omega t) dt``, shape ``(nfluct, n, L)``."""
    if grid.T > paths.horizon * (1 + 1e-12):
        raise ValueError("grid extends past the sampled horizon")
    out = np.empty((len(paths.init), paths.n, grid.L))
    edges = grid.edges()
    for f, (init, times) in enumerate(zip(paths.init, paths.times)):
        if omega == 0:
            c = batch_cumulative(init, times, edges)
            out[f] = np.diff(c, axis=1)
        else:
            for n in range(grid.L):
                out[f, :, n] = batch_modulated_integral(init, times, edges[n], edges[n + 1], omega)
    return out


# ---------------------------------------------------------------------------
# classical noise


def _rotation(theta: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``exp(-i theta h)`` for ``h^2 = I``; ``theta`` of shape (n,)."""
    d = h.shape[-1]
    return np.cos(theta)[:, None, None] * np.eye(d) - 1j * np.sin(theta)[:, None, None] * h


def classical_propagators(control, model: NoiseModel, phases: np.ndarray) -> np.ndarray:
    """Per-trajectory toggling-frame propagators, shape ``(n, d, d)``.

    ``phases`` has shape ``(nfluct, n, L)`` as returned by :func:`window_phases`.
    """
    nq = control.nqubits
    n = phases.shape[1]
    U = np.broadcast_to(np.eye(control.dim, dtype=complex), (n, control.dim, control.dim)).copy()
    for w in range(control.L):
        Uw = None
        for q in range(nq):
            f = q if phases.shape[0] > 1 else 0
            R = _rotation(model.coupling(q) * phases[f, :, w], control.toggled[q, w])
            Uw = R if Uw is None else Uw @ R
        U = Uw @ U
    return U


def _expect(U: np.ndarray, rho: np.ndarray, Ot: np.ndarray) -> np.ndarray:
    """``Tr[U^dag O U rho]`` per trajectory."""
    return np.einsum("bji,jk,bkl,li->b", U.conj(), Ot, U, rho).real


# ---------------------------------------------------------------------------
# toy quantum bath


def _toy_segment(h: np.ndarray, b1: float, b2: float, g: float, dt: float) -> np.ndarray:
    X = b1 * _TX + b2 * _TY
    G = np.kron(h, X) / np.sqrt(2)
    a = np.sqrt(2) * g * dt
    return np.cos(a) * np.eye(4) - 1j * np.sin(a) * G


def toy_propagator(control, model: NoiseModel, init: float, switches: np.ndarray, grid: WindowGrid,
                   tol: float = 1e-15) -> np.ndarray:
    """Joint qubit and auxiliary propagator for one path."""
    sw = switches[np.isfinite(switches)]
    g = model.coupling(0)
    s = model.shift
    breaks = np.concatenate([grid.edges(), sw[sw < grid.T], sw[(sw > s) & (sw - s < grid.T)] - s])
    breaks = np.unique(breaks[(breaks >= 0) & (breaks <= grid.T)])
    if tol > 0 and breaks.size > 1:
        keep = np.concatenate([[True], np.diff(breaks) > tol])
        keep[-1] = True
        breaks = breaks[keep]
    U = np.eye(4, dtype=complex)
    mids = 0.5 * (breaks[1:] + breaks[:-1])
    c1 = np.searchsorted(sw, mids, side="right")
    c2 = np.searchsorted(sw, mids + s, side="right")
    b1 = init * (1 - 2 * (c1 % 2))
    b2 = init * (1 - 2 * (c2 % 2))
    win = np.minimum((mids // grid.tau).astype(int), grid.L - 1)
    for j, dt in enumerate(np.diff(breaks)):
        U = _toy_segment(control.toggled[0, win[j]], b1[j], b2[j], g, dt) @ U
    return U


# ---------------------------------------------------------------------------
# public entry points


def _check(experiment, model):
    nq = experiment.control.nqubits
    if model.is_quantum and nq != 1:
        raise ValueError("the toy bath is only supported for one qubit")
    if nq > 2:
        raise ValueError("at most two qubits are supported")


def trajectory_values(experiments: Sequence, model: NoiseModel, config: SimulationConfig,
                      paths: Optional[Paths] = None) -> np.ndarray:
    """Per-trajectory expectations, shape ``(len(experiments), n_traj)``.

    All experiments must share one grid; they are evaluated on the same
    paths.
    """
    experiments = list(experiments)
    if not experiments:
        return np.zeros((0, config.n_traj))
    grid = experiments[0].grid
    nq = experiments[0].control.nqubits
    for e in experiments:
        _check(e, model)
        if e.grid != grid or e.control.nqubits != nq:
            raise ValueError("experiments must share a grid and a qubit count")
    if paths is None:
        paths = sample_paths(model, grid.T, config, _n_fluctuators(model, nq))
    out = np.empty((len(experiments), paths.n))
    if not model.is_quantum:
        phases = window_phases(paths, grid, model.omega)
        for i, e in enumerate(experiments):
            U = classical_propagators(e.control, model, phases)
            out[i] = _expect(U, pauli_matrix(e.rho), toggled_observable(e.control, e.obs))
        return out
    if model.omega != 0:
        raise ValueError("the toy bath does not support modulation")
    init, times = paths.init[0], paths.times[0]
    for i, e in enumerate(experiments):
        rho = np.kron(pauli_matrix(e.rho), RHO_AUX)
        Ot = np.kron(toggled_observable(e.control, e.obs), np.eye(2))
        for b in range(paths.n):
            U = toy_propagator(e.control, model, init[b], times[b], grid, config.segment_tolerance)
            out[i, b] = np.trace(U.conj().T @ Ot @ U @ rho).real
    return out


def _summarise(vals: np.ndarray, config: SimulationConfig, dim: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    mean = vals.mean(axis=1)
    n = vals.shape[1]
    err = vals.std(axis=1, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(vals.shape[0])
    if config.shots is not None:
        from .qns_protocols import sample_shots

        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
        mean = sample_shots(mean, config.shots, rng, dim)
        phys = np.clip(mean / dim, -1, 1)
        err = np.sqrt(err**2 + dim**2 * (1 - phys**2) / config.shots)
    return mean, err


def simulate_protocol(experiments: Sequence, model: NoiseModel, config: SimulationConfig,
                      paths: Optional[Paths] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Trajectory averages and standard errors for several experiments."""
    dim = experiments[0].control.dim if len(experiments) else 2
    return _summarise(trajectory_values(experiments, model, config, paths), config, dim)


def simulate_expectation(experiment, model: NoiseModel, config: SimulationConfig) -> Tuple[float, float]:
    """Expectation ``Tr[U^dag O U rho]`` averaged over noise trajectories.

    Returns
    -------
    value, stderr : float
    """
    m, e = simulate_protocol([experiment], model, config)
    return float(m[0]), float(e[0])


def coherence_values(paths: Paths, model: NoiseModel, times: Sequence[float]) -> np.ndarray:
    """Per-trajectory ``exp(-2 i g int_0^t beta)``, shape ``(n, len(times))``."""
    t = np.asarray(times, dtype=float)
    if model.omega == 0:
        phi = batch_cumulative(paths.init[0], paths.times[0], t)
    else:
        phi = np.stack([batch_modulated_integral(paths.init[0], paths.times[0], 0.0, x, model.omega)
                        for x in t], axis=1)
    return np.exp(-2j * model.coupling(0) * phi)


def free_coherence_curve(model: NoiseModel, times: Sequence[float], config: SimulationConfig,
                         paths: Optional[Paths] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Free-evolution coherence ``|E[exp(-2 i g int_0^t beta)]|`` and its standard error."""
    if model.is_quantum:
        raise ValueError("free coherence is defined for classical noise")
    t = np.asarray(times, dtype=float)
    if paths is None:
        paths = sample_paths(model, float(t.max()) if t.size and t.max() > 0 else 1.0, config)
    z = coherence_values(paths, model, t)
    m = z.mean(axis=0)
    n = z.shape[0]
    val = np.abs(m)
    # delta method for |mean|
    u = np.where(val > 0, m / np.where(val > 0, val, 1), 1)
    proj = (z * u.conj()).real
    err = proj.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(val)
    return val, err
