"""Window frames, digital controls and toggled error operators.

A digital control holds the toggling-frame error operator fixed inside each
window ``W_n = [(n-1) tau, n tau)``. Single-qubit controls are given directly
by unit switching vectors ``y(n)``; two-qubit controls by 15 KAK angles per
window from which ``U_0(n tau)`` and ``h_q(n) = U_0^dag Z_q U_0`` follow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .algebra import SIGMA, as_pauli, pauli_basis, pauli_matrix, _check_pauli_like_observable

KAK_FIELDS = (
    "theta_A", "alpha_A", "phi_A", "theta_B", "alpha_B", "phi_B",
    "Theta", "varrho", "omega",
    "theta_A'", "alpha_A'", "phi_A'", "theta_B'", "alpha_B'", "phi_B'",
)

_I2 = np.eye(2, dtype=complex)
_XX = np.kron(SIGMA[1], SIGMA[1])
_YY = np.kron(SIGMA[2], SIGMA[2])
_ZZ = np.kron(SIGMA[3], SIGMA[3])
_I4 = np.eye(4, dtype=complex)
Z_A = np.kron(SIGMA[3], _I2)
Z_B = np.kron(_I2, SIGMA[3])


@dataclass(frozen=True)
class WindowGrid:
    """Equal partition of ``[0, T]`` into ``L`` windows of width ``tau``."""

    L: int
    T: float

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be at least 1")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def tau(self) -> float:
        return self.T / self.L

    def edges(self) -> np.ndarray:
        return np.arange(self.L + 1) * self.tau

    def rescaled(self, T: float) -> "WindowGrid":
        return WindowGrid(self.L, T)


def window_value(grid: WindowGrid, n: int, t: float) -> int:
    """Indicator of window ``n`` (1-based) on the half-open interval."""
    if not 1 <= n <= grid.L:
        raise ValueError(f"window {n} outside 1..{grid.L}")
    return int((n - 1) * grid.tau <= t < n * grid.tau)


def _axis(alpha, phi):
    return np.array([np.cos(phi) * np.sin(alpha), np.cos(phi) * np.cos(alpha), np.sin(phi)])


def _local(theta, alpha, phi):
    # exp(-i theta n.sigma) for unit n
    n = _axis(alpha, phi)
    return np.cos(theta) * _I2 - 1j * np.sin(theta) * np.einsum("i,ijk->jk", n, SIGMA[1:])


def kak_window_unitary(p: Sequence[float]) -> np.ndarray:
    """``U_0`` for one window from its 15 KAK angles (local x entangling x local)."""
    p = np.asarray(p, dtype=float)
    if p.shape != (15,):
        raise ValueError("a KAK record has 15 angles")
    pre = np.kron(_local(*p[0:3]), _local(*p[3:6]))
    Th, vr, om = p[6:9]
    ent = _I4
    for coef, G in ((np.cos(vr) * np.sin(om), _XX), (np.cos(vr) * np.cos(om), _YY), (np.sin(vr), _ZZ)):
        a = Th * coef
        ent = ent @ (np.cos(a) * _I4 - 1j * np.sin(a) * G)
    post = np.kron(_local(*p[9:12]), _local(*p[12:15]))
    return pre @ ent @ post


def kak_propagator(params, n: Optional[int] = None) -> np.ndarray:
    """Window-``n`` propagator ``U_0(n tau)`` of a KAK-parameterised control.

    Parameters
    ----------
    params : array_like
        Either a single 15-angle record or an ``(L, 15)`` array.
    n : int, optional
        1-based window index, required when ``params`` is two-dimensional.
    """
    params = np.asarray(params, dtype=float)
    if params.ndim == 1:
        return kak_window_unitary(params)
    if n is None or not 1 <= n <= params.shape[0]:
        raise ValueError("window index out of range")
    return kak_window_unitary(params[n - 1])


class DigitalControl:
    """Piecewise-constant toggling-frame control on ``L`` windows.

    Use :meth:`from_vectors` for a single qubit and :meth:`from_kak` for two
    qubits. The toggled error operators are stored in ``toggled`` with shape
    ``(nqubits, L, d, d)``.
    """

    def __init__(self, toggled: np.ndarray, vectors=None, kak=None):
        self.toggled = np.asarray(toggled, dtype=complex)
        self.toggled.setflags(write=False)
        self.nqubits = self.toggled.shape[0]
        self.L = self.toggled.shape[1]
        self.vectors = vectors
        self.kak = kak

    @classmethod
    def from_vectors(cls, vectors, tol: float = 1e-3) -> "DigitalControl":
        """Single-qubit control from per-window switching vectors.

        Vectors within ``tol`` of unit norm are renormalised; others raise.
        """
        y = np.atleast_2d(np.asarray(vectors, dtype=float))
        if y.shape[1] != 3:
            raise ValueError("switching vectors must have three components")
        norms = np.linalg.norm(y, axis=1)
        if np.any(np.abs(norms - 1) > tol):
            raise ValueError("switching vectors must have unit norm")
        y = y / norms[:, None]
        h = np.einsum("nu,uij->nij", y, SIGMA[1:])
        return cls(h[None], vectors=y)

    @classmethod
    def from_kak(cls, params) -> "DigitalControl":
        p = np.atleast_2d(np.asarray(params, dtype=float))
        if p.shape[1] != 15:
            raise ValueError("KAK controls need 15 angles per window")
        U = np.array([kak_window_unitary(r) for r in p])
        Ud = U.conj().transpose(0, 2, 1)
        h = np.stack([Ud @ Z_A @ U, Ud @ Z_B @ U])
        return cls(h, kak=p)

    @classmethod
    def identity(cls, L: int, nqubits: int = 1) -> "DigitalControl":
        if nqubits == 1:
            return cls.from_vectors(np.tile([0.0, 0.0, 1.0], (L, 1)))
        return cls.from_kak(np.zeros((L, 15)))

    @property
    def dim(self) -> int:
        return 2**self.nqubits

    def propagator(self, n: int) -> np.ndarray:
        if self.kak is None:
            raise ValueError("single-qubit controls do not materialise U_0")
        return kak_propagator(self.kak, n)

    def to_record(self) -> dict:
        if self.kak is not None:
            return {"kak": self.kak.tolist()}
        return {"windows": self.vectors.tolist()}

    def __repr__(self):
        kind = "kak" if self.kak is not None else "vectors"
        return f"DigitalControl(nqubits={self.nqubits}, L={self.L}, {kind})"


def toggled_pauli(control: DigitalControl, q: int, n: int) -> np.ndarray:
    """Toggled error operator ``h_q(n)``; ``q`` is 0 for qubit A, 1 for B."""
    if not 1 <= n <= control.L:
        raise ValueError(f"window {n} outside 1..{control.L}")
    return control.toggled[q, n - 1]


@dataclass(frozen=True)
class FrameFilter:
    """First-order frame filter ``F[u, n]`` of one qubit label (``n`` 0-based)."""

    q: int
    values: np.ndarray = field(repr=False)

    def __call__(self, u: int, n: int) -> float:
        return float(self.values[u, n - 1])


def frame_filter(control: DigitalControl, q: int = 0) -> FrameFilter:
    """Pauli coefficients ``F_u(n) = Tr[h_q(n) Lambda_u] / 2^|Q|`` per window."""
    B = pauli_basis(control.nqubits)
    vals = np.einsum("nij,uji->un", control.toggled[q], B).real / control.dim
    return FrameFilter(q, vals)


def toggled_observable(control: DigitalControl, O, final_propagator: Optional[np.ndarray] = None) -> np.ndarray:
    """Toggling-frame observable.

    Any final gate is absorbed into the measured observable, so by default
    the frame at ``T`` is the identity and ``O`` is returned unchanged. Pass
    ``final_propagator`` to conjugate by an explicit ``U_0(T)`` instead.
    """
    if isinstance(O, np.ndarray) and O.ndim == 2:
        Om = np.asarray(O, dtype=complex)
    else:
        Om = pauli_matrix(as_pauli(O, control.nqubits))
    if Om.shape != (control.dim, control.dim):
        raise ValueError("observable dimension does not match the control")
    try:
        _check_pauli_like_observable(Om)
    except ValueError:
        raise ValueError("observable must be a Pauli operator (unitary and Hermitian)") from None
    if final_propagator is None:
        return Om
    U = np.asarray(final_propagator, dtype=complex)
    return U.conj().T @ Om @ U
