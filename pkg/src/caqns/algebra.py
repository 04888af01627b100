"""Pauli-string algebra and process-matrix utilities.

Pauli strings are addressed by base-4 integers. For two qubits the integer
``u = 4*a + b`` holds the left (qubit A) digit ``a`` and the right (qubit B)
digit ``b``, with 0=I, 1=X, 2=Y, 3=Z.
"""

from __future__ import annotations

import functools
import itertools
from typing import Sequence, Tuple, Union

import numpy as np

SIGMA = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

LABELS = "IXYZ"

# single-qubit multiplication table: sigma_a sigma_b = PHASE[a, b] sigma_{PROD[a, b]}
_PROD = np.array([[0, 1, 2, 3], [1, 0, 3, 2], [2, 3, 0, 1], [3, 2, 1, 0]])
_PHASE = np.array(
    [
        [1, 1, 1, 1],
        [1, 1, 1j, -1j],
        [1, -1j, 1, 1j],
        [1, 1j, -1j, 1],
    ]
)

PauliLike = Union[int, str, Sequence[int], "PauliIndex"]


class PauliIndex:
    """Canonical label of an n-qubit Pauli string.

    Parameters
    ----------
    digits : sequence of int
        Per-qubit codes in ``{0, 1, 2, 3}``, left factor first.
    """

    __slots__ = ("digits",)

    def __init__(self, digits: Sequence[int]):
        digits = tuple(int(d) for d in digits)
        if not digits or any(d not in (0, 1, 2, 3) for d in digits):
            raise ValueError(f"invalid Pauli digits {digits!r}")
        self.digits = digits

    @property
    def nqubits(self) -> int:
        return len(self.digits)

    @property
    def code(self) -> int:
        u = 0
        for d in self.digits:
            u = 4 * u + d
        return u

    @property
    def label(self) -> str:
        return "".join(LABELS[d] for d in self.digits)

    @classmethod
    def from_code(cls, u: int, nqubits: int) -> "PauliIndex":
        if not 0 <= u < 4**nqubits:
            raise ValueError(f"Pauli code {u} out of range for {nqubits} qubit(s)")
        digits = []
        for _ in range(nqubits):
            digits.append(u % 4)
            u //= 4
        return cls(digits[::-1])

    def __eq__(self, other):
        return isinstance(other, PauliIndex) and other.digits == self.digits

    def __hash__(self):
        return hash(self.digits)

    def __repr__(self):
        return f"PauliIndex({self.label!r})"


def as_pauli(u: PauliLike, nqubits: int | None = None) -> PauliIndex:
    """Coerce an integer code, label string or digit sequence to a PauliIndex.

    Labels such as ``"ZZ"`` or ``"XI"`` are accepted, as are the generator
    names ``"L7"`` (two-qubit generator number 7) used by protocol tables.
    """
    if isinstance(u, PauliIndex):
        p = u
    elif isinstance(u, str):
        s = u.strip().upper()
        if s.startswith("L") and s[1:].isdigit():
            p = PauliIndex.from_code(int(s[1:]), nqubits or 2)
        else:
            s = s.replace("0", "I").replace("⊗", "")
            p = PauliIndex([LABELS.index(c) for c in s])
    elif isinstance(u, (int, np.integer)):
        p = PauliIndex.from_code(int(u), nqubits or 1)
    else:
        p = PauliIndex(u)
    if nqubits is not None and p.nqubits != nqubits:
        raise ValueError(f"{p!r} does not act on {nqubits} qubit(s)")
    return p


@functools.lru_cache(maxsize=None)
def _pauli_cached(digits: Tuple[int, ...]) -> np.ndarray:
    m = np.ones((1, 1), dtype=complex)
    for d in digits:
        m = np.kron(m, SIGMA[d])
    m.setflags(write=False)
    return m


def pauli_matrix(u: PauliLike, nqubits: int | None = None) -> np.ndarray:
    """Dense matrix of a Pauli string.

    Examples
    --------
    >>> pauli_matrix("Z")
    array([[ 1.+0.j,  0.+0.j],
           [ 0.+0.j, -1.+0.j]])
    """
    return _pauli_cached(as_pauli(u, nqubits).digits)


@functools.lru_cache(maxsize=None)
def pauli_basis(nqubits: int) -> np.ndarray:
    """All ``4**nqubits`` Pauli matrices stacked along axis 0 in code order."""
    b = np.array([pauli_matrix(PauliIndex.from_code(u, nqubits)) for u in range(4**nqubits)])
    b.setflags(write=False)
    return b


def pauli_product(u: PauliLike, v: PauliLike) -> Tuple[complex, PauliIndex]:
    """Phase and label of the product ``Lambda_u Lambda_v``.

    Returns
    -------
    phase : complex
        One of ``1, -1, 1j, -1j``.
    w : PauliIndex
        Pauli string with ``Lambda_u Lambda_v = phase * Lambda_w``.
    """
    pu, pv = as_pauli(u), as_pauli(v)
    if pu.nqubits != pv.nqubits:
        raise ValueError("Pauli strings act on different numbers of qubits")
    phase = 1 + 0j
    digits = []
    for a, b in zip(pu.digits, pv.digits):
        phase *= _PHASE[a, b]
        digits.append(int(_PROD[a, b]))
    return complex(phase), PauliIndex(digits)


def _check_pauli_like_observable(O: np.ndarray, tol: float = 1e-10) -> None:
    O = np.asarray(O)
    eye = np.eye(O.shape[0])
    if not (np.allclose(O @ O.conj().T, eye, atol=tol) and np.allclose(O, O.conj().T, atol=tol)):
        raise ValueError("observable must be unitary and Hermitian")


def conjugation_factor(u: PauliLike, c: PauliLike, O_tilde: np.ndarray) -> float:
    """Return ``-(1/2^|Q|) Tr[O^-1 Lambda_u O Lambda_c]``.

    The factor is +1 when ``O`` anticommutes with a repeated generator and -1
    when it commutes.
    """
    pu, pc = as_pauli(u), as_pauli(c, as_pauli(u).nqubits)
    O_tilde = np.asarray(O_tilde, dtype=complex)
    if O_tilde.shape != (2**pu.nqubits,) * 2:
        raise ValueError("observable dimension does not match the Pauli strings")
    if abs(np.linalg.det(O_tilde)) < 1e-12:
        raise ValueError("observable is not invertible")
    Oi = np.linalg.inv(O_tilde)
    val = -np.trace(Oi @ pauli_matrix(pu) @ O_tilde @ pauli_matrix(pc)) / 2**pu.nqubits
    return float(val.real)


def unitary_to_ptm(U: np.ndarray) -> np.ndarray:
    """Pauli transfer matrix ``R[v, u] = Tr[Lambda_v U Lambda_u U^dag] / d``."""
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    B = pauli_basis(int(round(np.log2(d))))
    rotated = U @ B @ U.conj().T
    return np.einsum("vij,uji->vu", B, rotated).real / d


def kraus_to_ptm(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """Pauli transfer matrix of a channel given by Kraus operators."""
    d = np.asarray(kraus[0]).shape[0]
    B = pauli_basis(int(round(np.log2(d))))
    out = np.zeros((d * d, d * d))
    for K in kraus:
        K = np.asarray(K, dtype=complex)
        out += np.einsum("vij,uji->vu", B, K @ B @ K.conj().T).real
    return out / d


@functools.lru_cache(maxsize=None)
def _chi_to_ptm_map(nqubits: int) -> np.ndarray:
    # R[a, b] = (1/d) sum_{u,v} chi[u, v] Tr[L_a L_u L_b L_v]
    B = pauli_basis(nqubits)
    d = 2**nqubits
    n = d * d
    A = np.empty((n, n, n, n), dtype=complex)
    for a, u in itertools.product(range(n), repeat=2):
        left = B[a] @ B[u]
        A[a, :, u, :] = np.einsum("ij,bjk,vki->bv", left, B, B)
    A = A.reshape(n * n, n * n) / d
    A.setflags(write=False)
    return A


def chi_to_ptm(chi: np.ndarray) -> np.ndarray:
    """Inverse of :func:`ptm_to_chi`; returns the real part of the transfer matrix."""
    chi = np.asarray(chi, dtype=complex)
    n = chi.shape[0]
    nq = _nqubits_from_size(n)
    return (_chi_to_ptm_map(nq) @ chi.reshape(-1)).reshape(n, n).real


def _nqubits_from_size(n: int) -> int:
    nq = int(round(np.log(n) / np.log(4)))
    if 4**nq != n or nq < 1:
        raise ValueError(f"matrix size {n} is not a power of 4")
    return nq


def ptm_to_chi(ptm: np.ndarray) -> np.ndarray:
    """Convert a Pauli transfer matrix to the chi matrix in the Pauli basis.

    The chi matrix is defined by ``E(rho) = sum_{u,v} chi[u, v] L_u rho L_v``
    with unnormalised Pauli strings, so a trace-preserving map has unit trace.
    """
    ptm = np.asarray(ptm)
    if ptm.ndim != 2 or ptm.shape[0] != ptm.shape[1]:
        raise ValueError("PTM must be square")
    n = ptm.shape[0]
    nq = _nqubits_from_size(n)
    x = np.linalg.solve(_chi_to_ptm_map(nq), ptm.astype(complex).reshape(-1))
    return x.reshape(n, n)


def process_fidelity(chi: np.ndarray, chi_ideal: np.ndarray) -> float:
    """Trace inner product ``Tr[chi chi_ideal]`` of two chi matrices."""
    chi = np.asarray(chi)
    chi_ideal = np.asarray(chi_ideal)
    if chi.shape != chi_ideal.shape:
        raise ValueError("chi matrices differ in size")
    return float(np.real(np.trace(chi @ chi_ideal)))


def unitary_to_chi(U: np.ndarray) -> np.ndarray:
    """Chi matrix of a unitary channel, ``chi = c c^dag`` with ``c_u = Tr[L_u U]/d``."""
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    B = pauli_basis(int(round(np.log2(d))))
    c = np.einsum("uij,ji->u", B, U) / d
    return np.outer(c, c.conj())
