"""Control tensors and truncated CA Dyson expectations.

For an index ``(n, mu, q)`` of order ``k`` the control tensor is

    T = sum_{pi_Q} (-1)^(mu . pi_E) [prod of hbar over barred slots, latest
        slot rightmost] [prod of h over plain slots, latest slot leftmost]

with ``hbar = -O^-1 h O``. Slot 1 holds the latest time. The sum obeys the
recursion ``M_1 = h_1 + hbar_1`` and
``M_i = M_{i-1} h_i + (-1)^mu_{i-1} hbar_i M_{i-1}``, which lets tensors that
share a prefix share work. The expectation is

    E = Tr[rho O] + sum_k (-i)^k sum_index Tr[T rho O] S(index).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .algebra import as_pauli, pauli_matrix
from .digital_control import DigitalControl, toggled_observable
from .noise_models import SpectrumIndex, SpectrumTable

DARK = "dark"


def sign_function(pi_e: Sequence[int], mu: Sequence[int]) -> int:
    """Parity ``mu . pi_E mod 2`` deciding the sign of a permutation term."""
    if len(pi_e) != len(mu):
        raise ValueError("pi_e and mu must have equal length")
    return int(sum(int(a) * int(b) for a, b in zip(pi_e, mu)) % 2)


@dataclass(frozen=True)
class PermutationCode:
    """Binary code of one term: bit ``i`` is 1 when slot ``i`` is barred."""

    pi_q: Tuple[int, ...]

    @property
    def pi_e(self) -> Tuple[int, ...]:
        return self.pi_q[1:]


def permutation_codes(k: int):
    for bits in itertools.product((0, 1), repeat=k):
        yield PermutationCode(bits)


@dataclass(frozen=True)
class ControlTensorValue:
    index: SpectrumIndex
    matrix: np.ndarray


def _slots(control: DigitalControl, index: SpectrumIndex) -> List[np.ndarray]:
    if max(index.n) > control.L:
        raise ValueError("index refers to windows beyond the control")
    if max(index.q) >= control.nqubits:
        raise ValueError("index refers to a qubit the control lacks")
    return [control.toggled[q, n - 1] for n, q in zip(index.n, index.q)]


def _observable(control, O):
    if isinstance(O, np.ndarray) and O.ndim == 2:
        return np.asarray(O, dtype=complex)
    return toggled_observable(control, O)


def control_tensor(control: DigitalControl, O, index: SpectrumIndex) -> ControlTensorValue:
    """Control tensor of one index via the prefix recursion."""
    if not index.ordered:
        raise ValueError("n-string must be nonincreasing")
    Ot = _observable(control, O)
    Oi = np.linalg.inv(Ot)
    hs = _slots(control, index)
    hb = [-Oi @ h @ Ot for h in hs]
    M = hs[0] + hb[0]
    for i in range(1, index.k):
        M = M @ hs[i] + (-1) ** index.mu[i - 1] * (hb[i] @ M)
    return ControlTensorValue(index, M)


def control_tensor_bruteforce(control: DigitalControl, O, index: SpectrumIndex) -> ControlTensorValue:
    """Control tensor as the explicit signed sum over all ``2^k`` codes."""
    if not index.ordered:
        raise ValueError("n-string must be nonincreasing")
    Ot = _observable(control, O)
    Oi = np.linalg.inv(Ot)
    hs = _slots(control, index)
    hb = [-Oi @ h @ Ot for h in hs]
    d = Ot.shape[0]
    T = np.zeros((d, d), dtype=complex)
    for code in permutation_codes(index.k):
        bar = [i for i, b in enumerate(code.pi_q) if b]
        plain = [i for i, b in enumerate(code.pi_q) if not b]
        M = np.eye(d, dtype=complex)
        for i in reversed(bar):
            M = M @ hb[i]
        for i in plain:
            M = M @ hs[i]
        T += (-1) ** sign_function(code.pi_e, index.mu) * M
    return ControlTensorValue(index, T)


# ---------------------------------------------------------------------------
# batched evaluation


class _Trie:
    __slots__ = ("children", "leaf")

    def __init__(self):
        self.children: Dict[tuple, "_Trie"] = {}
        self.leaf: List[int] = []


def _build_trie(indices: Sequence[SpectrumIndex]) -> _Trie:
    root = _Trie()
    for j, idx in enumerate(indices):
        node = root
        for i in range(idx.k):
            tok = (idx.mu[i - 1] if i else 0, idx.n[i], idx.q[i])
            node = node.children.setdefault(tok, _Trie())
        node.leaf.append(j)
    return root


def batch_tensors(h: np.ndarray, Ot: np.ndarray, indices: Sequence[SpectrumIndex],
                  visit: Callable[[int, np.ndarray], None]) -> None:
    """Evaluate control tensors for a batch of controls and many indices.

    Parameters
    ----------
    h : ndarray, shape (B, nqubits, L, d, d)
        Toggled operators of ``B`` controls.
    Ot : ndarray, shape (B, d, d)
        Toggling-frame observables.
    indices : sequence of SpectrumIndex
    visit : callable
        Called as ``visit(j, T)`` with ``T`` of shape ``(B, d, d)`` for every
        position ``j`` in ``indices``.
    """
    Oi = np.linalg.inv(Ot)
    hb = -np.einsum("bij,bqnjk,bkl->bqnil", Oi, h, Ot)
    root = _build_trie(indices)

    def walk(node, M, depth):
        for (mu, n, q), child in node.children.items():
            hn = h[:, q, n - 1]
            hbn = hb[:, q, n - 1]
            if depth == 0:
                Mc = hn + hbn
            elif mu:
                Mc = M @ hn - hbn @ M
            else:
                Mc = M @ hn + hbn @ M
            for j in child.leaf:
                visit(j, Mc)
            walk(child, Mc, depth + 1)

    walk(root, None, 0)


def coefficient_matrix(h: np.ndarray, Ot: np.ndarray, rho: np.ndarray, indices: Sequence[SpectrumIndex]) -> np.ndarray:
    """Affine coefficients ``(-i)^k Tr[T rho O]`` of shape ``(B, len(indices))``."""
    B = h.shape[0]
    out = np.zeros((B, len(indices)), dtype=complex)
    RO = rho @ Ot
    phases = [(-1j) ** idx.k for idx in indices]

    def visit(j, T):
        out[:, j] = phases[j] * np.einsum("bij,bji->b", T, RO)

    batch_tensors(h, Ot, indices, visit)
    return out


def tensor_stack(h, Ot, indices) -> np.ndarray:
    """All tensors as an array of shape ``(B, len(indices), d, d)``."""
    B, d = h.shape[0], h.shape[-1]
    out = np.zeros((B, len(indices), d, d), dtype=complex)

    def visit(j, T):
        out[:, j] = T

    batch_tensors(h, Ot, indices, visit)
    return out


def _as_operator(x, nqubits):
    if isinstance(x, np.ndarray) and x.ndim == 2:
        return np.asarray(x, dtype=complex)
    return pauli_matrix(as_pauli(x, nqubits))


Resolver = Callable[[SpectrumIndex], object]


def expectation(control: DigitalControl, rho, O, spectra: SpectrumTable, K: int,
                resolver: Optional[Resolver] = None,
                indices: Optional[Iterable[SpectrumIndex]] = None) -> complex:
    """Truncated CA Dyson expectation ``Tr[rho O(T)]`` plus noise corrections.

    Parameters
    ----------
    control : DigitalControl
    rho, O : Pauli label or matrix
        Pseudo-initial operator and measured observable.
    spectra : SpectrumTable
    K : int
        Truncation order.
    resolver : callable, optional
        Maps an index to ``"dark"``, to another index (its representative,
        in which case the index is treated as bound and skipped) or to itself.
    indices : iterable of SpectrumIndex, optional
        Indices that must be present; a missing one raises ``KeyError``.
        Defaults to every table entry of order at most ``K``.
    """
    if spectra.max_order and K > spectra.max_order and indices is None:
        raise ValueError(f"K={K} exceeds the table coverage ({spectra.max_order})")
    nq = control.nqubits
    Ot = _observable(control, O)
    R = _as_operator(rho, nq)
    base = complex(np.trace(R @ Ot))
    if indices is None:
        use = [i for i in spectra if i.k <= K]
    else:
        use = [i for i in indices if i.k <= K]
        missing = [i for i in use if i.ordered and i not in spectra]
        if missing:
            raise KeyError(f"missing spectra, e.g. {missing[0].label()}")
    if resolver is not None:
        keep = []
        for i in use:
            r = resolver(i)
            if r == DARK or (isinstance(r, SpectrumIndex) and r != i):
                continue
            keep.append(i)
        use = keep
    use = [i for i in use if i.ordered]
    if not use:
        return base
    C = coefficient_matrix(control.toggled[None], Ot[None], R[None], use)[0]
    vals = np.array([spectra[i] for i in use])
    return base + complex(C @ vals)
