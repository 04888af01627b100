"""Binding, dark and swap symmetries of CA spectra and learnable-set counting.

Classification of an index proceeds as follows:

1. quantum indices whose control tensor vanishes identically are dark;
2. two-qubit indices are moved to their swap-canonical q-string;
3. a contractible streak (3-streak for one qubit, a run of three equal
   ``(n, q)`` slots for two qubits) binds the index to the contracted one;
4. whatever remains is learnable, except that for quantum noise the
   survivors are thinned to a linearly independent subset.

Darkness is decided from the known low-order lists where they apply and
otherwise by evaluating the tensor on random controls.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .algebra import SIGMA
from .digital_control import DigitalControl, kak_window_unitary, Z_A, Z_B
from .dyson_engine import DARK, batch_tensors, tensor_stack
from .noise_models import SpectrumIndex, SpectrumTable

DARK_TOL = 1e-10
WITNESS_TOL = 1e-6
N_RANDOM_CONTROLS = 20


def saturation_order(L: int, nqubits: int) -> int:
    return 2 * nqubits * L


def _runs(n: Sequence[int]) -> List[Tuple[int, int]]:
    """``(start, length)`` of maximal runs of equal values."""
    out = []
    start = 0
    for j in range(1, len(n) + 1):
        if j == len(n) or n[j] != n[start]:
            out.append((start, j - start))
            start = j
    return out


def max_streak(n: Sequence[int]) -> int:
    return max(length for _, length in _runs(n))


# ---------------------------------------------------------------------------
# contraction


def _delete_pair(index: SpectrumIndex, j: int) -> SpectrumIndex:
    """Drop slots ``j, j+1`` and the sign bits attached to slots ``j+1, j+2``."""
    n = index.n[:j] + index.n[j + 2:]
    q = index.q[:j] + index.q[j + 2:]
    mu = index.mu[:j] + index.mu[j + 2:]
    return SpectrumIndex(n, mu, q)


def contraction_step(index: SpectrumIndex, nqubits: int = 1) -> Optional[SpectrumIndex]:
    """One contraction, or ``None`` when no contractible streak exists.

    For one qubit the first 3-streak in the n-string is contracted. For two
    qubits the streak must also repeat the qubit label three times in a row;
    a 5-streak always contains such a run once the q-string is swap
    canonical.
    """
    n, q = index.n, index.q
    for j in range(index.k - 2):
        if n[j] == n[j + 1] == n[j + 2] and (nqubits == 1 or q[j] == q[j + 1] == q[j + 2]):
            return _delete_pair(index, j)
    return None


def detect_contraction(index: SpectrumIndex, nqubits: int = 1) -> Optional[SpectrumIndex]:
    """Contract repeatedly to a fixed point; ``None`` if nothing contracts."""
    cur = swap_representative(index) if nqubits == 2 else index
    out = None
    while True:
        nxt = contraction_step(cur, nqubits)
        if nxt is None:
            return out
        out = cur = swap_representative(nxt) if nqubits == 2 else nxt


# ---------------------------------------------------------------------------
# swap symmetry


def _swap_allowed(mu: Tuple[int, ...], j: int) -> bool:
    # exchanging slots j, j+1 keeps every sign when their sign bits agree;
    # slot 0 carries no sign bit
    if j == 0:
        return mu[0] == 0
    return mu[j - 1] == mu[j]


def swap_representative(index: SpectrumIndex) -> SpectrumIndex:
    """Canonical q-string under exchanges inside window streaks.

    Adjacent slots in the same window may be exchanged when their sign bits
    agree, which always holds for classical indices. Labels are sorted
    (A before B) inside each block of mutually exchangeable slots.
    """
    n, q, mu = index.n, list(index.q), index.mu
    k = index.k
    j = 0
    while j < k:
        end = j
        while end + 1 < k and n[end + 1] == n[j] and _swap_allowed(mu, end):
            end += 1
        if end > j:
            q[j:end + 1] = sorted(q[j:end + 1])
        j = end + 1
    return SpectrumIndex(n, mu, tuple(q))


# ---------------------------------------------------------------------------
# dark spectra


def _listed_dark(index: SpectrumIndex) -> bool:
    """Membership in the known single-qubit dark lists for ``k <= 4``."""
    k, n, mu = index.k, index.n, index.mu
    if k == 2:
        return mu == (1,) and n[0] == n[1]
    if k == 3:
        return ((mu in ((0, 1), (1, 0)) and n[1] == n[2])
                or (mu == (1, 1) and n[0] == n[1]))
    if k == 4:
        e12, e23, e34 = n[0] == n[1], n[1] == n[2], n[2] == n[3]
        rules = {
            (0, 0, 1): e34,
            (0, 1, 0): e34 or e23,
            (0, 1, 1): e23,
            (1, 0, 0): e23 or e12,
            (1, 0, 1): e23 or e12,
            (1, 1, 0): e12 or e34,
            (1, 1, 1): e12,
        }
        return bool(rules.get(mu, False))
    return False


def listed_dark_indices(L: int, k: int) -> List[SpectrumIndex]:
    """All single-qubit indices of order ``k`` on ``L`` windows in the known lists."""
    out = []
    for c in itertools.combinations_with_replacement(range(1, L + 1), k):
        n = c[::-1]
        for mu in itertools.product((0, 1), repeat=k - 1):
            idx = SpectrumIndex(n, mu)
            if _listed_dark(idx):
                out.append(idx)
    return out


def random_controls(nqubits: int, L: int, count: int = N_RANDOM_CONTROLS, seed: int = 20240917):
    """Random toggled operators and observables for numerical certification.

    Returns ``(h, Ot)`` with shapes ``(count, nqubits, L, d, d)`` and
    ``(count, d, d)``.
    """
    rng = np.random.default_rng(seed)
    if nqubits == 1:
        y = rng.normal(size=(count, L + 1, 3))
        y /= np.linalg.norm(y, axis=2, keepdims=True)
        ops = np.einsum("bnu,uij->bnij", y, SIGMA[1:])
        return ops[:, None, :L], ops[:, L]
    hs, Os = [], []
    for _ in range(count):
        c = DigitalControl.from_kak(rng.uniform(-np.pi, np.pi, size=(L, 15)))
        hs.append(c.toggled)
        U = kak_window_unitary(rng.uniform(-np.pi, np.pi, size=15))
        Os.append(U.conj().T @ np.kron(SIGMA[3], SIGMA[3]) @ U)
    return np.array(hs), np.array(Os)


def tensor_norms(indices: Sequence[SpectrumIndex], nqubits: int = 1, count: int = N_RANDOM_CONTROLS) -> np.ndarray:
    """Frobenius norms of control tensors, shape ``(count, len(indices))``."""
    if not indices:
        return np.zeros((count, 0))
    L = max(max(i.n) for i in indices)
    h, Ot = random_controls(nqubits, L, count)
    out = np.zeros((count, len(indices)))

    def visit(j, T):
        out[:, j] = np.sqrt(np.einsum("bij,bij->b", T, T.conj()).real)

    batch_tensors(h, Ot, list(indices), visit)
    return out


_DARK_CACHE: Dict[Tuple[int, SpectrumIndex], bool] = {}


def certify_dark(indices: Iterable[SpectrumIndex], nqubits: int = 1) -> Dict[SpectrumIndex, bool]:
    """Numerical darkness of many indices at once (results are cached)."""
    todo = [i for i in set(indices) if (nqubits, i) not in _DARK_CACHE]
    if todo:
        todo.sort()
        norms = tensor_norms(todo, nqubits).max(axis=0)
        for i, v in zip(todo, norms):
            _DARK_CACHE[(nqubits, i)] = bool(v <= DARK_TOL)
    return {i: _DARK_CACHE[(nqubits, i)] for i in indices}


def is_dark(index: SpectrumIndex, nqubits: int = 1) -> bool:
    """Whether the control tensor of ``index`` vanishes for every control.

    Classical indices are never dark. Single-qubit indices in the known
    ``k <= 4`` lists are dark without computation; every other quantum index
    is certified numerically on random controls.
    """
    if index.classical:
        return False
    if nqubits == 1 and _listed_dark(index):
        return True
    return certify_dark([index], nqubits)[index]


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class SymmetryClass:
    """Result of classifying one index.

    ``kind`` is ``"learnable"``, ``"dark"``, ``"bound"`` or ``"swap_bound"``;
    ``representative`` is the learnable index it folds into (``None`` when dark).
    """

    index: SpectrumIndex
    kind: str
    representative: Optional[SpectrumIndex]


def classify(index: SpectrumIndex, nqubits: int = 1) -> SymmetryClass:
    if not index.ordered:
        raise ValueError("n-string must be nonincreasing")
    if not index.classical and is_dark(index, nqubits):
        return SymmetryClass(index, "dark", None)
    if nqubits == 2:
        s = swap_representative(index)
        if s != index:
            r = classify(s, nqubits)
            kind = "swap_bound" if r.kind == "learnable" else r.kind
            return SymmetryClass(index, kind, r.representative)
    c = contraction_step(index, nqubits)
    if c is not None:
        r = classify(c, nqubits)
        if r.kind == "dark":
            return SymmetryClass(index, "dark", None)
        return SymmetryClass(index, "bound", r.representative)
    return SymmetryClass(index, "learnable", index)


def make_resolver(nqubits: int = 1):
    """Resolver for :func:`caqns.dyson_engine.expectation`."""

    @functools.lru_cache(maxsize=None)
    def resolve(index: SpectrumIndex):
        c = classify(index, nqubits)
        return DARK if c.kind == "dark" else c.representative

    return resolve


def ordered_strings(L: int, k: int):
    for c in itertools.combinations_with_replacement(range(L, 0, -1), k):
        yield c


def all_indices(L: int, nqubits: int, noise_class: str, K: int):
    """Every ordered index up to order ``K``."""
    for k in range(1, K + 1):
        mus = [(0,) * (k - 1)] if noise_class == "classical" else list(itertools.product((0, 1), repeat=k - 1))
        qs = list(itertools.product(range(nqubits), repeat=k))
        for n in ordered_strings(L, k):
            for q in qs:
                for mu in mus:
                    yield SpectrumIndex(n, mu, q)


def _candidates(L, nqubits, noise_class, K):
    """Indices that can be learnable: bounded streaks, sorted classical q-runs."""
    limit = 2 * nqubits
    for k in range(1, K + 1):
        mus = [(0,) * (k - 1)] if noise_class == "classical" else list(itertools.product((0, 1), repeat=k - 1))
        for n in ordered_strings(L, k):
            runs = _runs(n)
            if max(length for _, length in runs) > limit:
                continue
            if nqubits == 1:
                qsets = [(0,) * k]
            else:
                qsets = itertools.product(range(2), repeat=k)
            for q in qsets:
                for mu in mus:
                    yield SpectrumIndex(n, mu, q)


def enumerate_learnable(L: int, nqubits: int = 1, noise_class: str = "classical", K: Optional[int] = None,
                        exhaustive: bool = False, linear: bool = True) -> List[SpectrumIndex]:
    """Learnable representatives up to order ``K`` (default: saturation).

    With ``exhaustive=True`` every ordered index is classified; otherwise
    only strings whose streaks are short enough to avoid contraction. For
    quantum noise the surviving indices are further reduced to a linearly
    independent subset (lowest order first), see :func:`linear_basis`;
    pass ``linear=False`` to skip that step.
    """
    if nqubits not in (1, 2):
        raise ValueError("only one or two qubits are supported")
    if noise_class not in ("classical", "quantum"):
        raise ValueError("noise_class must be 'classical' or 'quantum'")
    K = saturation_order(L, nqubits) if K is None else K
    gen = all_indices(L, nqubits, noise_class, K) if exhaustive else _candidates(L, nqubits, noise_class, K)
    cand = list(gen)
    if noise_class == "quantum":
        certify_dark([i for i in cand if not i.classical and not (nqubits == 1 and _listed_dark(i))], nqubits)
    out = [i for i in cand if classify(i, nqubits).kind == "learnable"]
    out.sort(key=lambda i: (i.k, tuple(-x for x in i.n), i.q, i.mu))
    if noise_class == "quantum" and linear:
        out = list(linear_basis(out, nqubits).basis)
    return out


def learnable_by_order(L: int, nqubits: int = 1, noise_class: str = "classical", K: Optional[int] = None,
                       exhaustive: bool = False, linear: bool = True) -> List[int]:
    K = saturation_order(L, nqubits) if K is None else K
    counts = [0] * K
    for i in enumerate_learnable(L, nqubits, noise_class, K, exhaustive, linear):
        counts[i.k - 1] += 1
    return counts


# ---------------------------------------------------------------------------
# closed-form counting


@dataclass(frozen=True)
class ComplexityReport:
    L: int
    nqubits: int
    noise_class: str
    saturation_order: int
    per_order_counts: Tuple[int, ...]
    total: int
    upper_bound: Optional[int] = None

    def to_dict(self) -> dict:
        d = {
            "L": self.L,
            "nqubits": self.nqubits,
            "noise_class": self.noise_class,
            "saturation_order": self.saturation_order,
            "per_order_counts": list(self.per_order_counts),
            "total": self.total,
        }
        if self.upper_bound is not None:
            d["upper_bound"] = self.upper_bound
        return d


def single_qubit_order_count(L: int, k: int) -> int:
    """Streak-free strings plus strings whose only streaks are 2-streaks."""
    total = math.comb(L, k)
    for t in range(math.ceil(k / 2), k):
        total += math.comb(t, k - t) * math.comb(L, t)
    return total


def two_qubit_order_count(L: int, k: int) -> int:
    """Classical two-qubit learnable count at order ``k``.

    A streak-free ``t``-string is expanded into ``p4`` 4-streaks, ``p3``
    3-streaks and ``p2`` 2-streaks; the q-snippets per streak length are
    1: A|B, 2: AA|AB|BB, 3: AAB|ABB, 4: AABB.
    """
    total = 0
    for t in range(math.ceil(k / 4), k + 1):
        for p4 in range((k - t) // 3 + 1):
            for p3 in range((k - t - 3 * p4) // 2 + 1):
                p2 = k - t - 2 * p3 - 3 * p4
                p1 = t - p4 - p3 - p2
                if p2 < 0 or p1 < 0:
                    continue
                total += (math.comb(L, t) * math.comb(t, p4) * math.comb(t - p4, p3) * 2**p3
                          * math.comb(t - p4 - p3, p2) * 3**p2 * 2**p1)
    return total


def count_learnable_closed_form(L: int, nqubits: int = 1, noise_class: str = "classical") -> ComplexityReport:
    """Learnable-spectrum counts up to saturation.

    Classical counts use the closed-form binomial sums. Quantum counts are
    obtained by enumeration with numerical darkness checks and linear
    reduction, and the looser
    ``2^(k-1)`` envelope is reported as ``upper_bound`` for one qubit.
    """
    if L < 1:
        raise ValueError("L must be positive")
    K = saturation_order(L, nqubits)
    if nqubits == 1:
        base = [single_qubit_order_count(L, k) for k in range(1, K + 1)]
    elif nqubits == 2:
        base = [two_qubit_order_count(L, k) for k in range(1, K + 1)]
    else:
        raise ValueError("only one or two qubits are supported")
    if noise_class == "classical":
        return ComplexityReport(L, nqubits, noise_class, K, tuple(base), sum(base))
    if noise_class != "quantum":
        raise ValueError("noise_class must be 'classical' or 'quantum'")
    counts = learnable_by_order(L, nqubits, "quantum", K)
    bound = sum(c * 2 ** (k - 1) for k, c in enumerate(base, start=1)) if nqubits == 1 else None
    return ComplexityReport(L, nqubits, noise_class, K, tuple(counts), sum(counts), bound)


def resource_ratio(L: int, L_omega: float, k: int) -> float:
    """Sample-count ratio ``(L / L_omega)^k`` of window-frame to comb QNS."""
    if L < 1 or L_omega < 1:
        raise ValueError("L and L_omega must be at least 1")
    return float((L / L_omega) ** k)


# ---------------------------------------------------------------------------
# bound form


def _tensor_ratio(member: SpectrumIndex, rep: SpectrumIndex, nqubits: int) -> complex:
    L = max(max(member.n), max(rep.n))
    h, Ot = random_controls(nqubits, L, 4, seed=7)
    T = tensor_stack(h, Ot, [member, rep])
    best = int(np.argmax(np.linalg.norm(T[:, 1], axis=(1, 2))))
    A, B = T[best, 0], T[best, 1]
    return complex(np.vdot(B, A) / np.vdot(B, B))


@functools.lru_cache(maxsize=None)
def binding_factor(member: SpectrumIndex, rep: SpectrumIndex, nqubits: int = 1) -> complex:
    """Factor ``f`` with ``(-i)^k_m T_m = f (-i)^k_r T_r`` for a bound member."""
    c = _tensor_ratio(member, rep, nqubits)
    c = complex(round(c.real, 9), round(c.imag, 9))
    return (-1j) ** (member.k - rep.k) * c


def bound_form(raw: SpectrumTable, nqubits: int = 1) -> SpectrumTable:
    """Fold bound and swap members into their representatives; drop dark entries.

    Quantum tables are further folded onto the linearly independent basis
    returned by :func:`enumerate_learnable`.
    """
    out: Dict[SpectrumIndex, complex] = {}
    for idx, val in raw.items():
        if not idx.ordered:
            continue
        c = classify(idx, nqubits)
        if c.kind == "dark":
            continue
        rep = c.representative
        f = 1.0 if rep == idx else binding_factor(idx, rep, nqubits)
        out[rep] = out.get(rep, 0j) + f * val
    table = SpectrumTable(out, "bound", raw.grid)
    quantum = [i for i in out if not i.classical]
    if not quantum:
        return table
    L = raw.grid.L if raw.grid is not None else max(max(i.n) for i in out)
    K = max(i.k for i in out)
    reps = enumerate_learnable(L, nqubits, "quantum", K, linear=False)
    return linear_basis(reps, nqubits).fold(table)


def symmetry_report(L: int, nqubits: int = 1, noise_class: str = "classical", K: Optional[int] = None) -> dict:
    """Classes of every ordered index up to ``K`` grouped by representative."""
    K = saturation_order(L, nqubits) if K is None else K
    classes: Dict[str, dict] = {}
    dark = []
    for idx in all_indices(L, nqubits, noise_class, K):
        c = classify(idx, nqubits)
        if c.kind == "dark":
            dark.append(idx.label())
            continue
        key = c.representative.label()
        entry = classes.setdefault(key, {"representative": c.representative.to_record(), "members": []})
        if c.kind != "learnable":
            entry["members"].append({"index": idx.to_record(), "kind": c.kind})
    report = count_learnable_closed_form(L, nqubits, noise_class) if K == saturation_order(L, nqubits) else None
    return {
        "L": L,
        "nqubits": nqubits,
        "noise_class": noise_class,
        "K": K,
        "classes": list(classes.values()),
        "dark": dark,
        "complexity": report.to_dict() if report else None,
    }


# ---------------------------------------------------------------------------
# linear dependencies beyond contraction


@dataclass(frozen=True)
class LinearBasis:
    """Maximal independent subset of a list of indices.

    ``relations`` maps each dropped index to ``{basis index: coefficient}``
    with ``(-i)^k T_member = sum coef (-i)^k T_basis`` for every control.
    """

    basis: Tuple[SpectrumIndex, ...]
    relations: Dict[SpectrumIndex, Dict[SpectrumIndex, complex]] = field(repr=False)

    def fold(self, table: SpectrumTable) -> SpectrumTable:
        """Move the value of every dependent index onto the basis."""
        out = {i: table.get(i, 0j) for i in self.basis}
        for m, rel in self.relations.items():
            v = table.get(m, 0j)
            if v:
                for b, c in rel.items():
                    out[b] += c * v
        return SpectrumTable(out, "bound", table.grid)


def linear_basis(indices: Sequence[SpectrumIndex], nqubits: int = 1, tol: float = 1e-8,
                 seed: int = 11) -> LinearBasis:
    """Greedy independent subset of ``indices`` in the given order.

    Columns are the phased control tensors evaluated on random controls and
    observables; a column is kept when its residual against the kept span
    exceeds ``tol`` relative to its norm. Quantum learnable sets contain such
    same-span relations that no streak rule captures.
    """
    indices = list(indices)
    if not indices:
        return LinearBasis((), {})
    L = max(max(i.n) for i in indices)
    d2 = 4**nqubits
    count = max(N_RANDOM_CONTROLS, 2 * len(indices) // d2 + 10)
    h, Ot = random_controls(nqubits, L, count, seed=seed)
    T = tensor_stack(h, Ot, indices)
    phase = np.array([(-1j) ** i.k for i in indices])
    C = (T * phase[None, :, None, None]).transpose(0, 2, 3, 1).reshape(-1, len(indices))
    Q = np.zeros((C.shape[0], 0), dtype=complex)
    keep = []
    floor = tol * float(np.max(np.linalg.norm(C, axis=0)))
    for j in range(C.shape[1]):
        v = C[:, j].copy()
        nv0 = np.linalg.norm(v)
        if nv0 <= floor:
            continue
        for _ in range(2):
            v -= Q @ (Q.conj().T @ v)
        if np.linalg.norm(v) > tol * nv0:
            Q = np.column_stack([Q, v / np.linalg.norm(v)])
            keep.append(j)
    B = C[:, keep]
    relations = {}
    for j in range(C.shape[1]):
        if j in keep:
            continue
        x = np.linalg.lstsq(B, C[:, j], rcond=None)[0]
        relations[indices[j]] = {indices[keep[a]]: complex(c) for a, c in enumerate(x) if abs(c) > 1e-9}
    return LinearBasis(tuple(indices[j] for j in keep), relations)
