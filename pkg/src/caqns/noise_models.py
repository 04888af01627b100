"""Random telegraph noise, nested-bracket correlators and CA spectra.

Two bath families are supported:

* classical RTN, ``B_q(t) = g_q beta_q(t)``, with one fluctuator shared by all
  qubits or one independent fluctuator per qubit;
* the single-qubit quantum toy bath ``B(t) = g [beta(t) tau_x +
  beta(t + shift) tau_y]`` with auxiliary state ``(I + tau_z) / 2``.

Spectra absorb the couplings, so ``S(n)`` for a deterministic ``beta = 1`` and
``g = 1`` is the volume of the ordered window box.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np

from ._integrals import chen_ordered_integral, window_group_integral
from .algebra import SIGMA
from .digital_control import WindowGrid

INIT_LAWS = ("fixed_plus_one", "symmetric_pm_one")
TOPOLOGIES = ("shared_fluctuator", "independent_per_qubit")
BATHS = ("classical", "toy")
QUBIT_LABELS = "AB"


@dataclass(frozen=True)
class NoiseModel:
    """Telegraph-noise bath.

    Parameters
    ----------
    gamma : float
        Switching rate in 1/s.
    g : float or tuple of float
        Coupling in rad/s, one value per qubit label or one shared value.
    init_law : str
        ``"fixed_plus_one"`` pins ``beta(0) = +1``; ``"symmetric_pm_one"``
        draws it uniformly from ``{+1, -1}``.
    shift : float
        Time shift of the ``tau_y`` branch of the toy bath, in seconds.
    omega : float
        Modulation frequency; ``beta(t)`` is replaced by ``beta(t) cos(omega t)``.
    topology : str
        ``"shared_fluctuator"`` or ``"independent_per_qubit"``.
    bath : str
        ``"classical"`` or ``"toy"``.
    """

    gamma: float
    g: float | Tuple[float, ...] = 1.0
    init_law: str = "fixed_plus_one"
    shift: float = 0.0
    omega: float = 0.0
    topology: str = "shared_fluctuator"
    bath: str = "classical"

    def __post_init__(self):
        if self.gamma < 0 or self.shift < 0 or self.omega < 0:
            raise ValueError("gamma, shift and omega must be non-negative")
        if self.init_law not in INIT_LAWS:
            raise ValueError(f"init_law must be one of {INIT_LAWS}")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")
        if self.bath not in BATHS:
            raise ValueError(f"bath must be one of {BATHS}")
        if not np.isscalar(self.g):
            object.__setattr__(self, "g", tuple(float(x) for x in self.g))

    @property
    def is_quantum(self) -> bool:
        return self.bath == "toy"

    def coupling(self, q: int = 0) -> float:
        if np.isscalar(self.g):
            return float(self.g)
        return self.g[q]

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "g": self.g if np.isscalar(self.g) else list(self.g),
            "init_law": self.init_law,
            "shift": self.shift,
            "omega": self.omega,
            "topology": self.topology,
            "bath": self.bath,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        d = dict(d)
        g = d.pop("g", 1.0)
        if isinstance(g, list):
            g = tuple(g)
        return cls(g=g, **d)


@dataclass(frozen=True)
class RtnTrajectory:
    """One telegraph path: ``beta(t) = init * (-1)^(number of switches <= t)``."""

    init_value: int
    switch_times: np.ndarray
    horizon: float

    def value(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        c = np.searchsorted(self.switch_times, t, side="right")
        return self.init_value * (1 - 2 * (c % 2))

    def integral(self, a: float, b: float) -> float:
        """``int_a^b beta(t) dt`` in closed form."""
        return float(_cumulative(self.init_value, self.switch_times, b) - _cumulative(self.init_value, self.switch_times, a))


def _cumulative(init, switches, x):
    s = switches[switches < x]
    K = s.size
    signs = 2.0 * (1 - 2 * (np.arange(K) % 2))
    return init * (np.dot(signs, s) + (-1) ** K * x)


def sample_trajectory(model: NoiseModel, horizon: float, rng: np.random.Generator) -> RtnTrajectory:
    """Draw one telegraph path on ``[0, horizon + shift]``.

    Switch counts are Poisson with mean ``gamma * duration``; given the count,
    switch times are uniform order statistics.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    H = horizon + model.shift
    count = rng.poisson(model.gamma * H)
    times = np.sort(rng.uniform(0.0, H, size=count))
    init = 1 if model.init_law == "fixed_plus_one" else int(rng.choice((-1, 1)))
    return RtnTrajectory(init, times, H)


def sample_batch(model: NoiseModel, horizon: float, n: int, rng: np.random.Generator):
    """Vectorised sampling of ``n`` paths.

    Returns
    -------
    init : ndarray, shape (n,)
    times : ndarray, shape (n, kmax)
        Switch times padded with ``inf``.
    counts : ndarray, shape (n,)
    """
    H = horizon + model.shift
    counts = rng.poisson(model.gamma * H, size=n)
    kmax = int(counts.max()) if n else 0
    u = rng.uniform(0.0, H, size=(n, kmax))
    u[np.arange(kmax)[None, :] >= counts[:, None]] = np.inf
    u.sort(axis=1)
    if model.init_law == "fixed_plus_one":
        init = np.ones(n)
    else:
        init = rng.choice((-1.0, 1.0), size=n)
    return init, u, counts


def batch_cumulative(init, times, x) -> np.ndarray:
    """``int_0^x beta`` for every path in a batch and every point of ``x``.

    Returns an array of shape ``(n, len(x))``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n, kmax = times.shape
    out = np.empty((n, x.size))
    alt = 2.0 * (1 - 2 * (np.arange(kmax) % 2))
    for j, xv in enumerate(x):
        m = times < xv
        c = m.sum(axis=1)
        out[:, j] = np.where(m, times, 0.0) @ alt + np.where(c % 2 == 0, xv, -xv)
    return out * init[:, None]


def batch_modulated_integral(init, times, a, b, omega) -> np.ndarray:
    """``int_a^b beta(t) cos(omega t) dt`` per path, piecewise in closed form."""
    if omega == 0:
        c = batch_cumulative(init, times, [a, b])
        return c[:, 1] - c[:, 0]
    n, kmax = times.shape
    out = np.zeros(n)
    # sign of beta at a, then walk switches inside (a, b)
    cnt = (times <= a).sum(axis=1)
    sign = init * (1 - 2 * (cnt % 2))
    inside = np.where((times > a) & (times < b), times, np.inf)
    inside.sort(axis=1)
    prev = np.full(n, a)
    for j in range(kmax + 1):
        nxt = inside[:, j] if j < kmax else np.full(n, np.inf)
        end = np.minimum(nxt, b)
        live = prev < b
        seg = (np.sin(omega * end) - np.sin(omega * prev)) / omega
        out += np.where(live, sign * seg, 0.0)
        sign = np.where(np.isfinite(nxt), -sign, sign)
        prev = np.where(np.isfinite(nxt), nxt, b)
        if not np.any(np.isfinite(nxt)):
            break
    return out


# ---------------------------------------------------------------------------
# spectrum labels and tables


@dataclass(frozen=True, order=True)
class SpectrumIndex:
    """Label ``(n, mu, q)`` of a CA spectrum.

    ``n`` is nonincreasing left to right (slot 1 is the latest time), ``mu``
    has ``k - 1`` bits and ``q`` has ``k`` qubit labels (0 for A, 1 for B).
    """

    n: Tuple[int, ...]
    mu: Tuple[int, ...] = ()
    q: Tuple[int, ...] = ()

    def __post_init__(self):
        n = tuple(int(x) for x in self.n)
        mu = tuple(int(x) for x in self.mu) if self.mu else (0,) * max(len(n) - 1, 0)
        q = tuple(int(x) for x in self.q) if self.q else (0,) * len(n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "q", q)
        if not n:
            raise ValueError("empty n-string")
        if len(mu) != len(n) - 1 or len(q) != len(n):
            raise ValueError("mu must have k-1 bits and q must have k labels")
        if any(b not in (0, 1) for b in mu) or any(x not in (0, 1) for x in q):
            raise ValueError("mu bits and q labels must be 0 or 1")

    @property
    def k(self) -> int:
        return len(self.n)

    @property
    def ordered(self) -> bool:
        return all(a >= b for a, b in zip(self.n, self.n[1:]))

    @property
    def classical(self) -> bool:
        return not any(self.mu)

    def label(self) -> str:
        qs = "".join(QUBIT_LABELS[x] for x in self.q)
        mus = "".join(map(str, self.mu))
        return f"S[{mus}]_{qs}({','.join(map(str, self.n))})"

    def to_record(self) -> dict:
        return {"k": self.k, "n": list(self.n), "mu": list(self.mu), "q": [QUBIT_LABELS[x] for x in self.q]}

    @classmethod
    def from_record(cls, r: dict) -> "SpectrumIndex":
        q = [QUBIT_LABELS.index(x) if isinstance(x, str) else int(x) for x in r.get("q", [])]
        idx = cls(tuple(r["n"]), tuple(r.get("mu", [])), tuple(q))
        if "k" in r and int(r["k"]) != idx.k:
            raise ValueError(f"record k={r['k']} disagrees with n-string length")
        return idx


PROVENANCES = ("exact", "monte_carlo", "reconstructed", "bound")


class SpectrumTable:
    """Map from :class:`SpectrumIndex` to complex spectrum values."""

    def __init__(self, entries: Optional[Dict[SpectrumIndex, complex]] = None, provenance: str = "exact",
                 grid: Optional[WindowGrid] = None, stderr: Optional[Dict[SpectrumIndex, float]] = None):
        if provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        self.entries: Dict[SpectrumIndex, complex] = dict(entries or {})
        self.provenance = provenance
        self.grid = grid
        self.stderr = dict(stderr or {})

    def __getitem__(self, idx: SpectrumIndex) -> complex:
        if not idx.ordered:
            return 0j
        return self.entries[idx]

    def get(self, idx, default=None):
        if not idx.ordered:
            return 0j
        return self.entries.get(idx, default)

    def __contains__(self, idx) -> bool:
        return idx in self.entries

    def __iter__(self) -> Iterator[SpectrumIndex]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def items(self):
        return self.entries.items()

    @property
    def max_order(self) -> int:
        return max((i.k for i in self.entries), default=0)

    def to_records(self) -> list:
        out = []
        for idx in sorted(self.entries, key=lambda i: (i.k, i.n, i.q, i.mu)):
            v = complex(self.entries[idx])
            r = idx.to_record()
            r.update(re=v.real, im=v.imag, provenance=self.provenance)
            out.append(r)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_records(), indent=1, default=_json_float)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(_dump_17(self.to_records()))

    @classmethod
    def from_records(cls, records: Iterable[dict], grid: Optional[WindowGrid] = None) -> "SpectrumTable":
        entries = {}
        prov = None
        for r in records:
            idx = SpectrumIndex.from_record(r)
            entries[idx] = complex(float(r["re"]), float(r.get("im", 0.0)))
            prov = prov or r.get("provenance")
        return cls(entries, prov or "exact", grid)

    @classmethod
    def load(cls, path, grid: Optional[WindowGrid] = None) -> "SpectrumTable":
        with open(path) as fh:
            return cls.from_records(json.load(fh), grid)


def _json_float(x):
    return float(x)


def _dump_17(obj) -> str:
    """JSON with every float written to 17 significant digits."""

    def enc(o, ind=0):
        pad = " " * ind
        if isinstance(o, dict):
            items = [f'{pad} {json.dumps(k)}: {enc(v, ind + 1).lstrip()}' for k, v in o.items()]
            return pad + "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(o, (list, tuple)):
            if all(not isinstance(v, (dict, list, tuple)) for v in o):
                return pad + "[" + ", ".join(enc(v).strip() for v in o) + "]"
            return pad + "[\n" + ",\n".join(enc(v, ind + 1) for v in o) + "\n" + pad + "]"
        if isinstance(o, bool) or o is None:
            return pad + json.dumps(o)
        if isinstance(o, (int, np.integer)):
            return pad + str(int(o))
        if isinstance(o, (float, np.floating)):
            return pad + repr_17(float(o))
        return pad + json.dumps(o)

    return enc(obj) + "\n"


def repr_17(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError("non-finite value cannot be serialised")
    s = f"{x:.17g}"
    if "." not in s and "e" not in s and "n" not in s:
        s += ".0"
    return s


dump_json = _dump_17


# ---------------------------------------------------------------------------
# moments and correlators


def _check_descending(times):
    t = np.asarray(times, dtype=float)
    if np.any(np.diff(t) > 0):
        raise ValueError("times must be sorted in descending order")
    if np.any(t < 0):
        raise ValueError("times must be non-negative")
    return t


def _moment_rates(k: int, gamma: float, fixed: bool) -> Optional[np.ndarray]:
    """Linear-form coefficients of the log-moment for ``k`` descending times.

    Returns ``None`` when the moment vanishes identically.
    """
    if k % 2 == 1 and not fixed:
        return None
    a = np.zeros(k)
    a[0:k - k % 2:2] = -2 * gamma
    a[1:k - k % 2:2] = 2 * gamma
    if k % 2 == 1:
        a[-1] = -2 * gamma
    return a


def pure_moment(model: NoiseModel, times: Sequence[float]) -> float:
    """``<beta(t_1) ... beta(t_k)>`` for descending times (unmodulated)."""
    t = _check_descending(times)
    a = _moment_rates(t.size, model.gamma, model.init_law == "fixed_plus_one")
    if a is None:
        return 0.0
    return float(np.exp(np.dot(a, t)))


@lru_cache(maxsize=None)
def _toy_string_coefficients(mu: Tuple[int, ...]) -> Dict[Tuple[int, ...], complex]:
    """Coefficients ``c(a)`` with ``<B^mu> = g^k 2^-(k-1) sum_a c(a) <prod beta(t_j + a_j shift)>``.

    ``a_j = 0`` selects the ``tau_x`` branch and ``a_j = 1`` the shifted
    ``tau_y`` branch in slot ``j``.
    """
    k = len(mu) + 1
    rho_e = np.array([[1, 0], [0, 0]], dtype=complex)
    taus = (SIGMA[1], SIGMA[2])
    out: Dict[Tuple[int, ...], complex] = {}
    for a in itertools.product((0, 1), repeat=k):
        total = 0j
        for pe in itertools.product((0, 1), repeat=k - 1):
            sign = (-1) ** sum(m * b for m, b in zip(mu, pe))
            # slot j prepended when its bit is 1, appended otherwise
            order = [0]
            for j, b in enumerate(pe, start=1):
                order = [j] + order if b else order + [j]
            M = np.eye(2, dtype=complex)
            for j in order:
                M = M @ taus[a[j]]
            total += sign * np.trace(rho_e @ M)
        if abs(total) > 1e-12:
            out[a] = total
    return out


def nested_bracket_correlator(model: NoiseModel, mu: Sequence[int], q: Sequence[int], times: Sequence[float]) -> complex:
    """Normalised nested-bracket correlator ``<B^mu_q(t)>``.

    ``B^mu`` is the nested (anti)commutator divided by ``2^(k-1)``, so that
    for classical noise the ``mu = 0`` correlator is the plain moment times
    the couplings.
    """
    t = _check_descending(times)
    k = t.size
    mu = tuple(int(x) for x in mu)
    q = tuple(int(x) for x in q) if len(q) else (0,) * k
    if len(mu) != k - 1 or len(q) != k:
        raise ValueError("inconsistent lengths")
    terms = correlator_terms(model, mu, q)
    val = 0j
    for coef, rates, shifts in terms:
        val += coef * np.exp(np.dot(rates, t) + np.dot(rates, shifts))
    return complex(val)


def correlator_terms(model: NoiseModel, mu, q):
    """Expand a correlator as ``sum coef * exp(sum_j rate_j (t_j + shift_j))``.

    Valid on the region where all times lie in ``[0, T]`` and, for the toy
    bath, either ``shift == 0`` or ``shift >= T``. Cosine modulation is
    expanded into complex exponentials. Returns a list of
    ``(coef, rates, shifts)`` triples.
    """
    k = len(q)
    fixed = model.init_law == "fixed_plus_one"
    gk = np.prod([model.coupling(x) for x in q])
    base = []  # (coef, rates, shifts) before modulation
    if not model.is_quantum:
        if any(mu):
            return []
        if model.topology == "shared_fluctuator" or len(set(q)) == 1:
            a = _moment_rates(k, model.gamma, fixed)
            if a is None:
                return []
            base.append((complex(gk), a, np.zeros(k)))
        else:
            a = np.zeros(k)
            for lab in set(q):
                pos = [j for j in range(k) if q[j] == lab]
                r = _moment_rates(len(pos), model.gamma, fixed)
                if r is None:
                    return []
                a[pos] = r
            base.append((complex(gk), a, np.zeros(k)))
    else:
        if any(x != 0 for x in q):
            raise ValueError("the toy bath acts on a single qubit")
        norm = gk / 2 ** (k - 1)
        for a_str, c in _toy_string_coefficients(mu).items():
            shifts = np.array(a_str, dtype=float) * model.shift
            if model.shift == 0:
                order = list(range(k))
            else:
                # shifted branch times sit above every unshifted one
                order = [j for j in range(k) if a_str[j]] + [j for j in range(k) if not a_str[j]]
            r = _moment_rates(k, model.gamma, fixed)
            if r is None:
                continue
            rates = np.zeros(k)
            rates[order] = r
            base.append((norm * c, rates, shifts))
    if model.omega == 0:
        return base
    out = []
    for coef, rates, shifts in base:
        for signs in itertools.product((1, -1), repeat=k):
            add = 1j * model.omega * np.array(signs)
            out.append((coef / 2**k, rates + add, shifts))
    return out


# ---------------------------------------------------------------------------
# CA spectra


def _groups(n: Tuple[int, ...]):
    out = []
    for key, g in itertools.groupby(range(len(n)), key=lambda j: n[j]):
        out.append((key, list(g)))
    return out


def exact_supported(model: NoiseModel, grid: WindowGrid) -> bool:
    return not model.is_quantum or model.shift == 0 or model.shift >= grid.T


def ca_spectrum_exact(model: NoiseModel, index: SpectrumIndex, grid: WindowGrid) -> complex:
    """Ordered window integral of the nested-bracket correlator.

    The region factorises into one ordered simplex per run of equal window
    indices; each simplex integral of an exponential is a divided difference.

    Raises
    ------
    NotImplementedError
        For the toy bath with ``0 < shift < T``, where the sorting of shifted
        times is not fixed; use :func:`ca_spectrum_mc` instead.
    """
    if not index.ordered:
        return 0j
    if max(index.n) > grid.L:
        raise ValueError("index exceeds the grid")
    if not exact_supported(model, grid):
        raise NotImplementedError("exact spectra need shift = 0 or shift >= T")
    terms = correlator_terms(model, index.mu, index.q)
    groups = _groups(index.n)
    tau = grid.tau
    total = 0j
    for coef, rates, shifts in terms:
        val = coef * np.exp(np.dot(rates, shifts))
        for n, pos in groups:
            val *= window_group_integral(rates[pos], (n - 1) * tau, tau)
        total += val
    return complex(total)


def _segments(breaks, lo, hi):
    b = breaks[(breaks > lo) & (breaks < hi)]
    edges = np.concatenate([[lo], np.sort(b), [hi]])
    return edges


def ca_spectrum_mc(model: NoiseModel, index: SpectrumIndex, grid: WindowGrid, n_traj: int,
                   rng: np.random.Generator) -> Tuple[complex, float]:
    """Monte Carlo estimate of a CA spectrum and its standard error.

    Each sampled path is integrated exactly: for words of identical functions
    the ordered window integral is ``(int f)^m / m!``; mixed words use Chen's
    identity on the piecewise-constant segments.
    """
    if n_traj < 100:
        raise ValueError("n_traj must be at least 100")
    if not index.ordered:
        return 0j, 0.0
    if model.is_quantum and model.omega != 0:
        raise NotImplementedError("sampled toy-bath spectra do not support modulation")
    k = index.k
    groups = _groups(index.n)
    tau = grid.tau
    if not model.is_quantum:
        if any(index.mu):
            return 0j, 0.0
        gk = np.prod([model.coupling(x) for x in index.q])
        shared = model.topology == "shared_fluctuator" or len(set(index.q)) == 1
        labels = sorted(set(index.q))
        nfl = 1 if shared else len(labels)
        batches = [sample_batch(model, grid.T, n_traj, rng) for _ in range(nfl)]
        vals = np.full(n_traj, gk, dtype=float)
        for n, pos in groups:
            lo, hi = (n - 1) * tau, n * tau
            if shared:
                phi = batch_modulated_integral(*batches[0][:2], lo, hi, model.omega)
                vals *= phi ** len(pos) / math.factorial(len(pos))
                continue
            word_labels = [index.q[j] for j in pos]
            if len(set(word_labels)) == 1:
                b = batches[labels.index(word_labels[0])]
                phi = batch_modulated_integral(*b[:2], lo, hi, model.omega)
                vals *= phi ** len(pos) / math.factorial(len(pos))
                continue
            if model.omega != 0:
                raise NotImplementedError("mixed-label words with modulation are not supported")
            for i in range(n_traj):
                trajs = [RtnTrajectory(int(b[0][i]), b[1][i][np.isfinite(b[1][i])], grid.T) for b in batches]
                breaks = np.concatenate([t.switch_times for t in trajs])
                edges = _segments(breaks, lo, hi)
                mids = 0.5 * (edges[1:] + edges[:-1])
                table = np.array([trajs[labels.index(x)].value(mids) for x in word_labels]).T
                vals[i] *= chen_ordered_integral(table, np.diff(edges))[0]
        est = vals.mean()
        err = vals.std(ddof=1) / np.sqrt(n_traj)
        return complex(est), float(err)
    # toy bath
    if any(x != 0 for x in index.q):
        raise ValueError("the toy bath acts on a single qubit")
    coefs = _toy_string_coefficients(index.mu)
    norm = model.coupling(0) ** k / 2 ** (k - 1)
    vals = np.zeros(n_traj, dtype=complex)
    for i in range(n_traj):
        tr = sample_trajectory(model, grid.T, rng)
        sw = tr.switch_times
        breaks = np.concatenate([sw, sw - model.shift])
        total = 0j
        for a_str, c in coefs.items():
            prod = 1.0
            for n, pos in groups:
                lo, hi = (n - 1) * tau, n * tau
                edges = _segments(breaks, lo, hi)
                mids = 0.5 * (edges[1:] + edges[:-1])
                table = np.array([tr.value(mids + a_str[j] * model.shift) for j in pos]).T
                prod *= chen_ordered_integral(table.astype(float), np.diff(edges))[0]
            total += c * prod
        vals[i] = norm * total
    est = vals.mean()
    err = np.sqrt(vals.real.var(ddof=1) + vals.imag.var(ddof=1)) / np.sqrt(n_traj)
    return complex(est), float(err)


def exact_table(model: NoiseModel, grid: WindowGrid, indices: Iterable[SpectrumIndex]) -> SpectrumTable:
    """Exact spectra for a collection of indices."""
    return SpectrumTable({i: ca_spectrum_exact(model, i, grid) for i in indices}, "exact", grid)
