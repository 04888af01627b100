"""Explicit single-qubit CA Dyson traces up to fourth order.

Each function returns ``sum (-i)^k Tr[T rho O] S`` for ``rho`` one of
``sigma_0, sigma_gamma, sigma_r`` and ``O = sigma_gamma``, written in terms of
frame filters ``F_u(n)`` and spectra. The written forms carry a factor
``2^-(k-1)`` relative to the engine's normalisation of nested brackets,
which is restored here.

Axes are numbered 1, 2, 3 for x, y, z and ``beta`` denotes the third axis.
"""

from __future__ import annotations

import itertools
from typing import Callable, Dict

import numpy as np

from .digital_control import DigitalControl, frame_filter
from .noise_models import SpectrumIndex, SpectrumTable

AXES = (1, 2, 3)


def levi_civita(a: int, b: int, c: int) -> int:
    if len({a, b, c}) < 3:
        return 0
    return 1 if (a, b, c) in ((1, 2, 3), (2, 3, 1), (3, 1, 2)) else -1


def _accessors(control: DigitalControl, spectra: SpectrumTable):
    F = frame_filter(control, 0).values  # F[u, n-1]

    def f(u, n):
        return F[u, n - 1]

    def S(n, mu):
        idx = SpectrumIndex(tuple(n), tuple(mu))
        return spectra.get(idx, 0j) if idx.ordered else 0j

    return f, S


def _windows(L, k):
    return itertools.product(range(1, L + 1), repeat=k)


def first_order(f, S, L, g, r, b):
    t0 = tg = 0j
    tr = 4 * sum(levi_civita(u, r, g) * f(u, n) * S((n,), ()) for u in AXES for n in range(1, L + 1))
    return t0, tg, tr


def second_order(f, S, L, g, r, b):
    others = [u for u in AXES if u != g]
    t0 = tg = tr = 0j
    for n1, n2 in _windows(L, 2):
        for u, v in itertools.combinations(others, 2):
            t0 += -4j * levi_civita(u, v, g) * f(u, n1) * f(v, n2) * (S((n1, n2), (1,)) - S((n2, n1), (1,)))
        tg += -4 * sum(f(u, n1) * f(u, n2) for u in others) * S((n1, n2), (0,))
        tr += 4 * f(r, n1) * f(g, n2) * S((n1, n2), (0,))
    return 2 * t0, 2 * tg, 2 * tr


def third_order(f, S, L, g, r, b):
    others = [u for u in AXES if u != g]
    t0 = tg = tr = 0j
    e = levi_civita(b, r, g)
    for n in _windows(L, 3):
        n1, n2, n3 = n
        for u in others:
            t0 += 4j * f(u, n1) * f(u, n2) * f(g, n3) * (S(n, (0, 1)) - S((n1, n3, n2), (0, 1)))
        for u, v in itertools.permutations(others, 2):
            eps = levi_civita(u, g, v)
            tg += -4 * eps * f(u, n1) * f(g, n2) * f(v, n3) * S(n, (0, 0))
            tg += 4 * eps * f(u, n1) * f(v, n2) * f(g, n3) * S(n, (1, 1))
        c00 = f(r, n1) * f(r, n2) * f(b, n3) + f(b, n1) * f(b, n2) * f(b, n3) + f(b, n1) * f(g, n2) * f(g, n3)
        c11 = f(b, n1) * f(r, n2) * f(r, n3) - f(r, n1) * f(b, n2) * f(r, n3)
        tr += -4 * e * (c00 * S(n, (0, 0)) + c11 * S(n, (1, 1)))
    return 4 * t0, 4 * tg, 4 * tr


def fourth_order(f, S, L, g, r, b):
    others = [u for u in AXES if u != g]
    t0 = tg = tr = 0j
    for n in _windows(L, 4):
        n1, n2, n3, n4 = n
        s000, s001, s011, s110, s111 = (S(n, m) for m in ((0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 0), (1, 1, 1)))
        for v, w in itertools.permutations(AXES, 2):
            eps = levi_civita(v, w, g)
            if eps == 0:
                continue
            t0 += 4j * eps * (
                f(v, n1) * f(g, n2) * (f(g, n3) * f(w, n4) - f(g, n4) * f(w, n3)) * s001
                + f(v, n1) * f(w, n2) * f(g, n3) * f(g, n4) * s111
                + f(v, n1) * f(v, n2) * (f(v, n3) * f(w, n4) - f(w, n3) * f(v, n4)) * s001
                + (f(v, n1) * f(w, n2) - f(w, n1) * f(v, n2)) * f(v, n3) * f(v, n4) * s111
            )
        for v, w in itertools.product(others, repeat=2):
            tg += 4 * f(v, n1) * f(v, n2) * f(w, n3) * f(w, n4) * s000
        for w in others:
            tg += 4 * f(w, n1) * f(g, n2) * f(g, n3) * f(w, n4) * s000
            tg += 4 * f(w, n1) * (f(w, n2) * f(g, n3) - f(g, n2) * f(w, n3)) * f(g, n4) * s011
        for v, w in itertools.permutations(others, 2):
            tg += 4 * f(w, n1) * f(v, n2) * (f(v, n3) * f(w, n4) - f(w, n3) * f(v, n4)) * s110
        F = {a: (lambda m, a=a: f(a, m)) for a in AXES}
        Fr, Fg, Fb = F[r], F[g], F[b]
        tr += 4 * (
            s011 * Fr(n4) * (Fr(n1) * (Fr(n2) * Fg(n3) - Fg(n2) * Fr(n3)) + Fb(n1) * (Fb(n2) * Fg(n3) - Fg(n2) * Fb(n3)))
            - s110 * (Fb(n1) * Fr(n2) - Fr(n1) * Fb(n2)) * (Fg(n3) * Fb(n4) - Fb(n3) * Fg(n4))
            + s000 * (Fr(n3) * (Fb(n1) * (Fg(n2) * Fb(n4) - Fb(n2) * Fg(n4)) - Fr(n1) * Fr(n2) * Fg(n4))
                      - Fr(n1) * Fg(n2) * (Fb(n3) * Fb(n4) + Fg(n3) * Fg(n4)))
        )
    return 8 * t0, 8 * tg, 8 * tr


_ORDERS: Dict[int, Callable] = {1: first_order, 2: second_order, 3: third_order, 4: fourth_order}


def closed_form_traces(control: DigitalControl, spectra: SpectrumTable, k: int, gamma_axis: int = 3,
                       r_axis: int = 1) -> Dict[str, complex]:
    """Order-``k`` Dyson traces for ``rho`` in ``{sigma_0, sigma_gamma, sigma_r}``.

    Parameters
    ----------
    control : DigitalControl
        Single-qubit control.
    spectra : SpectrumTable
        Spectra on the control's windows; absent entries count as zero.
    k : int
        Order, 1 to 4.
    gamma_axis, r_axis : int
        Observable axis and a second, distinct axis (1=x, 2=y, 3=z).

    Returns
    -------
    dict
        Keys ``"0"``, ``"gamma"`` and ``"r"``.
    """
    if control.nqubits != 1:
        raise ValueError("closed forms are single-qubit only")
    if k not in _ORDERS:
        raise ValueError("closed forms exist for k = 1..4")
    if gamma_axis == r_axis or {gamma_axis, r_axis} - set(AXES):
        raise ValueError("gamma_axis and r_axis must be distinct axes in 1..3")
    b = 6 - gamma_axis - r_axis
    f, S = _accessors(control, spectra)
    t0, tg, tr = _ORDERS[k](f, S, control.L, gamma_axis, r_axis, b)
    return {"0": complex(t0), "gamma": complex(tg), "r": complex(tr)}
