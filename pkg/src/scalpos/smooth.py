"""Smooth scalar helpers that are safe to evaluate on jets.

``even_cos(r) = cos(sqrt r)`` and ``even_sinc(r) = sin(sqrt r)/sqrt r`` are
entire functions of ``r``; writing polar maps through them keeps charts in
Cartesian normal coordinates smooth at the zero section.
"""

from __future__ import annotations

from math import factorial

import numpy as np

from .jets import apply_scalar, value_of

_NTERMS = 26
_SERIES_LIMIT = 9.0

_COS = np.array([(-1.0) ** j / factorial(2 * j) for j in range(_NTERMS)])
_SINC = np.array([(-1.0) ** j / factorial(2 * j + 1) for j in range(_NTERMS)])
_VERS = np.array([(-1.0) ** j / factorial(2 * j + 2) for j in range(_NTERMS)])


def _series(coef, r, order):
    """Value and first two derivatives of sum coef[j] r^j (Horner)."""
    c0 = coef
    c1 = np.array([j * coef[j] for j in range(1, len(coef))])
    c2 = np.array([j * (j - 1) * coef[j] for j in range(2, len(coef))])
    out = []
    for c in (c0, c1, c2)[: order + 1]:
        acc = np.zeros_like(r)
        for cj in c[::-1]:
            acc = acc * r + cj
        out.append(acc)
    return out


def _even_pair(r):
    """cos(sqrt r), sinc(sqrt r) and their r-derivatives up to order two."""
    r = np.asarray(r, dtype=float)
    small = r <= _SERIES_LIMIT
    c0, c1, c2 = _series(_COS, np.where(small, r, 0.0), 2)
    s0, s1, s2 = _series(_SINC, np.where(small, r, 0.0), 2)
    if not np.all(small):
        big = ~small
        rb = r[big]
        t = np.sqrt(rb)
        C, Sc = np.cos(t), np.sin(t) / t
        dC = -0.5 * Sc
        dS = (C - Sc) / (2 * rb)
        d2C = -0.5 * dS
        d2S = (dC - dS) / (2 * rb) - (C - Sc) / (2 * rb**2)
        for arr, val in ((c0, C), (c1, dC), (c2, d2C), (s0, Sc), (s1, dS), (s2, d2S)):
            arr[big] = val
    return (c0, c1, c2), (s0, s1, s2)


def even_cos(r):
    """cos(sqrt(r)), smooth at r = 0."""
    (c0, c1, c2), _ = _even_pair(value_of(r))
    return apply_scalar(r, c0, c1, c2)


def even_sinc(r):
    """sin(sqrt(r))/sqrt(r), smooth at r = 0."""
    _, (s0, s1, s2) = _even_pair(value_of(r))
    return apply_scalar(r, s0, s1, s2)


def even_versin(r):
    """(1 - cos(sqrt r))/r, smooth at r = 0."""
    v = np.asarray(value_of(r), dtype=float)
    small = v <= _SERIES_LIMIT
    f0, f1, f2 = _series(_VERS, np.where(small, v, 0.0), 2)
    if not np.all(small):
        (c0, c1, c2), _ = _even_pair(v)
        rb = v[~small]
        # V = (1 - C)/r ; V' = (-C' - V)/r ; V'' = (-C'' - 2V')/r
        g0 = (1.0 - c0[~small]) / rb
        g1 = (-c1[~small] - g0) / rb
        g2 = (-c2[~small] - 2.0 * g1) / rb
        f0[~small], f1[~small], f2[~small] = g0, g1, g2
    return apply_scalar(r, f0, f1, f2)


def smoothstep(x):
    """Septic smoothstep: 0 for x <= 0, 1 for x >= 1, C^3 at both ends."""
    v = np.clip(np.asarray(value_of(x), dtype=float), 0.0, 1.0)
    f0 = v**4 * (35.0 - 84.0 * v + 70.0 * v**2 - 20.0 * v**3)
    f1 = 140.0 * v**3 * (1.0 - v) ** 3
    f2 = 420.0 * v**2 * (1.0 - v) ** 2 * (1.0 - 2.0 * v)
    return apply_scalar(x, f0, f1, f2)


def smoothstep_derivs(x):
    """Values of the septic smoothstep and its first three derivatives."""
    v = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    f0 = v**4 * (35.0 - 84.0 * v + 70.0 * v**2 - 20.0 * v**3)
    f1 = 140.0 * v**3 * (1.0 - v) ** 3
    f2 = 420.0 * v**2 * (1.0 - v) ** 2 * (1.0 - 2.0 * v)
    f3 = 840.0 * v * (1.0 - v) * (1.0 - 5.0 * v + 5.0 * v**2)
    return f0, f1, f2, f3


def sphere_point(angles):
    """Hyperspherical coordinates: d angles -> d+1 components on the unit sphere.

    Accepts plain arrays or jets; the first d-1 angles are polar (0, pi),
    the last is azimuthal.
    """
    d = len(angles)
    out = []
    prod = 1.0
    for i in range(d):
        out.append(prod * np.cos(angles[i]))
        prod = prod * np.sin(angles[i])
    out.append(prod)
    return out
