"""Veronese fibres, scaled bundle metrics and the dimension budget.

Quaternions are stored as trailing length-4 arrays ``(re, i, j, k)`` with the
Hamilton product ``ij = k``.  Projective lines are ``x ~ x q`` (right
multiplication), so the rank-one matrix ``A_ij = x_i conj(x_j)`` is gauge
invariant.  Complex vectors are the special case with vanishing ``j, k``
parts, which lets both Veronese maps share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .jetcalc import (
    ImmersionChart,
    ImmersionFailure,
    JetcalcError,
    Sampling,
    ScanResult,
    scan_scalar_positivity,
)

__all__ = [
    "PreconditionError",
    "NotFoundError",
    "FiberModel",
    "ScaledMetricSpec",
    "DimensionBudget",
    "qmul",
    "qconj",
    "veronese_cp2",
    "veronese_hp2",
    "hermitian_from_coords",
    "equivariance_residual",
    "random_unitary",
    "random_symplectic",
    "isometrize_bundle_map",
    "scaled_metric",
    "find_positive_lambda",
    "delta_bound",
    "cp2_fiber",
    "hp2_fiber",
    "round_sphere_fiber",
    "veronese_affine_chart",
    "constant_frame",
    "popcount",
]


class PreconditionError(ValueError):
    pass


class NotFoundError(RuntimeError):
    pass


# --- quaternion algebra -----------------------------------------------------


def qmul(p, q):
    """Hamilton product of quaternions given as sequences (or arrays) of 4 parts."""
    a1, b1, c1, d1 = p[0], p[1], p[2], p[3]
    a2, b2, c2, d2 = q[0], q[1], q[2], q[3]
    return [
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ]


def qconj(q):
    return [q[0], -q[1], -q[2], -q[3]]


def _as_quat(x):
    """Complex (3,) or quaternion (3, 4) input -> (3, 4) float array."""
    x = np.asarray(x)
    if np.iscomplexobj(x) or x.ndim == 1:
        x = x.astype(complex)
        out = np.zeros(x.shape + (4,))
        out[..., 0], out[..., 1] = x.real, x.imag
        return out
    return np.asarray(x, dtype=float)


def _rank_one_coords(v, parts: int):
    """Traceless coordinates of A = v v* / |v|^2 for a triple of quaternion part-lists.

    ``parts`` is 2 for the complex case and 4 for the quaternionic one.  The
    basis is orthonormal for <A, B> = Re tr(AB): two diagonal directions
    diag(1,-1,0)/sqrt2, diag(1,1,-2)/sqrt6, then sqrt2 times each real part of
    A_01, A_02, A_12.  The identity is orthogonal to all of them, so these are
    also the coordinates of the centred matrix A - Id/3.
    """
    norm2 = 0.0
    for vi in v:
        for c in vi:
            norm2 = norm2 + c * c
    diag = []
    for vi in v:
        acc = 0.0
        for c in vi:
            acc = acc + c * c
        diag.append(acc / norm2)
    out = [
        (diag[0] - diag[1]) / np.sqrt(2.0),
        (diag[0] + diag[1] - 2.0 * diag[2]) / np.sqrt(6.0),
    ]
    root2 = np.sqrt(2.0)
    for i, j in ((0, 1), (0, 2), (1, 2)):
        prod = qmul(v[i], qconj(v[j]))
        for c in prod[:parts]:
            out.append(root2 * c / norm2)
    return out


def _check_unit(x, tol=1e-10):
    nrm = np.sqrt(np.sum(np.abs(np.asarray(x)) ** 2))
    if abs(nrm - 1.0) > tol:
        raise PreconditionError(f"input is not a unit vector (norm {nrm:.12g})")


def veronese_cp2(x) -> np.ndarray:
    """Centred Veronese image of a unit vector in C^3, as a point of R^8."""
    _check_unit(x)
    q = _as_quat(np.asarray(x, dtype=complex))
    return np.array(_rank_one_coords([list(q[i]) for i in range(3)], 2), dtype=float)


def veronese_hp2(x) -> np.ndarray:
    """Centred Veronese image of a unit vector in H^3 (shape (3, 4)), a point of R^14."""
    x = np.asarray(x, dtype=float)
    if x.shape != (3, 4):
        raise PreconditionError("quaternionic input must have shape (3, 4)")
    _check_unit(x)
    return np.array(_rank_one_coords([list(x[i]) for i in range(3)], 4), dtype=float)


def hermitian_from_coords(c) -> np.ndarray:
    """Inverse of the coordinate map: centred matrix as a (3, 3, 4) quaternion array."""
    c = np.asarray(c, dtype=float)
    parts = (len(c) - 2) // 3
    a = np.zeros((3, 3, 4))
    d1, d2 = c[0], c[1]
    a[0, 0, 0] = d1 / np.sqrt(2) + d2 / np.sqrt(6)
    a[1, 1, 0] = -d1 / np.sqrt(2) + d2 / np.sqrt(6)
    a[2, 2, 0] = -2 * d2 / np.sqrt(6)
    for n, (i, j) in enumerate(((0, 1), (0, 2), (1, 2))):
        q = np.zeros(4)
        q[:parts] = c[2 + parts * n : 2 + parts * (n + 1)] / np.sqrt(2)
        a[i, j] = q
        a[j, i] = q * np.array([1, -1, -1, -1])
    return a


# --- group actions ----------------------------------------------------------


def _qmat_to_complex(r):
    """(3, 3, 4) quaternion matrix -> (6, 6) complex matrix, q = z + w j."""
    z = r[..., 0] + 1j * r[..., 1]
    w = r[..., 2] + 1j * r[..., 3]
    out = np.zeros((6, 6), dtype=complex)
    out[0::2, 0::2] = z
    out[0::2, 1::2] = w
    out[1::2, 0::2] = -np.conj(w)
    out[1::2, 1::2] = np.conj(z)
    return out


def _complex_to_qmat(m):
    z = m[0::2, 0::2]
    w = m[0::2, 1::2]
    return np.stack([z.real, z.imag, w.real, w.imag], axis=-1)


def _qmatmul(a, b):
    """Product of quaternion matrices of shapes (p, q, 4) and (q, r, 4)."""
    out = np.zeros((a.shape[0], b.shape[1], 4))
    for k in range(a.shape[1]):
        prod = qmul(np.moveaxis(a[:, k, None, :], -1, 0), np.moveaxis(b[None, k, :, :], -1, 0))
        out += np.stack(prod, axis=-1)
    return out


def _qadjoint(a):
    return np.swapaxes(a, 0, 1) * np.array([1, -1, -1, -1])


def random_unitary(rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_symplectic(rng: np.random.Generator) -> np.ndarray:
    """Element of Sp(3) as a (3, 3, 4) quaternion matrix, from exp of a skew-Hermitian one."""
    x = rng.normal(size=(3, 3, 4))
    x = 0.5 * (x - _qadjoint(x))
    return _complex_to_qmat(expm(_qmat_to_complex(x)))


def equivariance_residual(group_elem, x, conjugate: bool = False) -> float:
    """|V(g x) - psi(g) V(x)| for g in U(3) (optionally composed with conjugation) or Sp(3).

    A complex (3, 3) matrix selects the C P^2 case, a real (3, 3, 4) array the
    H P^2 case.
    """
    g = np.asarray(group_elem)
    if g.shape == (3, 3):
        g = g.astype(complex)
        if np.linalg.norm(g @ g.conj().T - np.eye(3)) > 1e-10:
            raise PreconditionError("group element is not unitary")
        x = np.asarray(x, dtype=complex)
        xs = np.conj(x) if conjugate else x
        lhs = veronese_cp2(g @ xs)
        a = np.outer(x, np.conj(x))
        if conjugate:
            a = np.conj(a)
        a = g @ a @ g.conj().T
        rhs = _coords_from_complex(a)
        return float(np.linalg.norm(lhs - rhs))
    if g.shape == (3, 3, 4):
        if np.linalg.norm(_qmatmul(g, _qadjoint(g)) - _qidentity()) > 1e-10:
            raise PreconditionError("group element is not in Sp(3)")
        x = np.asarray(x, dtype=float)
        gx = _qmatmul(g, x[:, None, :])[:, 0, :]
        lhs = veronese_hp2(gx)
        a = _qmatmul(x[:, None, :], _qadjoint(x[:, None, :]))
        a = _qmatmul(_qmatmul(g, a), _qadjoint(g))
        return float(np.linalg.norm(lhs - _coords_from_qmat(a)))
    raise PreconditionError("group element must be a 3x3 complex or 3x3x4 quaternion matrix")


def _qidentity():
    e = np.zeros((3, 3, 4))
    e[np.arange(3), np.arange(3), 0] = 1.0
    return e


def _coords_from_qmat(a, parts=4):
    c = [(a[0, 0, 0] - a[1, 1, 0]) / np.sqrt(2), (a[0, 0, 0] + a[1, 1, 0] - 2 * a[2, 2, 0]) / np.sqrt(6)]
    for i, j in ((0, 1), (0, 2), (1, 2)):
        c.extend(np.sqrt(2) * a[i, j, :parts])
    return np.array(c)


def _coords_from_complex(a):
    q = np.stack([a.real, a.imag, np.zeros_like(a.real), np.zeros_like(a.real)], axis=-1)
    return _coords_from_qmat(q, parts=2)


# --- fibre models -----------------------------------------------------------


@dataclass(frozen=True)
class FiberModel:
    ambient_fiber_dim: int
    chart: ImmersionChart
    centered: bool = False


def veronese_affine_chart(field: str = "C", width: float = 1.0) -> ImmersionChart:
    """Veronese map on the affine chart [1 : z1 : z2] of C P^2 or H P^2."""
    parts = {"C": 2, "H": 4}[field]
    dim = 2 * parts
    big = 2 + 3 * parts

    def fn(u):
        zero = 0.0 * u[0]
        v = [[1.0 + zero, zero, zero, zero]]
        for i in range(2):
            comp = list(u[i * parts : (i + 1) * parts]) + [zero] * (4 - parts)
            v.append(comp)
        return _rank_one_coords(v, parts)

    name = {"C": "CP2", "H": "HP2"}[field]
    return ImmersionChart(dim, big, (-width,) * dim, (width,) * dim, fn, f"Veronese {name} affine chart")


def cp2_fiber() -> FiberModel:
    return FiberModel(8, veronese_affine_chart("C"), True)


def hp2_fiber() -> FiberModel:
    return FiberModel(14, veronese_affine_chart("H"), True)


def round_sphere_fiber(dim: int = 2) -> FiberModel:
    from .jetcalc import round_sphere_chart

    return FiberModel(dim + 1, round_sphere_chart(dim), False)


# --- Gram-Schmidt isometrization ---------------------------------------------


def isometrize_bundle_map(columns, steps: int = 11):
    """Homotopy from injective columns to their Gram-Schmidt frame.

    With columns = Q R (R upper triangular, positive diagonal) the path is
    Q ((1 - t) R + t Id); every stage keeps a positive triangular factor, hence
    full rank.  Returns (stages of shape (steps, r, k), min singular value along
    the path).
    """
    a = np.asarray(columns, dtype=float)
    if a.ndim == 2 and a.shape[0] < a.shape[1]:
        raise PreconditionError("more columns than ambient dimension")
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] <= 1e-10:
        raise ImmersionFailure(sv[-1])
    q, r = np.linalg.qr(a)
    sign = np.sign(np.diag(r))
    q, r = q * sign, r * sign[:, None]
    ts = np.linspace(0.0, 1.0, steps)
    eye = np.eye(r.shape[0])
    stages = np.stack([q @ ((1 - t) * r + t * eye) for t in ts])
    path_sv = np.linalg.svd(stages, compute_uv=False)[:, -1]
    return stages, float(path_sv.min())


# --- scaled metrics ---------------------------------------------------------


@dataclass(frozen=True)
class ScaledMetricSpec:
    """Metric field ``gij`` on R^n, a scale and the split (base dim l, fibre dim m)."""

    gij: Callable[[np.ndarray], np.ndarray]
    lam: float
    split_dims: tuple
    radius: float = np.inf  # gij is defined on the open ball of this radius


def scaled_metric(spec: ScaledMetricSpec, x) -> tuple[np.ndarray, np.ndarray]:
    """The pair g_lambda(x) = g(lambda x) and its fibre-frozen companion.

    The companion evaluates g at lambda x with the last m coordinates set to 0.
    ``lam = 0`` is accepted as the limiting case.
    """
    ell, m = spec.split_dims
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != ell + m:
        raise PreconditionError("point dimension does not match split_dims")
    if not 0.0 <= spec.lam <= 1.0:
        raise PreconditionError("scale must lie in [0, 1]")
    y = spec.lam * x
    if np.linalg.norm(y) >= spec.radius:
        raise JetcalcError("scaled point outside the metric's domain")
    y0 = y.copy()
    y0[..., ell:] = 0.0
    g, gt = np.asarray(spec.gij(y)), np.asarray(spec.gij(y0))
    for mat in (g, gt):
        if np.any(np.linalg.eigvalsh(0.5 * (mat + mat.T)) <= 0):
            raise PreconditionError("metric field is not positive definite")
    return g, gt


# --- lambda search ----------------------------------------------------------


def constant_frame(vectors) -> Callable:
    """Frame field returning the same ambient vectors at every base point."""
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    return lambda u: [list(v) for v in vecs]


def _composed_chart(base: ImmersionChart, fiber: FiberModel, frame_field, lam: float) -> ImmersionChart:
    nb, nf = base.intrinsic_dim, fiber.chart.intrinsic_dim

    def fn(u):
        ub, uf = list(u[:nb]), list(u[nb:])
        out = list(base.fn(ub))
        frame = frame_field(ub)
        y = fiber.chart.fn(uf)
        for i, yi in enumerate(y):
            for c in range(base.ambient_dim):
                e = frame[i][c]
                if not (np.isscalar(e) and e == 0.0):
                    out[c] = out[c] + lam * yi * e
        return out

    return ImmersionChart(
        nb + nf,
        base.ambient_dim,
        tuple(base.lo) + tuple(fiber.chart.lo),
        tuple(base.hi) + tuple(fiber.chart.hi),
        fn,
        f"{base.label} x {lam:g}*{fiber.chart.label}",
    )


def find_positive_lambda(
    base_chart: ImmersionChart,
    fiber: FiberModel,
    frame_field,
    grid: Sampling,
    slack: float = 1e-6,
    max_halvings: int = 40,
    immersion_margin: float = 1e-6,
    threads: int = 1,
) -> tuple[float, ScanResult]:
    """Halve lambda from 1 until the composed tube chart samples scalar positive."""
    fscan = scan_scalar_positivity(fiber.chart, grid, immersion_margin)
    if not fscan.positive:
        raise PreconditionError("fibre is not scalar positive on the sampling set")
    lam = 1.0
    any_immersed = False
    for _ in range(max_halvings + 1):
        rep = scan_scalar_positivity(
            _composed_chart(base_chart, fiber, frame_field, lam), grid, immersion_margin, threads=threads
        )
        any_immersed |= rep.margin_failures == 0
        if rep.margin_failures == 0 and rep.min_scal > slack:
            return lam, rep
        lam *= 0.5
    if not any_immersed:
        raise ImmersionFailure(rep.min_margin)
    raise NotFoundError(f"no scalar positive scale found after {max_halvings} halvings")


def composed_chart(base, fiber, frame_field, lam):
    """Public handle on the tube chart used by :func:`find_positive_lambda`."""
    return _composed_chart(base, fiber, frame_field, lam)


# --- dimension budget -------------------------------------------------------


def popcount(m: int) -> int:
    return bin(m).count("1")


@dataclass(frozen=True)
class DimensionBudget:
    n: int
    spin: bool
    beta_arg: int
    beta: int
    delta: int
    ambient: int
    bundle_ambient: int  # N of the Veronese bundle immersion with fibre HP2 (spin) or CP2

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def delta_bound(n: int, spin: bool) -> DimensionBudget:
    if n < 5:
        raise PreconditionError("dimension must be at least 5")
    if spin:
        arg = n + 6
        beta = popcount(arg)
        delta = max(0, 13 - beta)
        bundle = 2 * n + 12 - beta
    else:
        arg = n + 4
        beta = popcount(arg)
        delta = max(0, 9 - beta)
        bundle = 2 * n + 8 - beta
    return DimensionBudget(n, spin, arg, beta, delta, 2 * n - 1 + delta, bundle)
