"""Normally spherical deformations around a submanifold S of M.

A :class:`PolarScene` describes an immersion f of M near S through closed
formulas: a point of S is given by ``d`` chart parameters ``qa`` (plus a sheet
sign when S is a pair of points), and a nearby point of M by its Cartesian
normal coordinates ``eta`` in R^k with respect to a fixed orthonormal frame of
the normal bundle of S in M.  Polar coordinates ``(q, omega, s)`` are
``eta = s * omega``.

The maps built here are

    F_tau = f(p) + tau s^2 xi(q) / 2,
    G_tau = f(q) + sin(tau s)/tau omega + (1 - cos(tau s))/tau xi(q),

and their affine combinations.  Everything is written through even functions
of ``s^2 = |eta|^2`` so that the charts are smooth across S.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .jetcalc import (
    ImmersionChart,
    Sampling,
    evaluate_jet2,
    frame_and_metric,
    scan_scalar_positivity,
    second_fundamental_form,
)
from .jets import is_jet, value_of, where
from .smooth import even_cos, even_sinc, even_versin, smoothstep, sphere_point

__all__ = [
    "PolarScene",
    "DeformParams",
    "ScheduleError",
    "NotFoundError",
    "PreconditionError",
    "round_polar_scene",
    "product_polar_scene",
    "cartesian_chart",
    "polar_chart",
    "f_map",
    "f_tau_map",
    "g_tau_map",
    "interp_map",
    "sff_bilinear",
    "predicted_sff_along_S",
    "split_tangent",
    "Tau0Result",
    "tau0_search",
    "DeformationSchedule",
    "deformation_schedule",
    "along_s_points",
]


class PreconditionError(ValueError):
    pass


class NotFoundError(RuntimeError):
    pass


class ScheduleError(RuntimeError):
    def __init__(self, message, t=None, location=()):
        super().__init__(message)
        self.t = t
        self.location = tuple(location)


def _lin(*terms):
    """Sum of coeff * vector over (coeff, vector) pairs; vectors are lists."""
    out = None
    for c, v in terms:
        if out is None:
            out = [c * x for x in v]
        else:
            out = [o + c * x for o, x in zip(out, v)]
    return out


@dataclass(frozen=True)
class PolarScene:
    """Closed-form description of f near S.

    Callables take chart parameters ``qa`` (list of d arrays or jets), normal
    coordinates ``eta`` (list of k) and a sheet sign, and return lists of N
    ambient components.  ``frame`` returns k ambient vectors, the images under
    df of the fixed normal frame of S in M.
    """

    n: int
    d: int
    N: int
    rho0: float
    label: str
    q_lo: tuple
    q_hi: tuple
    center: Callable = field(repr=False, compare=False)
    xi: Callable = field(repr=False, compare=False)
    frame: Callable = field(repr=False, compare=False)
    polar: Callable = field(repr=False, compare=False)
    sheets: tuple = (1,)

    @property
    def k(self) -> int:
        return self.n - self.d

    def normal_vector(self, qa, eta, sheet=1):
        """eta_1 e_1(q) + ... + eta_k e_k(q)."""
        return _lin(*zip(eta, self.frame(qa, sheet)))


@dataclass(frozen=True)
class DeformParams:
    tau: float
    t: float
    rho: float

    def __post_init__(self):
        if self.tau < 0 or not 0 <= self.t <= 1 or self.rho <= 0:
            raise PreconditionError("need tau >= 0, t in [0, 1] and rho > 0")


# --- scenes -----------------------------------------------------------------

_POLE = 0.05


def _angle_box(d):
    if d == 0:
        return (), ()
    lo = (_POLE,) * (d - 1) + (-np.pi + _POLE,)
    hi = (np.pi - _POLE,) * (d - 1) + (np.pi - _POLE,)
    return lo, hi


def _unit(i, big):
    e = [0.0] * big
    e[i] = 1.0
    return e


def round_polar_scene(n: int, d: int, N: int | None = None, rho0: float = 1.0) -> PolarScene:
    """Equatorial S^d in the unit S^n, which sits in the first n+1 coordinates of R^N.

    S spans coordinates 0..d, the normal frame is e_{d+1}, ..., e_n (0-based),
    xi = -q along S, and exp(eta) = cos|eta| q + sin|eta|/|eta| eta.  For d = 0,
    S is the pair of points +-e_0, selected by the sheet sign.
    ``rho0`` defaults to 1 (< pi/2, and keeps 1 - b > 0 for every profile of
    extent below it).
    """
    big = N if N is not None else n + 1
    k = n - d
    if k < 1 or d < 0 or big < n + 1:
        raise PreconditionError("need 0 <= d < n and N >= n + 1")

    def center(qa, sheet=1):
        comps = sphere_point(list(qa))
        return [sheet * c for c in comps] + [0.0] * (big - d - 1)

    def xi(qa, sheet=1):
        return [-c for c in center(qa, sheet)]

    frame_vecs = [_unit(d + 1 + i, big) for i in range(k)]

    def frame(qa, sheet=1):
        return frame_vecs

    def polar(qa, eta, sheet=1):
        r = 0.0
        for e in eta:
            r = r + e * e
        q = center(qa, sheet)
        c, sc = even_cos(r), even_sinc(r)
        out = [c * x for x in q[: d + 1]]
        out += [sc * e for e in eta]
        return out + [0.0] * (big - n - 1)

    lo, hi = _angle_box(d)
    sheets = (1, -1) if d == 0 else (1,)
    return PolarScene(n, d, big, rho0, f"S^{d} in S^{n} in R^{big}", lo, hi, center, xi, frame, polar, sheets)


def product_polar_scene(d: int, k: int, r1: float = 1.0, r2: float = 0.7, N: int | None = None) -> PolarScene:
    """S = S^d(r1) x {p0} inside M = S^d(r1) x S^k(r2) in R^{d+k+2}.

    Here xi along S is not tangent to the normal discs' span, so the normal
    component of the profile normal differs from the full vector.
    """
    n = d + k
    big = N if N is not None else n + 2
    if d < 1 or k < 1 or big < n + 2:
        raise PreconditionError("need d, k >= 1 and N >= d + k + 2")
    wq, wp = d / r1, k / r2
    norm = np.hypot(wq, wp)

    def center(qa, sheet=1):
        q = [r1 * c for c in sphere_point(list(qa))]
        return q + [r2] + [0.0] * (big - d - 2)

    def xi(qa, sheet=1):
        qhat = sphere_point(list(qa))
        return [-wq / norm * c for c in qhat] + [-wp / norm] + [0.0] * (big - d - 2)

    frame_vecs = [_unit(d + 2 + i, big) for i in range(k)]

    def frame(qa, sheet=1):
        return frame_vecs

    def polar(qa, eta, sheet=1):
        r = 0.0
        for e in eta:
            r = r + e * e
        q = [r1 * c for c in sphere_point(list(qa))]
        c = even_cos(r / r2**2)
        sc = even_sinc(r / r2**2)
        return q + [r2 * c] + [sc * e for e in eta] + [0.0] * (big - n - 2)

    lo, hi = _angle_box(d)
    return PolarScene(
        n, d, big, 0.9 * r2, f"S^{d}({r1:g}) x pt in S^{d}({r1:g}) x S^{k}({r2:g})", lo, hi, center, xi, frame, polar
    )


# --- charts -----------------------------------------------------------------


def cartesian_chart(scene: PolarScene, fn, half_width: float, sheet: int = 1, label: str = "") -> ImmersionChart:
    """Chart on (qa, eta) with eta in the cube of the given half width."""
    d, k = scene.d, scene.k
    if half_width * np.sqrt(k) >= scene.rho0:
        raise PreconditionError("normal cube leaves the polar-coordinate radius rho0")

    def chart_fn(u):
        return fn(list(u[:d]), list(u[d:]), sheet)

    lo = tuple(scene.q_lo) + (-half_width,) * k
    hi = tuple(scene.q_hi) + (half_width,) * k
    return ImmersionChart(scene.n, scene.N, lo, hi, chart_fn, label)


def polar_chart(scene: PolarScene, fn, s_lo: float, s_hi: float, sheet: int = 1, label: str = "") -> ImmersionChart:
    """Chart on (qa, omega angles, s) with s in (s_lo, s_hi), omega on S^{k-1}."""
    d, k = scene.d, scene.k
    if k < 2:
        raise PreconditionError("polar charts need codimension at least 2")

    def chart_fn(u):
        qa = list(u[:d])
        om = sphere_point(list(u[d : d + k - 1]))
        s = u[-1]
        return fn(qa, [s * w for w in om], sheet)

    alo, ahi = _angle_box(k - 1)
    lo = tuple(scene.q_lo) + alo + (s_lo,)
    hi = tuple(scene.q_hi) + ahi + (s_hi,)
    return ImmersionChart(scene.n, scene.N, lo, hi, chart_fn, label)


def f_map(scene: PolarScene):
    return scene.polar


def f_tau_map(scene: PolarScene, tau: float):
    """F_tau as a function (qa, eta, sheet) -> ambient components."""
    if tau < 0:
        raise PreconditionError("tau must be non-negative")

    def fn(qa, eta, sheet=1):
        r = 0.0
        for e in eta:
            r = r + e * e
        base = scene.polar(qa, eta, sheet)
        if tau == 0:
            return base
        return _lin((1.0, base), (0.5 * tau * r, scene.xi(qa, sheet)))

    return fn


def g_tau_map(scene: PolarScene, tau: float):
    """G_tau as a function (qa, eta, sheet) -> ambient components."""
    if tau <= 0:
        raise PreconditionError("tau must be positive")

    def fn(qa, eta, sheet=1):
        r = 0.0
        for e in eta:
            r = r + e * e
        x = tau * tau * r
        return _lin(
            (1.0, scene.center(qa, sheet)),
            (even_sinc(x), scene.normal_vector(qa, eta, sheet)),
            (tau * r * even_versin(x), scene.xi(qa, sheet)),
        )

    return fn


def interp_map(scene: PolarScene, tau: float, t: float):
    """(1 - t) F_tau + t G_tau."""
    if not 0.0 <= t <= 1.0:
        raise PreconditionError("t must lie in [0, 1]")
    ff, gg = f_tau_map(scene, tau), g_tau_map(scene, tau)

    def fn(qa, eta, sheet=1):
        if t == 0.0:
            return ff(qa, eta, sheet)
        if t == 1.0:
            return gg(qa, eta, sheet)
        return _lin((1.0 - t, ff(qa, eta, sheet)), (t, gg(qa, eta, sheet)))

    return fn


def _near_s_width(scene: PolarScene, tau: float = 0.0) -> float:
    r = scene.rho0 if tau <= 0 else min(scene.rho0, np.pi / (2 * tau))
    return 0.25 * r / np.sqrt(scene.k)


def along_s_points(scene: PolarScene, count: int, seed: int = 0) -> np.ndarray:
    """Random (qa, eta = 0) chart points on S."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(scene.q_lo, float), np.asarray(scene.q_hi, float)
    w = hi - lo
    qa = lo + 0.05 * w + 0.9 * w * rng.random((count, scene.d))
    return np.hstack([qa, np.zeros((count, scene.k))])


# --- second fundamental form along S ----------------------------------------


def sff_bilinear(jet, index: int, x, y) -> np.ndarray:
    """alpha(X, Y) for ambient tangent vectors X, Y at one jet sample."""
    jac = jet.jacobian[index]
    q, _ = np.linalg.qr(jac)
    proj = np.eye(jac.shape[0]) - q @ q.T
    xc = np.linalg.lstsq(jac, x, rcond=None)[0]
    yc = np.linalg.lstsq(jac, y, rcond=None)[0]
    return proj @ np.einsum("i,j,ijk->k", xc, yc, jet.hessian[index])


def _point_vector(comps) -> np.ndarray:
    """Ambient vector from a component list evaluated at a single point."""
    return np.array([float(np.ravel(c)[0]) if np.ndim(c) else float(c) for c in comps])


def split_tangent(scene: PolarScene, qa, x, sheet: int = 1, tol: float = 1e-8):
    """Orthogonal splitting X = X_top + X_perp of an ambient vector at q in S."""
    qa = np.atleast_1d(np.asarray(qa, dtype=float))
    chart = cartesian_chart(scene, scene.polar, _near_s_width(scene), sheet)
    jet = evaluate_jet2(chart, np.concatenate([qa, np.zeros(scene.k)])[None])
    ts = jet.jacobian[0][:, : scene.d]
    nrm = jet.jacobian[0][:, scene.d :]
    x = np.asarray(x, dtype=float)
    x_top = ts @ np.linalg.lstsq(ts, x, rcond=None)[0] if scene.d else np.zeros_like(x)
    x_perp = nrm @ np.linalg.lstsq(nrm, x, rcond=None)[0]
    if np.linalg.norm(x - x_top - x_perp) > tol:
        raise PreconditionError("vector is not tangent to M at q")
    return x_top, x_perp


def predicted_sff_along_S(scene: PolarScene, tau: float, which: str, qa, x, y, sheet: int = 1) -> np.ndarray:
    """Right-hand side of the second-fundamental-form formulas for F_tau or G_tau on S."""
    qa = np.atleast_1d(np.asarray(qa, dtype=float))
    chart = cartesian_chart(scene, scene.polar, _near_s_width(scene), sheet)
    jet = evaluate_jet2(chart, np.concatenate([qa, np.zeros(scene.k)])[None])
    xt, xp = split_tangent(scene, qa, x, sheet)
    yt, yp = split_tangent(scene, qa, y, sheet)
    xi = _point_vector(scene.xi([np.array([c]) for c in qa], sheet))
    bump = tau * float(xp @ yp) * xi
    if which == "F":
        return sff_bilinear(jet, 0, x, y) + bump
    if which == "G":
        a = sff_bilinear(jet, 0, xt, yt) + sff_bilinear(jet, 0, xt, yp) + sff_bilinear(jet, 0, xp, yt)
        return a + bump
    raise ValueError("which must be 'F' or 'G'")


# --- tau0 search ------------------------------------------------------------


@dataclass
class Tau0Result:
    tau0: float
    min_scal: float
    f_tau_checks: dict
    history: list


def _min_scal_on_s(scene, fn_factory, pts, tau):
    out = np.inf
    for sheet in scene.sheets:
        chart = cartesian_chart(scene, fn_factory, _near_s_width(scene, tau), sheet)
        jet = evaluate_jet2(chart, pts)
        cs = second_fundamental_form(jet, frame_and_metric(jet))
        out = min(out, float(cs.scal.min()))
    return out


def tau0_search(
    scene: PolarScene,
    t_grid=None,
    sample_set_on_S=None,
    slack: float = 1e-6,
    tau_start: float = 1.0,
    tau_max: float = 2.0**20,
) -> Tau0Result:
    """Doubling search for tau such that every (1-t)F_tau + tG_tau is scalar positive on S."""
    if scene.k < 2:
        raise PreconditionError("codimension k >= 2 is required")
    t_grid = np.linspace(0, 1, 21) if t_grid is None else np.asarray(t_grid, dtype=float)
    pts = along_s_points(scene, 64) if sample_set_on_S is None else np.atleast_2d(sample_set_on_S)
    tau = tau_start
    history = []
    while tau <= tau_max:
        worst = min(_min_scal_on_s(scene, interp_map(scene, tau, float(t)), pts, tau) for t in t_grid)
        history.append((tau, worst))
        if worst > slack:
            checks = {
                float(x): _min_scal_on_s(scene, f_tau_map(scene, x), pts, 0.0) for x in (0.0, tau / 2, tau)
            }
            if min(checks.values()) <= 0:
                raise NotFoundError(f"F_tau not scalar positive along S: {checks}")
            return Tau0Result(tau, worst, checks, history)
        tau *= 2.0
    raise NotFoundError(f"no tau below {tau_max} makes the interpolation scalar positive along S")


# --- deformation schedule ---------------------------------------------------


@dataclass
class DeformationSchedule:
    scene: PolarScene
    tau: float
    rho: float
    cutoff_width: float
    t_grid: np.ndarray
    min_scal: float = np.inf
    min_margin: float = np.inf
    reports: list = field(default_factory=list)

    def slice_fn(self, t: float):
        scene, tau = self.scene, self.tau
        if t <= 0.5:
            inner = f_tau_map(scene, 2 * t * tau)
        else:
            inner = interp_map(scene, tau, 2 * t - 1)

        def fn(qa, eta, sheet=1):
            r = 0.0
            for e in eta:
                r = r + e * e
            base = scene.polar(qa, eta, sheet)
            if t == 0.0:
                return base
            chi = _cutoff_jet(r, self.rho, self.cutoff_width)
            new = inner(qa, eta, sheet)
            return [b + chi * (x - b) for b, x in zip(base, new)]

        return fn

    def charts(self, t: float, sheet: int = 1):
        """Cartesian chart near S and polar chart covering the cutoff annulus."""
        hw = 0.5 * (self.rho - self.cutoff_width) / np.sqrt(self.scene.k)
        fn = self.slice_fn(t)
        inner = cartesian_chart(self.scene, fn, hw, sheet, f"f_t near S (t={t:g})")
        outer = polar_chart(self.scene, fn, 0.9 * hw, min(1.05 * self.rho, 0.999 * self.scene.rho0), sheet,
                            f"f_t annulus (t={t:g})")
        return inner, outer


def _cutoff_jet(r, rho, width):
    """chi(s) with s = sqrt(r): 1 for s <= rho - width, 0 for s >= rho."""
    lo = (rho - width) ** 2
    v = np.asarray(value_of(r), dtype=float)
    if np.all(v <= lo):
        return 1.0
    clamped = where(v > lo, r, np.full_like(v, lo)) if is_jet(r) else np.maximum(r, lo)
    return 1.0 - smoothstep((np.sqrt(clamped) - (rho - width)) / width)


def deformation_schedule(
    scene: PolarScene,
    tau: float,
    rho: float,
    cutoff_width: float | None = None,
    t_grid=None,
    samples: int = 2000,
    seed: int = 0,
    slack: float = 0.0,
    immersion_margin: float = 1e-6,
    threads: int = 1,
    verify: bool = True,
) -> DeformationSchedule:
    """Verified family f_t blending F_{2t tau}, then (1-t')F_tau + t'G_tau, into f.

    Each slice is sampled on a chart near S and on the cutoff annulus; any
    non-positive scal or margin failure raises :class:`ScheduleError`.
    """
    if not 0 < rho <= scene.rho0 or (tau > 0 and rho >= np.pi / (2 * tau)):
        raise PreconditionError("need 0 < rho <= rho0 and rho < pi/(2 tau)")
    w = 0.5 * rho if cutoff_width is None else cutoff_width
    t_grid = np.linspace(0, 1, 21) if t_grid is None else np.asarray(t_grid, dtype=float)
    sched = DeformationSchedule(scene, tau, rho, w, t_grid)
    if not verify:
        return sched
    for t in t_grid:
        for sheet in scene.sheets:
            for chart in sched.charts(float(t), sheet):
                rep = scan_scalar_positivity(
                    chart, Sampling(count=samples, seed=seed), immersion_margin, threads=threads
                )
                sched.reports.append((float(t), sheet, chart.label, rep))
                sched.min_scal = min(sched.min_scal, rep.min_scal)
                sched.min_margin = min(sched.min_margin, rep.min_margin)
                if rep.margin_failures:
                    raise ScheduleError(f"immersion margin lost at t={t:g}", float(t), rep.first_failure)
                if rep.min_scal <= slack:
                    raise ScheduleError(
                        f"scal {rep.min_scal:.4g} <= {slack:g} at t={t:g}", float(t), rep.argmin
                    )
    return sched
