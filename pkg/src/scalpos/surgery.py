"""Surgery along an equatorial sphere in the round n-sphere.

Everything here lives in the round scene S^d in S^n in R^{n+1} in R^N, where
each piece of the surgered immersion is explicit:

* outer piece: the polar meridian of f is replaced near S by a plane curve
  that starts on the circle of radius 1/tau (the map G_tau), follows a
  curvature-ratio transition, and lands on the unit circle, after which the
  chart evaluates f itself;
* tube: F_gamma for the spliced bending profile gamma;
* handle: the product of a rotational disc with the round (k-1)-sphere of
  radius lambda = a(R).

Outer and tube meet at the seam s_M = rho'' + s (both are the same circle arc
there), tube and handle meet at r = 1 + b(R) + (s - R).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .bending import (
    BendingProfile,
    _poly_eval,
    _quintic_coeffs,
    build_bending_profile,
    profile_rhs,
    sigma0_search,
    tube_chart,
)
from .jetcalc import (
    ImmersionChart,
    ScanResult,
    evaluate_jet2,
    round_sphere_chart,
    scan_scalar_positivity,
)
from .jets import apply_scalar, value_of, where
from .rk import dopri
from .smooth import smoothstep_derivs, sphere_point
from .spherical_deform import PolarScene, _angle_box, round_polar_scene, tau0_search

__all__ = [
    "SurgeryError",
    "PreconditionError",
    "GluingError",
    "SurgeryScene",
    "OuterTransition",
    "DiscProfile",
    "Seam",
    "GluedAtlas",
    "VerificationReport",
    "round_sphere_scene",
    "outer_transition",
    "outer_chart",
    "disc_profile",
    "disc_extension",
    "cap_map",
    "handle_polar_chart",
    "glue",
    "verify",
    "run_surgery",
]


class SurgeryError(RuntimeError):
    pass


class PreconditionError(ValueError):
    pass


class GluingError(SurgeryError):
    def __init__(self, message, seam=None, worst=None):
        super().__init__(message)
        self.seam = seam
        self.worst = worst


C0_TOL = 1e-9
C1_TOL = 1e-6
OVERLAP = 1e-4


# --- scene ------------------------------------------------------------------


@dataclass(frozen=True)
class SurgeryScene:
    """Round-sphere scene: equatorial S^d in the unit S^n in R^{n+1} in R^N."""

    n: int
    d: int
    N: int
    polar: PolarScene
    base: ImmersionChart
    frame: tuple  # k constant ambient vectors
    aux: int  # ambient coordinate used by the disc

    @property
    def k(self) -> int:
        return self.n - self.d

    @property
    def sheets(self) -> tuple:
        return self.polar.sheets

    def distance_to_S(self, x: np.ndarray) -> np.ndarray:
        """Intrinsic distance on S^n from points x (rows) to S."""
        x = np.atleast_2d(x)
        return np.arccos(np.clip(np.linalg.norm(x[:, : self.d + 1], axis=1), 0.0, 1.0))

    def xi(self, q: np.ndarray) -> np.ndarray:
        return -np.asarray(q, dtype=float)


def round_sphere_scene(n: int, d: int, N: int) -> SurgeryScene:
    if n - d < 3:
        raise PreconditionError(f"codimension n - d >= 3 violated: n - d = {n - d}")
    if N < n + d + 2:
        raise PreconditionError(f"N >= n + d + 2 violated: N = {N} < {n + d + 2}")
    if d < 0:
        raise PreconditionError("need d >= 0")
    polar = round_polar_scene(n, d, N)
    frame = tuple(np.array(v, dtype=float) for v in polar.frame([]))
    gram = np.array([[u @ v for v in frame] for u in frame])
    if np.abs(gram - np.eye(len(frame))).max() > 1e-10:
        raise SurgeryError("normal frame is not orthonormal")
    aux = n + 1
    if any(abs(v[aux]) > 0 for v in frame) or any(np.any(v[: d + 1]) for v in frame):
        raise SurgeryError("auxiliary coordinate collides with the frame")
    return SurgeryScene(n, d, N, polar, round_sphere_chart(n, 1.0, N), frame, aux)


# --- nodal curves -----------------------------------------------------------


class _NodeCurve:
    """Quintic Hermite interpolant of (a, b) from exact values and two derivatives at nodes."""

    def __init__(self, s, state, accel):
        self.s = np.asarray(s, dtype=float)
        a, b, ap, bp = np.asarray(state).T
        self._ca = _quintic_coeffs(self.s, a, ap, accel[:, 0])
        self._cb = _quintic_coeffs(self.s, b, bp, accel[:, 1])

    def __call__(self, s):
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 2)
        h = self.s[idx + 1] - self.s[idx]
        x = (s - self.s[idx]) / h
        return _poly_eval(self._ca[idx], x, h), _poly_eval(self._cb[idx], x, h)


def _trajectory_nodes(traj, breaks, per_piece, rhs):
    grid = np.unique(np.concatenate([np.linspace(lo, hi, per_piece) for lo, hi in zip(breaks[:-1], breaks[1:])]))
    state = np.array([traj.at(x) for x in grid])
    accel = np.array([rhs(x, y)[2:] for x, y in zip(grid, state)])
    return grid, state, accel


def _step(x):
    return float(smoothstep_derivs(x)[0])


# --- outer transition -------------------------------------------------------


@dataclass
class OuterTransition:
    """Meridian of the outer piece as a function of the polar distance s_M.

    Arc length ell runs along: the circle of radius 1/tau for ell <= s_a,
    the transition curve of length L = L1 + L2, then the unit circle from
    the landing angle.  The polar distance maps to arc length by
    ell(s_M) = s_M + c0 S((s_M - s_a)/(s_b - s_a)), so for s_M >= s_b the
    point is f at distance s_M.
    """

    tau: float
    theta0: float
    L1: float
    L2: float
    ramp_first: float
    ramp: float
    m_high: float
    landing: float
    s_b: float
    shoot_residual: float
    curve: _NodeCurve = field(repr=False)

    @property
    def s_a(self) -> float:
        return self.theta0 / self.tau

    @property
    def length(self) -> float:
        return self.L1 + self.L2

    @property
    def c0(self) -> float:
        return self.s_a + self.length - self.landing

    def m(self, u):
        return _transition_m(u, self.L1, self.L2, self.ramp_first, self.ramp, self.m_high)

    def arc_length(self, s):
        """ell(s_M) with first and second derivatives."""
        w = self.s_b - self.s_a
        f0, f1, f2, _ = smoothstep_derivs((s - self.s_a) / w)
        return s + self.c0 * f0, 1 + self.c0 * f1 / w, self.c0 * f2 / w**2

    def meridian(self, ell):
        """(a, a', a''), (b, b', b'') along arc length ell."""
        ell = np.asarray(ell, dtype=float)
        (a0, a1, a2), (b0, b1, b2) = self.curve(ell)
        a0, a1, a2, b0, b1, b2 = (np.array(v, dtype=float, copy=True) for v in (a0, a1, a2, b0, b1, b2))
        lo = ell <= self.s_a
        th = self.tau * ell[lo]
        a0[lo], a1[lo], a2[lo] = np.sin(th) / self.tau, np.cos(th), -self.tau * np.sin(th)
        b0[lo], b1[lo], b2[lo] = (1 - np.cos(th)) / self.tau, np.sin(th), self.tau * np.cos(th)
        hi = ell >= self.s_a + self.length
        th = self.landing + ell[hi] - self.s_a - self.length
        a0[hi], a1[hi], a2[hi] = np.sin(th), np.cos(th), -np.sin(th)
        b0[hi], b1[hi], b2[hi] = 1 - np.cos(th), np.sin(th), np.cos(th)
        return (a0, a1, a2), (b0, b1, b2)

    def ab(self, s):
        """Jet-aware (a, b) as functions of the polar distance."""
        l0, l1, l2 = self.arc_length(value_of(s))
        ell = apply_scalar(s, l0, l1, l2)
        (a0, a1, a2), (b0, b1, b2) = self.meridian(l0)
        return apply_scalar(ell, a0, a1, a2), apply_scalar(ell, b0, b1, b2)

    def max_b(self) -> float:
        return float(np.max(self.curve(self.curve.s)[1][0]))


def _transition_m(u, L1, L2, l1, l, m_high):
    """Curvature ratio 1 -> 0 (width l1), 0 -> m_high around L1, m_high -> 1 at L1 + L2."""
    dip = _step(u / l1) * (1 - _step((u - L1 + l) / l))
    plate = _step((u - L1 + l) / l) * (1 - _step((u - L1 - L2 + l) / l))
    return 1 - dip + (m_high - 1) * plate


def _shoot(tau, theta0, L1, L2, l1, l, m_high, rtol):
    a0 = math.sin(theta0) / tau
    y0 = [a0, (1 - math.cos(theta0)) / tau, math.cos(theta0), math.sin(theta0)]
    rhs = profile_rhs(lambda u: _transition_m(u, L1, L2, l1, l, m_high))
    traj = dopri(rhs, 0.0, y0, L1 + L2, rtol=rtol, atol=rtol * 1e-2)
    a, b, ap, bp = traj.y_end
    r = a / bp
    return traj, rhs, (b + r * ap - 1, r - 1), math.atan2(bp, ap)


def outer_transition(
    tau: float,
    theta0: float = 0.4,
    m_high: float = 10.0,
    ramp: float = 0.02,
    s_b: float = 0.95,
    nodes: int = 4096,
    guesses=((0.78, 0.057), (0.5, 0.1), (1.0, 0.03), (0.3, 0.2)),
) -> OuterTransition:
    """Shoot (L1, L2) so that the transition ends on the unit circle centred at b = 1."""
    a0 = math.sin(theta0) / tau
    l1 = 0.2 * a0

    def resid(p):
        L1, L2 = np.exp(p)
        if L1 < 2 * ramp or L2 < 2 * ramp:
            return [1e3, 1e3]
        return list(_shoot(tau, theta0, L1, L2, l1, ramp, m_high, 1e-10)[2])

    best = None
    for g in guesses:
        res = least_squares(resid, np.log(g), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if best is None or res.cost < best.cost:
            best = res
        if best.cost < 1e-24:
            break
    L1, L2 = np.exp(best.x)
    traj, rhs, (e1, e2), landing = _shoot(tau, theta0, L1, L2, l1, ramp, m_high, 1e-13)
    err = math.hypot(e1, e2)
    if err > 1e-9:
        raise SurgeryError(f"outer transition shooting did not converge (residual {err:.3g})")
    if not 0 < landing < s_b:
        raise SurgeryError(f"landing angle {landing:.4g} not below s_b = {s_b}")
    breaks = [0.0, l1, L1 - ramp, L1, L1 + L2 - ramp, L1 + L2]
    per = max(nodes // 5, 64)
    grid, state, accel = _trajectory_nodes(traj, breaks, per, rhs)
    s_a = theta0 / tau
    ot = OuterTransition(tau, theta0, L1, L2, l1, ramp, m_high, landing, s_b, err,
                         _NodeCurve(grid + s_a, state, accel))
    w = s_b - s_a
    if 1 + min(ot.c0, 0.0) * 2.1875 / w <= 0:  # max of S' is 35/16
        raise SurgeryError("arc-length reparametrization is not monotone")
    if np.any(state[:, 2] <= 0) or np.any(state[:, 3] <= 0):
        raise SurgeryError("transition tangent left the open first quadrant")
    return ot


def outer_chart(scene: SurgeryScene, ot: OuterTransition, rho2: float, s_hi: float | None = None,
                sheet: int = 1) -> ImmersionChart:
    """Outer piece over (qa, omega angles, s_M) for s_M in [rho'', s_hi]; equals f for s_M >= s_b."""
    ps = scene.polar
    d, k = ps.d, ps.k
    s_hi = 0.5 * np.pi - 0.05 if s_hi is None else s_hi

    def fn(u):
        qa = list(u[:d])
        om = sphere_point(list(u[d : d + k - 1]))
        s = u[-1]
        a, b = ot.ab(s)
        center = ps.center(qa, sheet)
        xi = ps.xi(qa, sheet)
        normal = ps.normal_vector(qa, om, sheet)
        moved = [c + a * w + b * x for c, w, x in zip(center, normal, xi)]
        base = ps.polar(qa, [s * w for w in om], sheet)
        far = value_of(s) >= ot.s_b
        return [where(far, f, g) for f, g in zip(base, moved)]

    alo, ahi = _angle_box(k - 1)
    return ImmersionChart(ps.n, ps.N, tuple(ps.q_lo) + alo + (rho2,), tuple(ps.q_hi) + ahi + (s_hi,), fn,
                          f"outer piece, sheet {sheet:+d}")


def f_polar_chart(scene: SurgeryScene, s_lo: float, s_hi: float, sheet: int = 1) -> ImmersionChart:
    """f in the same polar coordinates as the outer piece."""
    ps = scene.polar
    d, k = ps.d, ps.k

    def fn(u):
        om = sphere_point(list(u[d : d + k - 1]))
        return ps.polar(list(u[:d]), [u[-1] * w for w in om], sheet)

    alo, ahi = _angle_box(k - 1)
    return ImmersionChart(ps.n, ps.N, tuple(ps.q_lo) + alo + (s_lo,), tuple(ps.q_hi) + ahi + (s_hi,), fn, "f")


# --- disc and handle --------------------------------------------------------


@dataclass
class DiscProfile:
    """Rotational disc profile (rho_hat, h_hat) in the radius r of D^{d+1}.

    Flat top rho_hat = c r at height H, a U-turn of width w, a speed ramp
    back to unit speed, then the collar rho_hat = 2 - r, h_hat = 0.
    """

    speed: float
    width: float
    r_turn: float
    height: float
    collar: float  # collar starts at this radius
    curve: _NodeCurve = field(repr=False)

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        (p0, p1, p2), (h0, h1, h2) = self.curve(r)
        p0, p1, p2, h0, h1, h2 = (np.array(v, dtype=float, copy=True) for v in (p0, p1, p2, h0, h1, h2))
        top = r <= self.r_turn
        p0[top], p1[top], p2[top] = self.speed * r[top], self.speed, 0.0
        h0[top], h1[top], h2[top] = self.height, 0.0, 0.0
        col = r >= self.collar
        p0[col], p1[col], p2[col] = 2 - r[col], -1.0, 0.0
        h0[col], h1[col], h2[col] = 0.0, 0.0, 0.0
        return (p0, p1, p2), (h0, h1, h2)


def disc_profile(speed: float = 3.0, width: float = 0.12, nodes: int = 800) -> DiscProfile:
    c, w = speed, width
    r_turn = (2 - 2 * w + w * (c + 1) / 2) / (c + 1)

    def phi(r):
        return -np.pi * smoothstep_derivs((r - r_turn) / w)[0]

    def vel(r):
        return 1 + (c - 1) * (1 - smoothstep_derivs((r - r_turn - w) / w)[0])

    def acc(r):
        s1 = smoothstep_derivs((r - r_turn) / w)[1]
        v1 = -(c - 1) * smoothstep_derivs((r - r_turn - w) / w)[1] / w
        p = phi(r)
        dphi = -np.pi * s1 / w
        v = vel(r)
        return v1 * np.cos(p) - v * np.sin(p) * dphi, v1 * np.sin(p) + v * np.cos(p) * dphi

    grid = np.linspace(r_turn, r_turn + 2 * w, nodes)
    gx, gw = np.polynomial.legendre.leggauss(12)
    rho = [c * r_turn]
    hgt = [0.0]
    for lo, hi in zip(grid[:-1], grid[1:]):
        t = 0.5 * (hi - lo) * gx + 0.5 * (hi + lo)
        v, p = vel(t), phi(t)
        rho.append(rho[-1] + 0.5 * (hi - lo) * np.sum(gw * v * np.cos(p)))
        hgt.append(hgt[-1] + 0.5 * (hi - lo) * np.sum(gw * v * np.sin(p)))
    rho, hgt = np.array(rho), np.array(hgt)
    height = -hgt[-1]
    hgt = hgt + height
    v, p = vel(grid), phi(grid)
    state = np.stack([rho, hgt, v * np.cos(p), v * np.sin(p)], axis=1)
    accel = np.stack(acc(grid), axis=1)
    collar = r_turn + 2 * w
    if abs(rho[-1] - (2 - collar)) > 1e-12 or abs(hgt[-1]) > 1e-12:
        raise SurgeryError("disc profile does not close onto the collar")
    return DiscProfile(c, w, r_turn, height, collar, _NodeCurve(grid, state, accel))


def _disc_components(scene: SurgeryScene, disc: DiscProfile, x):
    """F(x) = (rho_hat(r)/r) x + h_hat(r) e_aux as functions of r^2."""
    r2 = 0.0
    for xi in x:
        r2 = r2 + xi * xi
    u = np.asarray(value_of(r2), dtype=float)
    r = np.sqrt(u)
    inner = r <= disc.r_turn
    rs = np.where(inner, 1.0, r)
    (p0, p1, p2), (h0, h1, h2) = disc.evaluate(rs)
    ratio = p0 / rs
    dr = (p1 * rs - p0) / rs**2
    ddr = (p2 * rs**2 - 2 * p1 * rs + 2 * p0) / rs**3
    g1, g2 = dr / (2 * rs), (ddr - dr / rs) / (4 * rs**2)
    k1, k2 = h1 / (2 * rs), (h2 - h1 / rs) / (4 * rs**2)
    ratio = np.where(inner, disc.speed, ratio)
    hval = np.where(inner, disc.height, h0)
    g1, g2, k1, k2 = (np.where(inner, 0.0, v) for v in (g1, g2, k1, k2))
    P = apply_scalar(r2, ratio, g1, g2)
    H = apply_scalar(r2, hval, k1, k2)
    out = [0.0] * scene.N
    for i, xi in enumerate(x):
        out[i] = P * xi
    out[scene.aux] = H
    return out


def disc_extension(scene: SurgeryScene, disc: DiscProfile | None = None, radius: float | None = None) -> ImmersionChart:
    """Rotational disc of D^{d+1} with collar F(r omega) = (2 - r) omega, in Cartesian coordinates."""
    disc = disc_profile() if disc is None else disc
    if scene.aux >= scene.N:
        raise SurgeryError("no auxiliary coordinate left for the disc")
    rad = disc.collar + 0.2 if radius is None else radius
    m = scene.d + 1

    def fn(u):
        return _disc_components(scene, disc, list(u[:m]))

    return ImmersionChart(m, scene.N, (-rad,) * m, (rad,) * m, fn, "disc")


def cap_map(scene: SurgeryScene, lam: float, radius: float, disc: DiscProfile | None = None) -> ImmersionChart:
    """F(x) + lam * sum v_i e_i over (x in the disc, v angles)."""
    disc = disc_profile() if disc is None else disc
    m, k = scene.d + 1, scene.k
    for v in scene.frame:
        if abs(v[scene.aux]) > 0 or np.any(v[:m]):
            raise SurgeryError("frame is not normal to the disc")

    def fn(u):
        comps = _disc_components(scene, disc, list(u[:m]))
        vs = sphere_point(list(u[m:]))
        for vi, e in zip(vs, scene.frame):
            j = int(np.argmax(e))
            comps[j] = comps[j] + lam * vi
        return comps

    alo, ahi = _angle_box(k - 1)
    return ImmersionChart(scene.n, scene.N, (-radius,) * m + alo, (radius,) * m + ahi, fn, f"handle (lambda={lam:.4g})")


def handle_polar_chart(scene: SurgeryScene, lam: float, r_lo: float, r_hi: float, sheet: int = 1,
                       disc: DiscProfile | None = None) -> ImmersionChart:
    """The handle in (qa, v angles, r) coordinates, x = r * q; used for the seam."""
    disc = disc_profile() if disc is None else disc
    d, k = scene.d, scene.k
    cap = cap_map(scene, lam, r_hi + 1.0, disc)

    def fn(u):
        q = sphere_point(list(u[:d]))
        x = [sheet * u[-1] * c for c in q]
        return cap.fn(x + list(u[d : d + k - 1]))

    alo, ahi = _angle_box(k - 1)
    ps = scene.polar
    return ImmersionChart(scene.n, scene.N, tuple(ps.q_lo) + alo + (r_lo,), tuple(ps.q_hi) + ahi + (r_hi,), fn,
                          "handle, polar")


def ball_points(dim: int, radius: float, count: int, rng) -> np.ndarray:
    """Uniform points of the closed ball, slightly shrunk to stay inside the chart box."""
    g = rng.standard_normal((count, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (radius * rng.random((count, 1)) ** (1 / dim))


# --- gluing -----------------------------------------------------------------


@dataclass
class Seam:
    name: str
    samples: int
    c0: float
    c1: float
    worst: tuple

    def as_dict(self) -> dict:
        return {"name": self.name, "samples": self.samples, "c0_residual": self.c0, "c1_residual": self.c1,
                "worst": [float(x) for x in self.worst]}


@dataclass
class SurgeryParams:
    tau0: float
    sigma0: float
    tau: float
    rho0: float
    rho1: float
    rho2: float
    theta0: float
    lam: float
    R: float
    b_R: float
    collar_eps: float

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


@dataclass
class GluedAtlas:
    scene: SurgeryScene
    params: SurgeryParams
    profile: BendingProfile
    transition: OuterTransition
    disc: DiscProfile
    outer: list  # one chart per sheet
    tube: list
    handle: ImmersionChart
    handle_radius: float
    seams: list = field(default_factory=list)


def _seam_points(scene, count, rng):
    ps = scene.polar
    lo = np.array(ps.q_lo + _angle_box(ps.k - 1)[0])
    hi = np.array(ps.q_hi + _angle_box(ps.k - 1)[1])
    return lo + (hi - lo) * rng.random((count, len(lo)))


def _seam(name, left, right, pts_left, pts_right):
    jl = evaluate_jet2(left, pts_left)
    jr = evaluate_jet2(right, pts_right)
    c0 = np.abs(jl.value - jr.value).max(axis=1)
    c1 = np.abs(jl.jacobian - jr.jacobian).max(axis=(1, 2))
    i = int(np.argmax(np.maximum(c0, c1 * 1e-3)))
    return Seam(name, len(pts_left), float(c0.max()), float(c1.max()), tuple(pts_left[i]))


def glue(
    scene: SurgeryScene,
    profile: BendingProfile,
    transition: OuterTransition,
    params: SurgeryParams,
    seam_samples: int = 1000,
    seed: int = 0,
    lam: float | None = None,
    strict: bool = True,
) -> GluedAtlas:
    """Assemble the three pieces and measure both seams on every sheet."""
    lam = params.lam if lam is None else lam
    disc = disc_profile()
    r_seam = 1 + params.b_R
    if not disc.collar < r_seam:
        raise SurgeryError("tube/handle seam falls outside the disc collar")
    # charts reach OVERLAP past each seam through the analytic continuations of the pieces
    outer = [outer_chart(scene, transition, params.rho2 - OVERLAP, sheet=s) for s in scene.sheets]
    tube = [tube_chart(scene.polar, profile, profile.R - OVERLAP, OVERLAP, sheet=s) for s in scene.sheets]
    handle = cap_map(scene, lam, r_seam, disc)
    atlas = GluedAtlas(scene, params, profile, transition, disc, outer, tube, handle, r_seam)
    rng = np.random.default_rng(seed)
    for idx, sheet in enumerate(scene.sheets):
        base = _seam_points(scene, seam_samples, rng)
        pts_o = np.hstack([base, np.full((len(base), 1), params.rho2)])
        pts_t0 = np.hstack([base, np.zeros((len(base), 1))])
        atlas.seams.append(_seam(f"outer/tube sheet {sheet:+d}", outer[idx], tube[idx], pts_o, pts_t0))
        hpol = handle_polar_chart(scene, lam, r_seam - 0.5, r_seam + OVERLAP, sheet, disc)
        pts_tr = np.hstack([base, np.full((len(base), 1), params.R)])
        pts_h = np.hstack([base, np.full((len(base), 1), r_seam)])
        atlas.seams.append(_seam(f"tube/handle sheet {sheet:+d}", tube[idx], hpol, pts_tr, pts_h))
    bad = [s for s in atlas.seams if s.c0 > C0_TOL or s.c1 > C1_TOL]
    if strict and bad:
        raise GluingError(f"seam residual above threshold at {bad[0].name}", bad[0].name, bad[0].worst)
    return atlas


# --- verification -----------------------------------------------------------


@dataclass
class VerificationReport:
    pieces: dict
    seams: list
    params: dict
    unchanged_outside: float
    profile_drift: float
    global_min_scal: float
    global_argmin: tuple
    min_mean_curvature: float
    min_margin: float
    samples: int
    verdict: bool
    reasons: list

    def as_dict(self) -> dict:
        return {
            "verdict": "pass" if self.verdict else "fail",
            "reasons": list(self.reasons),
            "global": {
                "min_scal": self.global_min_scal,
                "argmin": {"piece": self.global_argmin[0], "point": [float(x) for x in self.global_argmin[1]]},
                "min_mean_curvature": self.min_mean_curvature,
                "min_immersion_margin": self.min_margin,
                "samples": self.samples,
            },
            "pieces": {k: v.as_dict() for k, v in self.pieces.items()},
            "seams": [s.as_dict() for s in self.seams],
            "unchanged_outside_residual": self.unchanged_outside,
            "profile_conserved_drift": self.profile_drift,
            "parameters": self.params,
        }


def verify(atlas: GluedAtlas, samples: int = 10000, seed: int = 0, threads: int = 1, c0_tol: float = C0_TOL,
           c1_tol: float = C1_TOL, immersion_margin: float = 1e-6) -> VerificationReport:
    scene, params = atlas.scene, atlas.params
    rng = np.random.default_rng(seed)
    pieces: dict[str, ScanResult] = {}
    per_sheet = max(samples // len(scene.sheets), 1)

    def scan(name, chart, pts):
        rep = scan_scalar_positivity(chart, pts, immersion_margin=immersion_margin, threads=threads)
        pieces[name] = rep if name not in pieces else pieces[name].merge(rep)

    for chart in atlas.outer:
        lo, hi = chart.box
        scan("outer", chart, lo + (hi - lo) * rng.random((per_sheet, chart.intrinsic_dim)))
    for chart in atlas.tube:
        lo, hi = chart.box
        scan("tube", chart, lo + (hi - lo) * rng.random((per_sheet, chart.intrinsic_dim)))
    m = scene.d + 1
    hpts = np.hstack([
        ball_points(m, atlas.handle_radius, samples, rng),
        np.array(_angle_box(scene.k - 1)[0]) + (np.array(_angle_box(scene.k - 1)[1]) - np.array(_angle_box(scene.k - 1)[0]))
        * rng.random((samples, scene.k - 1)),
    ])
    scan("handle", atlas.handle, hpts)
    # far region: f itself beyond the reach of the polar charts
    base = scene.base
    lo, hi = base.box
    cand = lo + (hi - lo) * rng.random((40 * samples, base.intrinsic_dim))
    far = cand[scene.distance_to_S(base(cand)) >= 0.5 * np.pi - 0.1][: max(samples // 4, 1)]
    scan("far", base, far)

    unchanged = 0.0
    for idx, sheet in enumerate(scene.sheets):
        chart = atlas.outer[idx]
        lo, hi = chart.box
        lo = lo.copy()
        lo[-1] = params.rho0
        pts = lo + (hi - lo) * rng.random((1000, chart.intrinsic_dim))
        ref = f_polar_chart(scene, params.rho0, hi[-1], sheet)
        diff = chart(pts) != ref(pts)
        unchanged = max(unchanged, float(np.abs(chart(pts) - ref(pts)).max()) if diff.any() else 0.0)

    name, worst = min(pieces.items(), key=lambda kv: kv[1].min_scal)
    gmin = worst.min_scal
    min_h = min(p.min_mean_curvature for p in pieces.values())
    min_margin = min(p.min_margin for p in pieces.values())
    failures = sum(p.margin_failures for p in pieces.values())
    reasons = []
    if not gmin > 0:
        reasons.append(f"non-positive scalar curvature {gmin:.6g} in piece {name}")
    if failures:
        reasons.append(f"{failures} samples below the immersion margin")
    for s in atlas.seams:
        if s.c0 > c0_tol:
            reasons.append(f"seam {s.name}: C0 residual {s.c0:.3g} > {c0_tol:g}")
        if s.c1 > c1_tol:
            reasons.append(f"seam {s.name}: C1 residual {s.c1:.3g} > {c1_tol:g}")
    if not min_h > 0:
        reasons.append("mean curvature vanishes somewhere")
    if unchanged != 0.0:
        reasons.append(f"outer piece differs from f beyond rho0 by {unchanged:.3g}")
    return VerificationReport(
        pieces=pieces,
        seams=list(atlas.seams),
        params=params.as_dict(),
        unchanged_outside=unchanged,
        profile_drift=float(atlas.profile.ode_drift),
        global_min_scal=float(gmin),
        global_argmin=(name, tuple(worst.argmin)),
        min_mean_curvature=float(min_h),
        min_margin=float(min_margin),
        samples=int(sum(p.count for p in pieces.values())),
        verdict=not reasons,
        reasons=reasons,
    )


# --- pipeline ---------------------------------------------------------------


def run_surgery(
    n: int = 4,
    d: int = 1,
    N: int = 7,
    seed: int = 0,
    samples: int = 10000,
    threads: int = 1,
    tau: float | None = None,
    rho: float | None = None,
    theta0: float = 0.4,
    glue_angle: float = 0.3,
    sigma_samples: int = 2000,
    sabotage_lambda: float | None = None,
    c0_tol: float = C0_TOL,
    c1_tol: float = C1_TOL,
    immersion_margin: float = 1e-6,
):
    """tau0 search, sigma0 search, bending profile, outer transition, glue, verify."""
    scene = round_sphere_scene(n, d, N)
    k = scene.k
    lam_ode = (k - 2) / 4
    rho0 = scene.polar.rho0 if rho is None else rho
    rho1 = 0.5 * rho0
    t0 = tau0_search(scene.polar).tau0
    s0 = sigma0_search(scene.polar, k, rho_grid=(rho1,), samples=sigma_samples, seed=seed, threads=threads).sigma0
    tau_min = max(1.0, t0, s0, np.pi / (2 * lam_ode * rho1))
    tau_used = tau_min if tau is None else float(tau)
    if tau_used < tau_min * (1 - 1e-12):
        raise PreconditionError(f"tau must be at least {tau_min:.6g}")
    if glue_angle > theta0:
        raise PreconditionError("the tube must meet the outer circle before the transition starts")
    rho2 = glue_angle / tau_used
    profile = build_bending_profile(k, tau_used, rho1, rho2, sigma0=s0)
    ot = outer_transition(tau_used, theta0)
    a_R = float(profile.state[0, 0])
    b_R = float(profile.state[0, 1])
    disc = disc_profile()
    eps = 1 - disc.collar
    if not abs(b_R) < eps:
        raise SurgeryError(f"|b(R)| = {abs(b_R):.4g} exceeds the collar half width {eps:.4g}")
    params = SurgeryParams(t0, s0, tau_used, rho0, rho1, rho2, theta0, a_R, profile.R, b_R, eps)
    lam = a_R if sabotage_lambda is None else sabotage_lambda
    atlas = glue(scene, profile, ot, params, seed=seed, lam=lam, strict=False)
    report = verify(atlas, samples, seed, threads, c0_tol, c1_tol, immersion_margin)
    return atlas, report
