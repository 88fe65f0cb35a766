"""Bending profiles and the tube immersions they generate.

A profile is a unit-speed plane curve gamma = (a, b) on [R, 0].  Every piece
used here solves

    (a'', b'') = m(s) * (b'/a) * (-b', a'),

so its curvature is kappa = m sigma with sigma = b'/a.  The ODE of the
conserved-quantity lemma is m = -lambda, lambda = (k - 2)/4; circle arcs
centred on the b-axis have m = 1 and vertical lines m = 0.  Splicing therefore
means ramping the ratio m smoothly between these values, which keeps the
curve controlled (-lambda <= m <= 1) by construction.

Between nodes a profile is interpolated by quintic Hermite polynomials built
from the exact (a, a', a'') and (b, b', b'') at the nodes, so the tube chart
F_gamma = f(q) + a omega + b xi(q) has continuous curvature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .jetcalc import (
    ImmersionChart,
    Sampling,
    ScanResult,
    evaluate_jet2,
    frame_and_metric,
    sample_points,
    scan_scalar_positivity,
)
from .jets import apply_scalar, value_of
from .rk import IntegrationError, dopri, dopri_fixed
from .smooth import smoothstep_derivs, sphere_point
from .spherical_deform import PolarScene, _angle_box, _point_vector

__all__ = [
    "BendingError",
    "SpliceError",
    "PreconditionError",
    "NotFoundError",
    "BendingProfile",
    "RevolutionScene",
    "profile_rhs",
    "kappa_sigma",
    "is_controlled",
    "integrate_profile",
    "build_bending_profile",
    "tube_chart",
    "revolution_map",
    "vertical_sff",
    "predicted_vertical_sff",
    "normal_split",
    "sigma0_search",
    "battery_profiles",
    "scan_profile",
    "min_normal_perp",
    "Sigma0Result",
    "terminal_error_fixed",
]


class BendingError(RuntimeError):
    pass


class SpliceError(BendingError):
    pass


class PreconditionError(ValueError):
    pass


class NotFoundError(RuntimeError):
    pass


def profile_rhs(m_of_s):
    """Right-hand side for the state (a, b, a', b') with curvature ratio m(s)."""

    def f(s, y):
        a, _, ap, bp = y
        c = m_of_s(s) * bp / a
        return np.array([ap, bp, -c * bp, c * ap])

    return f


def kappa_sigma(a, ap, bp, app, bpp):
    """kappa = a' b'' - a'' b' and sigma = b'/a."""
    a = np.asarray(a, dtype=float)
    if np.any(a == 0):
        raise BendingError("sigma is singular where a = 0")
    return ap * bpp - app * bp, bp / a


# --- quintic Hermite --------------------------------------------------------

# rows: p0, h v0, h^2 w0, h^2 w1, h v1, p1 ; columns: x^0 .. x^5
_QH = np.array(
    [
        [1, 0, 0, -10, 15, -6],
        [0, 1, 0, -6, 8, -3],
        [0, 0, 0.5, -1.5, 1.5, -0.5],
        [0, 0, 0, 0.5, -1, 0.5],
        [0, 0, 0, -4, 7, -3],
        [0, 0, 0, 10, -15, 6],
    ],
    dtype=float,
)


def _quintic_coeffs(s, p, v, w):
    h = np.diff(s)
    data = np.stack([p[:-1], h * v[:-1], h**2 * w[:-1], h**2 * w[1:], h * v[1:], p[1:]], axis=1)
    return data @ _QH  # (intervals, 6) monomial coefficients in x


def _poly_eval(coef, x, h):
    c0 = c1 = c2 = 0.0
    for j in range(5, -1, -1):
        c2 = c2 * x + c1 * 2
        c1 = c1 * x + c0
        c0 = c0 * x + coef[:, j]
    # c1 = p'(x), c2 = p''(x) by the nested Horner recurrences above
    return c0, c1 / h, c2 / h**2


# --- profile ----------------------------------------------------------------


@dataclass
class BendingProfile:
    """Sampled profile on [R, 0] plus analytic continuations of its end pieces."""

    k: int
    s: np.ndarray
    state: np.ndarray  # (M, 4): a, b, a', b'
    accel: np.ndarray  # (M, 2): a'', b''
    m: np.ndarray  # curvature ratio kappa / sigma at the nodes
    piece: list
    splice_marks: list = field(default_factory=list)
    circle: tuple | None = None  # (tau, rho2, s_lo): circle arc on [s_lo, 0] and beyond 0
    vertical: tuple | None = None  # (s_hi, a_R, b_R): vertical line on (-inf, s_hi]
    ode_drift: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a, b, ap, bp = self.state.T
        self._ca = _quintic_coeffs(self.s, a, ap, self.accel[:, 0])
        self._cb = _quintic_coeffs(self.s, b, bp, self.accel[:, 1])

    @property
    def lam(self) -> float:
        return (self.k - 2) / 4

    @property
    def R(self) -> float:
        return float(self.s[0])

    @property
    def kappa(self) -> np.ndarray:
        return kappa_sigma(self.state[:, 0], self.state[:, 2], self.state[:, 3], *self.accel.T)[0]

    @property
    def sigma(self) -> np.ndarray:
        return self.state[:, 3] / self.state[:, 0]

    @property
    def extent(self) -> float:
        return float(np.max(np.hypot(self.state[:, 0], self.state[:, 1])))

    def _nodes_eval(self, s):
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 2)
        h = self.s[idx + 1] - self.s[idx]
        x = (s - self.s[idx]) / h
        a = _poly_eval(self._ca[idx], x, h)
        b = _poly_eval(self._cb[idx], x, h)
        return a, b

    def evaluate(self, s):
        """(a, a', a''), (b, b', b'') at arbitrary s, using exact formulas on analytic pieces."""
        s = np.asarray(s, dtype=float)
        (a0, a1, a2), (b0, b1, b2) = self._nodes_eval(s)
        a0, a1, a2, b0, b1, b2 = (np.array(v, dtype=float, copy=True) for v in (a0, a1, a2, b0, b1, b2))
        if self.circle is not None:
            tau, rho2, s_lo = self.circle
            mask = s >= s_lo
            th = tau * (rho2 + s[mask])
            a0[mask], a1[mask], a2[mask] = np.sin(th) / tau, np.cos(th), -tau * np.sin(th)
            b0[mask], b1[mask], b2[mask] = (1 - np.cos(th)) / tau, np.sin(th), tau * np.cos(th)
        elif np.any(s > 0):
            raise BendingError("profile has no continuation beyond s = 0")
        if self.vertical is not None:
            s_hi, a_r, b_r = self.vertical
            mask = s <= s_hi
            a0[mask], a1[mask], a2[mask] = a_r, 0.0, 0.0
            b0[mask], b1[mask], b2[mask] = b_r + (s[mask] - s_hi), 1.0, 0.0
        elif np.any(s < self.R):
            raise BendingError("profile has no continuation below s = R")
        return (a0, a1, a2), (b0, b1, b2)

    def ab(self, s):
        """Jet-aware (a(s), b(s))."""
        (a0, a1, a2), (b0, b1, b2) = self.evaluate(value_of(s))
        return apply_scalar(s, a0, a1, a2), apply_scalar(s, b0, b1, b2)

    def rows(self):
        kap, sig = self.kappa, self.sigma
        for i in range(len(self.s)):
            a, b, ap, bp = self.state[i]
            yield [self.s[i], a, b, ap, bp, kap[i], sig[i], self.piece[i]]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "a", "b", "a_prime", "b_prime", "kappa", "sigma", "piece"])
            for row in self.rows():
                w.writerow([f"{x:.17g}" for x in row[:7]] + [row[7]])


def is_controlled(profile: BendingProfile, slack: float = 1e-9, n: int | None = None) -> tuple[bool, dict]:
    """Controlled-curve verdict: (2-k)/4 sigma <= kappa <= sigma, unit speed, a != 0."""
    kap, sig = profile.kappa, profile.sigma
    lower = kap - (2 - profile.k) / 4 * sig
    upper = sig - kap
    speed = np.abs(profile.state[:, 2] ** 2 + profile.state[:, 3] ** 2 - 1)
    out = {
        "lower_slack": float(lower.min()),
        "upper_slack": float(upper.min()),
        "sigma_min": float(sig.min()),
        "speed_defect": float(speed.max()),
        "a_min": float(profile.state[:, 0].min()),
    }
    ok = out["lower_slack"] >= -slack and out["upper_slack"] >= -slack and out["a_min"] > 0 and speed.max() <= 1e-8
    if n is not None:
        out["remark_slack"] = float((n * sig - np.maximum(np.abs(kap), sig)).min())
    return bool(ok), out


# --- pure ODE profile -------------------------------------------------------


def _sample_piece(traj, s_lo, s_hi, count):
    """Node grid on [s_lo, s_hi] (inclusive) with exact states from the trajectory."""
    grid = np.linspace(s_lo, s_hi, count)
    states = np.array([traj.at(x) for x in grid])
    return grid, states


def integrate_profile(k: int, x: float, y: float, u: float, v: float, tol: float = 1e-12, nodes: int = 512):
    """Backward integration of the conserved-quantity ODE until gamma' = (0, 1)."""
    if k < 3:
        raise PreconditionError("codimension k >= 3 is required")
    if x <= 0 or u <= 0 or v <= 0 or abs(u * u + v * v - 1) > 1e-12:
        raise PreconditionError("need x > 0 and a unit direction (u, v) with u, v > 0")
    lam = (k - 2) / 4
    bound = -np.pi * x / (2 * lam * v)
    rhs = profile_rhs(lambda s: -lam)
    traj = dopri(rhs, 0.0, [x, y, u, v], 1.05 * bound, rtol=tol, atol=tol * 1e-2, event=lambda s, st: st[2])
    if traj.event_t is None:
        raise IntegrationError("gamma' never became vertical within the admissible interval")
    R = traj.event_t
    if not bound < R < 0:
        raise IntegrationError(f"terminal parameter {R} outside ({bound}, 0)")
    grid, states = _sample_piece(traj, R, 0.0, nodes)
    states[0] = traj.event_y
    prof = _assemble(k, [(grid, states, np.full(len(grid), -lam), "ode")], [("ode", R, 0.0)])
    prof.meta.update({"bound": bound, "x": x, "y": y, "u": u, "v": v, "rejected_steps": traj.rejected})
    return prof


def _assemble(k, pieces, marks, circle=None, vertical=None):
    s_all, st_all, m_all, tags = [], [], [], []
    for grid, states, mvals, tag in pieces:
        if s_all and abs(grid[0] - s_all[-1][-1]) < 1e-15:
            grid, states, mvals = grid[1:], states[1:], mvals[1:]
        s_all.append(grid)
        st_all.append(states)
        m_all.append(mvals)
        tags += [tag] * len(grid)
    s = np.concatenate(s_all)
    st = np.concatenate(st_all)
    m = np.concatenate(m_all)
    order = np.argsort(s, kind="stable")
    s, st, m = s[order], st[order], m[order]
    tags = [tags[i] for i in order]
    a, _, ap, bp = st.T
    c = m * bp / a
    accel = np.stack([-c * bp, c * ap], axis=1)
    prof = BendingProfile(k, s, st, accel, m, tags, marks, circle, vertical)
    z = bp * a ** prof.lam
    ode = np.array([t == "ode" for t in tags])
    if ode.any():
        zo = z[ode]
        prof.ode_drift = float(np.max(np.abs(zo / zo[-1] - 1)))
    return prof


def terminal_error_fixed(k, x, y, u, v, s_end: float, nsteps: int, reference: np.ndarray) -> float:
    """Fixed-step integration error at s_end; used for the convergence-order check."""
    lam = (k - 2) / 4
    yend = dopri_fixed(profile_rhs(lambda s: -lam), 0.0, [x, y, u, v], s_end, nsteps)
    return float(np.linalg.norm(yend - reference))


# --- spliced profile --------------------------------------------------------


def _ramp(s_start, length, m_from, m_to):
    """m(s) moving from m_from at s_start to m_to at s_start - length (backwards in s)."""

    def m(s):
        f0 = smoothstep_derivs((s_start - s) / length)[0]
        return m_from + (m_to - m_from) * f0

    return m


def build_bending_profile(
    k: int,
    tau: float,
    rho1: float,
    rho2: float,
    splice_width: float | None = None,
    sigma0: float = 0.0,
    scene: PolarScene | None = None,
    samples: int = 4000,
    nodes: int = 512,
    tol: float = 1e-12,
    max_retries: int = 10,
    seed: int = 0,
):
    """Profile that is a circle arc of radius 1/tau near 0 and vertical near R.

    The circle is seeded at angle tau*rho2; the curvature ratio then ramps
    from 1 to -lambda, follows the ODE, and ramps to 0 exactly where the
    tangent becomes vertical.  With a scene, F_gamma is sampled and the splice
    width is halved on failure.
    """
    if k < 3:
        raise PreconditionError("codimension k >= 3 is required")
    lam = (k - 2) / 4
    tau0 = max(1.0, sigma0, np.pi / (2 * lam * rho1))
    if tau < tau0 * (1 - 1e-12):
        raise PreconditionError(f"tau must be at least max(1, sigma0, pi/(2 lambda rho')) = {tau0:.6g}")
    if not 0 < rho2 <= min(rho1, np.pi / (2 * tau)) * (1 + 1e-12):
        raise PreconditionError("need 0 < rho'' <= min(rho', pi/(2 tau))")
    width = splice_width if splice_width is not None else 0.25 * rho2
    last = None
    for _ in range(max_retries + 1):
        try:
            prof = _spliced(k, tau, rho2, width, tol, nodes)
        except (BendingError, IntegrationError, ValueError) as exc:
            last = exc
            width *= 0.5
            continue
        if prof.extent > 2 * rho1:
            raise BendingError(f"extent {prof.extent:.4g} exceeds 2 rho' = {2 * rho1:.4g}")
        prof.meta.update({"tau": tau, "rho1": rho1, "rho2": rho2, "splice_width": width, "tau0": tau0})
        if scene is None:
            return prof
        rep = scan_profile(scene, prof, samples, seed)
        prof.meta["scan"] = rep
        if rep.positive:
            return prof
        last = SpliceError(f"F_gamma not scalar positive (min scal {rep.min_scal:.4g}); halving splice width")
        width *= 0.5
    raise SpliceError(f"splice failed after {max_retries} retries: {last}")


def _spliced(k, tau, rho2, width, tol, nodes):
    lam = (k - 2) / 4
    c = tau * rho2
    w0 = min(width, 0.5 * rho2)
    ell = width
    # circle arc on [-w0, 0]
    circ_s = np.linspace(-w0, 0.0, max(16, nodes // 8))
    th = tau * (rho2 + circ_s)
    circ = np.stack([np.sin(th) / tau, (1 - np.cos(th)) / tau, np.cos(th), np.sin(th)], axis=1)
    y_start = circ[0]
    s1 = -w0
    s2 = s1 - ell
    m1 = _ramp(s1, ell, 1.0, -lam)
    tr1 = dopri(profile_rhs(m1), s1, y_start, s2, rtol=tol, atol=tol * 1e-2)
    y2 = tr1.y_end
    if y2[2] <= 0:
        raise BendingError("tangent turned vertical inside the first ramp; shrink the splice width")
    # pure ODE until vertical, to bracket the second ramp
    bound = 1.05 * np.pi * y2[0] / (2 * lam * y2[3]) + ell
    tr2 = dopri(profile_rhs(lambda s: -lam), s2, y2, s2 - bound, rtol=tol, atol=tol * 1e-2,
                event=lambda s, st: st[2])
    if tr2.event_t is None:
        raise BendingError("ODE piece never reached a vertical tangent")
    s_e = tr2.event_t
    hi = min(s_e + ell, s2)
    if hi <= s_e:
        raise BendingError("ODE piece too short for the closing ramp")

    def closing(s3):
        y3 = tr2.at(s3)
        m3 = _ramp(s3, ell, -lam, 0.0)
        return dopri(profile_rhs(m3), s3, y3, s3 - ell, rtol=tol, atol=tol * 1e-2)

    g_hi = closing(hi).y_end[2]
    if g_hi <= 0:
        raise BendingError("closing ramp cannot reach a vertical tangent")
    s3 = brentq(lambda x: closing(x).y_end[2], s_e, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    tr3 = closing(s3)
    y_end = tr3.y_end
    s4 = s3 - ell
    R = s4 - ell
    n_ode = max(nodes // 2, 64)
    n_ramp = max(nodes // 8, 32) * 4
    p_ramp1 = _sample_piece(tr1, s2, s1, n_ramp)
    p_ode = _sample_piece(tr2, s3, s2, n_ode)
    p_ramp2 = _sample_piece(tr3, s4, s3, n_ramp)
    p_ramp2[1][0] = y_end
    vert_s = np.linspace(R, s4, max(16, nodes // 8))
    vert = np.stack([np.full_like(vert_s, y_end[0]), y_end[1] + (vert_s - s4), np.zeros_like(vert_s),
                     np.ones_like(vert_s)], axis=1)
    mr1 = np.array([m1(x) for x in p_ramp1[0]])
    mr2 = _ramp(s3, ell, -lam, 0.0)
    pieces = [
        (vert_s, vert, np.zeros(len(vert_s)), "vertical"),
        (p_ramp2[0], p_ramp2[1], np.array([mr2(x) for x in p_ramp2[0]]), "splice"),
        (p_ode[0], p_ode[1], np.full(len(p_ode[0]), -lam), "ode"),
        (p_ramp1[0], p_ramp1[1], mr1, "splice"),
        (circ_s, circ, np.ones(len(circ_s)), "circle"),
    ]
    marks = [("vertical", R, s4), ("splice", s4, s3), ("ode", s3, s2), ("splice", s2, s1), ("circle", s1, 0.0)]
    prof = _assemble(k, pieces, marks, circle=(tau, rho2, s1), vertical=(s4, float(y_end[0]), float(y_end[1])))
    prof.meta.update({"terminal_a_prime": float(y_end[2]), "glue_angle": c})
    if np.any(prof.state[:, 0] <= 0):
        raise BendingError("profile left the half plane a > 0")
    return prof


# --- the tube immersion -----------------------------------------------------


@dataclass(frozen=True)
class RevolutionScene:
    scene: PolarScene
    profile: BendingProfile

    def __post_init__(self):
        if self.profile.extent >= self.scene.rho0:
            raise PreconditionError("profile extent must stay below the scene radius rho0")


def tube_chart(scene: PolarScene, profile: BendingProfile, s_lo=None, s_hi=None, sheet: int = 1) -> ImmersionChart:
    """F_gamma(q, omega, s) = f(q) + a(s) omega + b(s) xi(q) over (qa, omega angles, s)."""
    d, k = scene.d, scene.k
    if k != profile.k:
        raise PreconditionError("profile codimension does not match the scene")
    s_lo = profile.R if s_lo is None else s_lo
    s_hi = 0.0 if s_hi is None else s_hi

    def fn(u):
        qa = list(u[:d])
        om = sphere_point(list(u[d : d + k - 1]))
        a, b = profile.ab(u[-1])
        center = scene.center(qa, sheet)
        xi = scene.xi(qa, sheet)
        normal = scene.normal_vector(qa, om, sheet)
        return [c + a * w + b * x for c, w, x in zip(center, normal, xi)]

    alo, ahi = _angle_box(k - 1)
    return ImmersionChart(scene.n, scene.N, tuple(scene.q_lo) + alo + (s_lo,), tuple(scene.q_hi) + ahi + (s_hi,),
                          fn, f"F_gamma over {scene.label}")


def revolution_map(rscene: RevolutionScene, sheet: int = 1) -> ImmersionChart:
    return tube_chart(rscene.scene, rscene.profile, sheet=sheet)


def _profile_normal(scene, profile, u, sheet=1):
    """N = -b' omega + a' xi(q) at a chart point u = (qa, omega angles, s)."""
    d, k = scene.d, scene.k
    qa = [np.array([x]) for x in u[:d]]
    om = sphere_point([np.array([x]) for x in u[d : d + k - 1]])
    (a0, a1, _), (b0, b1, _) = profile.evaluate(np.array([u[-1]]))
    omega = _point_vector(scene.normal_vector(qa, om, sheet))
    xi = _point_vector(scene.xi(qa, sheet))
    return -b1[0] * omega + a1[0] * xi


def _vertical_basis(jet, i, d):
    """F-orthonormal basis of the vertical space: omega directions first, then d/ds."""
    jac = jet.jacobian[i][:, d:]
    q, r = np.linalg.qr(jac)
    return q * np.sign(np.diag(r))


def vertical_sff(jet, i, d):
    """jetcalc alpha restricted to the vertical space, as a (k, k, N) array."""
    basis = _vertical_basis(jet, i, d)
    full = jet.jacobian[i]
    qf, _ = np.linalg.qr(full)
    proj = np.eye(full.shape[0]) - qf @ qf.T
    coords = np.linalg.lstsq(full, basis, rcond=None)[0]
    h = np.einsum("ia,jb,ijk->abk", coords, coords, jet.hessian[i])
    return np.einsum("kl,abl->abk", proj, h)


def predicted_vertical_sff(scene: PolarScene, profile: BendingProfile, u, sheet: int = 1) -> np.ndarray:
    """(sigma <.,.> on omega-perp + kappa ds^2) N_perp in the vertical orthonormal basis."""
    chart = tube_chart(scene, profile, profile.R - 1.0, 1.0, sheet)
    u = np.asarray(u, dtype=float)
    jet = evaluate_jet2(chart, u[None])
    fm = frame_and_metric(jet)
    n_vec = _profile_normal(scene, profile, u, sheet)
    n_perp = fm.normal_projector[0] @ n_vec
    (a0, a1, a2), (b0, b1, b2) = profile.evaluate(np.array([u[-1]]))
    kap = a1[0] * b2[0] - a2[0] * b1[0]
    sig = b1[0] / a0[0]
    k = scene.k
    coef = np.diag([sig] * (k - 1) + [kap])
    return coef[:, :, None] * n_perp[None, None, :]


def normal_split(scene: PolarScene, profile: BendingProfile, u, sheet: int = 1) -> tuple[float, float]:
    """(|N_top|, |N_perp|) of the profile normal with respect to F_gamma at u."""
    chart = tube_chart(scene, profile, profile.R - 1.0, 1.0, sheet)
    jet = evaluate_jet2(chart, np.asarray(u, dtype=float)[None])
    fm = frame_and_metric(jet)
    n_vec = _profile_normal(scene, profile, np.asarray(u, dtype=float), sheet)
    n_perp = fm.normal_projector[0] @ n_vec
    return float(np.linalg.norm(n_vec - n_perp)), float(np.linalg.norm(n_perp))


def scan_profile(scene: PolarScene, profile: BendingProfile, samples: int = 10000, seed: int = 0,
                 threads: int = 1) -> ScanResult:
    out = None
    for sheet in scene.sheets:
        rep = scan_scalar_positivity(tube_chart(scene, profile, sheet=sheet), Sampling(count=samples, seed=seed),
                                     threads=threads)
        out = rep if out is None else out.merge(rep)
    return out


def min_normal_perp(scene: PolarScene, profile: BendingProfile, samples: int = 200, seed: int = 0) -> float:
    pts = sample_points(tube_chart(scene, profile), Sampling(count=samples, seed=seed))
    return min(normal_split(scene, profile, p)[1] for p in pts)


# --- sigma0 search ----------------------------------------------------------


_BATTERY_ANGLES = (0.3, 0.6, 1.0, 1.4)
_BATTERY_FACTORS = (1.0, 2.0, 4.0)


def battery_profiles(k: int, sigma0: float, rho: float, angles=_BATTERY_ANGLES, factors=_BATTERY_FACTORS):
    """ODE profiles seeded on circles of curvature sigma_min >= factor * sigma0, extent < rho."""
    out = []
    for c in angles:
        for mu in factors:
            sig = mu * sigma0
            for _ in range(60):
                x, y = np.sin(c) / sig, (1 - np.cos(c)) / sig
                prof = integrate_profile(k, x, y, np.cos(c), np.sin(c), nodes=256)
                if prof.extent < rho:
                    break
                sig *= 2.0
            else:
                raise NotFoundError("could not fit a battery profile inside the working radius")
            prof.meta["sigma_min"] = float(prof.sigma.min())
            prof.meta["angle"] = c
            out.append(prof)
    return out


@dataclass
class Sigma0Result:
    rho: float
    sigma0: float
    table: list  # rows (angle, sigma_min, extent, min_scal, min_normal_perp)
    fit: tuple  # least-squares (slope, intercept) of min_scal against sigma_min^2
    samples: int


def sigma0_search(
    scene: PolarScene,
    k: int,
    rho_grid=(0.5, 0.25, 0.125),
    sigma_start: float = 1.0,
    samples: int = 10000,
    max_doublings: int = 12,
    seed: int = 0,
    threads: int = 1,
) -> Sigma0Result:
    """Smallest doubling sigma0 for which every battery profile gives a positive tube."""
    if k < 3:
        raise PreconditionError("codimension k >= 3 is required")
    if scene.k != k:
        raise PreconditionError("scene codimension does not match k")
    table_all = []
    for rho in sorted(rho_grid, reverse=True):
        if rho >= scene.rho0:
            continue
        sig0 = sigma_start
        for _ in range(max_doublings):
            table = []
            ok = True
            for prof in battery_profiles(k, sig0, rho):
                rep = scan_profile(scene, prof, samples, seed, threads)
                nperp = min_normal_perp(scene, prof, 64, seed)
                table.append((prof.meta["angle"], prof.meta["sigma_min"], prof.extent, rep.min_scal, nperp))
                ok &= rep.positive and nperp >= 0.5
            table_all += table
            if ok:
                arr = np.array([(t[1], t[3]) for t in table_all])
                fit = tuple(float(c) for c in np.polyfit(arr[:, 0] ** 2, arr[:, 1], 1))
                return Sigma0Result(rho, sig0, table_all, fit, samples)
            sig0 *= 2.0
    raise NotFoundError(f"no sigma0 found; diagnostic table: {table_all}")
