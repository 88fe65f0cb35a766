"""Second-order jets of immersions and their extrinsic curvature.

Everything here works on batches: a chart is evaluated at ``B`` points at once
and all derived quantities carry a leading batch axis.  The scalar curvature
of the induced metric is computed from the second fundamental form through
the Gauss equation ``scal = |tr a|^2 - |a|^2``; :func:`intrinsic_scalar_oracle`
recomputes it from the pullback metric alone as an independent check.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .jets import Jet, seed
from .smooth import sphere_point

__all__ = [
    "JetcalcError",
    "DomainError",
    "NumericError",
    "ImmersionFailure",
    "ImmersionChart",
    "Jet2",
    "FrameData",
    "CurvatureSample",
    "Sampling",
    "ScanResult",
    "evaluate_jet2",
    "frame_and_metric",
    "second_fundamental_form",
    "curvature_at",
    "intrinsic_scalar_oracle",
    "scan_scalar_positivity",
    "sample_points",
    "round_sphere_chart",
    "clifford_torus_chart",
    "flat_plane_chart",
    "perturbed_sphere_chart",
    "polynomial_chart",
    "reparametrized",
    "moved",
    "dilated",
]


class JetcalcError(Exception):
    """Base class for curvature-engine failures."""


class DomainError(JetcalcError):
    pass


class NumericError(JetcalcError):
    pass


class ImmersionFailure(JetcalcError):
    def __init__(self, singular_value: float, index: int = 0):
        super().__init__(f"differential is rank deficient: smallest singular value {singular_value:.3e}")
        self.singular_value = float(singular_value)
        self.index = int(index)


@dataclass(frozen=True)
class ImmersionChart:
    """A smooth map from an open box in R^n to R^N.

    ``fn`` takes a list of ``n`` coordinate arrays (or jets) of a common batch
    shape and returns ``N`` components; constant components may be returned as
    plain floats.
    """

    intrinsic_dim: int
    ambient_dim: int
    lo: tuple
    hi: tuple
    fn: Callable[[Sequence], Sequence] = field(compare=False, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.ambient_dim < self.intrinsic_dim:
            raise ValueError("ambient dimension must be at least the intrinsic dimension")
        if len(self.lo) != self.intrinsic_dim or len(self.hi) != self.intrinsic_dim:
            raise ValueError("domain box does not match the intrinsic dimension")

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)

    def inside(self, u: np.ndarray) -> np.ndarray:
        lo, hi = self.box
        u = np.atleast_2d(u)
        return np.all((u > lo) & (u < hi), axis=1)

    def __call__(self, u) -> np.ndarray:
        """Plain evaluation at a (B, n) batch; returns (B, N)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        comps = self.fn([u[:, i] for i in range(self.intrinsic_dim)])
        return _stack_values(comps, u.shape[0])


def _stack_values(comps, b):
    out = np.empty((b, len(comps)))
    for j, c in enumerate(comps):
        out[:, j] = c.val if isinstance(c, Jet) else c
    return out


@dataclass
class Jet2:
    """Value, Jacobian and Hessian stack of a chart at a batch of points.

    Shapes: point (B, n), value (B, N), jacobian (B, N, n), hessian (B, n, n, N).
    """

    point: np.ndarray
    value: np.ndarray
    jacobian: np.ndarray
    hessian: np.ndarray

    def __len__(self):
        return self.point.shape[0]


@dataclass
class FrameData:
    tangent_frame: np.ndarray  # (B, N, n) orthonormal columns
    metric: np.ndarray  # (B, n, n)
    normal_projector: np.ndarray  # (B, N, N)
    min_singular: np.ndarray  # (B,)
    cholesky: np.ndarray  # (B, n, n) lower factor of the metric


@dataclass
class CurvatureSample:
    sff: np.ndarray  # (B, n, n, N) in the orthonormal tangent basis
    mean_curvature: np.ndarray  # (B, N)
    xi: np.ndarray  # (B, N), zero where undefined
    xi_defined: np.ndarray  # (B,) bool
    scal: np.ndarray  # (B,)


def _check_domain(chart: ImmersionChart, u: np.ndarray) -> None:
    if not np.all(chart.inside(u)):
        bad = np.flatnonzero(~chart.inside(u))[0]
        raise DomainError(f"point {u[bad].tolist()} outside the domain of chart {chart.label!r}")


def _jets_from_components(comps, b, n):
    nn = len(comps)
    val = np.empty((b, nn))
    jac = np.zeros((b, nn, n))
    hess = np.zeros((b, n, n, nn))
    for j, c in enumerate(comps):
        if isinstance(c, Jet):
            val[:, j] = c.val
            jac[:, j, :] = c.grad
            hess[..., j] = c.hess
        else:
            val[:, j] = c
    return val, jac, hess


def _fd_derivatives(chart, u, h):
    b, n = u.shape

    def f(pts):
        return chart(pts)

    f0 = f(u)
    eye = np.eye(n)
    d1 = np.empty((b, chart.ambient_dim, n))
    d2 = np.empty((b, n, n, chart.ambient_dim))
    for i in range(n):
        fp, fm = f(u + h * eye[i]), f(u - h * eye[i])
        d1[:, :, i] = (fp - fm) / (2 * h)
        d2[:, i, i, :] = (fp - 2 * f0 + fm) / h**2
        for j in range(i):
            e = h * (eye[i] + eye[j])
            g = h * (eye[i] - eye[j])
            mixed = (f(u + e) - f(u + g) - f(u - g) + f(u - e)) / (4 * h**2)
            d2[:, i, j, :] = mixed
            d2[:, j, i, :] = mixed
    return f0, d1, d2


def evaluate_jet2(chart: ImmersionChart, u, scheme: str = "dual", h: float = 1e-3) -> Jet2:
    """2-jet of ``chart`` at a point or a (B, n) batch.

    ``scheme`` is ``"dual"`` (forward-mode jets, exact to rounding) or
    ``"fd"`` (central differences with one Richardson extrapolation).
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != chart.intrinsic_dim:
        raise DomainError(f"expected points of dimension {chart.intrinsic_dim}, got {u.shape[1]}")
    _check_domain(chart, u)
    b, n = u.shape
    if scheme == "dual":
        comps = chart.fn(seed(u))
        val, jac, hess = _jets_from_components(comps, b, n)
    elif scheme == "fd":
        lo, hi = chart.box
        if np.any(u - 2 * h <= lo) or np.any(u + 2 * h >= hi):
            raise DomainError("finite-difference stencil leaves the chart domain")
        val, j1, h1 = _fd_derivatives(chart, u, h)
        _, j2, h2 = _fd_derivatives(chart, u, h / 2)
        jac = (4 * j2 - j1) / 3
        hess = (4 * h2 - h1) / 3
    else:
        raise ValueError(f"unknown jet scheme {scheme!r}")
    hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
    if not (np.all(np.isfinite(val)) and np.all(np.isfinite(jac)) and np.all(np.isfinite(hess))):
        raise NumericError(f"chart {chart.label!r} returned non-finite values")
    return Jet2(u, val, jac, hess)


def _frames(jac):
    """Gram-Schmidt frame, metric, projector and smallest singular value."""
    b, nn, n = jac.shape
    q, r = np.linalg.qr(jac)
    sign = np.sign(np.diagonal(r, axis1=1, axis2=2))
    sign[sign == 0] = 1.0
    q = q * sign[:, None, :]
    r = r * sign[:, :, None]
    metric = np.einsum("bki,bkj->bij", jac, jac)
    proj = np.eye(nn)[None] - np.einsum("bia,bja->bij", q, q)
    sv = np.linalg.svd(jac, compute_uv=False)[:, -1]
    lower = np.swapaxes(r, 1, 2)
    return q, metric, proj, sv, lower


def frame_and_metric(jet: Jet2, rank_tol: float = 1e-10) -> FrameData:
    """Orthonormal tangent frame (Gram-Schmidt in chart-axis order) and metric."""
    q, metric, proj, sv, lower = _frames(jet.jacobian)
    if np.any(sv <= rank_tol):
        i = int(np.argmin(sv))
        raise ImmersionFailure(sv[i], i)
    return FrameData(q, metric, proj, sv, lower)


def second_fundamental_form(jet: Jet2, frame: FrameData) -> CurvatureSample:
    """Second fundamental form in the orthonormal frame, mean curvature, xi, scal."""
    normal_hess = np.einsum("bkl,bijl->bijk", frame.normal_projector, jet.hessian)
    linv = np.linalg.inv(frame.cholesky)
    sff = np.einsum("bai,bcj,bijk->back", linv, linv, normal_hess)
    sff = 0.5 * (sff + np.swapaxes(sff, 1, 2))
    n = sff.shape[1]
    mean = np.einsum("baak->bk", sff) if n > 0 else np.zeros(sff.shape[::3])
    hnorm = np.linalg.norm(mean, axis=1)
    scal = np.einsum("bk,bk->b", mean, mean) - np.einsum("bijk,bijk->b", sff, sff)
    if not np.all(np.isfinite(scal)):
        raise NumericError("non-finite curvature")
    defined = hnorm >= 1e-12
    xi = np.zeros_like(mean)
    xi[defined] = mean[defined] / hnorm[defined, None]
    return CurvatureSample(sff, mean, xi, defined, scal)


def curvature_at(chart: ImmersionChart, u, scheme: str = "dual"):
    """Convenience: jet, frame and curvature sample at a batch of points."""
    jet = evaluate_jet2(chart, u, scheme)
    frame = frame_and_metric(jet)
    return jet, frame, second_fundamental_form(jet, frame)


# --- intrinsic oracle -------------------------------------------------------


def _metric_at(chart, pts):
    jet = evaluate_jet2(chart, pts)
    return np.einsum("bki,bkj->bij", jet.jacobian, jet.jacobian)


def intrinsic_scalar_oracle(chart: ImmersionChart, u, h: float = 1e-3) -> np.ndarray:
    """Scalar curvature of the pullback metric from finite differences of g.

    Christoffel symbols and their derivatives are formed from central
    differences of the metric tensor; the truncation error is O(h^2).
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    out = np.empty(u.shape[0])
    n = chart.intrinsic_dim
    eye = np.eye(n)
    for p, x in enumerate(u):
        # stencil: centre, +-h e_i, +-h e_i +-h e_j
        pts = [x]
        for i in range(n):
            pts += [x + h * eye[i], x - h * eye[i]]
        for i in range(n):
            for j in range(i):
                for si in (1, -1):
                    for sj in (1, -1):
                        pts.append(x + h * (si * eye[i] + sj * eye[j]))
        g_all = _metric_at(chart, np.array(pts))
        if not np.all(np.isfinite(g_all)):
            raise NumericError("non-finite metric in oracle stencil")
        g = g_all[0]
        gp = {i: g_all[1 + 2 * i] for i in range(n)}
        gm = {i: g_all[2 + 2 * i] for i in range(n)}
        dg = np.empty((n, n, n))  # dg[k] = d_k g
        ddg = np.empty((n, n, n, n))
        for i in range(n):
            dg[i] = (gp[i] - gm[i]) / (2 * h)
            ddg[i, i] = (gp[i] - 2 * g + gm[i]) / h**2
        c = 1 + 2 * n
        for i in range(n):
            for j in range(i):
                gpp, gpm, gmp, gmm = g_all[c : c + 4]
                c += 4
                mixed = (gpp - gpm - gmp + gmm) / (4 * h**2)
                ddg[i, j] = mixed
                ddg[j, i] = mixed
        ginv = np.linalg.inv(g)
        # first-kind symbols and derivatives: G[l,i,j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
        first = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
        dfirst = 0.5 * (
            np.einsum("mijl->mlij", ddg) + np.einsum("mjil->mlij", ddg) - np.einsum("mlij->mlij", ddg)
        )
        gam = np.einsum("kl,lij->kij", ginv, first)
        dginv = -np.einsum("ka,mab,bl->mkl", ginv, dg, ginv)
        dgam = np.einsum("mkl,lij->mkij", dginv, first) + np.einsum("kl,mlij->mkij", ginv, dfirst)
        # R^l_{ijk} = d_j G^l_ik - d_k G^l_ij + G^l_jm G^m_ik - G^l_km G^m_ij ; Ric_ik = R^j_ijk
        ric = (
            np.einsum("jjik->ik", dgam)
            - np.einsum("kjij->ik", dgam)
            + np.einsum("jjm,mik->ik", gam, gam)
            - np.einsum("jkm,mij->ik", gam, gam)
        )
        out[p] = np.einsum("ik,ik->", ginv, ric)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite intrinsic curvature")
    return out


# --- sampling and scans -----------------------------------------------------


@dataclass(frozen=True)
class Sampling:
    """How to place sample points in a chart's domain box.

    ``kind`` is ``"grid"`` (cell-centred, ``resolution`` per axis),
    ``"random"`` (``count`` uniform points from ``seed``) or ``"points"``.
    ``margin`` shrinks the box by that fraction of its width on each side.
    """

    kind: str = "random"
    count: int = 1000
    resolution: tuple = ()
    seed: int = 0
    margin: float = 0.0
    points: tuple = ()

    def __post_init__(self):
        if self.kind == "grid" and any(r < 2 for r in self.resolution):
            raise ValueError("grid resolution must be at least 2 per axis")
        if self.kind not in ("grid", "random", "points"):
            raise ValueError(f"unknown sampling kind {self.kind!r}")


def sample_points(chart: ImmersionChart, sampling: Sampling) -> np.ndarray:
    lo, hi = chart.box
    w = hi - lo
    lo, hi = lo + sampling.margin * w, hi - sampling.margin * w
    n = chart.intrinsic_dim
    if sampling.kind == "points":
        return np.atleast_2d(np.asarray(sampling.points, dtype=float))
    if sampling.kind == "random":
        rng = np.random.default_rng(sampling.seed)
        return lo + (hi - lo) * rng.random((sampling.count, n))
    res = tuple(sampling.resolution) if len(sampling.resolution) == n else (sampling.resolution[0],) * n
    axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(r) + 0.5) / r for i, r in enumerate(res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class ScanResult:
    """Associative summary of a positivity scan."""

    count: int = 0
    min_scal: float = np.inf
    argmin: tuple = ()
    max_scal: float = -np.inf
    min_margin: float = np.inf
    margin_argmin: tuple = ()
    margin_failures: int = 0
    first_failure: tuple = ()
    min_mean_curvature: float = np.inf
    immersion_margin: float = 1e-6

    def merge(self, other: "ScanResult") -> "ScanResult":
        out = replace(self)
        out.count = self.count + other.count
        if other.min_scal < self.min_scal:
            out.min_scal, out.argmin = other.min_scal, other.argmin
        out.max_scal = max(self.max_scal, other.max_scal)
        if other.min_margin < self.min_margin:
            out.min_margin, out.margin_argmin = other.min_margin, other.margin_argmin
        out.margin_failures = self.margin_failures + other.margin_failures
        if not self.first_failure and other.first_failure:
            out.first_failure = other.first_failure
        out.min_mean_curvature = min(self.min_mean_curvature, other.min_mean_curvature)
        return out

    @property
    def positive(self) -> bool:
        return self.count > 0 and self.margin_failures == 0 and self.min_scal > 0

    def as_dict(self) -> dict:
        return {
            "count": int(self.count),
            "min_scal": float(self.min_scal),
            "argmin": [float(x) for x in self.argmin],
            "max_scal": float(self.max_scal),
            "min_margin": float(self.min_margin),
            "margin_argmin": [float(x) for x in self.margin_argmin],
            "margin_failures": int(self.margin_failures),
            "first_failure": [float(x) for x in self.first_failure],
            "min_mean_curvature": float(self.min_mean_curvature),
            "immersion_margin": float(self.immersion_margin),
            "positive": bool(self.positive),
        }


def _scan_chunk(chart, pts, margin):
    jet = evaluate_jet2(chart, pts)
    q, metric, proj, sv, lower = _frames(jet.jacobian)
    res = ScanResult(immersion_margin=margin)
    res.count = len(pts)
    bad = sv <= margin
    res.margin_failures = int(bad.sum())
    if res.margin_failures:
        res.first_failure = tuple(pts[np.flatnonzero(bad)[0]])
    i = int(np.argmin(sv))
    res.min_margin, res.margin_argmin = float(sv[i]), tuple(pts[i])
    good = ~bad
    if np.any(good):
        frame = FrameData(q[good], metric[good], proj[good], sv[good], lower[good])
        sub = Jet2(pts[good], jet.value[good], jet.jacobian[good], jet.hessian[good])
        cs = second_fundamental_form(sub, frame)
        j = int(np.argmin(cs.scal))
        res.min_scal, res.argmin = float(cs.scal[j]), tuple(pts[good][j])
        res.max_scal = float(cs.scal.max())
        res.min_mean_curvature = float(np.linalg.norm(cs.mean_curvature, axis=1).min())
    return res


def scan_scalar_positivity(
    chart: ImmersionChart,
    sampling: Sampling | np.ndarray,
    immersion_margin: float = 1e-6,
    chunk: int = 4096,
    threads: int = 1,
) -> ScanResult:
    """Sample scal over the chart; deterministic for a fixed sampling spec."""
    pts = sampling if isinstance(sampling, np.ndarray) else sample_points(chart, sampling)
    pts = np.atleast_2d(pts)
    pieces = [pts[i : i + chunk] for i in range(0, len(pts), chunk)]
    if threads > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda p: _scan_chunk(chart, p, immersion_margin), pieces))
    else:
        parts = [_scan_chunk(chart, p, immersion_margin) for p in pieces]
    out = ScanResult(immersion_margin=immersion_margin)
    for p in parts:
        out = out.merge(p)
    return out


# --- test-corpus charts -----------------------------------------------------

_POLE = 0.05


def round_sphere_chart(n: int, radius: float = 1.0, ambient: int | None = None) -> ImmersionChart:
    """Hyperspherical chart of the round n-sphere of the given radius."""
    big = ambient or n + 1
    lo = (_POLE,) * (n - 1) + (-np.pi + _POLE,)
    hi = (np.pi - _POLE,) * (n - 1) + (np.pi - _POLE,)

    def fn(u):
        comps = [radius * c for c in sphere_point(u)]
        return comps + [0.0] * (big - n - 1)

    return ImmersionChart(n, big, lo, hi, fn, f"round S^{n} (r={radius:g})")


def clifford_torus_chart() -> ImmersionChart:
    def fn(u):
        return [np.cos(u[0]), np.sin(u[0]), np.cos(u[1]), np.sin(u[1])]

    return ImmersionChart(2, 4, (-np.pi, -np.pi), (np.pi, np.pi), fn, "Clifford torus")


def flat_plane_chart() -> ImmersionChart:
    return ImmersionChart(2, 3, (-1.0, -1.0), (1.0, 1.0), lambda u: [u[0], u[1], 0.0], "flat plane")


def perturbed_sphere_chart(n: int, seed: int, eps: float = 0.1) -> ImmersionChart:
    """Round n-sphere radially perturbed by a random trigonometric bump field."""
    rng = np.random.default_rng(seed)
    nmodes = 3
    freq = rng.integers(1, 3, size=(nmodes, n)).astype(float)
    phase = rng.uniform(0, 2 * np.pi, size=nmodes)
    amp = rng.uniform(-1, 1, size=nmodes) * eps / nmodes
    base = round_sphere_chart(n)

    def fn(u):
        rad = 1.0
        for m in range(nmodes):
            arg = phase[m]
            for i in range(n):
                arg = arg + freq[m, i] * u[i]
            rad = rad + amp[m] * np.sin(arg)
        return [rad * c for c in sphere_point(u)]

    return ImmersionChart(n, n + 1, base.lo, base.hi, fn, f"perturbed S^{n} (seed={seed})")


def polynomial_chart(n: int, big: int, degree: int, seed: int) -> ImmersionChart:
    """Graph-like random polynomial map R^n -> R^big (identity in the first n slots)."""
    rng = np.random.default_rng(seed)
    exps = [e for e in np.ndindex(*(degree + 1,) * n) if 2 <= sum(e) <= degree]
    coef = rng.normal(size=(big - n, len(exps)))

    def fn(u):
        out = list(u)
        for r in range(big - n):
            acc = 0.0
            for c, e in zip(coef[r], exps):
                term = c
                for i, p in enumerate(e):
                    for _ in range(p):
                        term = term * u[i]
                acc = acc + term
            out.append(acc)
        return out

    return ImmersionChart(n, big, (-1.0,) * n, (1.0,) * n, fn, f"polynomial deg {degree} (seed={seed})")


def reparametrized(chart: ImmersionChart, a: np.ndarray, b: np.ndarray, lo, hi) -> ImmersionChart:
    """Precompose with the affine map v -> a v + b (box lo..hi in v)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = chart.intrinsic_dim

    def fn(v):
        u = []
        for i in range(n):
            acc = b[i]
            for j in range(n):
                acc = acc + a[i, j] * v[j]
            u.append(acc)
        return chart.fn(u)

    return ImmersionChart(n, chart.ambient_dim, tuple(lo), tuple(hi), fn, chart.label + " (reparametrized)")


def moved(chart: ImmersionChart, rot: np.ndarray, shift: np.ndarray) -> ImmersionChart:
    """Compose with the ambient motion x -> rot x + shift."""
    rot = np.asarray(rot, dtype=float)

    def fn(u):
        comps = chart.fn(u)
        out = []
        for i in range(chart.ambient_dim):
            acc = shift[i]
            for j, c in enumerate(comps):
                if rot[i, j] != 0.0:
                    acc = acc + rot[i, j] * c
            out.append(acc)
        return out

    return ImmersionChart(chart.intrinsic_dim, chart.ambient_dim, chart.lo, chart.hi, fn, chart.label + " (moved)")


def dilated(chart: ImmersionChart, c: float) -> ImmersionChart:
    def fn(u):
        return [c * x for x in chart.fn(u)]

    return ImmersionChart(chart.intrinsic_dim, chart.ambient_dim, chart.lo, chart.hi, fn, chart.label + f" (x{c:g})")
