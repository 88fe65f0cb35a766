"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import json
import time

import numpy as np

from scalpos.bending import (
    integrate_profile,
    is_controlled,
    normal_split,
    predicted_vertical_sff,
    sigma0_search,
    terminal_error_fixed,
    tube_chart,
    vertical_sff,
)
from scalpos.bundle_scaling import (
    delta_bound,
    equivariance_residual,
    qmul,
    random_symplectic,
    random_unitary,
    veronese_affine_chart,
    veronese_cp2,
    veronese_hp2,
)
from scalpos.cli_report import EXIT_PASS, EXIT_USAGE, main
from scalpos.jetcalc import (
    Sampling,
    clifford_torus_chart,
    curvature_at,
    evaluate_jet2,
    frame_and_metric,
    intrinsic_scalar_oracle,
    perturbed_sphere_chart,
    round_sphere_chart,
    sample_points,
    second_fundamental_form,
)
from scalpos.rk import dopri
from scalpos.spherical_deform import (
    _near_s_width,
    along_s_points,
    cartesian_chart,
    f_tau_map,
    g_tau_map,
    predicted_sff_along_S,
    product_polar_scene,
    round_polar_scene,
    sff_bilinear,
)
from scalpos.surgery import C0_TOL, C1_TOL, PreconditionError, round_sphere_scene, run_surgery


def test_criterion_01_curvature_engine(verdict):
    t0 = time.perf_counter()
    sphere_err = 0.0
    for n in (2, 3, 4):
        chart = round_sphere_chart(n)
        _, _, cs = curvature_at(chart, sample_points(chart, Sampling(count=100, seed=n)))
        sphere_err = max(sphere_err, float(np.abs(cs.scal - n * (n - 1)).max()))
    torus = clifford_torus_chart()
    _, _, cs = curvature_at(torus, sample_points(torus, Sampling(count=100, seed=0)))
    torus_err = float(np.abs(cs.scal).max())
    oracle_rel = 0.0
    for seed in range(5):
        chart = perturbed_sphere_chart(2 + seed % 3, seed)
        pts = sample_points(chart, Sampling(count=10, seed=seed, margin=0.1))
        _, _, cs = curvature_at(chart, pts)
        ref = intrinsic_scalar_oracle(chart, pts)
        oracle_rel = max(oracle_rel, float(np.max(np.abs(cs.scal - ref) / np.abs(ref))))
    dt = time.perf_counter() - t0
    ok = sphere_err <= 1e-3 and torus_err <= 1e-6 and oracle_rel <= 1e-3 and dt < 30
    verdict(1, "curvature engine", ok,
             f"sphere {sphere_err:.2e} <= 1e-3, torus {torus_err:.2e} <= 1e-6, "
             f"oracle rel {oracle_rel:.2e} <= 1e-3, {dt:.1f} s < 30 s")


def test_criterion_02_veronese(verdict):
    rng = np.random.default_rng(2)
    gauge = equi = 0.0
    for _ in range(100):
        x = rng.normal(size=3) + 1j * rng.normal(size=3)
        x /= np.linalg.norm(x)
        gauge = max(gauge, np.linalg.norm(veronese_cp2(x) - veronese_cp2(x * np.exp(1j * rng.uniform(0, 6.3)))))
        y = rng.normal(size=(3, 4))
        y /= np.linalg.norm(y)
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        gauge = max(gauge, np.linalg.norm(veronese_hp2(y) - veronese_hp2(np.array(qmul(y.T, q)).T)))
        equi = max(equi, equivariance_residual(random_unitary(rng), x),
                   equivariance_residual(random_unitary(rng), x, conjugate=True),
                   equivariance_residual(random_symplectic(rng), y))
    spread = 0.0
    for field in ("C", "H"):
        chart = veronese_affine_chart(field)
        _, _, cs = curvature_at(chart, sample_points(chart, Sampling(count=50, seed=7)))
        spread = max(spread, float(np.ptp(cs.scal) / np.abs(cs.scal).mean()))
    ok = gauge <= 1e-12 and equi <= 1e-10 and spread <= 1e-4
    verdict(2, "Veronese", ok, f"gauge {gauge:.2e} <= 1e-12, equivariance {equi:.2e} <= 1e-10, "
                                f"scal spread {spread:.2e} <= 1e-4")


def test_criterion_03_deform_lemma(verdict):
    scene = round_polar_scene(4, 1, 7)
    rng = np.random.default_rng(3)
    pts = along_s_points(scene, 50, seed=3)
    jf = evaluate_jet2(cartesian_chart(scene, scene.polar, _near_s_width(scene)), pts)
    s0 = second_fundamental_form(jf, frame_and_metric(jf)).scal
    k = scene.k
    err, gap = 0.0, np.inf
    for tau in (0.5, 5.0, 50.0):
        for which, mk in (("F", f_tau_map), ("G", g_tau_map)):
            jet = evaluate_jet2(cartesian_chart(scene, mk(scene, tau), _near_s_width(scene, tau)), pts)
            for i, p in enumerate(pts):
                x = jf.jacobian[i] @ rng.normal(size=scene.n)
                y = jf.jacobian[i] @ rng.normal(size=scene.n)
                pred = predicted_sff_along_S(scene, tau, which, p[: scene.d], x, y)
                err = max(err, float(np.linalg.norm(sff_bilinear(jet, i, x, y) - pred)))
            if which == "F":
                s1 = second_fundamental_form(jet, frame_and_metric(jet)).scal
                gap = min(gap, float((s1 - s0 - tau**2 * (k * k - k)).min()))
    ok = err <= 1e-5 and gap >= -1e-3
    verdict(3, "deformation lemma", ok, f"alpha residual {err:.2e} <= 1e-5, "
                                         f"scal_F - scal_f - tau^2(k^2-k) = {gap:.3g} >= -1e-3")


def test_criterion_04_bending_ode(verdict):
    k, x, y = 4, 0.1, 0.0
    u = v = np.sqrt(0.5)
    t0 = time.perf_counter()
    prof = integrate_profile(k, x, y, u, v)
    dt = time.perf_counter() - t0
    lam = prof.lam
    bound = -np.pi * x / (2 * lam * v)
    terminal = float(np.hypot(prof.state[0, 2], prof.state[0, 3] - 1))
    ks = float(np.abs(prof.kappa + lam * prof.sigma).max())
    s_end = 0.5 * prof.R
    ref = dopri(lambda s, st: np.array([st[2], st[3], lam * st[3] ** 2 / st[0], -lam * st[2] * st[3] / st[0]]),
                0.0, [x, y, u, v], s_end, rtol=1e-13, atol=1e-15).y_end
    e1 = terminal_error_fixed(k, x, y, u, v, s_end, 8, ref)
    e2 = terminal_error_fixed(k, x, y, u, v, s_end, 16, ref)
    order = float(np.log2(e1 / e2))
    ok = (terminal <= 1e-6 and bound < prof.R < 0 and prof.ode_drift <= 1e-8 and ks <= 1e-8 and order >= 3
          and dt < 5 and is_controlled(prof)[0])
    verdict(4, "bending ODE", ok, f"|gamma'(R) - (0,1)| {terminal:.2e}, R = {prof.R:.5f} in ({bound:.5f}, 0), "
                                   f"z drift {prof.ode_drift:.2e}, |kappa + lambda sigma| {ks:.2e}, "
                                   f"order {order:.2f} >= 3, {dt:.2f} s < 5 s")


def test_criterion_05_vertical_lemma(verdict):
    cases = [
        (round_polar_scene(4, 1, 7), integrate_profile(3, 0.1, 0.0, np.cos(0.8), np.sin(0.8))),
        (product_polar_scene(1, 3), integrate_profile(3, 0.05, 0.01, np.cos(0.4), np.sin(0.4))),
    ]
    err = split = 0.0
    nperp = np.inf
    for scene, prof in cases:
        chart = tube_chart(scene, prof)
        pts = sample_points(chart, Sampling(count=50, seed=5))
        jet = evaluate_jet2(chart, pts)
        for i, u in enumerate(pts):
            err = max(err, float(np.abs(vertical_sff(jet, i, scene.d) - predicted_vertical_sff(scene, prof, u)).max()))
            top, perp = normal_split(scene, prof, u)
            split = max(split, abs(top**2 + perp**2 - 1))
            nperp = min(nperp, perp)
    ok = err <= 1e-6 and split <= 1e-10 and nperp >= 0.5
    verdict(5, "vertical lemma", ok, f"vertical alpha residual {err:.2e} <= 1e-6, "
                                      f"split defect {split:.2e} <= 1e-10, min |N_perp| {nperp:.4f} >= 0.5")


def test_criterion_06_sigma0_search(verdict):
    details, ok = [], True
    for (n, d, N), k in (((4, 1, 7), 3), ((5, 1, 8), 4)):
        res = sigma0_search(round_polar_scene(n, d, N), k, samples=10000)
        accepted = res.table[-12:]
        all_pos = all(row[3] > 0 for row in accepted)
        ok &= res.fit[0] > 0 and all_pos and res.samples >= 10000
        details.append(f"k={k}: sigma0 {res.sigma0:g}, slope {res.fit[0]:.3g} > 0, "
                       f"min scal {min(r[3] for r in accepted):.3g} > 0")
    verdict(6, "sigma0 search", ok, "; ".join(details))


def test_criterion_07_flagship_surgery(verdict):
    t0 = time.perf_counter()
    _, report = run_surgery(4, 1, 7, seed=0, samples=10000)
    dt = time.perf_counter() - t0
    rep = report.as_dict()
    seams_ok = all(s["c0_residual"] <= C0_TOL and s["c1_residual"] <= C1_TOL for s in rep["seams"])
    c0 = max(s["c0_residual"] for s in rep["seams"])
    c1 = max(s["c1_residual"] for s in rep["seams"])
    g = rep["global"]
    _, small = run_surgery(3, 0, 5, seed=0, samples=10000)
    ok = (rep["verdict"] == "pass" and g["samples"] >= 30000 and g["min_scal"] > 0 and seams_ok
          and g["min_mean_curvature"] > 0 and rep["unchanged_outside_residual"] == 0.0 and dt < 120
          and small.verdict)
    verdict(7, "flagship surgery", ok,
             f"(4,1,7) {rep['verdict']}: min scal {g['min_scal']:.4g} over {g['samples']} samples, "
             f"seams C0 {c0:.1e} C1 {c1:.1e}, min |H| {g['min_mean_curvature']:.3g}, "
             f"outside residual {rep['unchanged_outside_residual']}, {dt:.1f} s; "
             f"(3,0,5) {'pass' if small.verdict else 'fail'}")


def test_criterion_08_gating(tmp_path, verdict):
    expected = {
        (4, 1, 6): "N >= n + d + 2 violated: N = 6 < 7",
        (5, 3, 10): "codimension n - d >= 3 violated: n - d = 2",
    }
    got = {}
    for dims, msg in expected.items():
        try:
            round_sphere_scene(*dims)
            got[dims] = None
        except PreconditionError as exc:
            got[dims] = str(exc)
    codes = [main(["surgery", "--n", str(n), "--d", str(d), "--N", str(N), "--out", str(tmp_path)])
             for n, d, N in expected]
    ok = got == expected and all(c == EXIT_USAGE for c in codes)
    verdict(8, "hypothesis gating", ok, "; ".join(f"{dims}: {got[dims]}" for dims in expected))


def test_criterion_09_dimension_arithmetic(verdict):
    mismatches = []
    for n in range(5, 65):
        for spin, arg, top in ((True, n + 6, 13), (False, n + 4, 9)):
            b = delta_bound(n, spin)
            if b.delta != max(0, top - arg.bit_count()) or b.ambient != 2 * n - 1 + b.delta:
                mismatches.append((n, spin))
    worst = 0
    for m in range(3, 21):
        b = delta_bound(2 * m, m % 2 == 1)
        worst = max(worst, b.ambient - (4 * m + 11))
    ok = not mismatches and worst <= 0
    verdict(9, "dimension arithmetic", ok, f"{len(mismatches)} delta mismatches for n = 5..64, "
                                            f"max CP^m excess over 4m+11 is {worst} <= 0")


def test_criterion_10_determinism(tmp_path, verdict):
    a, b = tmp_path / "a", tmp_path / "b"
    codes = [main(["surgery", "--samples", "2000", "--seed", "11", "--out", str(out)]) for out in (a, b)]
    same = (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    ok = same and codes == [EXIT_PASS, EXIT_PASS]
    size = len((a / "report.json").read_bytes())
    digest = json.loads((a / "report.json").read_text())["config_hash"]
    verdict(10, "determinism", ok, f"report.json byte-identical across two runs: {same} "
                                    f"({size} bytes, config hash {digest[:12]})")
