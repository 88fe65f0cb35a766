"""Command line front end: configuration, pipeline dispatch and artifacts.

Reports are deterministic JSON (no timings); wall-clock time and emitted paths
go to a separate run record next to the report.  Exit codes: 0 pass, 1 fail,
2 usage or configuration error, 3 numeric or pipeline error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__

__all__ = [
    "ConfigError",
    "NumericReportError",
    "RunConfig",
    "RunRecord",
    "parse_config",
    "run_pipeline",
    "emit_artifacts",
    "content_hash",
    "render_json",
    "main",
]

COMMANDS = ("verify-chart", "bending-profile", "surgery", "veronese", "dims")
PRESETS = ("round-sphere", "clifford-torus", "flat-plane", "perturbed-sphere")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class NumericReportError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration; every field has a documented default."""

    command: str = "surgery"
    n: int | None = None
    d: int | None = None
    N: int | None = None
    k: int | None = None
    tau: float | None = None
    rho: float | None = None
    seed: int = 0
    threads: int = 1
    samples: int = 10000
    resolution: int = 6
    preset: str = "round-sphere"
    spin: bool = False
    field: str = "C"
    immersion_margin: float = 1e-6
    seam_c0: float = 1e-9
    seam_c1: float = 1e-6
    out: str = "scalpos-out"

    def resolved(self) -> "RunConfig":
        """Fill command-specific defaults for the scene dimensions."""
        defaults = {
            "surgery": {"n": 4, "d": 1, "N": 7},
            "bending-profile": {"n": 4, "d": 1, "N": 7},
            "verify-chart": {"n": 2},
            "dims": {"n": 7},
            "veronese": {},
        }[self.command]
        upd = {key: val for key, val in defaults.items() if getattr(self, key) is None}
        return replace(self, **upd)

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_INT_KEYS = {"n", "d", "N", "k", "seed", "threads", "samples", "resolution"}
_FLOAT_KEYS = {"tau", "rho", "immersion_margin", "seam_c0", "seam_c1"}


def _coerce(key, value):
    if key in _INT_KEYS:
        if value is None and key in ("n", "d", "N", "k"):
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if key in _FLOAT_KEYS:
        if value is None and key in ("tau", "rho"):
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if key == "spin":
        if not isinstance(value, bool):
            raise ConfigError(f"spin: expected a boolean, got {value!r}")
        return value
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command: unknown command {cfg.command!r}")
    cfg = cfg.resolved()
    for key in ("immersion_margin", "seam_c0", "seam_c1"):
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"{key}: tolerances must be positive")
    if cfg.resolution < 2:
        raise ConfigError("resolution: grids need at least 2 points per axis")
    if cfg.samples < 1:
        raise ConfigError("samples: must be positive")
    if cfg.threads < 1:
        raise ConfigError("threads: must be positive")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed: must be a 64-bit unsigned integer")
    if cfg.tau is not None and not cfg.tau > 0:
        raise ConfigError("tau: must be positive")
    if cfg.rho is not None and not cfg.rho > 0:
        raise ConfigError("rho: must be positive")
    if cfg.preset not in PRESETS:
        raise ConfigError(f"preset: unknown preset {cfg.preset!r}")
    if cfg.field not in ("C", "H"):
        raise ConfigError("field: must be 'C' or 'H'")
    if cfg.command in ("surgery", "bending-profile"):
        k = cfg.n - cfg.d
        if cfg.k is not None and cfg.k != k:
            raise ConfigError(f"k: given k = {cfg.k} but n - d = {k}")
        if min(cfg.k if cfg.k is not None else k, k) < 3:
            raise ConfigError(f"k: codimension n - d >= 3 violated (k = {cfg.k if cfg.k is not None else k})")
    if cfg.command == "dims" and cfg.n < 5:
        raise ConfigError("n: dimension must be at least 5")
    return cfg


def parse_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """JSON config file (optional) plus flag overrides; unknown keys are rejected."""
    data: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be an object")
        if set(raw) == {"config"} or "content_hash" in raw:
            raw = raw["config"]  # a run record
        data.update(raw)
    for key, val in (overrides or {}).items():
        if val is not None:
            data[key] = val
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    return _validate(RunConfig(**{key: _coerce(key, val) for key, val in data.items()}))


def render_json(obj) -> str:
    """Stable JSON rendering; refuses NaN and infinities."""
    try:
        return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    except ValueError as exc:
        raise NumericReportError(f"non-finite value in report: {exc}") from exc


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def content_hash(cfg: RunConfig) -> str:
    """Git-style blob hash of the canonical effective configuration and package version.

    The output directory is not an input, so it is left out.
    """
    inputs = {key: val for key, val in cfg.to_dict().items() if key != "out"}
    body = render_json({"config": inputs, "version": __version__}).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


@dataclass
class RunRecord:
    config: dict
    content_hash: str
    version: str
    timings: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)


# --- commands ---------------------------------------------------------------


def _cmd_dims(cfg):
    from .bundle_scaling import delta_bound

    budget = delta_bound(cfg.n, cfg.spin)
    return {"command": "dims", "verdict": "pass", "budget": budget.as_dict()}, {}


def _preset_chart(cfg):
    from . import jetcalc

    if cfg.preset == "round-sphere":
        return jetcalc.round_sphere_chart(cfg.n)
    if cfg.preset == "clifford-torus":
        return jetcalc.clifford_torus_chart()
    if cfg.preset == "flat-plane":
        return jetcalc.flat_plane_chart()
    return jetcalc.perturbed_sphere_chart(cfg.n, cfg.seed)


def _cmd_verify_chart(cfg):
    from .jetcalc import Sampling, scan_scalar_positivity

    chart = _preset_chart(cfg)
    rep = scan_scalar_positivity(chart, Sampling(count=cfg.samples, seed=cfg.seed),
                                 immersion_margin=cfg.immersion_margin, threads=cfg.threads)
    verdict = "pass" if rep.positive else "not scalar positive"
    return {"command": "verify-chart", "chart": chart.label, "verdict": verdict, "scan": rep.as_dict()}, {}


def _cmd_bending(cfg):
    from .bending import build_bending_profile, is_controlled, min_normal_perp, scan_profile
    from .spherical_deform import round_polar_scene

    k = cfg.n - cfg.d
    scene = round_polar_scene(cfg.n, cfg.d, cfg.N)
    rho1 = 0.5 * scene.rho0 if cfg.rho is None else cfg.rho
    lam = (k - 2) / 4
    tau = max(1.0, math.pi / (2 * lam * rho1)) if cfg.tau is None else cfg.tau
    prof = build_bending_profile(k, tau, rho1, min(rho1, 0.5 * math.pi / tau))
    ok, ctl = is_controlled(prof, n=cfg.n)
    rep = scan_profile(scene, prof, cfg.samples, cfg.seed, cfg.threads)
    nperp = min_normal_perp(scene, prof, 64, cfg.seed)
    passed = ok and rep.positive and nperp >= 0.5
    out = {
        "command": "bending-profile",
        "verdict": "pass" if passed else "fail",
        "parameters": {"k": k, "tau": tau, "rho1": rho1, "R": prof.R, "extent": prof.extent,
                       "a_R": float(prof.state[0, 0]), "b_R": float(prof.state[0, 1])},
        "controlled": {"ok": ok, **ctl},
        "conserved_drift": prof.ode_drift,
        "splice_marks": [[tag, lo, hi] for tag, lo, hi in prof.splice_marks],
        "tube_scan": rep.as_dict(),
        "min_normal_perp": nperp,
    }
    return out, {"profile.csv": prof}


def _cmd_veronese(cfg):
    from .bundle_scaling import (
        equivariance_residual,
        qmul,
        random_symplectic,
        random_unitary,
        veronese_affine_chart,
        veronese_cp2,
        veronese_hp2,
    )
    from .jetcalc import Sampling, scan_scalar_positivity

    rng = np.random.default_rng(cfg.seed)
    gauge, equiv = 0.0, 0.0
    for _ in range(100):
        if cfg.field == "C":
            x = rng.normal(size=3) + 1j * rng.normal(size=3)
            x /= np.linalg.norm(x)
            gauge = max(gauge, float(np.abs(veronese_cp2(np.exp(1j * rng.uniform(0, 2 * np.pi)) * x)
                                            - veronese_cp2(x)).max()))
            equiv = max(equiv, equivariance_residual(random_unitary(rng), x))
        else:
            x = rng.normal(size=(3, 4))
            x /= np.linalg.norm(x)
            u = rng.normal(size=4)
            u /= np.linalg.norm(u)
            xu = np.array([qmul(row, u) for row in x])
            gauge = max(gauge, float(np.abs(veronese_hp2(xu) - veronese_hp2(x)).max()))
            equiv = max(equiv, equivariance_residual(random_symplectic(rng), x))
    chart = veronese_affine_chart(cfg.field)
    rep = scan_scalar_positivity(chart, Sampling(count=50, seed=cfg.seed), threads=cfg.threads)
    spread = (rep.max_scal - rep.min_scal) / abs(rep.max_scal)
    passed = gauge <= 1e-12 and equiv <= 1e-10 and spread <= 1e-4
    return {
        "command": "veronese",
        "field": cfg.field,
        "verdict": "pass" if passed else "fail",
        "gauge_residual": gauge,
        "equivariance_residual": equiv,
        "scal_min": rep.min_scal,
        "scal_max": rep.max_scal,
        "scal_relative_spread": spread,
    }, {}


def _cmd_surgery(cfg):
    from .surgery import run_surgery

    atlas, rep = run_surgery(cfg.n, cfg.d, cfg.N, seed=cfg.seed, samples=cfg.samples, threads=cfg.threads,
                             tau=cfg.tau, rho=cfg.rho, c0_tol=cfg.seam_c0, c1_tol=cfg.seam_c1,
                             immersion_margin=cfg.immersion_margin)
    out = {"command": "surgery", "scene": {"n": cfg.n, "d": cfg.d, "N": cfg.N, "k": cfg.n - cfg.d}}
    out.update(rep.as_dict())
    return out, {"profile.csv": atlas.profile}


_DISPATCH = {
    "dims": _cmd_dims,
    "verify-chart": _cmd_verify_chart,
    "bending-profile": _cmd_bending,
    "veronese": _cmd_veronese,
    "surgery": _cmd_surgery,
}


def run_pipeline(cfg: RunConfig) -> tuple[dict, RunRecord, dict]:
    """Run one command; returns (report, record, extra artifacts)."""
    t0 = time.perf_counter()
    report, extras = _DISPATCH[cfg.command](cfg)
    report = {"config_hash": content_hash(cfg), "version": __version__, **report}
    record = RunRecord(cfg.to_dict(), content_hash(cfg), __version__, {"total_seconds": time.perf_counter() - t0})
    return report, record, extras


def _summary(report: dict) -> str:
    lines = [f"scalpos {report['command']}: {report['verdict']}"]
    glob = report.get("global")
    if glob:
        lines.append(f"global min scal {glob['min_scal']:.6g} over {glob['samples']} samples")
    for reason in report.get("reasons", []):
        lines.append(f"  {reason}")
    return "\n".join(lines) + "\n"


def emit_artifacts(report: dict, record: RunRecord, extras: dict, out_dir: str | Path) -> list[str]:
    """Write report.json, summary.txt, CSV dumps and run_record.json; returns written paths."""
    text = render_json(report)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    (out / "report.json").write_text(text)
    written.append(str(out / "report.json"))
    (out / "summary.txt").write_text(_summary(report))
    written.append(str(out / "summary.txt"))
    for name, obj in extras.items():
        obj.to_csv(out / name)
        written.append(str(out / name))
    record.artifacts = written + [str(out / "run_record.json")]
    (out / "run_record.json").write_text(render_json(asdict(record)))
    return record.artifacts


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="scalpos",
        description="Scalar-positive immersions: curvature checks, bending profiles and surgery.",
        epilog="Defaults: surgery/bending-profile (n,d,N) = (4,1,7); verify-chart n = 2; dims n = 7; "
        "seed 0; samples 10000; out scalpos-out.  Exit codes: 0 pass, 1 fail, 2 usage/config, 3 numeric.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file (or a run_record.json to reproduce a run)")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--field", choices=("C", "H"))
    p.add_argument("--spin", action="store_const", const=True)
    p.add_argument("--out", help="output directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    overrides = {key: val for key, val in vars(args).items() if key != "config"}
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"scalpos: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report, record, extras = run_pipeline(cfg)
        emit_artifacts(report, record, extras, cfg.out)
    except NumericReportError as exc:
        print(f"scalpos: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"scalpos: {cfg.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE if "Precondition" in type(exc).__name__ else EXIT_NUMERIC
    sys.stdout.write(_summary(report))
    return EXIT_PASS if report["verdict"] == "pass" else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
