"""Dormand-Prince 5(4) integration with events.

The stepper works in either time direction.  Between accepted steps the
solution is available in two ways: :meth:`Trajectory.hermite` (cubic Hermite,
cheap, used to bracket events) and :meth:`Trajectory.at` (one fresh RK step
from the nearest accepted step start, accurate to the integration tolerance).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = ["IntegrationError", "Trajectory", "dopri", "dopri_fixed", "dp_step"]


class IntegrationError(RuntimeError):
    pass


_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def dp_step(f: Callable, t: float, y: np.ndarray, h: float, k0: np.ndarray | None = None):
    """One Dormand-Prince step: (y5, error estimate, last stage = f(t+h, y5))."""
    k = np.empty((7, y.size))
    k[0] = f(t, y) if k0 is None else k0
    for i in range(1, 7):
        k[i] = f(t + _C[i] * h, y + h * (np.asarray(_A[i]) @ k[:i]))
    y5 = y + h * (_B5 @ k)
    err = h * ((_B5 - _B4) @ k)
    return y5, err, k[6]


@dataclass
class Trajectory:
    f: Callable
    t: list = field(default_factory=list)
    y: list = field(default_factory=list)
    dy: list = field(default_factory=list)
    event_t: float | None = None
    event_y: np.ndarray | None = None
    rejected: int = 0

    def _index(self, s):
        t = np.asarray(self.t)
        if t[-1] >= t[0]:
            i = np.searchsorted(t, s, side="right") - 1
        else:
            i = np.searchsorted(-t, -s, side="right") - 1
        return int(np.clip(i, 0, len(t) - 2))

    def hermite(self, s: float) -> np.ndarray:
        i = self._index(s)
        t0, t1 = self.t[i], self.t[i + 1]
        h = t1 - t0
        x = (s - t0) / h
        h00 = 2 * x**3 - 3 * x**2 + 1
        h10 = x**3 - 2 * x**2 + x
        h01 = -2 * x**3 + 3 * x**2
        h11 = x**3 - x**2
        return h00 * self.y[i] + h10 * h * self.dy[i] + h01 * self.y[i + 1] + h11 * h * self.dy[i + 1]

    def at(self, s: float) -> np.ndarray:
        """State at s via a single RK step from the enclosing step start."""
        i = self._index(s)
        h = s - self.t[i]
        if h == 0.0:
            return np.array(self.y[i])
        return dp_step(self.f, self.t[i], self.y[i], h, self.dy[i])[0]

    @property
    def t_end(self) -> float:
        return self.event_t if self.event_t is not None else self.t[-1]

    @property
    def y_end(self) -> np.ndarray:
        return self.event_y if self.event_y is not None else self.y[-1]


def _locate(traj: Trajectory, event, i: int, g0: float, tol: float) -> float:
    lo, hi = traj.t[i], traj.t[i + 1]
    glo = g0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = event(mid, traj.at(mid))
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if abs(hi - lo) <= tol:
            break
    return 0.5 * (lo + hi)


def dopri(
    f: Callable,
    t0: float,
    y0,
    t_end: float,
    rtol: float = 1e-12,
    atol: float = 1e-14,
    h0: float | None = None,
    max_steps: int = 200000,
    event: Callable | None = None,
    event_tol: float = 1e-15,
) -> Trajectory:
    """Adaptive integration from t0 towards t_end, stopping early at a sign change of ``event``."""
    y = np.array(y0, dtype=float)
    direction = 1.0 if t_end >= t0 else -1.0
    span = abs(t_end - t0)
    traj = Trajectory(f)
    k0 = np.asarray(f(t0, y), dtype=float)
    traj.t.append(t0)
    traj.y.append(y.copy())
    traj.dy.append(k0)
    if span == 0.0:
        return traj
    h = direction * (h0 if h0 is not None else min(span, 1e-3 * max(span, 1.0)))
    t = t0
    g_prev = event(t, y) if event is not None else None
    for _ in range(max_steps):
        if direction * (t + h - t_end) > 0:
            h = t_end - t
        y_new, err, k_new = dp_step(f, t, y, h, k0)
        if not np.all(np.isfinite(y_new)):
            h *= 0.25
            traj.rejected += 1
            if abs(h) < 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(f"step size underflow at t={t:.6g}")
            continue
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        enorm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if enorm <= 1.0:
            t_new = t + h
            traj.t.append(t_new)
            traj.y.append(y_new)
            traj.dy.append(k_new)
            if event is not None:
                g_new = event(t_new, y_new)
                if (g_new > 0) != (g_prev > 0) or g_new == 0.0:
                    i = len(traj.t) - 2
                    te = t_new if g_new == 0.0 else _locate(traj, event, i, g_prev, event_tol)
                    traj.event_t = te
                    traj.event_y = traj.at(te)
                    return traj
                g_prev = g_new
            t, y, k0 = t_new, y_new, k_new
            if direction * (t - t_end) >= 0:
                return traj
            fac = 5.0 if enorm == 0 else min(5.0, max(0.2, 0.9 * enorm ** (-0.2)))
        else:
            traj.rejected += 1
            fac = max(0.2, 0.9 * enorm ** (-0.2))
        h *= fac
        if abs(h) < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t={t:.6g}")
    raise IntegrationError("maximum number of steps exceeded")


def dopri_fixed(f: Callable, t0: float, y0, t_end: float, nsteps: int) -> np.ndarray:
    """Fixed-step fifth-order integration; used for convergence-order checks."""
    y = np.array(y0, dtype=float)
    h = (t_end - t0) / nsteps
    t = t0
    for _ in range(nsteps):
        y = dp_step(f, t, y, h)[0]
        t += h
    return y
