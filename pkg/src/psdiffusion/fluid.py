"""Measure-valued fluid model for the critically loaded PS queue.

The solution is carried by the cumulative service per unit mass ``S``:

    S'(t) = 1 / Z(t),
    Z(t)  = xi((S(t), inf)) + alpha * int_0^t P(v > S(t) - S(s)) ds,

and the state at time t is the transported initial measure plus the influx
of mass alpha*ds at each earlier time s, shifted left by S(t) - S(s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .distributions import Distribution
from .errors import DomainError, SingularityError
from .measure import FiniteMeasure, ShiftedLaw, evaluate, integrate, lift, shift_kill

Z_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class FluidPath:
    t: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    xi: FiniteMeasure
    alpha: float
    nu: Distribution

    @property
    def step(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    @property
    def is_zero(self) -> bool:
        return self.xi.is_zero

    def S_at(self, t: float) -> float:
        self._check_time(t)
        return float(np.interp(t, self.t, self.S))

    def _check_time(self, t: float) -> None:
        if not (0.0 <= t <= self.horizon * (1 + 1e-12)):
            raise DomainError(f"t={t} outside [0, {self.horizon}]")

    def _influx(self, t: float) -> tuple[np.ndarray, np.ndarray, float]:
        """Left-Riemann weights ds_k and shifts S(t) - S(s_k) over nodes s_k < t."""
        s_t = self.S_at(t)
        k = int(np.searchsorted(self.t, t, side="left"))
        nodes = self.t[:k]
        ds = np.minimum(self.t[1 : k + 1], t) - nodes if k else np.empty(0)
        shifts = np.maximum(s_t - self.S[:k], 0.0)
        return ds, shifts, s_t

    def measure_at(self, t: float) -> FiniteMeasure:
        return fluid_measure_at(self, t)

    def workload_at(self, t: float) -> float:
        """<chi, zeta(t)> via E[(v - u)^+] = mean - int_0^u P(v > y) dy."""
        if self.is_zero:
            return 0.0
        ds, shifts, s_t = self._influx(t)
        base = integrate(lambda x: x, shift_kill(self.xi, s_t))
        if self.alpha == 0 or ds.size == 0:
            return base
        tail_work = self.nu.mean - self.nu.integrated_sf(shifts)
        return base + self.alpha * float(np.dot(ds, tail_work))

    def to_csv(self, path: str | Path, every: int = 1) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("t,S,Z,workload\n")
            for i in range(0, self.t.size, every):
                t = float(self.t[i])
                fh.write(f"{t!r},{float(self.S[i])!r},{float(self.Z[i])!r},{self.workload_at(t)!r}\n")
        return path


def _mass(xi: FiniteMeasure, alpha: float, nu: Distribution, S_hist: np.ndarray, s_new: float, h: float) -> float:
    """Z at a new node whose S value is ``s_new``; trapezoid over past nodes."""
    z = float(xi.tail_mass(s_new)[0])
    if alpha:
        vals = nu.sf(s_new - S_hist)
        z += alpha * h * (float(vals.sum()) - 0.5 * float(vals[0]) + 0.5)
    return z


def fluid_solve(xi: FiniteMeasure, alpha: float, nu: Distribution, L: float, step: float | None = None) -> FluidPath:
    """Heun predictor-corrector for S on a uniform grid over [0, L]."""
    if not L > 0:
        raise DomainError("horizon L must be positive")
    if alpha < 0:
        raise DomainError("arrival rate must be nonnegative")
    step = 1e-3 * L if step is None else float(step)
    if not (0 < step <= 1e-2 * L * (1 + 1e-12)):
        raise DomainError("step must lie in (0, 1e-2 * L]")
    n = int(math.ceil(L / step - 1e-9))
    t = np.linspace(0.0, L, n + 1)
    h = L / n
    S = np.zeros(n + 1)
    Z = np.zeros(n + 1)
    if xi.is_zero:
        return FluidPath(t, S, Z, xi, float(alpha), nu)
    Z[0] = xi.total_mass()
    for k in range(n):
        hist = S[: k + 1]
        z_pred = _mass(xi, alpha, nu, hist, S[k] + h / Z[k], h)
        if z_pred >= Z_FLOOR:
            S[k + 1] = S[k] + 0.5 * h * (1.0 / Z[k] + 1.0 / z_pred)
            Z[k + 1] = _mass(xi, alpha, nu, hist, S[k + 1], h)
            if Z[k + 1] >= Z_FLOOR:
                continue
        if alpha:
            raise SingularityError(f"total mass fell below {Z_FLOOR:g} near t={t[k + 1]:.6g}")
        # without arrivals the initial mass simply drains out: empty from here on
        S[k + 1 :] = max(xi.support_upper(), S[k])
        Z[k + 1 :] = 0.0
        break
    return FluidPath(t, S, Z, xi, float(alpha), nu)


def fluid_measure_at(path: FluidPath, t: float) -> FiniteMeasure:
    """Transported initial measure plus the discretized arrival influx."""
    path._check_time(t)
    if path.is_zero:
        return FiniteMeasure()
    ds, shifts, s_t = path._influx(t)
    base = shift_kill(path.xi, s_t)
    if path.alpha == 0 or ds.size == 0:
        return base
    influx = FiniteMeasure(parts=(ShiftedLaw(path.nu, path.alpha * ds, shifts),))
    return base + influx


def fluid_steady_state(xi: FiniteMeasure, nu: Distribution) -> FiniteMeasure:
    """The manifold point with the same workload as ``xi``."""
    return lift(integrate(lambda x: x, xi), nu)


def _derivative(g: Callable, dg: Callable | None) -> Callable:
    if dg is not None:
        return dg
    if hasattr(g, "deriv"):
        return g.deriv
    raise DomainError("test function needs a derivative (pass dg or give g a .deriv)")


def residual(path: FluidPath, g: Callable, t: float, dg: Callable | None = None) -> float:
    """|<g,zeta(t)> - <g,xi> + int_0^t <g',zeta(s)>/<1,zeta(s)> ds - alpha t <g,nu>|."""
    path._check_time(t)
    dg = _derivative(g, dg)
    g0 = float(evaluate(g, np.zeros(1))[0])
    d0 = float(evaluate(dg, np.zeros(1))[0])
    if abs(g0) > 1e-12 or abs(d0) > 1e-12:
        raise DomainError("test function must satisfy g(0) = g'(0) = 0")
    if t == 0 or path.is_zero:
        return 0.0
    nodes = path.t[path.t < t]
    nodes = np.append(nodes, t)
    ratio = np.empty(nodes.size)
    for i, s in enumerate(nodes):
        m = fluid_measure_at(path, float(s))
        mass = integrate(lambda x: np.ones_like(x), m)
        ratio[i] = integrate(dg, m) / mass if mass > 0 else 0.0
    drift = float(np.sum(0.5 * (ratio[1:] + ratio[:-1]) * np.diff(nodes)))
    lhs = integrate(g, fluid_measure_at(path, t))
    source = path.alpha * t * path.nu.expect(g) if path.alpha else 0.0
    return abs(lhs - integrate(g, path.xi) + drift - source)


__all__ = [
    "FluidPath",
    "Z_FLOOR",
    "fluid_measure_at",
    "fluid_solve",
    "fluid_steady_state",
    "residual",
]
