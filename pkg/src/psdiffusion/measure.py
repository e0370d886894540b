"""Finite nonnegative measures on [0, inf).

A :class:`FiniteMeasure` is a hybrid of unit-free atoms and groups of
shifted, scaled laws.  A group ``ShiftedLaw(law, scales, shifts)`` denotes

    sum_k scales[k] * (law shifted left by shifts[k], restricted to (0, inf))

which represents both lifted workloads (one unshifted excess law) and fluid
model states (thousands of shifted copies of the service law) exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .distributions import CHI, ONE, Distribution, Power
from .errors import DomainError, EvaluationError

TAIL_EPS = 1e-16


def evaluate(g: Callable, x: np.ndarray) -> np.ndarray:
    """g(x) broadcast to the shape of ``x``; raises on non-finite values."""
    x = np.asarray(x, dtype=float)
    vals = np.broadcast_to(np.asarray(g(x), dtype=float), x.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        raise EvaluationError(f"test function is not finite at x={x[bad][0]!r}")
    return vals


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


def smoothstep(u):
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_deriv(u):
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, 6.0 * u * (1.0 - u), 0.0)


@dataclass(frozen=True)
class Derivative:
    """g' for a test function g, keeping g's knots for quadrature."""

    base: Callable
    support: tuple[float, float]

    @property
    def knots(self) -> tuple[float, ...]:
        return self.base.knots

    def __call__(self, x):
        return self.base.slope(x)


@dataclass(frozen=True)
class Bump:
    """1 - smoothstep(|x - center| / width): C^1, peak 1 at ``center``."""

    center: float
    width: float

    @property
    def support(self) -> tuple[float, float]:
        return (max(self.center - self.width, 0.0), self.center + self.width)

    @property
    def knots(self) -> tuple[float, ...]:
        return (self.center - self.width, self.center, self.center + self.width)

    def __call__(self, x):
        u = np.abs(np.asarray(x, dtype=float) - self.center) / self.width
        return 1.0 - smoothstep(u)

    def slope(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return -np.sign(d) * _smoothstep_deriv(np.abs(d) / self.width) / self.width

    @property
    def deriv(self) -> "Derivative":
        return Derivative(self, self.support)


@dataclass(frozen=True)
class Ramp:
    """smoothstep(x - (k - 1)): zero on [0, k-1], one on [k, inf)."""

    k: int

    @property
    def support(self) -> tuple[float, float]:
        return (float(self.k - 1), math.inf)

    @property
    def knots(self) -> tuple[float, ...]:
        return (float(self.k - 1), float(self.k))

    def __call__(self, x):
        return smoothstep(np.asarray(x, dtype=float) - (self.k - 1))

    def slope(self, x):
        return _smoothstep_deriv(np.asarray(x, dtype=float) - (self.k - 1))

    @property
    def deriv(self) -> "Derivative":
        return Derivative(self, (float(self.k - 1), float(self.k)))


def _dyadic_bumps(count: int) -> tuple[Bump, ...]:
    out: list[Bump] = []
    q = 0
    while len(out) < count:
        w = 2.0**-q
        for j in range(1, 2**q + 1):
            out.append(Bump(j * w, w))
            if len(out) == count:
                break
        q += 1
    return tuple(out)


@dataclass(frozen=True)
class TestFunctionFamily:
    """Bumps g_1..g_K (dyadic centers j 2^-q, widths 2^-q, ordered by (q, j))
    and ramps h_1, h_2, ... used by the metric."""

    __test__ = False  # not a pytest class

    K_max: int = 64
    bumps: tuple[Bump, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.K_max < 1:
            raise DomainError("K_max must be positive")
        object.__setattr__(self, "bumps", _dyadic_bumps(self.K_max))

    def g(self, k: int) -> Bump:
        if not 1 <= k <= self.K_max:
            raise DomainError(f"bump index must lie in 1..{self.K_max}")
        return self.bumps[k - 1]

    def h(self, k: int) -> Ramp:
        if k < 1:
            raise DomainError("ramp index must be at least 1")
        return Ramp(k)

    def bump_matrix(self, x: np.ndarray) -> np.ndarray:
        c = np.array([b.center for b in self.bumps])
        w = np.array([b.width for b in self.bumps])
        u = np.abs(np.asarray(x, dtype=float)[None, :] - c[:, None]) / w[:, None]
        return 1.0 - smoothstep(u)

    def ramp_matrix(self, x: np.ndarray, n: int) -> np.ndarray:
        k = np.arange(1, n + 1)
        return smoothstep(np.asarray(x, dtype=float)[None, :] - (k[:, None] - 1))


DEFAULT_FAMILY = TestFunctionFamily()


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ShiftedLaw:
    law: Distribution
    scales: np.ndarray
    shifts: np.ndarray

    def mass(self) -> float:
        return float(np.dot(self.scales, self.law.sf(self.shifts)))

    def upper(self) -> float:
        return self.law.upper(TAIL_EPS) - float(self.shifts.min())


def _clean_atoms(locations, weights) -> tuple[np.ndarray, np.ndarray]:
    loc = np.asarray(locations, dtype=float).ravel()
    w = np.ones_like(loc) if weights is None else np.broadcast_to(np.asarray(weights, dtype=float), loc.shape).copy()
    if loc.size and (not np.all(np.isfinite(loc)) or loc.min() < 0):
        raise DomainError("atom locations must be finite and nonnegative")
    if w.size and (not np.all(np.isfinite(w)) or w.min() < 0):
        raise DomainError("atom weights must be finite and nonnegative")
    keep = (loc > 0) & (w > 0)
    loc, w = loc[keep], w[keep]
    order = np.argsort(loc, kind="stable")
    return loc[order], w[order]


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """Atoms plus groups of shifted scaled laws; never charges {0}."""

    locations: np.ndarray = field(default_factory=lambda: np.empty(0))
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))
    parts: tuple[ShiftedLaw, ...] = ()

    def __post_init__(self):
        loc, w = _clean_atoms(self.locations, self.weights)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)
        cleaned = []
        for p in self.parts:
            sc = np.asarray(p.scales, dtype=float).ravel()
            sh = np.broadcast_to(np.asarray(p.shifts, dtype=float), sc.shape).copy()
            if sc.size and (sc.min() < 0 or sh.min() < 0):
                raise DomainError("parametric scales and shifts must be nonnegative")
            keep = (sc > 0) & (p.law.sf(sh) > 0)
            if keep.any():
                cleaned.append(ShiftedLaw(p.law, sc[keep], sh[keep]))
        object.__setattr__(self, "parts", tuple(cleaned))

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls) -> "FiniteMeasure":
        return cls()

    @classmethod
    def atomic(cls, locations, weights=None) -> "FiniteMeasure":
        return cls(np.asarray(locations, dtype=float), None if weights is None else np.asarray(weights, dtype=float))

    @classmethod
    def parametric(cls, law: Distribution, scale: float = 1.0, shift: float = 0.0) -> "FiniteMeasure":
        return cls(parts=(ShiftedLaw(law, np.array([float(scale)]), np.array([float(shift)])),))

    # -- algebra -----------------------------------------------------------
    def __add__(self, other: "FiniteMeasure") -> "FiniteMeasure":
        if not isinstance(other, FiniteMeasure):
            return NotImplemented
        groups: dict[Distribution, list[ShiftedLaw]] = {}
        for p in self.parts + other.parts:
            groups.setdefault(p.law, []).append(p)
        parts = tuple(
            ShiftedLaw(law, np.concatenate([p.scales for p in ps]), np.concatenate([p.shifts for p in ps]))
            for law, ps in groups.items()
        )
        return FiniteMeasure(
            np.concatenate([self.locations, other.locations]),
            np.concatenate([self.weights, other.weights]),
            parts,
        )

    def __mul__(self, c: float) -> "FiniteMeasure":
        c = float(c)
        if c < 0:
            raise DomainError("measures can only be scaled by c >= 0")
        return FiniteMeasure(
            self.locations, self.weights * c, tuple(ShiftedLaw(p.law, p.scales * c, p.shifts) for p in self.parts)
        )

    __rmul__ = __mul__

    # -- summaries ---------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return self.locations.size == 0 and not self.parts

    def total_mass(self) -> float:
        return math.fsum(self.weights.tolist()) + sum(p.mass() for p in self.parts)

    def support_upper(self) -> float:
        """Right end of the support (parametric tails cut at 1e-16 mass)."""
        hi = float(self.locations[-1]) if self.locations.size else 0.0
        for p in self.parts:
            hi = max(hi, p.upper())
        return hi

    def tail_mass(self, s) -> np.ndarray:
        """zeta((s, inf)) for an array of thresholds ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        cum = np.concatenate([[0.0], np.cumsum(self.weights[::-1])])[::-1]
        out = cum[np.searchsorted(self.locations, s, side="right")]
        for p in self.parts:
            out = out + p.law.sf(s[:, None] + p.shifts[None, :]) @ p.scales
        return out

    def __repr__(self) -> str:
        return f"FiniteMeasure(atoms={self.locations.size}, parts={[(p.law, p.scales.size) for p in self.parts]})"


def zero_measure() -> FiniteMeasure:
    return FiniteMeasure()


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def integrate(g: Callable, zeta: FiniteMeasure) -> float:
    """<g, zeta>."""
    total = 0.0
    if zeta.locations.size:
        total += float(np.dot(zeta.weights, evaluate(g, zeta.locations)))
    for p in zeta.parts:
        total += p.law.expect_shifted(g, p.shifts, p.scales)
    return total


def shift_kill(zeta: FiniteMeasure, s: float) -> FiniteMeasure:
    """Transport every point x to x - s and discard what reaches (-inf, 0]."""
    if s < 0:
        raise DomainError("shift must be nonnegative")
    if s == 0:
        return zeta
    keep = zeta.locations > s
    return FiniteMeasure(
        zeta.locations[keep] - s,
        zeta.weights[keep],
        tuple(ShiftedLaw(p.law, p.scales, p.shifts + s) for p in zeta.parts),
    )


def lift(w: float, nu: Distribution) -> FiniteMeasure:
    """The manifold measure (w / <chi, nu_e>) nu_e with workload ``w``."""
    if w < 0:
        raise DomainError("workload must be nonnegative")
    if w == 0:
        return FiniteMeasure()
    return FiniteMeasure.parametric(nu.excess(), w / nu.excess_mean())


# -- the metric --------------------------------------------------------------


@lru_cache(maxsize=1024)
def _law_signature(law: Distribution, fam: TestFunctionFamily, n_ramps: int) -> tuple[np.ndarray, np.ndarray]:
    g = np.array([law.expect(b) for b in fam.bumps])
    h = np.array([law.expect(Ramp(k)) for k in range(1, n_ramps + 1)])
    return g, h


def signature(zeta: FiniteMeasure, fam: TestFunctionFamily, n_ramps: int) -> tuple[np.ndarray, np.ndarray]:
    """(<g_k, zeta>)_{k<=K_max} and (<h_k, zeta>)_{k<=n_ramps}."""
    g = np.zeros(fam.K_max)
    h = np.zeros(n_ramps)
    if zeta.locations.size:
        g += fam.bump_matrix(zeta.locations) @ zeta.weights
        if n_ramps:
            h += fam.ramp_matrix(zeta.locations, n_ramps) @ zeta.weights
    for p in zeta.parts:
        if np.all(p.shifts == 0.0):
            lg, lh = _law_signature(p.law, fam, n_ramps)
            c = float(p.scales.sum())
            g += c * lg
            h += c * lh
        else:
            g += np.array([p.law.expect_shifted(b, p.shifts, p.scales) for b in fam.bumps])
            h += np.array([p.law.expect_shifted(Ramp(k), p.shifts, p.scales) for k in range(1, n_ramps + 1)])
    return g, h


def n_ramps_for(*zetas: FiniteMeasure) -> int:
    top = max((z.support_upper() for z in zetas), default=0.0)
    return int(math.ceil(top)) + 1


def distance_from_signatures(sig1, sig2) -> float:
    g1, h1 = sig1
    g2, h2 = sig2
    weights = 0.5 ** np.arange(1, g1.size + 1)
    series = float(np.dot(weights, np.minimum(np.abs(g1 - g2), 1.0)))
    n = max(h1.size, h2.size)
    h1 = np.pad(h1, (0, n - h1.size))
    h2 = np.pad(h2, (0, n - h2.size))
    sup = float(np.max(np.abs(h1 - h2))) if n else 0.0
    return series + sup


def metric_d(zeta1: FiniteMeasure, zeta2: FiniteMeasure, fam: TestFunctionFamily = DEFAULT_FAMILY) -> float:
    """Bump series (truncated at K_max) plus the sup over ramps."""
    n = n_ramps_for(zeta1, zeta2)
    return distance_from_signatures(signature(zeta1, fam, n), signature(zeta2, fam, n))


def modulus(
    path: Sequence[tuple[float, FiniteMeasure]], delta: float, fam: TestFunctionFamily = DEFAULT_FAMILY
) -> float:
    """Grid version of sup_t sup_{h<=delta} d[zeta(t+h), zeta(t)]."""
    if len(path) < 2:
        raise DomainError("modulus needs at least two samples")
    if not delta > 0:
        raise DomainError("delta must be positive")
    times = np.array([t for t, _ in path], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise DomainError("path times must be strictly increasing")
    if delta > (times[-1] - times[0]) * (1 + 1e-12):
        raise DomainError("delta exceeds the path horizon")
    n = n_ramps_for(*(z for _, z in path))
    sigs = [signature(z, fam, n) for _, z in path]
    best = 0.0
    tol = 1e-12 * max(1.0, abs(delta))
    for i in range(len(path)):
        for j in range(i + 1, len(path)):
            if times[j] - times[i] > delta + tol:
                break
            best = max(best, distance_from_signatures(sigs[i], sigs[j]))
    return best


__all__ = [
    "Bump",
    "CHI",
    "DEFAULT_FAMILY",
    "FiniteMeasure",
    "ONE",
    "Power",
    "Ramp",
    "ShiftedLaw",
    "TestFunctionFamily",
    "integrate",
    "lift",
    "metric_d",
    "modulus",
    "shift_kill",
    "signature",
]
