"""Interarrival and service laws, their excess distributions, and the
heavy-traffic parametrization of the r-indexed queue sequence.

Every law is an immutable value.  Samplers take an explicit
``numpy.random.Generator`` so replications never share state.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, ClassVar

import numpy as np
from scipy import special, stats

from .errors import DomainError
from .quadrature import adaptive_simpson

TAIL_EPS = 1e-17


@dataclass(frozen=True)
class Power:
    """The monomial x -> x**p; laws integrate these in closed form."""

    p: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.p == 0:
            return np.ones_like(x)
        return x**self.p

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.p == 0:
            return np.zeros_like(x)
        return self.p * x ** (self.p - 1)


ONE = Power(0.0)
CHI = Power(1.0)


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def _hashable(g) -> bool:
    try:
        hash(g)
    except TypeError:
        return False
    return True


class Distribution(ABC):
    """A probability law on (0, inf) that does not charge the origin."""

    kind: ClassVar[str] = ""

    # -- shape -------------------------------------------------------------
    @abstractmethod
    def sf(self, x):
        """P(v > x), vectorized."""

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def pdf(self, x):
        raise NotImplementedError(f"{self.kind} has no density")

    @property
    def atoms(self) -> tuple[tuple[float, float], ...]:
        """Point masses (location, probability); empty for continuous laws."""
        return ()

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points where the density is not smooth."""
        return ()

    @abstractmethod
    def upper(self, eps: float = TAIL_EPS) -> float:
        """A point beyond which the tail mass is at most ``eps``."""

    # -- moments -----------------------------------------------------------
    @abstractmethod
    def moment(self, p: float) -> float:
        """<x^p, law>; ``inf`` when the moment diverges."""

    @property
    def mean(self) -> float:
        return self.moment(1.0)

    @property
    def beta(self) -> float:
        return 1.0 / self.mean

    @property
    def std(self) -> float:
        m2 = self.moment(2.0)
        if not math.isfinite(m2):
            return math.inf
        return math.sqrt(max(m2 - self.mean**2, 0.0))

    def integrated_sf(self, x):
        """int_0^x P(v > y) dy; quadrature unless a subclass has a closed form."""
        x = _as_array(x)
        out = np.empty_like(x)
        for i, xi in np.ndenumerate(x):
            edges = [0.0, xi] + [b for b in self.breakpoints if 0.0 < b < xi]
            out[i] = adaptive_simpson(self.sf, edges, rtol=1e-12) if xi > 0 else 0.0
        return out

    # -- sampling ----------------------------------------------------------
    @abstractmethod
    def sample(self, rng: np.random.Generator, size=None):
        """Draw from the law."""

    def sample_length_biased(self, rng: np.random.Generator, size=None):
        """Draw from x P(dx) / E[v]."""
        raise NotImplementedError(f"{self.kind} has no length-biased sampler")

    # -- transforms --------------------------------------------------------
    @abstractmethod
    def scaled(self, factor: float) -> "Distribution":
        """The law of factor * v."""

    def with_mean(self, mean: float) -> "Distribution":
        return self.scaled(mean / self.mean)

    def excess(self) -> "Distribution":
        """The equilibrium (stationary residual-life) law."""
        return ExcessDistribution(self)

    def excess_mean(self) -> float:
        m2 = self.moment(2.0)
        if not math.isfinite(m2):
            raise DomainError(f"{self.kind}: infinite second moment, excess mean undefined")
        return m2 / (2.0 * self.mean)

    def excess_cdf(self, x):
        x = _as_array(x)
        if np.any(x < 0):
            raise DomainError("excess_cdf needs x >= 0")
        return np.clip(self.integrated_sf(x) / self.mean, 0.0, 1.0)

    # -- integration -------------------------------------------------------
    def expect(self, g) -> float:
        """<g, law>."""
        if isinstance(g, Power):
            return self.moment(g.p)
        if _hashable(g):
            return _cached_expect(self, g)
        return Distribution._expect_shifted(self, g, np.zeros(1), np.ones(1))

    def expect_shifted(self, g, shifts, scales) -> float:
        """sum_k scales[k] * int g(y - shifts[k]) 1{y > shifts[k]} law(dy)."""
        shifts = _as_array(shifts).ravel()
        scales = _as_array(scales).ravel()
        if shifts.size == 0:
            return 0.0
        if np.all(shifts == 0.0):
            return float(scales.sum()) * self.expect(g)
        return self._expect_shifted(g, shifts, scales)

    def _expect_shifted(self, g, shifts, scales) -> float:
        total = 0.0
        for loc, prob in self.atoms:
            y = loc - shifts
            live = y > 0
            if live.any():
                vals = np.broadcast_to(_as_array(g(y[live])), y[live].shape)
                _require_finite(vals, y[live])
                total += prob * float(np.dot(scales[live], vals))
        if not self.atoms:
            total += _density_shifted(self, g, shifts, scales)
        return total

    # -- config ------------------------------------------------------------
    @abstractmethod
    def to_spec(self) -> dict[str, Any]:
        """Tagged record for config files."""


def _require_finite(vals: np.ndarray, where: np.ndarray) -> None:
    from .errors import EvaluationError

    bad = ~np.isfinite(vals)
    if bad.any():
        raise EvaluationError(f"test function is not finite at x={where[bad][0]!r}")


_CHUNK = 1 << 21


def _density_shifted(law: Distribution, g, shifts, scales) -> float:
    s_min = float(shifts.min())
    hi = law.upper() - s_min
    lo = 0.0
    support = getattr(g, "support", None)
    if support is not None:
        lo = max(lo, support[0])
        hi = min(hi, support[1])
    if hi <= lo:
        return 0.0
    edges = [lo, hi]
    for bp in law.breakpoints:
        pts = bp - shifts
        edges.extend(pts[(pts > lo) & (pts < hi)].tolist())
    for k in getattr(g, "knots", ()):
        if lo < k < hi:
            edges.append(k)

    def integrand(x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        step = max(1, _CHUNK // max(shifts.size, 1))
        for i in range(0, x.size, step):
            xs = x[i : i + step]
            dens = law.pdf(xs[:, None] + shifts[None, :]) @ scales
            out[i : i + step] = dens
        gv = np.broadcast_to(_as_array(g(x)), x.shape)
        live = out != 0.0
        res = np.zeros_like(x)
        _require_finite(gv[live], x[live])
        res[live] = gv[live] * out[live]
        return res

    return adaptive_simpson(integrand, edges, rtol=1e-10, atol=1e-16)


@lru_cache(maxsize=8192)
def _cached_expect(law: Distribution, g) -> float:
    return Distribution._expect_shifted(law, g, np.zeros(1), np.ones(1))


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float = 1.0
    kind: ClassVar[str] = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("exponential rate must be positive")

    def sf(self, x):
        x = _as_array(x)
        return np.where(x < 0, 1.0, np.exp(-self.rate * np.maximum(x, 0.0)))

    def pdf(self, x):
        x = _as_array(x)
        return np.where(x < 0, 0.0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)))

    def upper(self, eps=TAIL_EPS):
        return -math.log(eps) / self.rate

    def moment(self, p):
        return math.gamma(p + 1.0) / self.rate**p

    def integrated_sf(self, x):
        x = np.maximum(_as_array(x), 0.0)
        return -np.expm1(-self.rate * x) / self.rate

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def sample_length_biased(self, rng, size=None):
        return rng.gamma(2.0, 1.0 / self.rate, size)

    def scaled(self, factor):
        return Exponential(self.rate / factor)

    def excess(self):
        return self

    def _expect_shifted(self, g, shifts, scales):
        # memoryless: the killed, shifted law is sf(s) times the law itself
        w = float(np.dot(scales, self.sf(shifts)))
        return w * self.expect(g) if w else 0.0

    def to_spec(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Deterministic(Distribution):
    value: float = 1.0
    kind: ClassVar[str] = "deterministic"

    def __post_init__(self):
        if not self.value > 0:
            raise DomainError("deterministic value must be positive")

    def sf(self, x):
        return np.where(_as_array(x) < self.value, 1.0, 0.0)

    @property
    def atoms(self):
        return ((self.value, 1.0),)

    @property
    def breakpoints(self):
        return (self.value,)

    def upper(self, eps=TAIL_EPS):
        return self.value

    def moment(self, p):
        return self.value**p

    def integrated_sf(self, x):
        return np.clip(_as_array(x), 0.0, self.value)

    def sample(self, rng, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def sample_length_biased(self, rng, size=None):
        return self.sample(rng, size)

    def scaled(self, factor):
        return Deterministic(self.value * factor)

    def excess(self):
        return Uniform(0.0, self.value)

    def expect(self, g):
        if isinstance(g, Power):
            return self.moment(g.p)
        vals = _as_array(g(np.array([self.value])))
        _require_finite(vals, np.array([self.value]))
        return float(vals[0])

    def to_spec(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class Uniform(Distribution):
    low: float = 0.0
    high: float = 1.0
    kind: ClassVar[str] = "uniform"

    def __post_init__(self):
        if not (0.0 <= self.low < self.high):
            raise DomainError("uniform needs 0 <= low < high")

    def sf(self, x):
        x = _as_array(x)
        return np.clip((self.high - x) / (self.high - self.low), 0.0, 1.0)

    def pdf(self, x):
        x = _as_array(x)
        inside = (x >= self.low) & (x < self.high)
        return np.where(inside, 1.0 / (self.high - self.low), 0.0)

    @property
    def breakpoints(self):
        return (self.low, self.high) if self.low > 0 else (self.high,)

    def upper(self, eps=TAIL_EPS):
        return self.high

    def moment(self, p):
        lo, hi = self.low, self.high
        return (hi ** (p + 1) - lo ** (p + 1)) / ((p + 1) * (hi - lo))

    def integrated_sf(self, x):
        x = np.maximum(_as_array(x), 0.0)
        lo, hi = self.low, self.high
        xc = np.clip(x, lo, hi)
        return np.minimum(x, lo) + ((hi - lo) ** 2 - (hi - xc) ** 2) / (2.0 * (hi - lo))

    def sample(self, rng, size=None):
        return rng.uniform(self.low, self.high, size)

    def sample_length_biased(self, rng, size=None):
        u = rng.random(size)
        return np.sqrt(self.low**2 + u * (self.high**2 - self.low**2))

    def scaled(self, factor):
        return Uniform(self.low * factor, self.high * factor)

    def to_spec(self):
        return {"kind": self.kind, "low": self.low, "high": self.high}


@dataclass(frozen=True)
class Erlang(Distribution):
    k: int = 2
    rate: float = 1.0
    kind: ClassVar[str] = "erlang"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1 or not self.rate > 0:
            raise DomainError("erlang needs integer k >= 1 and positive rate")

    def sf(self, x):
        x = np.maximum(_as_array(x), 0.0)
        return special.gammaincc(self.k, self.rate * x)

    def pdf(self, x):
        x = _as_array(x)
        return np.where(x < 0, 0.0, stats.gamma.pdf(np.maximum(x, 0.0), self.k, scale=1.0 / self.rate))

    def upper(self, eps=TAIL_EPS):
        return float(stats.gamma.isf(eps, self.k, scale=1.0 / self.rate))

    def moment(self, p):
        return math.exp(math.lgamma(self.k + p) - math.lgamma(self.k)) / self.rate**p

    def integrated_sf(self, x):
        x = np.maximum(_as_array(x), 0.0)
        acc = np.zeros_like(x)
        for n in range(1, self.k + 1):
            acc = acc + special.gammainc(n, self.rate * x)
        return acc / self.rate

    def sample(self, rng, size=None):
        return rng.gamma(self.k, 1.0 / self.rate, size)

    def sample_length_biased(self, rng, size=None):
        return rng.gamma(self.k + 1, 1.0 / self.rate, size)

    def scaled(self, factor):
        return Erlang(self.k, self.rate / factor)

    def to_spec(self):
        return {"kind": self.kind, "k": int(self.k), "rate": self.rate}


@dataclass(frozen=True)
class HyperExponential(Distribution):
    probs: tuple[float, ...] = (0.5, 0.5)
    rates: tuple[float, ...] = (1.0, 2.0)
    kind: ClassVar[str] = "hyperexp"

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if len(self.probs) != len(self.rates) or not self.probs:
            raise DomainError("hyperexp needs matching probs and rates")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise DomainError("hyperexp probs must be a probability vector")
        if any(not r > 0 for r in self.rates):
            raise DomainError("hyperexp rates must be positive")

    def _p(self):
        return np.array(self.probs), np.array(self.rates)

    def sf(self, x):
        p, mu = self._p()
        x = np.maximum(_as_array(x), 0.0)
        return np.exp(-np.multiply.outer(x, mu)) @ p

    def pdf(self, x):
        p, mu = self._p()
        x = _as_array(x)
        dens = np.exp(-np.multiply.outer(np.maximum(x, 0.0), mu)) @ (p * mu)
        return np.where(x < 0, 0.0, dens)

    def upper(self, eps=TAIL_EPS):
        return -math.log(eps) / min(self.rates)

    def moment(self, p):
        return sum(q * math.gamma(p + 1.0) / mu**p for q, mu in zip(self.probs, self.rates))

    def integrated_sf(self, x):
        p, mu = self._p()
        x = np.maximum(_as_array(x), 0.0)
        return -np.expm1(-np.multiply.outer(x, mu)) @ (p / mu)

    def sample(self, rng, size=None):
        p, mu = self._p()
        branch = rng.choice(len(p), size=size, p=p)
        return rng.exponential(1.0, size) / mu[branch]

    def sample_length_biased(self, rng, size=None):
        p, mu = self._p()
        q = p / mu
        branch = rng.choice(len(p), size=size, p=q / q.sum())
        return rng.gamma(2.0, 1.0, size) / mu[branch]

    def scaled(self, factor):
        return HyperExponential(self.probs, tuple(r / factor for r in self.rates))

    def excess(self):
        p, mu = self._p()
        q = p / mu
        return HyperExponential(tuple(q / q.sum()), self.rates)

    def _expect_shifted(self, g, shifts, scales):
        # mixture of memoryless phases
        total = 0.0
        for q, mu in zip(self.probs, self.rates):
            w = q * float(np.dot(scales, np.exp(-mu * shifts)))
            if w:
                total += w * Exponential(mu).expect(g)
        return total

    def to_spec(self):
        return {"kind": self.kind, "probs": list(self.probs), "rates": list(self.rates)}


@dataclass(frozen=True)
class BoundedPareto(Distribution):
    shape: float = 1.5
    low: float = 0.5
    high: float = 10.0
    kind: ClassVar[str] = "bounded_pareto"

    def __post_init__(self):
        if not (self.shape > 0 and 0 < self.low < self.high):
            raise DomainError("bounded_pareto needs shape > 0 and 0 < low < high")

    @property
    def _norm(self):
        return 1.0 - (self.low / self.high) ** self.shape

    def sf(self, x):
        x = _as_array(x)
        xc = np.clip(x, self.low, self.high)
        inner = ((self.low / xc) ** self.shape - (self.low / self.high) ** self.shape) / self._norm
        return np.where(x < self.low, 1.0, np.where(x >= self.high, 0.0, inner))

    def pdf(self, x):
        x = _as_array(x)
        a, lo = self.shape, self.low
        xc = np.clip(x, self.low, self.high)
        dens = a * lo**a * xc ** (-a - 1) / self._norm
        return np.where((x >= self.low) & (x < self.high), dens, 0.0)

    @property
    def breakpoints(self):
        return (self.low, self.high)

    def upper(self, eps=TAIL_EPS):
        return self.high

    def moment(self, p):
        a, lo, hi = self.shape, self.low, self.high
        c = a * lo**a / self._norm
        e = p - a
        if abs(e) < 1e-14:
            return c * math.log(hi / lo)
        return c * (hi**e - lo**e) / e

    def integrated_sf(self, x):
        x = np.maximum(_as_array(x), 0.0)
        a, lo, hi = self.shape, self.low, self.high
        xc = np.clip(x, lo, hi)
        tail = (lo / hi) ** a
        if abs(a - 1.0) < 1e-14:
            core = lo * np.log(xc / lo)
        else:
            core = lo**a * (xc ** (1 - a) - lo ** (1 - a)) / (1 - a)
        mid = (core - tail * (xc - lo)) / self._norm
        return np.minimum(x, lo) + mid

    def sample(self, rng, size=None):
        u = rng.random(size)
        a, lo, hi = self.shape, self.low, self.high
        return lo * (1.0 - u * self._norm) ** (-1.0 / a)

    def sample_length_biased(self, rng, size=None):
        u = rng.random(size)
        a, lo, hi = self.shape, self.low, self.high
        if abs(a - 1.0) < 1e-14:
            return lo * (hi / lo) ** u
        e = 1.0 - a
        return (lo**e + u * (hi**e - lo**e)) ** (1.0 / e)

    def scaled(self, factor):
        return BoundedPareto(self.shape, self.low * factor, self.high * factor)

    def to_spec(self):
        return {"kind": self.kind, "shape": self.shape, "low": self.low, "high": self.high}


@dataclass(frozen=True)
class Pareto(Distribution):
    """Unbounded Pareto; only moments of order below ``shape`` are finite."""

    shape: float = 3.0
    scale: float = 1.0
    kind: ClassVar[str] = "pareto"

    def __post_init__(self):
        if not (self.shape > 1 and self.scale > 0):
            raise DomainError("pareto needs shape > 1 (finite mean) and scale > 0")

    def sf(self, x):
        x = _as_array(x)
        return np.where(x < self.scale, 1.0, (self.scale / np.maximum(x, self.scale)) ** self.shape)

    def pdf(self, x):
        x = _as_array(x)
        xc = np.maximum(x, self.scale)
        return np.where(x >= self.scale, self.shape * self.scale**self.shape * xc ** (-self.shape - 1), 0.0)

    @property
    def breakpoints(self):
        return (self.scale,)

    def upper(self, eps=TAIL_EPS):
        return self.scale * eps ** (-1.0 / self.shape)

    def moment(self, p):
        if p >= self.shape:
            return math.inf
        return self.shape * self.scale**p / (self.shape - p)

    def integrated_sf(self, x):
        x = np.maximum(_as_array(x), 0.0)
        a, xm = self.shape, self.scale
        xc = np.maximum(x, xm)
        return np.minimum(x, xm) + xm**a * (xm ** (1 - a) - xc ** (1 - a)) / (a - 1)

    def sample(self, rng, size=None):
        return self.scale * (1.0 - rng.random(size)) ** (-1.0 / self.shape)

    def sample_length_biased(self, rng, size=None):
        return self.scale * (1.0 - rng.random(size)) ** (-1.0 / (self.shape - 1.0))

    def scaled(self, factor):
        return Pareto(self.shape, self.scale * factor)

    def to_spec(self):
        return {"kind": self.kind, "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class ExcessDistribution(Distribution):
    """Equilibrium law with density beta * P(v > x) for a base law."""

    base: Distribution = field(default_factory=Exponential)
    kind: ClassVar[str] = "excess"

    def __post_init__(self):
        if not math.isfinite(self.base.moment(2.0)):
            raise DomainError("excess law needs a finite second moment")

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def cdf(self, x):
        return self.base.excess_cdf(np.maximum(_as_array(x), 0.0))

    def pdf(self, x):
        x = _as_array(x)
        return np.where(x < 0, 0.0, self.base.sf(x) / self.base.mean)

    @property
    def breakpoints(self):
        return self.base.breakpoints

    def upper(self, eps=TAIL_EPS):
        return self.base.upper(eps)

    def moment(self, p):
        return self.base.moment(p + 1.0) / ((p + 1.0) * self.base.mean)

    def sample(self, rng, size=None):
        return rng.random(size) * self.base.sample_length_biased(rng, size)

    def scaled(self, factor):
        return ExcessDistribution(self.base.scaled(factor))

    def excess(self):
        return ExcessDistribution(self)

    def to_spec(self):
        return {"kind": self.kind, "of": self.base.to_spec()}


ServiceDistribution = Distribution

_KINDS: dict[str, Callable[..., Distribution]] = {
    "exponential": lambda d: Exponential(float(d["rate"])),
    "deterministic": lambda d: Deterministic(float(d["value"])),
    "uniform": lambda d: Uniform(float(d["low"]), float(d["high"])),
    "erlang": lambda d: Erlang(int(d["k"]), float(d["rate"])),
    "hyperexp": lambda d: HyperExponential(tuple(d["probs"]), tuple(d["rates"])),
    "bounded_pareto": lambda d: BoundedPareto(float(d["shape"]), float(d["low"]), float(d["high"])),
    "pareto": lambda d: Pareto(float(d["shape"]), float(d["scale"])),
    "excess": lambda d: ExcessDistribution(from_spec(d["of"])),
}


def from_spec(spec: dict[str, Any]) -> Distribution:
    """Build a law from a tagged record such as ``{"kind": "hyperexp", ...}``."""
    try:
        build = _KINDS[spec["kind"]]
    except KeyError as exc:
        raise DomainError(f"unknown distribution record {spec!r}") from exc
    try:
        return build(spec)
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed distribution record {spec!r}") from exc


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def excess_cdf(nu: Distribution, x):
    """P(v_e <= x) for the equilibrium law of ``nu``."""
    out = nu.excess_cdf(x)
    return float(out) if np.ndim(out) == 0 else out


def excess_mean(nu: Distribution) -> float:
    return nu.excess_mean()


def sample(dist: Distribution, rng: np.random.Generator) -> float:
    return float(dist.sample(rng))


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

ROLES = {"arrivals": 0, "services": 1, "initial": 2, "bootstrap": 3, "rbm": 4, "jitter": 5}


def stream(seed: int, r: float, replication: int, role: str) -> np.random.Generator:
    """Counter-based Philox stream keyed by (seed, r, replication, role)."""
    r_key = int(round(float(r) * 1_000_000))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(r_key, int(replication), ROLES[role]))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Streams:
    seed: int
    r: float = 1.0
    replication: int = 0

    def __call__(self, role: str) -> np.random.Generator:
        return stream(self.seed, self.r, self.replication, role)


# ---------------------------------------------------------------------------
# heavy traffic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InterarrivalDistribution:
    """Renewal interarrival law; ``first`` is the law of the first arrival time."""

    law: Distribution
    first: Distribution | None = None

    @property
    def first_law(self) -> Distribution:
        return self.first if self.first is not None else self.law

    @property
    def alpha(self) -> float:
        return 1.0 / self.law.mean

    @property
    def a(self) -> float:
        return self.law.std


@dataclass(frozen=True)
class HeavyTrafficFamily:
    """Fixed service law, arrivals thinned so that r(1 - rho^r) = lam."""

    service: Distribution
    interarrival: Distribution = field(default_factory=Exponential)
    lam: float = 0.0
    theta: float = 0.5
    arrivals: bool = True

    @property
    def beta(self) -> float:
        return self.service.beta

    @property
    def b(self) -> float:
        return self.service.std

    @property
    def alpha(self) -> float:
        return self.beta if self.arrivals else 0.0

    @property
    def a(self) -> float:
        return self.interarrival.with_mean(1.0 / self.beta).std

    @property
    def variance(self) -> float:
        """Variance of the limiting workload RBM, alpha a^2 + beta b^2."""
        return self.alpha * self.a**2 + self.beta * self.b**2

    def alpha_r(self, r: float) -> float:
        return self.beta * (1.0 - self.lam / r)


def instantiate_r(fam: HeavyTrafficFamily, r: float) -> tuple[InterarrivalDistribution | None, Distribution]:
    """Per-r laws; the interarrival entry is ``None`` when arrivals are off."""
    if not r > 0 or r <= fam.lam:
        raise DomainError(f"need r > max(lambda, 0); got r={r}, lambda={fam.lam}")
    if not fam.arrivals:
        return None, fam.service
    law = fam.interarrival.with_mean(1.0 / fam.alpha_r(r))
    return InterarrivalDistribution(law), fam.service


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "value": c.value, "detail": c.detail} for c in self.checks
            ],
        }


def validate_assumptions(fam: HeavyTrafficFamily) -> AssumptionReport:
    nu = fam.service
    th = fam.theta
    checks = []
    atom0 = sum(p for loc, p in nu.atoms if loc <= 0.0)
    checks.append(Check("service law does not charge 0", atom0 == 0.0 and float(nu.cdf(0.0)) == 0.0, atom0))
    m = nu.moment(4.0 + th)
    checks.append(Check(f"<x^(4+theta), nu> finite (theta={th})", math.isfinite(m), m))
    checks.append(Check("service mean positive and finite", 0 < nu.mean < math.inf, nu.mean))
    if fam.arrivals:
        u2 = fam.interarrival.with_mean(1.0 / fam.beta)
        mu = u2.moment(2.0 + th)
        checks.append(Check(f"E[u^(2+theta)] finite (theta={th})", math.isfinite(mu), mu))
        checks.append(Check("interarrival std a > 0", fam.a > 0, fam.a))
        rho = fam.alpha / fam.beta
        checks.append(Check("rho = alpha/beta = 1 at the limit", abs(rho - 1.0) <= 1e-12, rho))
    checks.append(Check("theta > 0", th > 0, th))
    return AssumptionReport(tuple(checks))
