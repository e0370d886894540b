"""Reflected Brownian motion reference model and heavy-traffic constants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, NoSteadyState


@dataclass(frozen=True)
class RbmParams:
    """Drift is ``-lam``; ``sigma2`` is the infinitesimal variance."""

    lam: float
    sigma2: float
    w0: float = 0.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        if self.w0 < 0:
            raise DomainError("initial value must be nonnegative")

    @classmethod
    def from_limits(cls, lam: float, alpha: float, a: float, beta: float, b: float, w0: float = 0.0) -> "RbmParams":
        return cls(lam, alpha * a * a + beta * b * b, w0)


@dataclass(frozen=True, eq=False)
class RbmPath:
    """Grid values of the reflected path W, the free path X and the pushing
    term; ``low`` holds the minimum of W over each step (bridge mode)."""

    t: np.ndarray
    W: np.ndarray
    X: np.ndarray
    push: np.ndarray
    low: np.ndarray | None = None

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("t,W\n")
            for t, w in zip(self.t, self.W):
                fh.write(f"{float(t)!r},{float(w)!r}\n")
        return path


REFLECTIONS = ("bridge", "grid")


def _grid(horizon: float, step: float) -> tuple[int, float]:
    if not step > 0:
        raise DomainError("step must be positive")
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    n = int(math.ceil(horizon / step - 1e-9))
    return n, horizon / n


def bridge_minima(X: np.ndarray, sigma2: float, h: float, u: np.ndarray) -> np.ndarray:
    """Exact minima of Brownian bridges between consecutive columns of X.

    ``u`` holds uniforms in (0, 1], one per step; the drift does not enter
    because a Brownian bridge forgets it.
    """
    x0, x1 = X[..., :-1], X[..., 1:]
    return 0.5 * (x0 + x1 - np.sqrt((x1 - x0) ** 2 - 2.0 * sigma2 * h * np.log(u)))


def reflect(X: np.ndarray, lows: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Running-minimum reflection W = X + max(0, sup(-X)).

    With ``lows`` the supremum runs over the step minima of the continuous
    path, otherwise over the grid values alone.
    """
    dips = -X if lows is None else np.concatenate([-X[..., :1], -lows], axis=-1)
    push = np.maximum.accumulate(np.maximum(dips, 0.0), axis=-1)
    return X + push, push


def _uniforms(rng: np.random.Generator, size) -> np.ndarray:
    return 1.0 - rng.random(size)


def rbm_simulate(
    params: RbmParams, horizon: float, step: float, rng: np.random.Generator, reflection: str = "bridge"
) -> RbmPath:
    """Gaussian free path on a grid, reflected by the running-minimum map.

    ``reflection="bridge"`` feeds the map the exact minimum of the Brownian
    path inside every step, so grid values carry the law of the continuous
    reflected process.  ``"grid"`` uses grid values only, which biases W
    downward by about 0.58 * sigma * sqrt(step).
    """
    if reflection not in REFLECTIONS:
        raise DomainError(f"reflection must be one of {REFLECTIONS}")
    n, h = _grid(horizon, step)
    inc = rng.normal(-params.lam * h, math.sqrt(params.sigma2 * h), size=n)
    X = np.concatenate([[params.w0], params.w0 + np.cumsum(inc)])
    t = np.linspace(0.0, n * h, n + 1)
    if reflection == "grid":
        W, push = reflect(X)
        return RbmPath(t, W, X, push)
    lows = bridge_minima(X, params.sigma2, h, _uniforms(rng, n))
    W, push = reflect(X, lows)
    return RbmPath(t, W, X, push, lows + push[1:])


def rbm_terminal(
    params: RbmParams,
    horizon: float,
    step: float,
    rng: np.random.Generator,
    n_paths: int,
    reflection: str = "bridge",
    chunk: int = 128,
) -> np.ndarray:
    """W*(horizon) for ``n_paths`` independent paths, simulated in blocks."""
    if reflection not in REFLECTIONS:
        raise DomainError(f"reflection must be one of {REFLECTIONS}")
    n, h = _grid(horizon, step)
    sd = math.sqrt(params.sigma2 * h)
    out = np.empty(n_paths)
    for lo in range(0, n_paths, chunk):
        m = min(chunk, n_paths - lo)
        X = np.empty((m, n + 1))
        X[:, 0] = params.w0
        np.cumsum(rng.normal(-params.lam * h, sd, size=(m, n)), axis=1, out=X[:, 1:])
        X[:, 1:] += params.w0
        if reflection == "grid":
            low = X.min(axis=1)
        else:
            low = bridge_minima(X, params.sigma2, h, _uniforms(rng, (m, n))).min(axis=1)
        out[lo : lo + m] = X[:, -1] + np.maximum(-low, 0.0)
    return out


def rbm_steady_cdf(params: RbmParams, x):
    """Exponential stationary law with rate 2*lam/sigma2."""
    if not params.lam > 0:
        raise NoSteadyState("RBM has no steady state unless the drift is negative")
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, -np.expm1(-2.0 * params.lam * np.maximum(x, 0.0) / params.sigma2), 0.0)


def zstar_steady_cdf(x, lam: float, beta: float, a: float, b: float):
    """Stationary law of the limiting queue length: exponential with rate
    lam * (beta**-2 + b**2) / (a**2 + b**2)."""
    if not lam > 0:
        raise NoSteadyState("no steady state unless lam > 0")
    if not (beta > 0 and a * a + b * b > 0):
        raise DomainError("need beta > 0 and a^2 + b^2 > 0")
    rate = lam * (beta**-2 + b * b) / (a * a + b * b)
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, -np.expm1(-rate * np.maximum(x, 0.0)), 0.0)


def c_nu(beta: float, b: float) -> float:
    """Queue length per unit workload on the invariant manifold."""
    if not beta > 0 or b < 0:
        raise DomainError("need beta > 0 and b >= 0")
    return 2.0 * beta / (1.0 + beta * beta * b * b)


__all__ = [
    "RbmParams",
    "RbmPath",
    "c_nu",
    "rbm_simulate",
    "rbm_steady_cdf",
    "rbm_terminal",
    "bridge_minima",
    "reflect",
    "zstar_steady_cdf",
]
