"""Exact event-driven processor-sharing simulation.

Jobs carry exit thresholds ``size + S(arrival)`` in units of cumulative
service per job ``S``.  Between events ``S`` grows with slope ``1/Z``, so the
next departure happens after ``Z * (min threshold - S)`` time units and no
per-job residual ever has to be updated.
"""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .distributions import (
    Distribution,
    HeavyTrafficFamily,
    InterarrivalDistribution,
    Streams,
    instantiate_r,
)
from .errors import DomainError, SimulationAbort, UnsupportedOperation
from .measure import FiniteMeasure

INF = math.inf


# ---------------------------------------------------------------------------
# arrival sources
# ---------------------------------------------------------------------------


class NoArrivals:
    def next(self) -> tuple[float, float]:
        return INF, 0.0


class ExplicitArrivals:
    """Arrivals at fixed times with fixed sizes (tests and replays)."""

    def __init__(self, times: Sequence[float], sizes: Sequence[float]):
        if len(times) != len(sizes):
            raise DomainError("times and sizes differ in length")
        if any(b < a for a, b in zip(times, times[1:])):
            raise DomainError("arrival times must be nondecreasing")
        if any(v <= 0 for v in sizes):
            raise DomainError("service requirements must be positive")
        self._items = list(zip(map(float, times), map(float, sizes)))
        self._i = 0

    def next(self) -> tuple[float, float]:
        if self._i >= len(self._items):
            return INF, 0.0
        item = self._items[self._i]
        self._i += 1
        return item


class RenewalArrivals:
    """Delayed renewal arrivals with i.i.d. sizes, drawn in chunks.

    The draw order is fixed (one first-gap draw, then chunks), so two sources
    built from identically keyed streams yield bit-identical sequences.
    """

    def __init__(
        self,
        interarrival: InterarrivalDistribution,
        service: Distribution,
        rng_arrivals: np.random.Generator,
        rng_services: np.random.Generator,
        chunk: int = 4096,
    ):
        self._law = interarrival.law
        self._rng_a = rng_arrivals
        self._rng_s = rng_services
        self._service = service
        self._chunk = chunk
        self._gaps: list[float] = [float(interarrival.first_law.sample(rng_arrivals))]
        self._sizes: list[float] = []
        self._gi = 0
        self._si = 0
        self._t = 0.0

    def next(self) -> tuple[float, float]:
        if self._gi >= len(self._gaps):
            self._gaps = self._law.sample(self._rng_a, self._chunk).tolist()
            self._gi = 0
        if self._si >= len(self._sizes):
            self._sizes = np.asarray(self._service.sample(self._rng_s, self._chunk), dtype=float).tolist()
            self._si = 0
        self._t += self._gaps[self._gi]
        v = self._sizes[self._si]
        self._gi += 1
        self._si += 1
        return self._t, v


# ---------------------------------------------------------------------------
# event log
# ---------------------------------------------------------------------------


@dataclass
class EventLog:
    """Full trajectory record: S is piecewise linear between logged events."""

    times: list[float] = field(default_factory=lambda: [0.0])
    S: list[float] = field(default_factory=lambda: [0.0])
    Z: list[int] = field(default_factory=lambda: [0])
    job_arrival: list[float] = field(default_factory=list)
    job_size: list[float] = field(default_factory=list)
    job_S_arrival: list[float] = field(default_factory=list)
    job_departure: list[float] = field(default_factory=list)
    kinds: list[str] = field(default_factory=lambda: ["start"])

    def record(self, kind: str, t: float, S: float, Z: int) -> None:
        self.kinds.append(kind)
        self.times.append(t)
        self.S.append(S)
        self.Z.append(Z)

    def S_at(self, t: float) -> float:
        k = bisect.bisect_right(self.times, t) - 1
        if k < 0:
            raise DomainError("time precedes the log")
        z = self.Z[k]
        return self.S[k] + (t - self.times[k]) / z if z else self.S[k]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "ev_t": np.array(self.times),
            "ev_S": np.array(self.S),
            "ev_Z": np.array(self.Z),
            "job_arrival": np.array(self.job_arrival),
            "job_size": np.array(self.job_size),
            "job_S_arrival": np.array(self.job_S_arrival),
            "job_departure": np.array(self.job_departure),
        }


# ---------------------------------------------------------------------------
# queue state
# ---------------------------------------------------------------------------


@dataclass
class Job:
    id: int
    arrival: float
    size: float
    threshold: float


class QueueState:
    """Single-owner mutable PS queue state."""

    def __init__(self, initial: Iterable[float] = (), arrivals=None, log: bool = False):
        sizes = [float(v) for v in initial]
        if any(not v > 0 for v in sizes):
            raise DomainError("initial service requirements must be positive")
        self.t = 0.0
        self.S = 0.0
        self.n_arrivals = 0
        self.n_events = 0
        self.area_Z = 0.0
        self.log = EventLog() if log else None
        self._heap: list[tuple[float, int]] = [(v, j) for j, v in enumerate(sizes)]
        heapq.heapify(self._heap)
        self._next_id = len(sizes)
        self._source = arrivals if arrivals is not None else NoArrivals()
        self.next_arrival, self._next_size = self._source.next()
        if self.log is not None:
            self.log.Z[0] = len(sizes)
            for v in sizes:
                self.log.job_arrival.append(0.0)
                self.log.job_size.append(v)
                self.log.job_S_arrival.append(0.0)
                self.log.job_departure.append(INF)

    # -- observables -------------------------------------------------------
    @property
    def Z(self) -> int:
        return len(self._heap)

    def jobs(self) -> list[Job]:
        if self.log is None:
            return [Job(j, math.nan, math.nan, ell) for ell, j in sorted(self._heap)]
        lg = self.log
        return [Job(j, lg.job_arrival[j], lg.job_size[j], ell) for ell, j in sorted(self._heap)]

    def residuals(self, at: float | None = None) -> np.ndarray:
        """Residual service times, sorted; ``at`` extrapolates S to a later time
        before the next event."""
        s = self.S
        if at is not None and self._heap:
            s = self.S + (at - self.t) / len(self._heap)
        return np.sort(np.fromiter((ell - s for ell, _ in self._heap), float, len(self._heap)))

    def workload(self) -> float:
        return math.fsum(ell - self.S for ell, _ in self._heap)

    def next_event_time(self) -> float:
        dep = self.t + len(self._heap) * (self._heap[0][0] - self.S) if self._heap else INF
        return min(dep, self.next_arrival)

    # -- dynamics ----------------------------------------------------------
    def _depart(self, t: float) -> None:
        heap = self._heap
        ell = heap[0][0]
        self.area_Z += len(heap) * (t - self.t)
        self.t = t
        self.S = ell
        while heap and heap[0][0] == ell:
            _, j = heapq.heappop(heap)
            if self.log is not None:
                self.log.job_departure[j] = t
        if self.log is not None:
            self.log.record("departure", t, self.S, len(heap))

    def _arrive(self) -> None:
        heap = self._heap
        ta = self.next_arrival
        if heap:
            self.area_Z += len(heap) * (ta - self.t)
            self.S += (ta - self.t) / len(heap)
        self.t = ta
        j = self._next_id
        self._next_id += 1
        heapq.heappush(heap, (self._next_size + self.S, j))
        self.n_arrivals += 1
        if self.log is not None:
            self.log.job_arrival.append(ta)
            self.log.job_size.append(self._next_size)
            self.log.job_S_arrival.append(self.S)
            self.log.job_departure.append(INF)
            self.log.record("arrival", ta, self.S, len(heap))
        self.next_arrival, self._next_size = self._source.next()

    def advance(self) -> "QueueState":
        """Process exactly one event (departures win ties with arrivals)."""
        heap = self._heap
        ta = self.next_arrival
        if heap:
            ell = heap[0][0]
            dep = self.t + len(heap) * (ell - self.S)
            if dep <= ta:
                self._depart(dep)
            elif self.S + (ta - self.t) / len(heap) >= ell:
                # rounding put the arrival past the exit threshold
                self._depart(ta)
            else:
                self._arrive()
        elif ta < INF:
            self._arrive()
        else:
            raise DomainError("no pending event: empty system and no further arrivals")
        self.n_events += 1
        return self

    def advance_until(self, t_stop: float, max_events: int | None = None) -> "QueueState":
        """Process every event with time <= t_stop."""
        cap = max_events if max_events is not None else INF
        heap = self._heap
        while True:
            ta = self.next_arrival
            if heap:
                ell = heap[0][0]
                dep = self.t + len(heap) * (ell - self.S)
                if dep <= ta:
                    if dep > t_stop:
                        break
                    self._depart(dep)
                elif ta > t_stop:
                    break
                elif self.S + (ta - self.t) / len(heap) >= ell:
                    self._depart(ta)
                else:
                    self._arrive()
            elif ta <= t_stop:
                self._arrive()
            else:
                break
            self.n_events += 1
            if self.n_events > cap:
                raise SimulationAbort(f"event cap {max_events} exceeded at t={self.t:.6g} (Z={len(heap)})")
        return self


def init(initial: Iterable[float] = (), arrivals=None, log: bool = False) -> QueueState:
    return QueueState(initial, arrivals, log)


def advance(state: QueueState) -> QueueState:
    return state.advance()


def state_measure(state: QueueState) -> FiniteMeasure:
    """One unit atom per live job at its residual; zero residuals vanish."""
    return FiniteMeasure.atomic(state.residuals())


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------


@dataclass
class SimPath:
    times: np.ndarray
    atoms: list[np.ndarray]
    Z: np.ndarray
    W: np.ndarray
    S: np.ndarray
    E: np.ndarray
    mass: float = 1.0
    meta: dict[str, Any] = field(default_factory=dict)
    log: EventLog | None = None

    def measure(self, i: int) -> FiniteMeasure:
        a = self.atoms[i]
        return FiniteMeasure.atomic(a, np.full(a.size, self.mass))

    def index(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t))
        for j in (i - 1, i):
            if 0 <= j < self.times.size and abs(self.times[j] - t) <= 1e-9 * max(1.0, abs(t)):
                return j
        raise DomainError(f"t={t} is not a sample time of this path")

    def at(self, t: float) -> FiniteMeasure:
        return self.measure(self.index(t))

    # -- export ------------------------------------------------------------
    def to_csv(self, stem: str | Path) -> tuple[Path, Path]:
        stem = Path(stem)
        main = stem.with_suffix(".csv")
        atoms = stem.with_name(stem.name + "_atoms.csv")
        with open(main, "w") as fh:
            fh.write("t,Z,W,S\n")
            for t, z, w, s in zip(self.times, self.Z, self.W, self.S):
                fh.write(f"{t!r},{z!r},{w!r},{s!r}\n")
        with open(atoms, "w") as fh:
            fh.write("t,location,weight\n")
            for t, a in zip(self.times, self.atoms):
                for x in a:
                    fh.write(f"{t!r},{x!r},{self.mass!r}\n")
        return main, atoms

    def save(self, path: str | Path) -> None:
        import json

        sizes = np.array([a.size for a in self.atoms], dtype=np.int64)
        flat = np.concatenate(self.atoms) if self.atoms else np.empty(0)
        extra = self.log.arrays() if self.log is not None else {}
        np.savez(
            path,
            times=self.times,
            sizes=sizes,
            flat=flat,
            Z=self.Z,
            W=self.W,
            S=self.S,
            E=self.E,
            mass=np.array(self.mass),
            meta=np.array(json.dumps(self.meta, sort_keys=True)),
            **extra,
        )

    @classmethod
    def load(cls, path: str | Path) -> "SimPath":
        import json

        with np.load(path) as d:
            sizes = d["sizes"]
            flat = d["flat"]
            bounds = np.concatenate([[0], np.cumsum(sizes)])
            atoms = [flat[bounds[i] : bounds[i + 1]].copy() for i in range(sizes.size)]
            log = None
            if "ev_t" in d:
                log = EventLog(
                    times=d["ev_t"].tolist(),
                    S=d["ev_S"].tolist(),
                    Z=d["ev_Z"].astype(int).tolist(),
                    job_arrival=d["job_arrival"].tolist(),
                    job_size=d["job_size"].tolist(),
                    job_S_arrival=d["job_S_arrival"].tolist(),
                    job_departure=d["job_departure"].tolist(),
                    kinds=[],
                )
            return cls(
                times=d["times"].copy(),
                atoms=atoms,
                Z=d["Z"].copy(),
                W=d["W"].copy(),
                S=d["S"].copy(),
                E=d["E"].copy(),
                mass=float(d["mass"]),
                meta=json.loads(str(d["meta"])),
                log=log,
            )


def _snapshot(state: QueueState, t: float) -> tuple[np.ndarray, float, float]:
    res = state.residuals(at=t)
    res = res[res > 0]
    S = state.S + (t - state.t) / state.Z if state.Z else state.S
    return res, math.fsum(res.tolist()), S


def simulate(
    initial: Sequence[float],
    arrivals,
    grid: Sequence[float],
    log: bool = False,
    max_events: int = 10**9,
    meta: dict[str, Any] | None = None,
) -> SimPath:
    """Drive a fresh queue through ``grid`` and snapshot the post-event state."""
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid[0] < 0 or np.any(np.diff(grid) <= 0)):
        raise DomainError("grid must be strictly increasing and nonnegative")
    state = QueueState(initial, arrivals, log)
    atoms, Z, W, S, E = [], [], [], [], []
    for g in grid:
        state.advance_until(g, max_events)
        res, w, s = _snapshot(state, g)
        atoms.append(res)
        Z.append(res.size)
        W.append(w)
        S.append(s)
        E.append(state.n_arrivals)
    info = dict(meta or {})
    info["events"] = state.n_events
    return SimPath(
        times=grid,
        atoms=atoms,
        Z=np.array(Z, dtype=float),
        W=np.array(W),
        S=np.array(S),
        E=np.array(E, dtype=float),
        meta=info,
        log=state.log,
    )


# ---------------------------------------------------------------------------
# initial conditions and the r-indexed runner
# ---------------------------------------------------------------------------


def parse_initial(spec) -> tuple[str, Any]:
    """Normalize ``"empty"``, ``{"atoms": [...]}`` or ``{"manifold": w}``."""
    if spec is None or spec == "empty":
        return "empty", None
    if isinstance(spec, dict) and len(spec) == 1:
        (key, val), = spec.items()
        if key == "atoms":
            return "atoms", [float(v) for v in val]
        if key == "manifold":
            return "manifold", float(val)
    raise DomainError(f"unknown initial condition {spec!r}")


def initial_sizes(spec, service: Distribution, r: float, rng: np.random.Generator) -> list[float]:
    kind, val = parse_initial(spec)
    if kind == "empty":
        return []
    if kind == "atoms":
        return val
    if val < 0:
        raise DomainError("manifold workload must be nonnegative")
    n = math.ceil(val * r / service.excess_mean())
    if n == 0:
        return []
    draws = np.asarray(service.excess().sample(rng, n), dtype=float)
    return [float(x) for x in draws if x > 0]


def arrival_source(fam: HeavyTrafficFamily, r: float, streams: Streams):
    inter, service = instantiate_r(fam, r)
    if inter is None:
        return NoArrivals()
    return RenewalArrivals(inter, service, streams("arrivals"), streams("services"))


def run(
    fam: HeavyTrafficFamily,
    r: float,
    horizon: float,
    grid: Sequence[float],
    streams: Streams,
    initial="empty",
    log: bool = False,
    max_events: int = 10**9,
) -> SimPath:
    """Simulate the r-th system in real time on ``grid`` within [0, horizon]."""
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    grid = np.asarray(grid, dtype=float)
    if grid.size and grid[-1] > horizon * (1 + 1e-12):
        raise DomainError("grid extends past the horizon")
    sizes = initial_sizes(initial, fam.service, r, streams("initial"))
    meta = {"seed": streams.seed, "r": r, "replication": streams.replication, "horizon": horizon}
    return simulate(sizes, arrival_source(fam, r, streams), grid, log=log, max_events=max_events, meta=meta)


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------


def scaled_view(path: SimPath, r: float, mode: str, m: float = 0.0, horizon: float | None = None) -> SimPath:
    """Fluid (t/r), diffusion (t/r^2) or shifted-fluid (t/r - m) view; masses /r."""
    if path.meta.get("time_scale", 1.0) != 1.0:
        raise DomainError("scaled_view expects a raw (unscaled) path")
    end = float(path.times[-1]) if path.times.size else 0.0
    if mode == "fluid":
        scale, offset, need = r, 0.0, None if horizon is None else horizon * r
    elif mode == "diffusion":
        scale, offset, need = r * r, 0.0, None if horizon is None else horizon * r * r
    elif mode == "shifted":
        scale, offset = r, m
        need = (m + (horizon or 0.0)) * r
    else:
        raise DomainError(f"unknown scaling mode {mode!r}")
    if need is not None and need > end * (1 + 1e-12) + 1e-12:
        raise DomainError(f"requested horizon needs real time {need}, path ends at {end}")
    times = path.times / scale - offset
    keep = times >= -1e-12 * max(1.0, offset)
    times = np.where(keep, np.maximum(times, 0.0), times)[keep]
    idx = np.nonzero(keep)[0]
    meta = dict(path.meta, time_scale=scale, time_offset=offset, mode=mode)
    return SimPath(
        times=times,
        atoms=[path.atoms[i] for i in idx],
        Z=path.Z[idx] / r,
        W=path.W[idx] / r,
        S=path.S[idx],
        E=path.E[idx] / r,
        mass=path.mass / r,
        meta=meta,
        log=path.log,
    )


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def replay_check(path: SimPath, t: float, h: float, g: Callable) -> float:
    """Residual of the dynamic equation between t and t+h, from the event log."""
    if path.log is None:
        raise UnsupportedOperation("replay_check needs a path simulated with log=True")
    if path.meta.get("time_scale", 1.0) != 1.0:
        raise DomainError("replay_check works in raw time on an unscaled path")
    if t < 0 or h < 0:
        raise DomainError("t and h must be nonnegative")
    lg = path.log
    arr = np.asarray(lg.job_arrival)
    size = np.asarray(lg.job_size)
    s_arr = np.asarray(lg.job_S_arrival)
    dep = np.asarray(lg.job_departure)
    thr = size + s_arr
    s_t = lg.S_at(t)
    s_th = lg.S_at(t + h)
    inc = s_th - s_t

    def gv(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(g(x), dtype=float), x.shape)

    def killed(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, gv(np.where(x > 0, x, 1.0)), 0.0)

    # Residuals are taken against stored thresholds: v_i - S_{U_i,t+h} is
    # thr_i - S(t+h) exactly as the simulator rounds it, so a job that left at
    # S = thr_i cannot reappear with a one-ulp positive residual.
    now = (arr <= t) & (dep > t)
    later = (arr <= t + h) & (dep > t + h)
    lhs = float(np.sum(gv(thr[later] - s_th)))
    transported = float(np.sum(killed(thr[now] - (s_t + inc))))
    new = (arr > t) & (arr <= t + h)
    influx = float(np.sum(killed(thr[new] - s_th)))
    return abs(lhs - transported - influx)


def fifo_workload(initial: Sequence[float], arrivals, grid: Sequence[float]) -> np.ndarray:
    """Reference FIFO workload on ``grid`` (workload is discipline-free)."""
    w = math.fsum(initial)
    t = 0.0
    ta, v = arrivals.next()
    out = []
    for g in grid:
        while ta <= g:
            w = max(w - (ta - t), 0.0) + v
            t = ta
            ta, v = arrivals.next()
        out.append(max(w - (g - t), 0.0))
    return np.array(out)


__all__ = [
    "EventLog",
    "ExplicitArrivals",
    "Job",
    "NoArrivals",
    "QueueState",
    "RenewalArrivals",
    "SimPath",
    "advance",
    "arrival_source",
    "fifo_workload",
    "init",
    "initial_sizes",
    "parse_initial",
    "replay_check",
    "run",
    "scaled_view",
    "simulate",
    "state_measure",
]
