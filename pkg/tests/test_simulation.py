import math

import numpy as np
import pytest

from psdiffusion.distributions import Deterministic, Exponential, HeavyTrafficFamily, Streams
from psdiffusion.errors import DomainError, SimulationAbort, UnsupportedOperation
from psdiffusion.measure import CHI, ONE, DEFAULT_FAMILY, integrate
from psdiffusion.simulation import (
    ExplicitArrivals,
    SimPath,
    arrival_source,
    fifo_workload,
    init,
    replay_check,
    run,
    scaled_view,
    simulate,
    state_measure,
)

MM1_HALF = HeavyTrafficFamily(Exponential(1.0), lam=0.5)  # rho = 0.5 at r = 1


def test_init_examples():
    q = init([])
    assert state_measure(q).is_zero and q.Z == 0 and q.workload() == 0.0
    q = init([1.0, 2.0])
    assert state_measure(q).locations.tolist() == [1.0, 2.0]
    assert q.workload() == 3.0 and q.S == 0.0
    q = init([0.5, 0.5])
    assert q.Z == 2 and state_measure(q).locations.tolist() == [0.5, 0.5]
    with pytest.raises(DomainError):
        init([1.0, 0.0])


def test_advance_examples():
    q = init([1.0])
    q.advance()
    assert q.t == 1.0 and q.Z == 0
    q = init([2.0, 1.0])
    q.advance()
    assert q.t == 2.0 and q.Z == 1
    q.advance()
    assert q.t == 3.0 and q.Z == 0
    q = init([], ExplicitArrivals([5.0], [1.0]))
    q.advance()
    assert q.t == 5.0 and q.S == 0.0 and q.Z == 1
    with pytest.raises(DomainError):
        init([]).advance()


def test_mid_service_measure():
    q = init([2.0, 1.0])
    q.advance_until(1.0)
    assert q.residuals(at=1.0).tolist() == [0.5, 1.5]


def test_departure_removes_job_from_measure():
    q = init([1.0, 3.0])
    q.advance()
    assert state_measure(q).locations.tolist() == [2.0]


def test_tied_thresholds_depart_together():
    q = init([1.0, 1.0, 1.0])
    q.advance()
    assert q.Z == 0 and q.t == 3.0 and q.n_events == 1


def test_departure_before_arrival_at_same_instant():
    q = init([1.0], ExplicitArrivals([1.0], [2.0]), log=True)
    q.advance()
    assert q.log.kinds[-1] == "departure" and q.Z == 0
    q.advance()
    assert q.log.kinds[-1] == "arrival" and q.Z == 1


def test_run_examples():
    fam = HeavyTrafficFamily(Exponential(1.0), arrivals=False)
    p = run(fam, 1.0, 5.0, np.linspace(0, 5, 11), Streams(1))
    assert np.all(p.Z == 0) and np.all(p.W == 0)
    p = simulate([], ExplicitArrivals([0.0], [1.0]), [0.0, 0.5, 0.999, 1.0, 2.0])
    assert p.Z.tolist() == [1, 1, 1, 0, 0]


def test_snapshot_is_post_event():
    p = simulate([1.0], ExplicitArrivals([2.0], [1.0]), [1.0, 2.0])
    assert p.Z.tolist() == [0, 1]


def test_mm1_time_average_queue_length():
    """rho = 0.5: mean number in system 1 (shared by PS and FIFO)."""
    st = Streams(31, 1.0, 0)
    from psdiffusion.simulation import QueueState

    q = QueueState([], arrival_source(MM1_HALF, 1.0, st))
    edges = np.linspace(0, 1e4, 21)
    areas = []
    for e in edges[1:]:
        q.advance_until(e)
        areas.append(q.area_Z + q.Z * (e - q.t))
    areas = np.diff(np.concatenate([[0.0], areas])) / np.diff(edges)
    mean = areas.mean()
    se = areas.std(ddof=1) / math.sqrt(areas.size)
    assert abs(mean - 1.0) <= 3 * se


def test_invariants_along_run():
    p = run(MM1_HALF, 1.0, 2000.0, np.linspace(0, 2000, 4001), Streams(3), log=True)
    assert np.all(np.diff(p.S) >= 0)
    assert np.all(p.Z >= 0) and np.all(p.W >= 0)
    for i in range(p.times.size):
        assert (p.W[i] == 0) == (p.atoms[i].size == 0)
        assert p.W[i] == pytest.approx(integrate(CHI, p.measure(i)), rel=1e-12, abs=1e-12)
        assert np.all(p.atoms[i] > 0)
    idle = p.Z[:-1] == 0
    # S is flat across idle stretches (both end points idle, no arrival between)
    flat = idle & (p.Z[1:] == 0) & (np.diff(p.E) == 0)
    assert np.all(np.diff(p.S)[flat] == 0)
    # queue growth bound
    z, e = p.Z, p.E
    for h in (1, 7, 50):
        assert np.all(z[h:] <= z[:-h] + e[h:] - e[:-h])


def test_work_conservation_between_events():
    p = run(MM1_HALF, 1.0, 3000.0, [3000.0], Streams(4), log=True)
    lg = p.log
    # rebuild W just after every event from the job log
    t = np.array(lg.times)
    worst = 0.0
    arr = np.array(lg.job_arrival)
    thr = np.array(lg.job_size) + np.array(lg.job_S_arrival)
    dep = np.array(lg.job_departure)
    for k in range(1, 400):
        if lg.Z[k] == 0 or lg.kinds[k + 1] != "departure":
            continue
        live = (arr <= t[k]) & (dep > t[k])
        w0 = float(np.sum(thr[live] - lg.S[k]))
        live1 = (arr <= t[k + 1]) & (dep > t[k + 1])
        w1 = float(np.sum(thr[live1] - lg.S[k + 1]))
        worst = max(worst, abs((w1 - w0) + (t[k + 1] - t[k])))
    assert worst <= 1e-9


def test_fifo_workload_equivalence():
    fam = HeavyTrafficFamily(Deterministic(1.0), lam=1.0)
    r = 8.0
    grid = np.linspace(0, 400.0, 200)
    p = run(fam, r, 400.0, grid, Streams(12, r, 3))
    ref = fifo_workload([], arrival_source(fam, r, Streams(12, r, 3)), grid)
    assert np.max(np.abs(ref - p.W)) <= 1e-9


def test_determinism_bit_identical():
    grid = np.linspace(0, 500, 51)
    a = run(MM1_HALF, 1.0, 500.0, grid, Streams(8), initial={"manifold": 2.0})
    b = run(MM1_HALF, 1.0, 500.0, grid, Streams(8), initial={"manifold": 2.0})
    for x, y in zip(a.atoms, b.atoms):
        assert np.array_equal(x, y)
    assert np.array_equal(a.S, b.S) and np.array_equal(a.W, b.W)


def test_initial_conditions():
    fam = HeavyTrafficFamily(Exponential(1.0), arrivals=False)
    p = run(fam, 10.0, 1.0, [0.0], Streams(1, 10.0), initial={"manifold": 1.5})
    assert p.Z[0] == 15  # ceil(1.5 * 10 / excess mean 1)
    p = run(fam, 10.0, 1.0, [0.0], Streams(1, 10.0), initial={"atoms": [0.5, 2.0]})
    assert p.atoms[0].tolist() == [0.5, 2.0]
    with pytest.raises(DomainError):
        run(fam, 10.0, 1.0, [0.0], Streams(1), initial={"weird": 1})


def test_run_preconditions_and_abort():
    with pytest.raises(DomainError):
        run(MM1_HALF, 1.0, 0.0, [0.0], Streams(1))
    with pytest.raises(DomainError):
        run(MM1_HALF, 1.0, 1.0, [2.0], Streams(1))
    with pytest.raises(SimulationAbort, match="event cap"):
        run(MM1_HALF, 1.0, 1e4, [1e4], Streams(1), max_events=100)


def test_scaled_view_identities():
    r = 5.0
    fam = HeavyTrafficFamily(Exponential(1.0), lam=1.0)
    diff_times = np.linspace(0, 2.0, 41)
    raw = diff_times * r * r
    p = run(fam, r, raw[-1], raw, Streams(2, r))
    fl = scaled_view(p, r, "fluid")
    di = scaled_view(p, r, "diffusion", horizon=2.0)
    assert np.allclose(fl.Z, p.Z / r) and fl.mass == 1 / r
    # mu_hat(t) == mu_bar(r t): same snapshot, same weights
    rng = np.random.default_rng(0)
    for i in rng.integers(0, diff_times.size, 100):
        assert di.times[i] * r == pytest.approx(fl.times[i], rel=1e-12)
        assert np.array_equal(di.measure(i).locations, fl.measure(i).locations)
        assert np.array_equal(di.measure(i).weights, fl.measure(i).weights)
    sh = scaled_view(p, r, "shifted", m=2.0, horizon=1.0)
    assert sh.times[0] == 0.0
    with pytest.raises(DomainError):
        scaled_view(p, r, "diffusion", horizon=3.0)
    with pytest.raises(DomainError):
        scaled_view(p, r, "sideways")


def test_scaled_view_r_one_identity():
    p = simulate([1.0, 2.0], None, [0.0, 1.0])
    for mode in ("fluid", "diffusion", "shifted"):
        v = scaled_view(p, 1.0, mode)
        assert np.array_equal(v.atoms[0], p.atoms[0]) and v.mass == 1.0 and v.times[0] == 0.0


def test_replay_check():
    empty = run(HeavyTrafficFamily(Exponential(1.0), arrivals=False), 1.0, 10.0, [10.0], Streams(1), log=True)
    assert replay_check(empty, 1.0, 3.0, ONE) == 0.0
    p = run(MM1_HALF, 1.0, 5000.0, [5000.0], Streams(6), log=True)
    rng = np.random.default_rng(2)
    for _ in range(100):
        t = rng.uniform(0, 4000)
        h = rng.uniform(0, 1000)
        assert replay_check(p, t, h, ONE) <= 1e-9
        assert replay_check(p, t, h, CHI) <= 1e-9
        assert replay_check(p, t, h, DEFAULT_FAMILY.g(int(rng.integers(1, 65)))) <= 1e-9
    nolog = run(MM1_HALF, 1.0, 10.0, [10.0], Streams(6))
    with pytest.raises(UnsupportedOperation):
        replay_check(nolog, 1.0, 1.0, ONE)


def test_export_round_trip(tmp_path):
    p = run(MM1_HALF, 1.0, 200.0, np.linspace(0, 200, 21), Streams(5), log=True, initial={"atoms": [1.0, 2.5]})
    main, atoms = p.to_csv(tmp_path / "path")
    lines = main.read_text().splitlines()
    assert lines[0] == "t,Z,W,S" and len(lines) == 22
    assert atoms.read_text().splitlines()[0] == "t,location,weight"
    p.save(tmp_path / "path.npz")
    q = SimPath.load(tmp_path / "path.npz")
    assert np.array_equal(q.times, p.times) and np.array_equal(q.W, p.W)
    assert all(np.array_equal(a, b) for a, b in zip(p.atoms, q.atoms))
    assert q.meta == p.meta
    assert replay_check(q, 10.0, 50.0, CHI) <= 1e-9
