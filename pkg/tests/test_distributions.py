import math

import numpy as np
import pytest

from psdiffusion.distributions import (
    BoundedPareto,
    Deterministic,
    Erlang,
    Exponential,
    HeavyTrafficFamily,
    HyperExponential,
    Pareto,
    Streams,
    Uniform,
    excess_cdf,
    excess_mean,
    from_spec,
    instantiate_r,
    sample,
    stream,
    validate_assumptions,
)
from psdiffusion.errors import DomainError

HYPER = HyperExponential((0.5, 0.5), (1.0, 2.0))
CATALOG = [
    Exponential(1.0),
    Exponential(2.5),
    Deterministic(1.0),
    Uniform(0.5, 1.5),
    Erlang(3, 2.0),
    HYPER,
    BoundedPareto(1.5, 0.2, 20.0),
]


def test_excess_cdf_examples():
    assert excess_cdf(Exponential(1.0), 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert excess_cdf(Deterministic(1.0), 0.5) == pytest.approx(0.5, abs=1e-12)
    # frozen: scipy.integrate.quad of 2/3 * int_0^1 (0.5 e^-y + 0.5 e^-2y) dy
    assert excess_cdf(HYPER, 1.0) == pytest.approx(0.7096352781401675, abs=1e-10)
    # frozen: quad of the Erlang(3, 2) tail divided by its mean
    assert excess_cdf(Erlang(3, 2.0), 1.0) == pytest.approx(0.5939941502901619, abs=1e-9)


def test_excess_cdf_closed_forms_sup_error():
    x = np.linspace(0, 12, 2001)
    assert np.max(np.abs(Exponential(1.0).excess_cdf(x) - (1 - np.exp(-x)))) <= 1e-8
    assert np.max(np.abs(Deterministic(1.0).excess_cdf(x) - np.clip(x, 0, 1))) <= 1e-8


@pytest.mark.parametrize("nu", CATALOG, ids=lambda d: d.kind)
def test_excess_cdf_monotone_and_limits(nu):
    x = np.linspace(0, nu.upper(1e-12) * 1.5, 400)
    f = nu.excess_cdf(x)
    assert f[0] == 0.0
    assert np.all(np.diff(f) >= -1e-14)
    assert f[-1] == pytest.approx(1.0, abs=1e-8)


def test_excess_mean_examples():
    assert excess_mean(Exponential(1.0)) == pytest.approx(1.0, rel=1e-12)
    assert excess_mean(Deterministic(1.0)) == pytest.approx(0.5, rel=1e-12)
    # frozen: quad of x * beta * P(v > x) over (0, inf)
    assert excess_mean(HYPER) == pytest.approx(0.8333333333333333, abs=1e-8)


@pytest.mark.parametrize("nu", CATALOG, ids=lambda d: d.kind)
def test_excess_mean_matches_excess_law(nu):
    assert nu.excess().mean == pytest.approx(nu.excess_mean(), rel=1e-8)


def test_excess_mean_infinite_second_moment():
    with pytest.raises(DomainError):
        excess_mean(Pareto(1.5, 1.0))


@pytest.mark.parametrize("nu", CATALOG, ids=lambda d: d.kind)
def test_cdf_grid_invariants(nu):
    x = np.linspace(0, nu.upper(1e-14) * 2, 500)
    c = nu.cdf(x)
    assert c[0] == 0.0
    assert np.all(np.diff(c) >= -1e-15)
    assert c[-1] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("nu", CATALOG, ids=lambda d: d.kind)
def test_moment_cache_vs_monte_carlo(nu):
    rng = stream(5, 1.0, 0, "services")
    v = np.asarray(nu.sample(rng, 10**6))
    n = v.size
    assert np.all(v > 0)
    se_mean = v.std() / math.sqrt(n)
    assert abs(v.mean() - nu.mean) <= 5 * max(se_mean, 1e-12)
    if nu.std > 0:
        d2 = (v - v.mean()) ** 2
        se_var = d2.std() / math.sqrt(n)
        assert abs(d2.mean() - nu.std**2) <= 5 * se_var


def test_sample_examples():
    rng = np.random.default_rng(1)
    assert all(sample(Deterministic(1.0), rng) == 1.0 for _ in range(10))
    v = Exponential(1.0).sample(rng, 10**6)
    assert abs(v.mean() - 1.0) <= 0.005
    bp = BoundedPareto(1.5, 0.2, 20.0)
    w = bp.sample(rng, 10**5)
    assert w.min() >= 0.2 and w.max() <= 20.0


def test_instantiate_r_examples():
    fam0 = HeavyTrafficFamily(Exponential(1.0), lam=0.0)
    for r in (1.0, 10.0, 1e3):
        inter, nu = instantiate_r(fam0, r)
        assert inter.alpha == pytest.approx(1.0, rel=1e-12)
    fam = HeavyTrafficFamily(Exponential(1.0), lam=1.0)
    inter, nu = instantiate_r(fam, 10.0)
    assert inter.alpha == pytest.approx(0.9, rel=1e-12)
    assert inter.alpha / nu.beta == pytest.approx(0.9, rel=1e-12)
    inter, nu = instantiate_r(fam, 40.0)
    assert inter.alpha / nu.beta == pytest.approx(0.975, rel=1e-12)
    for r in (2.0, 7.5, 40.0):
        inter, nu = instantiate_r(fam, r)
        assert r * (1 - inter.alpha / nu.beta) == pytest.approx(1.0, rel=1e-12)


def test_instantiate_r_keeps_interarrival_shape():
    fam = HeavyTrafficFamily(Deterministic(2.0), interarrival=Erlang(4, 1.0), lam=0.5)
    inter, nu = instantiate_r(fam, 5.0)
    assert nu == Deterministic(2.0)
    assert inter.law.kind == "erlang"
    assert inter.alpha == pytest.approx(0.5 * (1 - 0.5 / 5.0), rel=1e-12)
    assert inter.a * inter.alpha == pytest.approx(0.5, rel=1e-12)  # coefficient of variation 1/sqrt(4)


def test_instantiate_r_domain():
    fam = HeavyTrafficFamily(Exponential(1.0), lam=2.0)
    with pytest.raises(DomainError):
        instantiate_r(fam, 2.0)
    with pytest.raises(DomainError):
        instantiate_r(HeavyTrafficFamily(Exponential(1.0)), 0.0)


def test_validate_assumptions():
    assert validate_assumptions(HeavyTrafficFamily(Exponential(1.0), theta=0.5)).ok
    assert validate_assumptions(HeavyTrafficFamily(BoundedPareto(1.5, 0.2, 20.0))).ok
    rep = validate_assumptions(HeavyTrafficFamily(Pareto(3.0, 1.0)))
    assert not rep.ok
    failing = [c for c in rep.checks if not c.passed]
    assert len(failing) == 1 and "4+theta" in failing[0].name and failing[0].value == math.inf


def test_renewal_inversion_by_recount():
    from psdiffusion.simulation import RenewalArrivals

    fam = HeavyTrafficFamily(Exponential(1.0), interarrival=Erlang(2, 1.0), lam=1.0)
    for rep in range(100):
        st = Streams(9, 4.0, rep)
        inter, nu = instantiate_r(fam, 4.0)
        src = RenewalArrivals(inter, nu, st("arrivals"), st("services"))
        times = [src.next()[0] for _ in range(60)]
        gaps = stream(9, 4.0, rep, "arrivals")
        u = [float(inter.first_law.sample(gaps))] + list(inter.law.sample(gaps, 4096)[:59])
        U = np.cumsum(u)
        assert np.allclose(times, U, rtol=0, atol=1e-9)
        for t in np.linspace(0, U[-1], 25):
            brute = sum(1 for x in U if x <= t)
            assert int(np.searchsorted(times, t, side="right")) == brute


def test_spec_round_trip():
    for nu in CATALOG + [Pareto(3.0, 1.0), Exponential(1.0).excess()]:
        assert from_spec(nu.to_spec()) == nu
    with pytest.raises(DomainError):
        from_spec({"kind": "nope"})
    with pytest.raises(DomainError):
        from_spec({"kind": "uniform", "low": 1.0})


def test_streams_independent_and_reproducible():
    a = stream(1, 10.0, 0, "arrivals").random(5)
    assert np.array_equal(a, stream(1, 10.0, 0, "arrivals").random(5))
    for other in (stream(2, 10.0, 0, "arrivals"), stream(1, 20.0, 0, "arrivals"), stream(1, 10.0, 1, "arrivals"), stream(1, 10.0, 0, "services")):
        assert not np.array_equal(a, other.random(5))


def test_laws_reject_bad_parameters():
    for bad in (lambda: Exponential(0.0), lambda: Deterministic(0.0), lambda: Uniform(1.0, 0.5), lambda: Pareto(1.0, 1.0)):
        with pytest.raises(DomainError):
            bad()
