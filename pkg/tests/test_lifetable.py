import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from submort.core import AgeGrid
from submort.lifetable import (
    LifeTableError, e0_posterior, life_expectancy, rates_to_lifetable, survivorship_to_rates,
)
from submort.simulator import STANDARD_RATES, BrassParams, brass_rates, standard_lifetable

GRID = AgeGrid()


def brute_force_e0(m, bounds):
    """Textbook life table written out one interval at a time."""
    n = [bounds[i + 1] - bounds[i] for i in range(len(bounds) - 1)]
    l, total = 1.0, 0.0
    for i, w in enumerate(n):
        if i == 0 and w == 1:
            a = min(max(0.07 + 1.7 * m[0], 0.01), 0.5)
        else:
            a = w / 2
        q = min(w * m[i] / (1 + (w - a) * m[i]), 1.0)
        dead = l * q
        total += w * (l - dead) + a * dead
        l -= dead
    return total + l / m[-1]


rate_vectors = arrays(np.float64, 19, elements=st.floats(1e-5, 0.5))
# below 0.4 every closed 5-year interval keeps q < 1, so survivorship stays positive
invertible_rates = arrays(np.float64, 19, elements=st.floats(1e-5, 0.35))


def test_open_interval_identity():
    m = np.array(STANDARD_RATES)
    m[-1] = 0.125
    lt = rates_to_lifetable(m)
    assert lt.e[-1] == pytest.approx(8.0, abs=1e-12)
    assert lt.q[-1] == 1.0


def test_single_year_interval_arithmetic():
    # width 1 closed interval with a = 0.5 needs m0 large enough for the cap
    lt = rates_to_lifetable(np.array([0.3, 0.1]), AgeGrid((0, 1)))
    assert lt.a[0] == 0.5
    assert lt.q[0] == pytest.approx(0.3 / 1.15, rel=1e-14)
    lt2 = rates_to_lifetable(np.array([0.01, 0.1]), AgeGrid((0, 1)))
    a0 = 0.07 + 1.7 * 0.01
    assert lt2.q[0] == pytest.approx(0.01 / (1 + (1 - a0) * 0.01), rel=1e-14)


def test_q_for_half_year_separation():
    # a = n/2 for a width-2 interval starting past age 0
    lt = rates_to_lifetable(np.array([0.02, 0.01, 0.1]), AgeGrid((0, 2, 3)))
    assert lt.q[1] == pytest.approx(0.01 / 1.005, rel=1e-14)
    assert lt.q[1] == pytest.approx(0.0099502, abs=1e-7)


def test_fixture_e0_matches_brute_force():
    m = np.array(STANDARD_RATES)
    assert life_expectancy(m) == pytest.approx(brute_force_e0(m, list(GRID.lower_bounds)), abs=1e-10)


@given(rate_vectors)
def test_e0_matches_brute_force(m):
    assert abs(life_expectancy(m) - brute_force_e0(m, list(GRID.lower_bounds))) < 1e-10 * max(1, life_expectancy(m))


@given(rate_vectors)
def test_lifetable_invariants(m):
    lt = rates_to_lifetable(m)
    assert lt.l[0] == 1 and np.all(np.diff(lt.l) <= 0) and np.all(lt.l >= 0)
    assert np.all((lt.q >= 0) & (lt.q <= 1)) and lt.q[-1] == 1
    assert lt.d.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(lt.e[lt.l > 0] > 0)
    assert lt.T[0] == pytest.approx(lt.L.sum(), rel=1e-12)


@given(rate_vectors, st.integers(0, 18), st.floats(1.01, 3.0))
def test_raising_a_rate_never_raises_e0(m, i, factor):
    m2 = m.copy()
    m2[i] *= factor
    assert life_expectancy(m2) <= life_expectancy(m) + 1e-12


@given(invertible_rates)
def test_rates_survivorship_round_trip(m):
    lt = rates_to_lifetable(m)
    back = survivorship_to_rates(lt.l, lt.e[-1])
    np.testing.assert_allclose(back, m, rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(rates_to_lifetable(back).l, lt.l, rtol=0, atol=1e-10)


def test_geometric_survivorship_gives_constant_q():
    grid = AgeGrid(tuple(range(0, 11)))
    l = 0.99 ** np.arange(11)
    m = survivorship_to_rates(l, 50.0, grid)
    lt = rates_to_lifetable(m, grid)
    np.testing.assert_allclose(lt.q[:-1], 0.01, rtol=1e-12)


def test_constant_hazard_fine_grid():
    grid = AgeGrid(tuple(range(0, 111)))
    for h in (0.01, 0.02, 0.05):
        e0 = life_expectancy(np.full(111, h), grid)
        assert abs(e0 - 1 / h) < 0.02 / h


def test_brass_transformed_standard_step_by_step():
    std = standard_lifetable()
    p = BrassParams(0.3, 1.0)
    got = brass_rates(std, p)
    # oracle chain: logit -> l -> q -> m, written per age
    n = GRID.widths
    ls = [1.0]
    for x in range(1, 19):
        lg = np.log(std.l[x] / (1 - std.l[x]))
        ls.append(1 / (1 + np.exp(-(0.3 + lg))))
    expect = []
    for x in range(18):
        q = 1 - ls[x + 1] / ls[x]
        if x == 0:
            # invert q = m / (1 + (1 - a(m)) m) by bisection
            lo, hi = 0.0, 1.0
            for _ in range(200):
                mid = (lo + hi) / 2
                a = min(max(0.07 + 1.7 * mid, 0.01), 0.5)
                lo, hi = (mid, hi) if mid / (1 + (1 - a) * mid) < q else (lo, mid)
            expect.append(lo)
        else:
            expect.append(q / (n[x] - n[x] / 2 * q))
    np.testing.assert_allclose(got[:18], expect, rtol=1e-10)
    # terminal rate keeps the standard's last-to-previous ratio
    assert got[18] / got[17] == pytest.approx(std.m[18] / std.m[17], rel=1e-12)


def test_survivorship_checks():
    with pytest.raises(LifeTableError):
        survivorship_to_rates(np.array([0.9, 0.8, 0.7]), 5.0, AgeGrid((0, 1, 5)))
    with pytest.raises(LifeTableError):
        survivorship_to_rates(np.array([1.0, 0.8, 0.9]), 5.0, AgeGrid((0, 1, 5)))
    with pytest.raises(LifeTableError):
        rates_to_lifetable(np.array([0.01, 0.0, 0.1]), AgeGrid((0, 1, 5)))


def test_e0_posterior_identical_draws_zero_width():
    m = np.array(STANDARD_RATES)
    s = e0_posterior(np.tile(m, (5, 1)))
    assert s["lo"] == s["hi"] == s["median"]


def test_e0_posterior_two_draws_median_midpoint():
    grid = AgeGrid((0,))
    s = e0_posterior(np.array([[1 / 70], [1 / 80]]), grid)
    assert s["median"] == pytest.approx(75.0, abs=1e-12)


def test_e0_posterior_matches_oracle_quantiles():
    rng = np.random.default_rng(8)
    draws = np.array(STANDARD_RATES) * np.exp(rng.normal(0, 0.1, (500, 19)))
    s = e0_posterior(draws)
    e0 = np.sort([brute_force_e0(m, list(GRID.lower_bounds)) for m in draws])

    def q(p):
        h = (len(e0) - 1) * p
        lo = int(np.floor(h))
        return e0[lo] + (h - lo) * (e0[min(lo + 1, len(e0) - 1)] - e0[lo])

    assert s["lo"] == pytest.approx(q(0.025), abs=1e-9)
    assert s["hi"] == pytest.approx(q(0.975), abs=1e-9)
    assert s["median"] == pytest.approx(q(0.5), abs=1e-9)


def test_lifetable_csv_columns(tmp_path):
    lt = rates_to_lifetable(np.array(STANDARD_RATES))
    path = tmp_path / "lt.csv"
    lt.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "age_lower,m,a,q,l,d,L,T,e"
