import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import vertex_enumeration_max
from robusthedge.errors import InfeasibleModel, OffGridPath
from robusthedge.marginals import MarginalDistribution, MarketSpec, check_convex_order
from robusthedge.payoffs import PathSpace, PayoffSpec, payoff_vector
from robusthedge.superhedge import (
    HedgePortfolio,
    evaluate_psi,
    psi_vector,
    superhedge_price,
    verify_superhedge,
)


def test_evaluate_psi_examples():
    space = PathSpace([[90, 100, 110], [80, 100, 120]])
    h = HedgePortfolio.zero(space)
    assert all(evaluate_psi(h, p) == 0 for p in space.paths)
    h.dynamic_legs[0][:] = 1.0
    assert evaluate_psi(h, (100, 120)) == 20
    h.static_legs[0][:] = space.axes[0]
    h.static_legs[1][:] = -space.axes[1]
    assert np.all(psi_vector(h) == 0)
    with pytest.raises(OffGridPath):
        evaluate_psi(h, (100, 121))


def test_psi_vector_matches_pointwise(rng):
    space = PathSpace([[90, 110], [80, 100, 120], [60, 100, 140]])
    h = HedgePortfolio(
        space,
        rng.normal(),
        [rng.normal(size=k) for k in space.shape],
        [rng.normal(size=space.prefix_count(j)) for j in (1, 2)],
    )
    np.testing.assert_allclose(psi_vector(h), [evaluate_psi(h, p) for p in space.paths], atol=1e-12)


def test_single_date_is_expectation():
    law = MarginalDistribution(1, [80, 100, 130], [0.2, 0.5, 0.3])
    spec = MarketSpec.of(law.mean, law)
    phi = PayoffSpec("asian_call", {"strike": 90})
    rep = superhedge_price(spec, phi)
    assert rep.primal_value == pytest.approx(0.5 * 10 + 0.3 * 40, abs=1e-9)


def test_unique_coupling_abs_move(coupling_market):
    space = PathSpace.from_market(coupling_market)
    rep = superhedge_price(coupling_market, PayoffSpec.from_function(space, lambda s: abs(s[1] - s[0])))
    assert rep.primal_value == pytest.approx(20.0, abs=1e-9)
    assert rep.gap <= 1e-7 and rep.violation <= 1e-9


def test_two_date_matches_vertex_oracle(two_date_market):
    space = PathSpace.from_market(two_date_market)
    fn = lambda s: max(s[1] - s[0], 0.0)  # noqa: E731
    rep = superhedge_price(two_date_market, PayoffSpec.from_function(space, fn))
    oracle = vertex_enumeration_max([[90, 110], [80, 100, 120]], [[0.5, 0.5], [1 / 3] * 3], fn)
    assert rep.primal_value == pytest.approx(oracle, abs=1e-9)


def test_verify_superhedge_examples():
    space = PathSpace([[100], [80, 120]])
    zero = HedgePortfolio.zero(space)
    assert verify_superhedge(zero, PayoffSpec.table([0.0, 0.0]), space) == 0
    assert verify_superhedge(zero, PayoffSpec("digital_above", {"level": 115}), space) == 1


def test_infeasible_market():
    spec = MarketSpec.of(100, MarginalDistribution.uniform([80, 120]), MarginalDistribution.dirac(100))
    with pytest.raises(InfeasibleModel) as err:
        superhedge_price(spec, PayoffSpec("lookback_max"))
    assert err.value.report.order_violations


def test_translation_and_monotonicity(two_date_market):
    space = PathSpace.from_market(two_date_market)
    phi = payoff_vector(PayoffSpec("lookback_max", {"strike": 100}), space)
    base = superhedge_price(two_date_market, phi).primal_value
    assert superhedge_price(two_date_market, phi + 7.25).primal_value == pytest.approx(base + 7.25, abs=1e-9)
    bigger = phi + np.linspace(0, 1, phi.size)
    assert superhedge_price(two_date_market, bigger).primal_value >= base - 1e-9




markets = st.builds(
    lambda a, b, w: MarketSpec.of(
        100.0,
        MarginalDistribution(1, [100 - a, 100 + a], [0.5, 0.5]),
        MarginalDistribution(2, [100 - a - b, 100, 100 + a + b], [w / 2, 1 - w, w / 2]),
    ),
    st.floats(1.0, 20.0),
    st.floats(0.0, 20.0),
    st.floats(0.0, 1.0),
)


@settings(max_examples=30, deadline=None)
@given(markets, st.sampled_from(["asian_call", "lookback_max", "digital_above", "forward_start_call"]))
def test_strong_duality_property(spec, kind):
    assume(check_convex_order(spec).passed)
    params = {"level": 100.0} if kind == "digital_above" else {"strike": 95.0} if kind == "asian_call" else {}
    rep = superhedge_price(spec, PayoffSpec(kind, params))
    assert rep.gap <= 1e-7
    assert rep.violation <= 1e-9
    assert max(rep.optimal_measure.residuals(spec).values()) <= 1e-9
    assert rep.optimal_measure.expectation(payoff_vector(PayoffSpec(kind, params), rep.hedge.space)) == pytest.approx(
        rep.primal_value, abs=1e-7
    )


def test_weak_duality_random_pairs(two_date_market, rng):
    """Any dominating hedge costs at least E^Q[phi] for every martingale measure Q."""
    space = PathSpace.from_market(two_date_market)
    phi = payoff_vector(PayoffSpec("lookback_max", {"strike": 100}), space)
    measures = [superhedge_price(two_date_market, rng.normal(size=space.size)).optimal_measure for _ in range(8)]
    for _ in range(20):
        h = HedgePortfolio(
            space,
            0.0,
            [rng.normal(size=k) for k in space.shape],
            [rng.normal(size=space.prefix_count(1))],
        )
        h = h.shifted(float((phi - psi_vector(h)).max()))
        cost = h.cost(two_date_market)
        for q in measures:
            assert cost >= q.expectation(phi) - 1e-9
