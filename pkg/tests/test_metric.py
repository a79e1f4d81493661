import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnsaudit.metric import (
    DEFAULT_WEIGHTS,
    Scaling,
    WeightError,
    WeightTable,
    domain_metric,
    failure_probability,
    normalize,
    parse_weights,
    scaled_factor,
    single_domain_normalized,
    theoretical_max,
)
from dnsaudit.suite import TestId, TestOutcome

from oracles import weighted_sum


def passing():
    return [TestOutcome(t, 0, 0, 1) for t in TestId]


def with_failure(test_id, n_err=1, n_tot=1):
    outs = passing()
    outs[int(test_id) - 1] = TestOutcome(test_id, 1, n_err, n_tot)
    return outs


def test_default_weight_table():
    t = WeightTable()
    assert [t.weight(i) for i in TestId] == [10, 4, 8, 8, 4, 6, 5, 5, 2, 2, 2, 2, 2]
    assert "".join(t.mode(i).value for i in TestId) == "SS1SS11S11111"


def test_failure_probability_anchors():
    assert failure_probability(1, 5) == 0.2
    assert failure_probability(1, 2) == 0.5
    assert failure_probability(0, 3) == 0.0
    with pytest.raises(ValueError):
        failure_probability(0, 0)
    with pytest.raises(ValueError):
        failure_probability(3, 2)


def test_scaled_factor():
    assert scaled_factor(0.5, Scaling.PER_SERVER) == 1.0
    assert scaled_factor(0.5, Scaling.PER_SERVER, literal=True) == 1.0
    assert scaled_factor(0.25, Scaling.PER_SERVER) == 0.5
    assert scaled_factor(0.25, Scaling.PER_SERVER, literal=True) == 1.0
    assert scaled_factor(1.0, Scaling.PER_SERVER) == 1.0
    assert scaled_factor(1.0, Scaling.PER_SERVER, literal=True) == 2.0
    assert scaled_factor(0.9, Scaling.FIXED) == 1.0


def test_domain_metric_examples():
    assert domain_metric(with_failure(TestId.ZONE_TRANSFER)).raw == 5
    assert domain_metric(with_failure(TestId.UDP, 1, 2)).raw == 10
    assert domain_metric(passing()).raw == 0
    m = domain_metric(with_failure(TestId.UDP, 1, 4))
    assert m.raw == 5 and dict(m.contributions)[TestId.UDP] == 5


def test_domain_metric_contract():
    with pytest.raises(ValueError):
        domain_metric(passing()[:-1])
    with pytest.raises(ValueError):
        domain_metric(passing() + [TestOutcome(TestId.UDP, 0, 0, 1)])


def test_inapplicable_contributes_nothing():
    outs = passing()
    outs[11] = TestOutcome(TestId.IPV6, 0, 0, 0, applicable=False)
    assert domain_metric(outs).raw == 0


def test_normalize_examples():
    assert normalize([8, 16, 4]) == (16, [5.0, 10.0, 2.5])
    assert normalize([0, 0]) == (0.0, [0.0, 0.0])
    with pytest.raises(ValueError):
        normalize([])


def test_theoretical_max():
    assert theoretical_max() == 60
    assert theoretical_max(literal=True) == 60 + 10 + 4 + 8 + 4 + 5
    assert single_domain_normalized(30) == 5.0


def test_weights_file():
    t = parse_weights("# tuned\n7 9.5 1\n4 0 S\n")
    assert t.weight(7) == 9.5 and t.weight(4) == 0 and t.weight(1) == DEFAULT_WEIGHTS[0]
    for bad in ("14 1 S", "0 1 S", "3 1 X", "3 11 1", "3 1 1\n3 2 1", "3 1"):
        with pytest.raises(WeightError):
            parse_weights(bad)


# properties --------------------------------------------------------------------


@st.composite
def outcome_vectors(draw):
    outs = []
    for t in TestId:
        n_tot = draw(st.integers(1, 6))
        n_err = draw(st.integers(0, n_tot))
        applicable = draw(st.booleans()) if n_err == 0 else True
        outs.append(TestOutcome(t, 1 if n_err else 0, n_err, n_tot, applicable=applicable))
    return outs


weights = st.lists(st.floats(0, 10, allow_nan=False), min_size=13, max_size=13)


@given(outcome_vectors())
def test_matches_oracle(outs):
    vec = [(int(o.test_id), o.indicator, o.n_err, o.n_tot, o.applicable) for o in outs]
    assert domain_metric(outs).raw == weighted_sum(vec)
    assert domain_metric(outs, literal=True).raw == weighted_sum(vec, literal=True)


@given(outcome_vectors(), weights, st.integers(1, 13), st.floats(0, 10, allow_nan=False))
def test_weight_monotonicity(outs, ws, tid, bump):
    table = WeightTable(tuple(ws))
    higher = table.with_weight(tid, max(ws[tid - 1], bump))
    assert domain_metric(outs, higher).raw >= domain_metric(outs, table).raw


@given(outcome_vectors(), weights, st.integers(1, 13))
def test_zero_weight_skips_test(outs, ws, tid):
    table = WeightTable(tuple(ws)).with_weight(tid, 0)
    toggled = list(outs)
    o = outs[tid - 1]
    toggled[tid - 1] = TestOutcome(o.test_id, 0, 0, o.n_tot) if o.failed else TestOutcome(o.test_id, 1, 1, o.n_tot)
    assert domain_metric(outs, table).raw == domain_metric(toggled, table).raw


@given(outcome_vectors())
def test_raw_is_sum_of_contributions(outs):
    m = domain_metric(outs)
    assert m.raw == pytest.approx(sum(c for _, c in m.contributions), abs=1e-12)


@given(st.lists(st.sampled_from([TestId.SINGLE_AUTH, TestId.LOOP, TestId.ZONE_TRANSFER, TestId.SECONDARY_SYNC,
                                 TestId.COLOCATION, TestId.REVERSE, TestId.IPV6, TestId.DNSSEC]), unique=True))
def test_fixed_scale_failures_are_integers(failed):
    outs = passing()
    for t in failed:
        outs[int(t) - 1] = TestOutcome(t, 1, 1, 1)
    raw = domain_metric(outs).raw
    assert raw == int(raw) == sum(DEFAULT_WEIGHTS[int(t) - 1] for t in failed)


metrics = st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=40)


@given(metrics)
def test_normalization_bounds(values):
    m_max, norm = normalize(values)
    assert all(0 <= v <= 10 for v in norm)
    if m_max > 0:
        assert max(norm) == 10.0


@given(metrics, st.randoms())
def test_normalization_order_invariant(values, rnd):
    shuffled = values[:]
    rnd.shuffle(shuffled)
    assert sorted(normalize(values)[1]) == sorted(normalize(shuffled)[1])
