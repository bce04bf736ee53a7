import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from eqselect.control import (
    Atan,
    ClassMismatchError,
    ControlMatrix,
    ControllerClass,
    ControllerSpec,
    Cubic,
    ImpossibleDesignError,
    MissingKnowledgeError,
    Power,
    PowerMirror,
    PowerShifted,
    PowerShiftedMirror,
    Proportional,
    Side,
    SideError,
    SystemState,
    TheoremId,
    consensus_reaching,
    consensus_stabilization,
    controlled_rhs,
    design,
    gbar_anticoordination,
    gbar_dominant,
    guard_impossible,
    set_point,
    verify_rate_conditions,
)
from eqselect.game import DomainError, GameTag, PayoffMatrix, classify, replicator_rhs

unit = st.floats(0.01, 0.99)
pos = st.floats(0.1, 8)
rates = st.one_of(
    st.builds(PowerShifted, pos, pos, unit),
    st.builds(Power, pos, pos),
    st.builds(PowerShiftedMirror, pos, pos, unit),
    st.builds(PowerMirror, pos, pos),
    st.builds(Proportional, pos, unit, st.sampled_from([1, -1])),
    st.builds(Atan, unit),
    st.builds(Cubic, unit),
)
matrices = st.sampled_from(list(ControlMatrix))
payoff = st.integers(-4, 4)
games = st.builds(PayoffMatrix, payoff, payoff, payoff, payoff)


def shifted_game(m, g, matrix):
    """Payoff matrix with the gain added to the controlled entry."""
    (g11, g12), (g21, g22) = matrix.entries
    return PayoffMatrix(m.a + g * g11, m.b + g * g12, m.c + g * g21, m.d + g * g22)


def test_matrix_classes_and_mirrors():
    assert {g for g in ControlMatrix if g.controller_class is ControllerClass.CONFORMITY} == {
        ControlMatrix.G1,
        ControlMatrix.G4,
    }
    for g in ControlMatrix:
        assert sum(map(sum, g.entries)) == 1
        assert g.mirrored().mirrored() is g
        assert g.mirrored().controller_class is g.controller_class


@given(rates, st.floats(0.001, 0.999))
def test_rate_derivative_matches_finite_difference(rate, x):
    h = 1e-6
    fd = (rate(x + h) - rate(x - h)) / (2 * h)
    assert rate.derivative(x) == pytest.approx(fd, rel=1e-4, abs=1e-4)


@given(rates)
def test_rate_vanishes_at_its_roots(rate):
    for r in rate.roots():
        assert rate(r) == pytest.approx(0, abs=1e-12)


@given(rates.filter(lambda r: not isinstance(r, (Atan, Cubic))), st.floats(0, 1))
def test_mirrored_rate_reflects_the_share(rate, x):
    assert rate.mirrored()(x) == pytest.approx(rate(1 - x), rel=1e-9, abs=1e-12)


def test_rate_parameter_domains():
    with pytest.raises(DomainError):
        PowerShifted(1, 1, 1.0)
    with pytest.raises(DomainError):
        Power(0, 1)
    with pytest.raises(DomainError):
        Proportional(1, 0.5, 2)


def test_controlled_rhs_example():
    spec = ControllerSpec(ControlMatrix.G4, PowerShifted(7, 1, 0.4))
    dx, dg = controlled_rhs(PayoffMatrix(1, 0, 0, 1), spec, SystemState(0.4, 2.0))
    assert dx == pytest.approx(0.4 * 0.6 * (2 * 0.4 - 1 - 2 * 0.6), abs=1e-15)
    assert dg == pytest.approx(0, abs=1e-15)


@given(games, matrices, rates, st.floats(0, 1), st.floats(0, 50))
def test_controlled_rhs_is_replicator_of_shifted_game(m, matrix, rate, x, g):
    dx, dg = controlled_rhs(m, ControllerSpec(matrix, rate), SystemState(x, g))
    assert dx == pytest.approx(replicator_rhs(shifted_game(m, g, matrix), x), abs=1e-9)
    assert dg == pytest.approx(rate(x) * g, abs=1e-12)


@given(games, matrices, rates, st.floats(0, 50))
def test_boundary_and_zero_gain_are_exact(m, matrix, rate, g):
    spec = ControllerSpec(matrix, rate)
    assert controlled_rhs(m, spec, SystemState(0.0, g))[0] == 0
    assert controlled_rhs(m, spec, SystemState(1.0, g))[0] == 0
    assert controlled_rhs(m, spec, SystemState(0.5, 0.0))[1] == 0


@given(games, st.floats(0, 1), st.floats(0, 50))
def test_conformity_form_with_g4(m, x, g):
    alpha, beta = m.a - m.c, m.d - m.b
    dx, _ = controlled_rhs(m, ControllerSpec(ControlMatrix.G4, Power(1, 1)), SystemState(x, g))
    assert dx == pytest.approx(x * (1 - x) * ((alpha + beta) * x - beta - g * (1 - x)), abs=1e-12)


@given(games.filter(lambda m: classify(m).tag is not GameTag.DEGENERATE), matrices, rates, st.floats(0, 1), st.floats(0, 50))
def test_relabeling_mirrors_the_controlled_field(m, matrix, rate, x, g):
    if isinstance(rate, (Atan, Cubic)):
        return
    spec = ControllerSpec(matrix, rate)
    dx, dg = controlled_rhs(m, spec, SystemState(x, g))
    mx, mg = controlled_rhs(m.relabeled(), spec.mirrored(), SystemState(1 - x, g))
    assert mx == pytest.approx(-dx, abs=1e-9)
    assert mg == pytest.approx(dg, abs=1e-9)


def test_input_domain_checked():
    spec = ControllerSpec(ControlMatrix.G4, Power(1, 1))
    with pytest.raises(DomainError):
        controlled_rhs(PayoffMatrix(1, 0, 0, 1), spec, SystemState(1.2, 1))
    with pytest.raises(DomainError):
        controlled_rhs(PayoffMatrix(1, 0, 0, 1), spec, SystemState(0.5, -1))


@pytest.mark.parametrize(
    "abcd, xbar, expected",
    [((1, 3, 0, 2), 0.5, 2.0), ((2, 5, 1, 3), 0.25, 7.0), ((1, 3, 0, 2), 1 - 1e-12, 1.0)],
)
def test_gbar_dominant_examples(abcd, xbar, expected):
    assert gbar_dominant(PayoffMatrix(*abcd), xbar) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("abcd, xbar, expected", [((0, 1, 1, 0), 0.25, 2.0), ((0, 2, 3, 1), 0.2, 1.0)])
def test_gbar_anticoordination_examples(abcd, xbar, expected):
    assert gbar_anticoordination(PayoffMatrix(*abcd), xbar) == pytest.approx(expected, rel=1e-12)


def test_gbar_anticoordination_vanishes_at_mixed_equilibrium():
    assert gbar_anticoordination(PayoffMatrix(0, 1, 1, 0), 0.5 - 1e-9) == pytest.approx(0, abs=1e-7)


def test_gbar_errors():
    with pytest.raises(ClassMismatchError):
        gbar_dominant(PayoffMatrix(1, 0, 0, 1), 0.5)
    with pytest.raises(ClassMismatchError):
        gbar_anticoordination(PayoffMatrix(1, 3, 0, 2), 0.3)
    with pytest.raises(SideError):
        gbar_anticoordination(PayoffMatrix(0, 1, 1, 0), 0.6)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(-4, 4), unit)
def test_gbar_dominant_is_a_fixed_point(ac, bd, c, xbar):
    m = PayoffMatrix(c + ac, 0 + bd, c, 0)
    spec = ControllerSpec(ControlMatrix.G3, Proportional(1.0, xbar))
    dx, dg = controlled_rhs(m, spec, SystemState(xbar, gbar_dominant(m, xbar)))
    assert abs(dx) < 1e-12 and abs(dg) < 1e-12


@given(st.integers(1, 4), st.integers(1, 4), st.floats(0.01, 0.99))
def test_gbar_anticoordination_is_a_fixed_point(ca, bd, frac):
    m = PayoffMatrix(0, bd, ca, 0)
    xbar = frac * classify(m).mixed_ne
    spec = ControllerSpec(ControlMatrix.G3, Proportional(1.0, xbar))
    g = gbar_anticoordination(m, xbar)
    assert g > 0
    dx, dg = controlled_rhs(m, spec, SystemState(xbar, g))
    assert abs(dx) < 1e-12 and abs(dg) < 1e-12


# guard


PD = PayoffMatrix(1, 3, 0, 2)
COORD = PayoffMatrix(1, 0, 0, 1)
MINORITY = PayoffMatrix(0, 1, 1, 0)


@given(rates)
def test_guard_rejects_innovation_stabilization_for_any_rate(rate):
    v = guard_impossible(consensus_stabilization(0), ControllerSpec(ControlMatrix.G3, rate), classify(PD))
    assert v.rejected and "innovation" in v.citation


def test_guard_examples():
    reach = consensus_reaching(0, delta=0.4)
    assert not guard_impossible(reach, ControllerSpec(ControlMatrix.G3, PowerShifted(1, 1, 0.4)), classify(COORD)).rejected
    v = guard_impossible(set_point(0.3, vanishing_gain=True), None, classify(PD))
    assert v.rejected and "vanishing" in v.citation
    v = guard_impossible(consensus_reaching(0, delta=0.4), None, classify(PD))
    assert v.rejected and "vanishing" in v.citation
    assert not guard_impossible(consensus_stabilization(0), ControllerSpec(ControlMatrix.G4, Power(1, 1)), classify(PD)).rejected


# rate conditions


def test_conditions_conformity_reaching_pass():
    r = verify_rate_conditions(PowerShifted(7, 1, 0.4), TheoremId.CONFORMITY_REACHING, delta=0.4, payoff_bound=1)
    assert r.passed and r.certified


def test_conditions_conformity_reaching_trailing_failure():
    r = verify_rate_conditions(PowerShifted(1, 1, 0.4), TheoremId.CONFORMITY_REACHING, delta=0.4, payoff_bound=1)
    assert not r.passed
    bad = [c for c in r.checks if not c.passed]
    assert len(bad) == 1 and bad[0].witness is not None and bad[0].witness >= 0.95


def test_conditions_stabilization_power_analytic():
    r = verify_rate_conditions(Power(0.4, 1), TheoremId.STABILIZATION)
    assert r.passed and r.certified
    assert any(c.method == "analytic" and "h=1" in c.detail and "k=0.4" in c.detail for c in r.checks)


def test_conditions_stabilization_trailing_bound_fails_for_slow_rate():
    r = verify_rate_conditions(Power(0.4, 1), TheoremId.STABILIZATION, payoff_bound=1)
    assert not r.passed


def test_conditions_wrong_sign_detected_with_witness():
    r = verify_rate_conditions(PowerShifted(1, 1, 0.5), TheoremId.INNOVATION_REACHING, delta=0.4)
    bad = [c for c in r.checks if not c.passed]
    assert bad and all(0.4 <= c.witness <= 0.5 for c in bad if c.witness is not None)


def test_conditions_nonpower_rate_uses_heuristic_limit():
    r = verify_rate_conditions(Atan(0.0001), TheoremId.STABILIZATION)
    assert any(c.method == "heuristic" for c in r.checks)
    assert not r.certified


# design


def test_design_innovation_reaching_default():
    res = design(COORD, consensus_reaching(0, delta=0.4))
    assert res.spec == ControllerSpec(ControlMatrix.G3, PowerShifted(1, 1, 0.4))
    assert res.certificate.certified and res.predicted_gbar is None


def test_design_conformity_reaching_raises_p_above_bound():
    res = design(COORD, consensus_reaching(0, delta=0.4, payoff_bound=1), conformity=True)
    assert res.spec.matrix is ControlMatrix.G4
    assert res.spec.rate(0.95) > 1 and res.certificate.passed


def test_design_conformity_reaching_needs_bound():
    with pytest.raises(MissingKnowledgeError) as e:
        design(COORD, consensus_reaching(0, delta=0.4), conformity=True)
    assert e.value.item == "payoff_bound"


def test_design_reaching_needs_delta():
    with pytest.raises(MissingKnowledgeError) as e:
        design(COORD, consensus_reaching(0))
    assert e.value.item == "delta"


def test_design_stabilization_dominant():
    res = design(PD, consensus_stabilization(0, payoff_bound=1))
    assert res.spec.matrix is ControlMatrix.G4 and isinstance(res.spec.rate, Power)
    assert res.spec.rate(1 - 0.05) > 1 and res.certificate.certified
    with pytest.raises(MissingKnowledgeError):
        design(PD, consensus_stabilization(0))


def test_design_stabilization_anticoordination_needs_no_bound():
    res = design(MINORITY, consensus_stabilization(0))
    assert res.spec == ControllerSpec(ControlMatrix.G4, Power(1, 1))


def test_design_setpoint_dominant():
    res = design(PD, set_point(0.5))
    assert res.spec == ControllerSpec(ControlMatrix.G3, Proportional(0.5, 0.5, 1))
    assert res.predicted_gbar == pytest.approx(2.0)


def test_design_setpoint_anticoordination_needs_side():
    with pytest.raises(MissingKnowledgeError) as e:
        design(MINORITY, set_point(0.25))
    assert e.value.item == "side_of_mixed_ne"
    res = design(MINORITY, set_point(0.25, side_of_mixed_ne=Side.BELOW))
    assert res.predicted_gbar == pytest.approx(2.0)
    res = design(MINORITY, set_point(0.75, side_of_mixed_ne=Side.ABOVE))
    assert res.spec.matrix is ControlMatrix.G2 and res.predicted_gbar == pytest.approx(2.0)


def test_design_rejections():
    with pytest.raises(ClassMismatchError):
        design(PayoffMatrix(1, 0, 1, 2), set_point(0.5))
    with pytest.raises(ClassMismatchError):
        design(COORD, set_point(0.5))
    with pytest.raises(ImpossibleDesignError) as e:
        design(PD, consensus_reaching(0, delta=0.4))
    assert "vanishing" in str(e.value)
    with pytest.raises(ClassMismatchError):
        design(PD, consensus_stabilization(1))


@given(st.integers(1, 4), st.integers(1, 4), st.integers(-3, 3), st.floats(0.05, 0.95))
def test_setpoint_prediction_is_a_fixed_point(ac, bd, c, xbar):
    for m in (PayoffMatrix(c + ac, bd, c, 0), PayoffMatrix(c + ac, bd, c, 0).relabeled()):
        res = design(m, set_point(xbar))
        dx, dg = controlled_rhs(m, res.spec, SystemState(xbar, res.predicted_gbar))
        assert abs(dx) < 1e-9 and abs(dg) < 1e-12
        assert math.isfinite(res.predicted_gbar) and res.predicted_gbar > 0
