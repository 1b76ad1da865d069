"""Inverse-ramp-time expansion: exact tables, growth, closed leading order."""
import json
from fractions import Fraction

import numpy as np
import pytest

from lindblad_ramp import (DegenerateMode, ModeParams, OrderOverflow, PMState,
                           RadiusExceeded, coefficients_gapless,
                           coefficients_gapped, convergence_report,
                           defect_from_pm, pm_rhs_gapless, pm_rhs_gapped,
                           predict_defect_gapped, rk45)


def test_leading_coefficient_anchor():
    c1 = coefficients_gapped(1, 1.0)[0][0]
    assert c1.evaluate_exact(1, 0) == Fraction(1, 18)


def _closed_form_exact(y):
    u = Fraction(y) ** 2
    return (u + 1) * (3 - u) / (u + 3) ** 3


def test_leading_order_closed_form_exact_identity():
    # 2 c_1(x=1, y) equals the closed leading-order profile as a rational
    # function: exact agreement at more rational points than either side
    # has degrees of freedom proves the identity, not just closeness.
    c1 = coefficients_gapped(1, 1.0)[0][0]
    points = [0, 1, 2, 3, 4, 5, 10, Fraction(1, 2), Fraction(3, 2),
              Fraction(5, 2), Fraction(7, 3), Fraction(1, 7)]
    for y in points:
        assert 2 * c1.evaluate_exact(1, y) == _closed_form_exact(y)


def test_leading_order_closed_form_random_floats():
    c1 = coefficients_gapped(1, 1.0)[0][0]
    rng = np.random.default_rng(20260822)
    y = 5.0 * rng.random(100)
    got = 2.0 * c1(1.0, y)
    want = (y ** 2 + 1.0) * (3.0 - y ** 2) / (y ** 2 + 3.0) ** 3
    assert np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-3)) < 1e-12


@pytest.mark.parametrize("case,eps", [("gapped", 1.0), ("gapless", None)])
def test_float_matches_exact_evaluation(case, eps):
    if case == "gapped":
        table = coefficients_gapped(6, eps)
    else:
        table = coefficients_gapless(6)
    for c, d in table:
        for coeff in (c, d):
            for x, y in [(Fraction(1), Fraction(1, 2)), (Fraction(1, 3), 2),
                         (1, 0)]:
                exact = float(coeff.evaluate_exact(x, y))
                got = float(coeff(float(x), float(y)))
                assert got == pytest.approx(exact, rel=1e-12, abs=1e-300)


def test_pm_source_anchors():
    d = pm_rhs_gapped(0.0, 0.0, 1.3, 500.0, PMState(0.0, 0.0))
    assert d.P == 0.0
    assert d.M == -2.0 * 1.3 ** 2
    # gapless sources carry an overall y^2: the y = 0 line is source-free
    for x in (0.1, 0.5, 0.9):
        d0 = pm_rhs_gapless(x, 0.0, 500.0, PMState(0.0, 0.0))
        assert d0.P == 0.0 and d0.M == 0.0


def test_pm_rhs_validation():
    with pytest.raises(ValueError):
        pm_rhs_gapped(0.5, 1.0, 1.0, 0.0, PMState(0.0, 0.0))
    with pytest.raises(ValueError):
        pm_rhs_gapless(0.5, 1.0, -3.0, PMState(0.0, 0.0))


def test_series_matches_slow_ode_gapped():
    # independent route: integrate the slow pair directly and compare the
    # truncated expansion at the end of the ramp
    dtau, y = 400.0, 0.5

    def f(x, s):
        d = pm_rhs_gapped(x, y, 1.0, dtau, PMState(*s))
        return np.array([d.P, d.M])

    _, ys, _ = rk45(f, 0.0, 1.0, [0.0, 0.0])
    table = coefficients_gapped(8, 1.0)
    series = sum(2.0 * float(c(1.0, y)) * dtau ** -k
                 for k, (c, _) in enumerate(table, start=1))
    assert 2.0 * ys[-1][0] == pytest.approx(series, rel=1e-7)


def test_series_matches_slow_ode_gapless():
    gtau, y = 500.0, 1.5

    def f(x, s):
        d = pm_rhs_gapless(x, y, gtau, PMState(*s))
        return np.array([d.P, d.M])

    _, ys, _ = rk45(f, 0.0, 1.0, [0.0, 0.0])
    table = coefficients_gapless(8)
    series = sum(2.0 * float(c(1.0, y)) * gtau ** -k
                 for k, (c, _) in enumerate(table, start=1))
    assert 2.0 * ys[-1][0] == pytest.approx(series, rel=1e-7)


def test_defect_from_pm_structure():
    pr = ModeParams(p=0.7, delta=1.1, gamma0=1.0, tau=100.0)
    n = defect_from_pm(pr, 0.9, PMState(0.012, -0.03))
    assert n[2] == 2.0 * 0.012
    assert abs(0.7 * n[0] + 1.1 * n[1]) < 1e-15
    prg = ModeParams(p=0.0, delta=0.0, gamma0=1.0, tau=100.0)
    with pytest.raises(DegenerateMode):
        defect_from_pm(prg, 0.9, PMState(0.01, 0.01))


def test_order_overflow_names_failing_order():
    with pytest.raises(OrderOverflow, match="order 6"):
        coefficients_gapped(12, 1.0, max_coeff_bits=24)


def test_growth_radius_gates():
    rep = convergence_report("gapped", 1.0, (0.0, 1.0, 2.0), 20)
    assert rep.log_abs_ck.shape == (3, 20)
    # |c_k| grow exponentially: top-order logs dominate early ones
    assert np.all(rep.log_abs_ck[:, -1] > rep.log_abs_ck[:, 4])
    assert np.all((rep.radius_estimate > 5.0) & (rep.radius_estimate < 50.0))
    gl = convergence_report("gapless", None, (1.0, 2.0), 20)
    assert np.all((gl.radius_estimate > 5.0) & (gl.radius_estimate < 50.0))


def test_strong_coupling_regular_at_zero_momentum():
    # the eps = 2 table stays finite on the y = 0 line all the way to x = 1
    table = coefficients_gapped(8, 2.0)
    vals = [float(c(1.0, 0.0)) for c, _ in table]
    assert np.all(np.isfinite(vals))
    rep = convergence_report("gapped", 2.0, (0.0,), 12)
    assert np.isfinite(rep.radius_estimate).all()


def test_predict_defect_anchors():
    assert predict_defect_gapped(0.0, 1.0, 100.0) == pytest.approx(
        1.0 / 900.0, rel=1e-14)
    assert abs(predict_defect_gapped(np.sqrt(3.0), 1.0, 100.0)) < 1e-12
    with pytest.raises(RadiusExceeded):
        predict_defect_gapped(0.0, 1.0, 5.0)
    with pytest.raises(ValueError):
        predict_defect_gapped(0.0, 0.0, 100.0)


def test_json_export_round_trip():
    c1 = coefficients_gapped(2, 1.0)[0][0]
    d = c1.to_json_dict()
    text = json.dumps(d)
    back = json.loads(text)
    assert back["order"] == 1 and back["role"] == "c"
    num = [Fraction(a, b) for a, b in back["numerator"]]
    den = (1 + Fraction(back["y"]) ** 2 + 2) ** back["denom_power"]
    value = sum(cc for cc in num) / den
    assert value == c1.evaluate_exact(1, 0)


def test_report_csv(tmp_path):
    rep = convergence_report("gapped", 1.0, (0.0, 1.0), 8)
    path = tmp_path / "report.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    assert any("radius_estimate" in ln for ln in lines[:4])
    data = [ln for ln in lines if not ln.startswith("#")]
    assert len(data) == 8
