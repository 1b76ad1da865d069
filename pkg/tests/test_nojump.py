"""Reduced conditioned system, slow-expansion grid coefficients, collapse."""
import io
import math

import numpy as np
import pytest

from lindblad_ramp import (GridTooCoarse, IntegrationControls, ModeParams,
                           NoJumpState, SingularPoint, nojump_coefficients,
                           nojump_evolve, nojump_rhs, rk45, scaling_collapse,
                           series_defect)


def _u(x, y):
    return math.sqrt(1.0 + y * y - x * x)


def test_rhs_anchors():
    st = NoJumpState(0.5, 0.0, 0.0)
    d = nojump_rhs(0.0, 1.0, 100.0, st)
    assert d.r0 == 0.0 and d.P == 0.0
    assert d.P == 0.0
    assert d.M == pytest.approx(-0.5 / math.sqrt(2.0), rel=1e-15)
    # generic point, all three couplings active
    x, y, dtau = 0.6, 1.0, 50.0
    u = _u(x, y)
    st = NoJumpState(0.4, 0.02, -0.05)
    d = nojump_rhs(x, y, dtau, st)
    assert d.r0 == pytest.approx(x * 0.4 / u ** 2 - 2.0 * (-0.05) / u ** 3,
                                 rel=1e-13)
    assert d.P == pytest.approx(2.0 * dtau * u * (-0.05), rel=1e-13)
    assert d.M == pytest.approx(-0.4 / u - 2.0 * dtau * u * 0.02, rel=1e-13)


def test_rhs_guards():
    with pytest.raises(SingularPoint):
        nojump_rhs(math.sqrt(2.0) - 1e-9, 1.0, 100.0,
                   NoJumpState(0.5, 0.0, 0.0))
    with pytest.raises(ValueError):
        nojump_rhs(0.1, 1.0, 0.0, NoJumpState(0.5, 0.0, 0.0))


def test_coefficient_closed_forms():
    y = 1.0
    opy = 1.0 + y * y
    cs = nojump_coefficients(3, y)
    xg = cs[0].x_grid
    u = np.sqrt(opy - xg ** 2)
    C = math.sqrt(opy) / 2.0
    assert np.allclose(cs[0].e, C / u, rtol=1e-12, atol=1e-13)
    assert np.allclose(cs[1].c, -C / (2.0 * u ** 3), rtol=1e-10, atol=1e-12)
    # parity of the recursion empties every other sector
    assert np.max(np.abs(cs[1].d)) < 1e-10
    assert np.max(np.abs(cs[1].e)) < 1e-10
    assert np.max(np.abs(cs[2].c)) < 1e-8
    d2 = -3.0 * xg * math.sqrt(opy) / (8.0 * u ** 6)
    assert np.allclose(cs[2].d, d2, rtol=1e-8, atol=1e-10)
    e2 = (opy ** 1.5 / (16.0 * u)) * (u ** -6.0 - opy ** -3.0)
    assert np.allclose(cs[2].e, e2, rtol=1e-8, atol=1e-10)


def test_zero_momentum_seed():
    # the expansion mismatch at the start of the ramp seeds the
    # oscillation amplitude: c_1(0, y) = -1/(4 (1+y^2))
    for y in (0.0, 1.0, 2.0):
        cs = nojump_coefficients(1, y)
        assert cs[1].c[0] == pytest.approx(-1.0 / (4.0 * (1.0 + y * y)),
                                           rel=1e-10)


def test_e0_constant_scaling_and_deficit_invariance():
    cs = nojump_coefficients(3, 1.0)
    cs2 = nojump_coefficients(3, 1.0, e0_constant=2.0)
    C = math.sqrt(2.0) / 2.0
    assert np.allclose(cs2[1].c, cs[1].c * (2.0 / C), rtol=1e-10)
    # the defect ratio P/r0 cannot depend on the overall normalization
    assert np.allclose(series_defect(cs, 500.0), series_defect(cs2, 500.0),
                       rtol=1e-9, atol=1e-14)


def test_leading_deficit():
    cs = nojump_coefficients(1, 1.0)
    u = np.sqrt(2.0 - cs[0].x_grid ** 2)
    assert np.allclose(series_defect(cs, 1000.0),
                       -1.0 / (2.0 * u ** 2 * 1000.0), rtol=1e-9)


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        nojump_coefficients(5, 1.0, nodes=17)


def test_coefficient_validation():
    with pytest.raises(ValueError):
        nojump_coefficients(0, 1.0)
    with pytest.raises(SingularPoint):
        nojump_coefficients(2, 0.5, x_max=1.2)


def test_edge_divergence_marker():
    # |c_1| ~ 1/(4 (1-x^2)^{3/2}) approaching the end-of-ramp degeneracy
    cs = nojump_coefficients(1, 0.0, x_max=1.0 - 1e-3, nodes=513, tol=1e-6)
    xg = cs[0].x_grid
    m = (1.0 - xg >= 1e-3 - 1e-12) & (1.0 - xg <= 0.1)
    ratio = np.abs(cs[1].c[m]) * (1.0 - xg[m] ** 2) ** 1.5
    assert np.all(np.abs(ratio - 0.25) < 0.025)


def test_oscillating_sector_norm_conserved():
    # the source-free (P, M) rotation preserves P^2 + M^2
    opy, dtau = 2.0, 300.0

    def f(t, q):
        u = math.sqrt(opy - t * t)
        return np.array([2.0 * dtau * u * q[1], -2.0 * dtau * u * q[0]])

    _, qs, _ = rk45(f, 0.0, 0.95, np.array([0.3, -0.4]),
                    rtol=1e-11, atol=1e-13, sample_ts=np.linspace(0, 0.95, 20))
    r2 = qs[:, 0] ** 2 + qs[:, 1] ** 2
    assert np.max(np.abs(r2 - 0.25)) < 1e-8


def _phase_uniform_samples(x_end, y, dtau, n=16):
    """x below x_end covering one oscillation period, uniform in phase."""
    opy = 1.0 + y * y

    def U(x):
        return 0.5 * (x * math.sqrt(opy - x * x)
                      + opy * math.asin(x / math.sqrt(opy)))

    xs = []
    for ph in np.arange(n) * (2.0 * math.pi / n):
        lo, hi = x_end - 0.2, x_end
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if 2.0 * dtau * (U(x_end) - U(mid)) > ph:
                lo = mid
            else:
                hi = mid
        xs.append(0.5 * (lo + hi))
    return np.sort(np.array(xs))


def test_series_matches_reduced_ode_phase_averaged():
    y, dtau, x_end = 1.0, 300.0, 0.9
    xs = _phase_uniform_samples(x_end, y, dtau)

    def f(x, q):
        d = nojump_rhs(x, y, dtau, NoJumpState(*q))
        return np.array([d.r0, d.P, d.M])

    _, qs, _ = rk45(f, 0.0, x_end, [0.5, 0.0, 0.0], sample_ts=xs)
    nz_avg = np.mean(qs[:, 1] / qs[:, 0])
    fine = nojump_coefficients(5, y, x_max=0.92, nodes=257)
    nz_ser = np.mean(np.interp(xs, fine[0].x_grid, series_defect(fine, dtau)))
    assert abs(nz_avg - nz_ser) * dtau < 1e-3


def test_supermatrix_route_matches_series():
    # independent full 4-vector propagation, averaged over one phase
    y, dtau, x_end = 1.0, 300.0, 0.9
    xs = _phase_uniform_samples(x_end, y, dtau)
    controls = IntegrationControls(reference="none")
    pr = ModeParams(p=1.0, delta=1.0, gamma0=1.0, tau=300.0)
    nz = [nojump_evolve(pr, x_end=float(xe), controls=controls) for xe in xs]
    fine = nojump_coefficients(5, y, x_max=0.92, nodes=257)
    nz_ser = np.mean(np.interp(xs, fine[0].x_grid, series_defect(fine, dtau)))
    assert abs(np.mean(nz) - nz_ser) * dtau < 1e-3


def test_nojump_evolve_validation():
    pr = ModeParams(p=1.0, delta=1.0, gamma0=1.0, tau=50.0)
    with pytest.raises(ValueError):
        nojump_evolve(pr, x_end=0.0)
    with pytest.raises(ValueError):
        nojump_evolve(pr, x_end=1.2)
    out = nojump_evolve(pr, x_end=1.0)
    assert isinstance(out, float) and np.isfinite(out)


def test_collapse_exponent_control():
    grid = np.linspace(0.0, 1.6, 32)
    good = scaling_collapse(1.0, (50.0, 500.0), grid)
    bad = scaling_collapse(1.0, (50.0, 500.0), grid, exponent=0.5)
    assert good.residual < bad.residual
    assert good.exponent == pytest.approx(1.0 / 3.0)
    assert good.scaled_defect.shape == (2, good.scaled_momentum.size)
    assert tuple(good.tau_list) == (50.0, 500.0)


def test_collapse_validation():
    grid = np.linspace(0.0, 1.0, 8)
    with pytest.raises(ValueError):
        scaling_collapse(1.0, (100.0,), grid)
    with pytest.raises(ValueError):
        scaling_collapse(1.0, (100.0, 300.0), grid)  # under one decade
    with pytest.raises(ValueError):
        scaling_collapse(0.0, (100.0, 1000.0), grid)
    with pytest.raises(ValueError):
        scaling_collapse(1.0, (100.0, 1000.0), grid[:2])


def test_collapse_csv_format():
    grid = np.linspace(0.0, 1.2, 12)
    res = scaling_collapse(1.0, (30.0, 300.0), grid)
    buf = io.StringIO()
    res.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("#") and "residual" in lines[0]
    first = [float(tok) for tok in lines[2].split(",")]
    assert len(first) == 3


def test_grid_coefficient_csv(tmp_path):
    cs = nojump_coefficients(1, 1.0, nodes=33)
    path = tmp_path / "c1.csv"
    cs[1].to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    assert len([ln for ln in lines if not ln.startswith("#")]) == 33
