"""Inverse-ramp-time series for the slow sector of a driven mode.

At late times the deviation of one momentum mode from the moving steady
state reduces to a closed pair (P, M) of real functions of the scaled
time x = t/tau, with rational source terms in x and the scaled momentum
y.  Expanding in inverse powers of the dimensionless ramp rate
(delta*tau gapped, gamma0*tau gapless),

    P(x) = sum_k c_k(x, y) (scale*tau)^(-k),    M likewise with d_k,

turns the ODE pair into an algebraic recursion.  Every order is a
polynomial in (x, y^2) over a power of the single canonical denominator

    D = 1 + y^2 + 2 eps^2 x^2   (gapped),    D = y^2 + 2 x^2   (gapless),

so the whole table can be built with exact rational coefficients: only
the two source numerators are hard-coded, c_1 and d_1 follow from the
lowest-order balance and higher orders from differentiation and division
by 4D.  This module builds those tables, evaluates them, maps (P, M) to
the defect components, and fits the exponential growth of the
coefficients that sets the validity threshold of the expansion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import DegenerateMode, OrderOverflow, RadiusExceeded
from .params import ModeParams

__all__ = [
    "PMState",
    "SeriesCoefficient",
    "ConvergenceReport",
    "pm_rhs_gapped",
    "pm_rhs_gapless",
    "coefficients_gapped",
    "coefficients_gapless",
    "defect_from_pm",
    "predict_defect_gapped",
    "convergence_report",
]


@dataclass(frozen=True)
class PMState:
    """Slow pair: P tracks the sigma_z defect, M its conjugate partner."""

    P: float
    M: float


def _pm_rhs(x, u, eps, rate_tau, P, M):
    """Shared x-derivative; u = 1+y^2 (gapped) or y^2 (gapless)."""
    e2 = eps * eps
    d = u + 2.0 * e2 * x * x
    source_p = 2.0 * e2 * x * u / (d * d)
    source_m = 2.0 * e2 * u * (u - e2 * x * x) / (d * d)
    dP = rate_tau * (-3.0 * eps * x * P + M) + source_p
    dM = (rate_tau * (-3.0 * eps * x * M - (4.0 * u - e2 * x * x) * P)
          - eps * P - source_m)
    return dP, dM


def pm_rhs_gapped(x, y, epsilon, dtau, state):
    """x-derivative of the gapped slow pair at coupling gamma = eps*delta*x.

    dtau = delta*tau.  The homogeneous part is stiff with rate dtau while
    the sources, pushed in by the moving steady state, stay O(1); dividing
    the returned derivatives by dtau recovers the slow-time form.
    """
    if dtau <= 0:
        raise ValueError("dtau must be positive")
    dP, dM = _pm_rhs(x, 1.0 + y * y, epsilon, dtau, state.P, state.M)
    return PMState(dP, dM)


def pm_rhs_gapless(x, y, gtau, state):
    """x-derivative of the gapless slow pair; gtau = gamma0*tau.

    Same structure as the gapped system with eps = 1 and the constant
    part of the gap removed, so both sources carry an overall y^2 and
    vanish identically on the y = 0 line.
    """
    if gtau <= 0:
        raise ValueError("gtau must be positive")
    dP, dM = _pm_rhs(x, y * y, 1.0, gtau, state.P, state.M)
    return PMState(dP, dM)


class Poly2:
    """Sparse polynomial in (x, y^2): {(i, j): coeff} for x^i y^(2j).

    Coefficients are Fractions for the exact tables and floats for the
    cross-checking recursion; the arithmetic below never divides, so the
    form is closed under everything the recursion does.
    """

    __slots__ = ("terms", "_farr")

    def __init__(self, terms=None):
        self.terms = {}
        self._farr = None
        if terms:
            for key, val in terms.items():
                if val:
                    self.terms[key] = val

    @classmethod
    def monomial(cls, i, j, coeff):
        return cls({(i, j): coeff})

    def __add__(self, other):
        out = dict(self.terms)
        for key, val in other.terms.items():
            new = out.get(key, 0) + val
            if new:
                out[key] = new
            else:
                out.pop(key, None)
        return Poly2(out)

    def __sub__(self, other):
        out = dict(self.terms)
        for key, val in other.terms.items():
            new = out.get(key, 0) - val
            if new:
                out[key] = new
            else:
                out.pop(key, None)
        return Poly2(out)

    def __mul__(self, other):
        out = {}
        for (i1, j1), v1 in self.terms.items():
            for (i2, j2), v2 in other.terms.items():
                key = (i1 + i2, j1 + j2)
                out[key] = out.get(key, 0) + v1 * v2
        return Poly2(out)

    def scaled(self, s):
        return Poly2({key: val * s for key, val in self.terms.items()})

    def diff_x(self):
        return Poly2({(i - 1, j): i * val
                      for (i, j), val in self.terms.items() if i > 0})

    def degrees(self):
        if not self.terms:
            return (0, 0)
        return (max(i for i, _ in self.terms),
                max(j for _, j in self.terms))

    def max_bits(self):
        """Largest numerator+denominator bit length over all coefficients."""
        bits = 0
        for val in self.terms.values():
            if isinstance(val, Fraction):
                bits = max(bits, val.numerator.bit_length()
                           + val.denominator.bit_length())
        return bits

    def evaluate(self, x, y2):
        """Evaluate with whatever arithmetic the arguments support."""
        total = 0 * x
        for (i, j), val in self.terms.items():
            total = total + val * x**i * y2**j
        return total

    def float_array(self):
        """Dense float coefficient array C[i, j], cached."""
        if self._farr is None:
            di, dj = self.degrees()
            arr = np.zeros((di + 1, dj + 1))
            for (i, j), val in self.terms.items():
                arr[i, j] = float(val)
            self._farr = arr
        return self._farr

    def values(self, x, y2):
        """Vectorized float evaluation."""
        return npoly.polyval2d(np.asarray(x, dtype=float),
                               np.asarray(y2, dtype=float),
                               self.float_array())


def _case_polys(case, eps, one):
    """Fixed polynomials of the recursion; `one` sets the arithmetic."""
    e2 = eps * eps
    if case == "gapped":
        u = Poly2({(0, 0): one, (0, 1): one})
    else:
        u = Poly2({(0, 1): one})
    x2 = Poly2.monomial(2, 0, one)
    denom = u + x2.scaled(2 * e2)
    denom_dx = Poly2.monomial(1, 0, 4 * e2)
    freq = u.scaled(4 * one) - x2.scaled(e2)
    source_p = Poly2.monomial(1, 0, 2 * e2) * u
    source_m = (u * (u - x2.scaled(e2))).scaled(2 * e2)
    return u, denom, denom_dx, freq, source_p, source_m


def _build_table(case, eps, K, one, max_coeff_bits=None):
    """Numerators (N_c, N_d) over D^(2k+1) for k = 1..K.

    The base order balances the sources against the homogeneous terms;
    each later order differentiates the previous one and divides by 4D,
    raising the denominator power by exactly 2.
    """
    _, denom, denom_dx, freq, source_p, source_m = _case_polys(case, eps, one)
    quarter = one / 4
    three_ex = Poly2.monomial(1, 0, 3 * eps)
    nc = (source_p * three_ex - source_m).scaled(quarter)
    nd = nc * three_ex - source_p * denom
    table = [(nc, nd)]
    power = 3
    for k in range(2, K + 1):
        grad_c = nc.diff_x() * denom - (nc * denom_dx).scaled(power)
        grad_d = nd.diff_x() * denom - (nd * denom_dx).scaled(power)
        nc_d = nc * denom
        nc = (grad_c * three_ex + grad_d + nc_d.scaled(eps)).scaled(-quarter)
        nd = (freq * grad_c - grad_d * three_ex
              - (nc_d * Poly2.monomial(1, 0, 3 * eps * eps))).scaled(quarter)
        power += 2
        if max_coeff_bits is not None:
            bits = max(nc.max_bits(), nd.max_bits())
            if bits > max_coeff_bits:
                raise OrderOverflow(
                    f"order {k} coefficients reach {bits} bits, "
                    f"budget is {max_coeff_bits}")
        table.append((nc, nd))
    return table


@dataclass(frozen=True)
class SeriesCoefficient:
    """One order of the expansion, numerator / D^denom_power.

    The numerator carries exact Fraction coefficients; evaluation at
    rational (x, y) is exact, float evaluation goes through a cached
    dense coefficient array.  role is "c" (P series) or "d" (M series).
    """

    order: int
    role: str
    case: str
    epsilon: Fraction
    numerator: Poly2
    denom_power: int

    def _denom(self, x, y2, e2):
        if self.case == "gapped":
            return 1 + y2 + 2 * e2 * x * x
        return y2 + 2 * e2 * x * x

    def evaluate_exact(self, x, y):
        """Exact rational value at rational (x, y)."""
        x = Fraction(x)
        y2 = Fraction(y) ** 2
        num = self.numerator.evaluate(x, y2)
        den = self._denom(x, y2, self.epsilon**2)
        return num / den**self.denom_power

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float),
                                   np.asarray(y, dtype=float))
        y2 = y ** 2
        num = self.numerator.values(x, y2)
        den = self._denom(x, y2, float(self.epsilon) ** 2)
        return num / den**self.denom_power

    def x_coefficients(self, y):
        """Numerator collapsed at rational y: Fraction per power of x."""
        y2 = Fraction(y) ** 2
        di, _ = self.numerator.degrees()
        out = [Fraction(0)] * (di + 1)
        for (i, j), val in self.numerator.terms.items():
            out[i] += val * y2**j
        return out

    def to_json_dict(self, y=0):
        """Exportable form: integer (num, den) pairs per power of x."""
        coeffs = self.x_coefficients(y)
        return {
            "order": self.order,
            "role": self.role,
            "case": self.case,
            "epsilon": [self.epsilon.numerator, self.epsilon.denominator],
            "y": str(Fraction(y)),
            "denom_power": self.denom_power,
            "numerator": [[c.numerator, c.denominator] for c in coeffs],
        }


def _wrap_table(case, eps, raw):
    out = []
    for k, (nc, nd) in enumerate(raw, start=1):
        power = 2 * k + 1
        out.append((SeriesCoefficient(k, "c", case, eps, nc, power),
                    SeriesCoefficient(k, "d", case, eps, nd, power)))
    return out


def coefficients_gapped(K, epsilon, max_coeff_bits=1_000_000):
    """Exact (c_k, d_k) pairs for the gapped case, k = 1..K.

    epsilon is converted to an exact Fraction and enters the table
    symbolically nowhere else, so one table serves every y at that ramp
    height.  Raises OrderOverflow when any coefficient outgrows the
    big-integer bit budget.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    eps = Fraction(epsilon)
    raw = _build_table("gapped", eps, K, Fraction(1), max_coeff_bits)
    return _wrap_table("gapped", eps, raw)


def coefficients_gapless(K, max_coeff_bits=1_000_000):
    """Exact (c_k, d_k) pairs for the gapless case, k = 1..K."""
    if K < 1:
        raise ValueError("K must be at least 1")
    eps = Fraction(1)
    raw = _build_table("gapless", eps, K, Fraction(1), max_coeff_bits)
    return _wrap_table("gapless", eps, raw)


def _float_table(case, K, epsilon=1.0):
    """Same recursion in float64, for cross-checking the exact tables."""
    raw = _build_table(case, float(epsilon), K, 1.0)
    return _wrap_table(case, Fraction(epsilon), raw)


def defect_from_pm(params: ModeParams, gamma, pm: PMState):
    """Map the slow pair to the defect components (n_x, n_y, n_z).

    n_z = 2P exactly; the transverse pair shares the common factor
    gamma*P + scale*M and follows the orientation of the mode in the
    (x, y) spin plane, so p*n_x + delta*n_y = 0 identically.
    """
    nz = 2.0 * pm.P
    if params.is_gapless:
        if params.p == 0:
            raise DegenerateMode("n_y carries a 1/p factor, undefined at p = 0")
        common = gamma * pm.P + params.gamma0 * pm.M
        return np.array([0.0, common / params.p, nz])
    esq = params.p**2 + params.delta**2
    common = gamma * pm.P + params.delta * pm.M
    return np.array([-params.delta * common / esq,
                     params.p * common / esq, nz])


def _growth_fit(orders, logs):
    """Least-squares slope of log|c_k| vs k, transient orders excluded."""
    ks = np.asarray(orders, dtype=float)
    keep = (ks >= 3) & np.isfinite(logs)
    if keep.sum() < 2:
        return math.nan
    slope = np.polyfit(ks[keep], logs[keep], 1)[0]
    return float(slope)


def _end_denom(case, epsilon, y):
    """Canonical denominator at the end of the ramp, D(x=1, y)."""
    e2 = float(epsilon) ** 2
    if case == "gapped":
        return 1.0 + y * y + 2.0 * e2
    return y * y + 2.0


def _growth_rate(table, y):
    """Envelope-removed growth rate of the c_k at x = 1.

    The bare |c_k(1, y)| carry a geometric 1/D^k envelope on top of the
    common exponential growth; fitting log(|c_k| D^k) removes it and
    yields a rate that is uniform in y, so exp of the fit estimates the
    ramp-rate threshold for the whole momentum range at once.
    """
    first = table[0][0]
    lnd = math.log(_end_denom(first.case, first.epsilon, y))
    orders = np.array([c.order for c, _ in table], dtype=float)
    vals = np.array([abs(float(c(1.0, y))) for c, _ in table])
    with np.errstate(divide="ignore"):
        logs = np.log(vals) + orders * lnd
    return _growth_fit(orders, logs)


def _radius_from_table(table, y):
    return math.exp(_growth_rate(table, y))


def predict_defect_gapped(p, delta, tau, epsilon=1.0, K=1):
    """sigma_z defect at the end of the ramp, truncated at order K.

    Refuses to evaluate when delta*tau sits at or below the estimated
    convergence threshold of the coefficient growth, where truncation
    carries no information.
    """
    if delta <= 0:
        raise ValueError("gapped prediction requires delta > 0")
    if tau <= 0:
        raise ValueError("tau must be positive")
    y = p / delta
    dtau = delta * tau
    table = coefficients_gapped(max(K, 12), epsilon)
    radius = _radius_from_table(table, y)
    if not dtau > radius:
        raise RadiusExceeded(
            f"delta*tau = {dtau:g} is inside the estimated convergence "
            f"threshold {radius:.3g}")
    total = 0.0
    for k in range(1, K + 1):
        total += 2.0 * float(table[k - 1][0](1.0, y)) * dtau**(-k)
    return total


@dataclass(frozen=True)
class ConvergenceReport:
    """Growth diagnostics of the c_k at the end of the ramp (x = 1).

    log_abs_ck holds the bare log|c_k(1, y)| rows; growth_rate is the
    fitted per-order rate after removing the geometric 1/D^k envelope
    common to all momenta (see _growth_rate), so radius_estimate =
    exp(growth_rate) reads directly as the scale*tau threshold above
    which truncating the series makes sense.
    """

    case: str
    epsilon: float | None
    y_values: tuple
    orders: tuple
    log_abs_ck: np.ndarray
    growth_rate: np.ndarray
    radius_estimate: np.ndarray

    def to_csv(self, path):
        eps = "none" if self.epsilon is None else f"{self.epsilon:g}"
        lines = [f"# case={self.case} epsilon={eps}",
                 "# growth_rate: " + " ".join(f"{g:.6f}" for g in self.growth_rate),
                 "# radius_estimate: " + " ".join(f"{r:.4f}" for r in self.radius_estimate),
                 "# k, " + ", ".join(f"log_abs_ck[y={y:g}]" for y in self.y_values)]
        for idx, k in enumerate(self.orders):
            row = ", ".join(f"{v:.10e}" for v in self.log_abs_ck[:, idx])
            lines.append(f"{k}, {row}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def convergence_report(case, epsilon=1.0, y_values=(0.0, 1.0, 2.0), K=20):
    """Fit the exponential growth of c_k(x=1, y) per y.

    radius_estimate = exp(growth_rate) is the magnitude of scale*tau
    above which the inverse-power series is usable; orders below 3 are
    pre-asymptotic and excluded from the fit, and the fit removes the
    geometric 1/D^k envelope so the estimate is uniform across momenta.
    """
    if K < 6:
        raise ValueError("growth fit needs K >= 6")
    if case == "gapped":
        table = coefficients_gapped(K, epsilon)
        eps_out = float(epsilon)
    elif case == "gapless":
        table = coefficients_gapless(K)
        eps_out = None
    else:
        raise ValueError(f"unknown case {case!r}")
    orders = tuple(c.order for c, _ in table)
    y_values = tuple(float(y) for y in y_values)
    logs = np.empty((len(y_values), K))
    for row, y in enumerate(y_values):
        vals = np.array([abs(float(c(1.0, y))) for c, _ in table])
        with np.errstate(divide="ignore"):
            logs[row] = np.log(vals)
    growth = np.array([_growth_rate(table, y) for y in y_values])
    radius = np.exp(growth)
    return ConvergenceReport(case, eps_out, y_values, orders,
                             logs, growth, radius)
