"""Conditioned (no-recycling) ramp dynamics and its slow-ramp structure.

Dropping the recycling feed from the dissipator leaves a purely
non-Hermitian generator whose trace coordinate decays.  After normalizing
by the trace, the end-of-ramp magnetization deficit of a single mode is
governed by a reduced three-variable system in the stretched time
x = t/tau: a trace-sector amplitude r0 coupled to a rotating pair (P, M)
with local frequency 2*dtau*sqrt(1 + y^2 - x^2), where y is the momentum
in units of the gap and dtau the dimensionless ramp time.  The frequency
vanishes on the circle x^2 = 1 + y^2, the degeneracy of the conditioned
generator; a linear ramp to x = 1 touches it only at y = 0.

Expanding the reduced system in inverse powers of dtau yields coefficient
functions c_k (for P), d_k (for M) and e_k (for r0) obeying a recursion
that alternates differentiation and cumulative integration.  Those
coefficients are represented here on a Chebyshev grid with spectral
differentiation, which keeps the recursion accurate until the square-root
singularity at the degeneracy circle takes over.  Near that point the
expansion fails and the deficit crosses over to the universal scaling form
(dtau)^(-1/3) g((p/delta) (dtau)^(1/3)), checked by overlaying rescaled
sweeps at different ramp times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from .errors import (DegenerateMode, GridTooCoarse, SingularPoint)
from .params import ModeParams
from .propagate import IntegrationControls, defect_nojump_batch

__all__ = [
    "NoJumpState",
    "GridCoefficient",
    "ScalingCollapse",
    "nojump_rhs",
    "nojump_evolve",
    "nojump_coefficients",
    "scaling_collapse",
    "integrated_kz_exponent",
]

DEFAULT_GUARD = 1e-6


@dataclass(frozen=True)
class NoJumpState:
    """Reduced slow variables of the conditioned mode.

    r0 is the amplitude on the stationary direction of the trace sector,
    P and M span the rotating pair; the normalized deficit is P / r0 once
    the fast phase is averaged out.
    """

    r0: float
    P: float
    M: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r0, self.P, self.M], dtype=float)

    @classmethod
    def from_array(cls, a) -> "NoJumpState":
        r0, P, M = (float(v) for v in a)
        return cls(r0=r0, P=P, M=M)


def _u_of(x: float, y: float, guard: float) -> float:
    # sqrt(1 + y^2 - x^2); singular on the degeneracy circle.
    rad = 1.0 + y * y - x * x
    lim = math.sqrt(1.0 + y * y)
    if x >= lim - guard:
        raise SingularPoint(
            f"x = {x:g} inside the guard band {guard:g} of the "
            f"square-root singularity at x = {lim:g}")
    return math.sqrt(rad)


def nojump_rhs(x: float, y: float, dtau: float, state: NoJumpState,
               guard: float = DEFAULT_GUARD) -> NoJumpState:
    """d/dx of the reduced conditioned system at stretched time x.

    The pair (P, M) rotates at 2*dtau*u with u = sqrt(1 + y^2 - x^2) and
    is fed by the trace-sector amplitude r0 through the M equation; r0 in
    turn drifts at a rate independent of dtau.  Valid below the guard band
    of the singular circle x = sqrt(1 + y^2).
    """
    if dtau <= 0.0:
        raise ValueError("dtau must be positive")
    u = _u_of(float(x), float(y), guard)
    u2 = u * u
    opy = 1.0 + y * y
    r0, P, M = state.r0, state.P, state.M
    dr0 = x * r0 / u2 - opy * M / (u2 * u)
    dP = 2.0 * dtau * u * M
    dM = -r0 / u - 2.0 * dtau * u * P
    return NoJumpState(r0=dr0, P=dP, M=dM)


# ---------------------------------------------------------------------------
# Chebyshev machinery for the inverse-ramp-time coefficient recursion.


def _cheb_nodes(n: int, x_max: float) -> np.ndarray:
    # Gauss-Lobatto nodes mapped to [0, x_max], ascending; clustering at
    # both ends resolves the boundary layer near the singularity.
    t = np.cos(np.pi * np.arange(n) / (n - 1))
    return 0.5 * x_max * (1.0 - t)


class _ChebFrame:
    """Value/coefficient transforms on a Gauss-Lobatto grid over [0, x_max]."""

    def __init__(self, x_grid: np.ndarray, x_max: float):
        self.x = x_grid
        self.x_max = x_max
        self.t = 2.0 * x_grid / x_max - 1.0
        n = x_grid.size
        # Interpolation through n nodes with degree n-1 is exact; chebfit
        # solves the square Vandermonde system in the Chebyshev basis.
        self._deg = n - 1

    def fit(self, vals: np.ndarray) -> np.ndarray:
        coef = _cheb.chebfit(self.t, vals, self._deg)
        # Chop trailing modes at the roundoff floor so differentiation
        # does not amplify them (k^2 per derivative, compounding over
        # orders); the tail check below runs on the unchopped fit.
        mag = np.abs(coef)
        big = mag > 1e-13 * mag.max()
        if big.any():
            coef[int(np.nonzero(big)[0][-1]) + 1:] = 0.0
        return coef

    def fit_raw(self, vals: np.ndarray) -> np.ndarray:
        return _cheb.chebfit(self.t, vals, self._deg)

    def vals(self, coef: np.ndarray) -> np.ndarray:
        return _cheb.chebval(self.t, coef)

    def deriv_vals(self, vals: np.ndarray) -> np.ndarray:
        coef = self.fit(vals)
        return _cheb.chebval(self.t, _cheb.chebder(coef)) * (2.0 / self.x_max)

    def cumint_vals(self, vals: np.ndarray) -> np.ndarray:
        # Cumulative integral from x = 0 (t = -1) along the grid.
        coef = self.fit(vals)
        anti = _cheb.chebint(coef)
        prim = _cheb.chebval(self.t, anti)
        return (prim - _cheb.chebval(-1.0, anti)) * (self.x_max / 2.0)

    def tail_fraction(self, vals: np.ndarray) -> float:
        coef = self.fit_raw(vals)
        m = max(4, coef.size // 8)
        scale = np.max(np.abs(coef))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(coef[-m:])) / scale)


@dataclass(frozen=True)
class GridCoefficient:
    """One order of the inverse-ramp-time expansion on a momentum slice.

    values c (P sector), d (M sector) and e (trace sector) are sampled on
    x_grid; the slow solution is sum_k {c,d,e}_k * dtau^(-k).
    """

    order: int
    y: float
    x_grid: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray

    def to_csv(self, path) -> None:
        header = (f"# conditioned-ramp coefficient order={self.order} "
                  f"y={self.y:g}\n# columns: x, c, d, e")
        data = np.column_stack([self.x_grid, self.c, self.d, self.e])
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def nojump_coefficients(K: int, y: float,
                        x_grid: np.ndarray | None = None,
                        x_max: float = 0.95,
                        nodes: int = 129,
                        e0_constant: float | None = None,
                        guard: float = DEFAULT_GUARD,
                        tol: float = 1e-8) -> list[GridCoefficient]:
    """Coefficient functions of the slow expansion, orders 0..K.

    The recursion couples the three sectors: each new M coefficient is a
    derivative of the previous P one, each trace coefficient an anchored
    cumulative integral of it, and each P coefficient combines both.  With
    the trace sector anchored to its x = 0 value, odd orders populate the
    P sector and even orders the other two; in particular e_1 and c_2
    vanish identically.

    e0_constant fixes the dtau-independent trace amplitude e_0 = C/u; the
    default C = sqrt(1+y^2)/2 corresponds to unit initial trace in the
    instantaneous ground state.  The prefactor cancels from the normalized
    deficit, whose leading term is c_1/(e_0 dtau) = -1/(2 u^2 dtau).

    Raises SingularPoint if the grid enters the guard band of
    x = sqrt(1+y^2), and GridTooCoarse when the spectral tail of any
    computed coefficient exceeds tol (differentiation has amplified
    resolution error past the requested accuracy).
    """
    if K < 1:
        raise ValueError("need K >= 1")
    y = float(y)
    lim = math.sqrt(1.0 + y * y)
    if x_grid is None:
        if not 0.0 < x_max < lim - guard:
            raise SingularPoint(
                f"x_max = {x_max:g} inside the guard band of the "
                f"square-root singularity at x = {lim:g}")
        x_grid = _cheb_nodes(int(nodes), float(x_max))
    else:
        x_grid = np.asarray(x_grid, dtype=float)
        if x_grid.ndim != 1 or x_grid.size < 8:
            raise ValueError("x_grid must be a 1-d array of at least 8 points")
        if np.any(np.diff(x_grid) <= 0.0) or x_grid[0] < 0.0:
            raise ValueError("x_grid must be increasing and start at x >= 0")
        if x_grid[-1] >= lim - guard:
            raise SingularPoint(
                f"grid end {x_grid[-1]:g} inside the guard band of the "
                f"square-root singularity at x = {lim:g}")
        x_max = float(x_grid[-1])
    frame = _ChebFrame(x_grid, x_max)

    opy = 1.0 + y * y
    u = np.sqrt(opy - x_grid * x_grid)
    const = math.sqrt(opy) / 2.0 if e0_constant is None else float(e0_constant)

    zeros = np.zeros_like(x_grid)
    c_prev = zeros
    d_prev = zeros
    e_prev = const / u
    out = [GridCoefficient(order=0, y=y, x_grid=x_grid,
                           c=c_prev, d=d_prev, e=e_prev)]
    for k in range(1, K + 1):
        dc = frame.deriv_vals(c_prev)
        dd = frame.deriv_vals(d_prev)
        c_k = -e_prev / (2.0 * u * u) - dd / (2.0 * u)
        d_k = dc / (2.0 * u)
        e_k = -(opy / (2.0 * u)) * frame.cumint_vals(dc / u ** 3)
        for name, vals in (("c", c_k), ("d", d_k), ("e", e_k)):
            tail = frame.tail_fraction(vals)
            if tail > tol:
                raise GridTooCoarse(
                    f"{name}_{k} spectral tail {tail:.2e} exceeds {tol:g}; "
                    f"refine the grid or lower the order")
        out.append(GridCoefficient(order=k, y=y, x_grid=x_grid,
                                   c=c_k, d=d_k, e=e_k))
        c_prev, d_prev, e_prev = c_k, d_k, e_k
    return out


def series_defect(coeffs: list[GridCoefficient], dtau: float) -> np.ndarray:
    """Normalized deficit P/r0 on the grid, summed through the given orders."""
    if dtau <= 0.0:
        raise ValueError("dtau must be positive")
    P = np.zeros_like(coeffs[0].x_grid)
    r0 = np.zeros_like(P)
    for gc in coeffs:
        w = dtau ** (-gc.order)
        P = P + w * gc.c
        r0 = r0 + w * gc.e
    return P / r0


# ---------------------------------------------------------------------------
# End-of-ramp evolution and the universal overlay.


def nojump_evolve(params: ModeParams, dtau: float | None = None,
                  x_end: float = 1.0,
                  controls: IntegrationControls | None = None) -> float:
    """Normalized end-of-ramp deficit n_z of one conditioned mode.

    Propagates the raw 4-component coherence vector under the conditioned
    generator to t = x_end * tau, normalizes by the decayed trace and
    subtracts the stationary reference selected by controls.reference.
    dtau, when given, overrides the ramp time as dtau / scale with the
    mode's own rate scale.  x_end = 1 touches the degeneracy only for the
    zero-momentum gapped mode and is permitted: the unreduced propagation
    has no singularity there.
    """
    if not 0.0 < x_end <= 1.0:
        raise ValueError("x_end must lie in (0, 1]")
    if dtau is not None:
        if dtau <= 0.0:
            raise ValueError("dtau must be positive")
        params = ModeParams(p=params.p, delta=params.delta,
                            gamma0=params.gamma0, tau=dtau / params.scale,
                            epsilon=params.epsilon)
    out = defect_nojump_batch(np.array([params.p]), params.delta,
                              params.gamma0, params.tau,
                              x_end=x_end, controls=controls)
    return float(out[0, 2])


@dataclass(frozen=True)
class ScalingCollapse:
    """Rescaled end-of-ramp sweeps on a shared scaled-momentum axis.

    scaled_defect holds one row per ramp time: (dtau)^exponent * n_z
    interpolated onto scaled_momentum = (p/delta) * (dtau)^exponent.
    residual is the maximum pointwise spread between rows divided by the
    peak magnitude of their mean; a correct exponent collapses the rows
    and drives it small.
    """

    scaled_momentum: np.ndarray
    scaled_defect: np.ndarray
    tau_list: tuple
    exponent: float
    residual: float

    def to_csv(self, path) -> None:
        lines = [f"# scaling collapse exponent={self.exponent:g} "
                 f"residual={self.residual:.4e}",
                 "# columns: scaled_p, scaled_nz, tau"]
        for row, tau in zip(self.scaled_defect, self.tau_list):
            for s, v in zip(self.scaled_momentum, row):
                lines.append(f"{s:.12g},{v:.12g},{tau:.12g}")
        text = "\n".join(lines) + "\n"
        if hasattr(path, "write"):
            path.write(text)
        else:
            with open(path, "w") as fh:
                fh.write(text)


def scaling_collapse(delta: float, tau_list, p_grid,
                     exponent: float = 1.0 / 3.0,
                     x_end: float = 1.0,
                     controls: IntegrationControls | None = None
                     ) -> ScalingCollapse:
    """Overlay conditioned end-of-ramp sweeps in scaling variables.

    Runs the gapped conditioned ramp (gamma_0 = delta, ending on the
    zero-momentum degeneracy) for each tau, rescales momentum and deficit
    by (delta*tau)^exponent, and interpolates every curve onto the common
    scaled axis covered by all of them.  The default exponent 1/3 is the
    one that makes the curves coincide; a wrong exponent leaves a spread
    of order the curve itself.

    On this family every mode ends at or below the degeneracy, where the
    adiabatic baseline's sigma_z vanishes identically, so the default
    controls subtract no reference; explicit controls override that.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    taus = tuple(float(t) for t in tau_list)
    if len(taus) < 2:
        raise ValueError("need at least two ramp times")
    if not all(b > a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau_list must be strictly increasing")
    if taus[-1] < 10.0 * taus[0]:
        raise ValueError("tau_list must span at least one decade")
    p = np.asarray(p_grid, dtype=float)
    if p.ndim != 1 or p.size < 4:
        raise ValueError("p_grid must be a 1-d array of at least 4 points")
    if np.any(np.diff(p) <= 0.0) or p[0] < 0.0:
        raise ValueError("p_grid must be increasing with p >= 0")
    if controls is None:
        controls = IntegrationControls(reference="none")

    axes = []
    curves = []
    for tau in taus:
        w = (delta * tau) ** exponent
        nz = defect_nojump_batch(p, delta, delta, tau,
                                 x_end=x_end, controls=controls)[:, 2]
        axes.append((p / delta) * w)
        curves.append(w * nz)
    lo = max(ax[0] for ax in axes)
    hi = min(ax[-1] for ax in axes)
    if hi <= lo:
        raise ValueError("scaled axes do not overlap; widen p_grid")
    s_common = np.linspace(lo, hi, 201)
    rows = np.array([np.interp(s_common, ax, cv)
                     for ax, cv in zip(axes, curves)])
    mean = rows.mean(axis=0)
    spread = float(np.max(rows.max(axis=0) - rows.min(axis=0)))
    peak = float(np.max(np.abs(mean)))
    residual = spread / peak if peak > 0.0 else math.inf
    return ScalingCollapse(scaled_momentum=s_common, scaled_defect=rows,
                           tau_list=taus, exponent=float(exponent),
                           residual=residual)


def integrated_kz_exponent(delta: float, tau_list,
                           controls: IntegrationControls | None = None,
                           kind: str = "nojump"):
    """Power-law exponent of the momentum-integrated deficit density.

    Sweeps the ramp over tau_list, integrates n_z over momentum at each
    tau and fits log|density| against log tau.  delta > 0 selects the
    gapped ramp with gamma_0 = delta, which for the conditioned kind ends
    on the zero-momentum degeneracy and yields -2/3; delta = 0 selects
    the gapless ramp (gamma_0 = 1), whose momentum integral comes out
    linear in 1/tau again.  The trace-preserving evolution yields -1
    through the same fitter in every case.  Returns the fit record
    (exponent, stderr, tau window).
    """
    from .sweep import SweepPlan, default_quadrature, fit_exponent, tau_sweep

    spec = default_quadrature(kind, "gapped" if delta > 0.0 else "gapless")
    if delta > 0.0:
        plan = SweepPlan(kind=kind, case="gapped", tau_list=tuple(tau_list),
                         delta=delta, epsilon=1.0,
                         quadrature=spec, controls=controls)
    else:
        plan = SweepPlan(kind=kind, case="gapless", tau_list=tuple(tau_list),
                         gamma0=1.0, quadrature=spec, controls=controls)
    return fit_exponent(tau_sweep(plan))
