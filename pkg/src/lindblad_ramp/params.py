"""Parameter and state containers for a single momentum mode.

Conventions: hbar = 1, the Hamiltonian is H_p = p*sigma_x + delta*sigma_y,
the environment couples through the jump operator 2*sqrt(gamma(t))*sigma_-,
and gamma(t) = gamma0 * t / tau is ramped linearly from 0 to gamma0.
States live in the coherence 4-vector |rho> = 1/2 * (v0, v1, v2, v3)^T,
where v0 tracks the trace sector and v1..v3 the sigma expectations; the
stored fields are exactly the components of that 4-vector, so expectation
values are component ratios, e.g. <sigma_z> = v3 / v0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMode

__all__ = ["ModeParams", "RampProtocol", "CoherenceVector"]


@dataclass(frozen=True)
class ModeParams:
    """Physical parameters of one momentum mode under the ramped coupling.

    epsilon = gamma0/delta is carried explicitly for the gapped case and is
    None for the gapless (delta = 0) case, where gamma0 itself sets the scale.
    """

    p: float
    delta: float
    gamma0: float
    tau: float
    epsilon: float | None = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.delta < 0 or self.gamma0 < 0:
            raise ValueError("delta and gamma0 must be non-negative")
        if self.delta == 0:
            if self.gamma0 <= 0:
                raise ValueError("gapless mode requires gamma0 > 0")
            if self.epsilon is not None:
                raise ValueError("epsilon is undefined for the gapless mode")
        else:
            eps = self.gamma0 / self.delta
            if self.epsilon is None:
                object.__setattr__(self, "epsilon", eps)
            elif self.epsilon != eps:
                raise ValueError("epsilon must equal gamma0/delta")

    @classmethod
    def gapped(cls, p, delta, epsilon, tau):
        """Gapped mode with the ramp height fixed through epsilon = gamma0/delta."""
        if delta <= 0:
            raise ValueError("gapped mode requires delta > 0")
        return cls(p=p, delta=delta, gamma0=epsilon * delta, tau=tau, epsilon=epsilon)

    @classmethod
    def gapless(cls, p, gamma0, tau):
        """Gapless mode (delta = 0); gamma0 is the energy scale."""
        return cls(p=p, delta=0.0, gamma0=gamma0, tau=tau)

    @property
    def is_gapless(self):
        return self.delta == 0

    @property
    def energy(self):
        """Hamiltonian gap scale sqrt(p^2 + delta^2)."""
        return math.hypot(self.p, self.delta)

    @property
    def scale(self):
        """Scale used to nondimensionalize: delta (gapped) or gamma0 (gapless)."""
        return self.gamma0 if self.is_gapless else self.delta

    @property
    def y(self):
        """Scaled momentum p/delta (gapped) or p/gamma0 (gapless)."""
        return self.p / self.scale

    @property
    def scaled_tau(self):
        """delta*tau (gapped) or gamma0*tau (gapless)."""
        return self.scale * self.tau


@dataclass(frozen=True)
class RampProtocol:
    """Time dependence of the environment coupling gamma(t)."""

    gamma0: float
    tau: float
    shape: str = "linear"

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.gamma0 < 0:
            raise ValueError("gamma0 must be non-negative")
        if self.shape != "linear":
            raise ValueError(f"unknown ramp shape {self.shape!r}")

    @classmethod
    def from_params(cls, params: ModeParams) -> "RampProtocol":
        return cls(gamma0=params.gamma0, tau=params.tau)

    def gamma(self, t):
        """Coupling strength at time t; linear ramp hits gamma0 at t = tau."""
        return self.gamma0 * np.asarray(t) / self.tau

    def gamma_rate(self, t=None):
        """d(gamma)/dt, constant for the linear ramp."""
        return self.gamma0 / self.tau


@dataclass(frozen=True)
class CoherenceVector:
    """Coherence 4-vector; fields are the stored components of |rho>.

    For trace-preserving (full Lindblad) evolution v0 stays 1/2; the no-jump
    variant lets v0 decay or grow with the norm of the conditioned state.
    """

    v0: float
    v1: float
    v2: float
    v3: float

    @classmethod
    def from_bloch(cls, bx, by, bz):
        """Unit-trace state with Bloch vector (bx, by, bz)."""
        return cls(0.5, 0.5 * bx, 0.5 * by, 0.5 * bz)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        if a.shape != (4,):
            raise ValueError("expected a length-4 vector")
        return cls(*a.tolist())

    def as_array(self):
        return np.array([self.v0, self.v1, self.v2, self.v3])

    @property
    def trace(self):
        """Trace of the density matrix this vector encodes."""
        return 2.0 * self.v0

    def sigma(self):
        """Normalized expectation values (<sigma_x>, <sigma_y>, <sigma_z>)."""
        if self.v0 == 0:
            raise DegenerateMode("zero trace coordinate, expectations undefined")
        return np.array([self.v1, self.v2, self.v3]) / self.v0

    @property
    def sigma_z(self):
        return self.v3 / self.v0

    def bloch_norm(self):
        """Length of the normalized Bloch vector; <= 1 for a physical state."""
        return math.sqrt(self.v1**2 + self.v2**2 + self.v3**2) / self.v0
