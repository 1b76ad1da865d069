"""Coherence-vector supermatrix of the ramped two-level problem and its
closed-form eigensystem.

Two generator kinds act on the 4-vector 1/2*(v0, v1, v2, v3):

* ``full``   - the trace-preserving Lindblad generator with jump operator
  2*sqrt(gamma)*sigma_-; eigenvalues {0, -2*gamma, -3*gamma +/- i*S} with
  S = sqrt(4*(p^2+delta^2) - gamma^2).
* ``nojump`` - the non-Hermitian (conditioned, recycling term dropped)
  generator built from H_eff = p*sigma_x + delta*sigma_y + i*gamma*sigma_z;
  eigenvalues {0, 0, +/- 2i*R} with R = sqrt(p^2+delta^2-gamma^2).

Both kinds lose their eigenbasis on an exceptional point: gamma = 2*sqrt(
p^2+delta^2) for ``full``, gamma = sqrt(p^2+delta^2) for ``nojump``.
All eigenvectors here are hard-coded closed forms; a generic eigensolver
appears only in the test suite as a cross-check oracle.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMode, EPDegenerate
from .params import CoherenceVector, ModeParams

__all__ = [
    "KINDS",
    "EigenSystem",
    "build_supermatrix",
    "eigensystem",
    "steady_state",
    "initial_ground_state",
    "project_onto_eigenbasis",
    "reconstruct",
    "find_ep",
]

KINDS = ("full", "nojump")

# relative (to p^2+delta^2) distance from the EP below which the eigenbasis
# is treated as degenerate
EP_TOL = 1e-9


def _check_kind(kind):
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


def build_supermatrix(params: ModeParams, gamma: float, kind: str = "full"):
    """4x4 real generator acting on the coherence 4-vector at coupling gamma."""
    _check_kind(kind)
    p, dl = params.p, params.delta
    g = float(gamma)
    if kind == "full":
        return np.array(
            [
                [0.0, 0.0, 0.0, 0.0],
                [0.0, -2 * g, 0.0, 2 * dl],
                [0.0, 0.0, -2 * g, -2 * p],
                [-4 * g, -2 * dl, 2 * p, -4 * g],
            ]
        )
    return np.array(
        [
            [0.0, 0.0, 0.0, -2 * g],
            [0.0, 0.0, 0.0, 2 * dl],
            [0.0, 0.0, 0.0, -2 * p],
            [-2 * g, -2 * dl, 2 * p, 0.0],
        ]
    )


@dataclass(frozen=True)
class EigenSystem:
    """Instantaneous eigendecomposition of the generator.

    ``right[a]`` and ``left[a]`` are the right/left eigenvectors to
    ``eigenvalues[a]``; ``norms[a] = left[a] . right[a]`` (plain dot, no
    conjugation: left vectors are genuine left eigenvectors of the real
    non-symmetric generator). Pairs with distinct eigenvalues are mutually
    orthogonal under that pairing.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    norms: np.ndarray
    kind: str
    gamma: float

    def matrix(self):
        """Reassembled generator sum_a lambda_a |D_a><E_a| / norm_a."""
        out = np.zeros((4, 4), dtype=complex)
        for lam, d, e, n in zip(self.eigenvalues, self.right, self.left, self.norms):
            out += lam * np.outer(d, e) / n
        return out


def _ep_gap(params: ModeParams, gamma: float, kind: str) -> float:
    e2 = params.p**2 + params.delta**2
    if kind == "full":
        return 4.0 * e2 - gamma * gamma
    return e2 - gamma * gamma


def _zero_block_nojump(p, dl, g):
    """Right and left bases of the two-fold lambda=0 eigenspace, chosen to
    stay regular in the p=0 / delta=0 / gamma=0 corners."""
    if dl == 0.0 and g == 0.0:
        right = [(1.0, 0.0, 0.0, 0.0), (0.0, 1.0, 0.0, 0.0)]
        left = [(1.0, 0.0, 0.0, 0.0), (0.0, 1.0, 0.0, 0.0)]
    elif dl == 0.0:
        right = [(p, 0.0, g, 0.0), (0.0, 1.0, 0.0, 0.0)]
        left = [(p, 0.0, -g, 0.0), (0.0, 1.0, 0.0, 0.0)]
    elif p == 0.0:
        right = [(dl, -g, 0.0, 0.0), (0.0, 0.0, 1.0, 0.0)]
        left = [(dl, g, 0.0, 0.0), (0.0, 0.0, 1.0, 0.0)]
    else:
        right = [(dl, -g, 0.0, 0.0), (0.0, p, dl, 0.0)]
        left = [(dl, g, 0.0, 0.0), (0.0, p, dl, 0.0)]
    D = np.array(right, dtype=complex)
    E = np.array(left, dtype=complex)
    # dualize the left pair against the right pair: the raw closed-form
    # vectors are not biorthogonal inside the degenerate block, and the
    # projection contract r_a = <E_a|rho>/<E_a|D_a> needs a diagonal Gram
    G = E @ D.T
    E = np.linalg.solve(G, E)
    return D, E


def eigensystem(params: ModeParams, gamma: float, kind: str = "full", ep_tol: float = EP_TOL) -> EigenSystem:
    """Closed-form eigensystem of the generator at coupling gamma.

    Raises EPDegenerate within ``ep_tol`` (relative to p^2+delta^2) of the
    exceptional point and DegenerateMode at p = delta = 0.
    """
    _check_kind(kind)
    p, dl = params.p, params.delta
    g = float(gamma)
    e2 = p * p + dl * dl
    if e2 == 0.0:
        raise DegenerateMode("p = delta = 0 leaves no Hamiltonian scale")
    gap = _ep_gap(params, g, kind)
    if abs(gap) < ep_tol * e2:
        raise EPDegenerate(
            f"coupling gamma={g} sits on the {kind} exceptional point "
            f"(|gap|={abs(gap):.3e} < {ep_tol:.1e} * (p^2+delta^2))"
        )

    if kind == "full":
        S = cmath.sqrt(complex(gap))  # sqrt(4 e2 - g^2), imaginary above the EP
        W = e2 + 2 * g * g
        lam = np.array([0.0, -2 * g, -3 * g + 1j * S, -3 * g - 1j * S])
        Ap = (g + 1j * S) / (2 * e2)
        Am = (g - 1j * S) / (2 * e2)
        right = np.array(
            [
                [0.5, -dl * g / W, p * g / W, -g * g / W],
                [0.0, p, dl, 0.0],
                [0.0, -dl * Ap, p * Ap, 1.0],
                [0.0, -dl * Am, p * Am, 1.0],
            ],
            dtype=complex,
        )
        left = np.array(
            [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, p, dl, 0.0],
                [g * (3 * g + 1j * S) / W, dl * Ap, -p * Ap, 1.0],
                [g * (3 * g - 1j * S) / W, dl * Am, -p * Am, 1.0],
            ],
            dtype=complex,
        )
        norms = np.array([0.5, e2, 2.0 - g * Ap, 2.0 - g * Am], dtype=complex)
    else:
        R = cmath.sqrt(complex(gap))  # sqrt(e2 - g^2)
        lam = np.array([0.0, 0.0, 2j * R, -2j * R])
        D0, E0 = _zero_block_nojump(p, dl, g)
        # oscillating pair, rescaled by i*R to stay finite for all couplings
        D2 = np.array([-g, dl, -p, 1j * R], dtype=complex)
        D3 = np.array([g, -dl, p, 1j * R], dtype=complex)
        E2 = np.array([-g, -dl, p, 1j * R], dtype=complex)
        E3 = np.array([g, dl, -p, 1j * R], dtype=complex)
        right = np.vstack([D0, D2, D3])
        left = np.vstack([E0, E2, E3])
        norms = np.array([1.0, 1.0, -2 * R * R, -2 * R * R], dtype=complex)
    return EigenSystem(eigenvalues=lam, right=right, left=left, norms=norms, kind=kind, gamma=g)


def steady_state(params: ModeParams, gamma: float) -> CoherenceVector:
    """Unique stationary state of the full Lindblad generator at coupling gamma."""
    p, dl = params.p, params.delta
    g = float(gamma)
    W = p * p + dl * dl + 2 * g * g
    if W == 0.0:
        raise DegenerateMode("p = delta = gamma = 0 has no unique stationary state")
    return CoherenceVector(0.5, -dl * g / W, p * g / W, -g * g / W)


def initial_ground_state(params: ModeParams) -> CoherenceVector:
    """Ground state of H_p = p*sigma_x + delta*sigma_y (the t=0 state of the ramp)."""
    e = params.energy
    if e == 0.0:
        raise DegenerateMode("p = delta = 0 has no unique ground state")
    return CoherenceVector.from_bloch(-params.p / e, -params.delta / e, 0.0)


def project_onto_eigenbasis(eig: EigenSystem, state) -> np.ndarray:
    """Expansion coefficients r_a = <E_a|state> / <E_a|D_a>."""
    s = state.as_array() if isinstance(state, CoherenceVector) else np.asarray(state, dtype=float)
    return (eig.left @ s.astype(complex)) / eig.norms


def reconstruct(eig: EigenSystem, r) -> np.ndarray:
    """Rebuild the coherence vector sum_a r_a |D_a> (real part)."""
    out = np.asarray(r, dtype=complex) @ eig.right
    return out.real


def find_ep(params: ModeParams, kind: str = "full") -> float:
    """Coupling strength at which the generator's eigenbasis degenerates."""
    _check_kind(kind)
    e = params.energy
    if e == 0.0:
        raise DegenerateMode("p = delta = 0 has no exceptional point")
    return 2.0 * e if kind == "full" else e
