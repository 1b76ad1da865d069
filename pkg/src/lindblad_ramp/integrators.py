"""Time steppers for the linear coherence-vector equation v' = L(t) v.

Two families live here:

* classical explicit Runge-Kutta: an adaptive Dormand-Prince 4(5) pair and a
  fixed-step RK4, driven by a right-hand-side callable ``f(t, y)``;
* exponential midpoint and fourth-order commutator-free steppers, driven by a
  generator callable ``L(t)`` returning the instantaneous matrix.  These stay
  accurate on strongly oscillatory or exponentially growing runs where an
  explicit pair would need a prohibitive step count, and they act on whole
  batches of modes at once.

All steppers accept states of shape (4,) or (n, 4); the batch axis is carried
through untouched.  Sample times are hit exactly by clipping steps, so no
interpolation error enters the stored trajectories.
"""
from __future__ import annotations

import numpy as np

from .errors import NonFiniteState, StepSizeUnderflow

# Dormand-Prince 4(5) tableau (FSAL form).  _DP_E is b5 - b4, used for the
# embedded error estimate.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = (
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
)
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_MIN_STEP_FRACTION = 1e-14
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def _error_norm(err, y_old, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, t0, y0, rtol, atol, span):
    """Cheap curvature-free guess; the controller corrects it within a few steps.

    Floored well above the underflow cutoff: a vanishing initial state
    (deviation variables start at zero) would otherwise drive the guess
    straight below the floor before the controller ever acts.
    """
    d0 = np.max(np.abs(y0)) + atol
    d1 = np.max(np.abs(f(t0, y0))) + atol
    h = 0.01 * d0 / d1 if d1 > 0 else span / 100.0
    return min(max(h, 1e-6 * span), span / 10.0)


def rk45(f, t0, t1, y0, rtol=1e-10, atol=1e-12, sample_ts=None, max_steps=5_000_000,
         renorm=None):
    """Adaptive Dormand-Prince integration of y' = f(t, y) from t0 to t1.

    Returns (ts, ys, stats) where ts are the sample instants (t1 alone when
    sample_ts is None), ys is stacked states at those instants, and stats counts
    accepted/rejected steps.  Steps are clipped to land on every sample time.
    """
    if sample_ts is None:
        sample_ts = np.array([t1])
    else:
        sample_ts = np.asarray(sample_ts, dtype=float)
    y = np.array(y0, dtype=float)
    t = float(t0)
    span = float(t1) - float(t0)
    if span <= 0:
        raise ValueError("t1 must exceed t0")
    out = []
    si = 0
    while si < sample_ts.size and sample_ts[si] <= t0 + 1e-300:
        out.append(y.copy())
        si += 1
    h = _initial_step(f, t, y, rtol, atol, span)
    k1 = f(t, y)
    accepted = rejected = 0
    while si < sample_ts.size:
        if accepted + rejected >= max_steps:
            raise StepSizeUnderflow(
                f"step budget {max_steps} exhausted at t={t:.6g}")
        target = sample_ts[si]
        h = min(h, target - t)
        if h < _MIN_STEP_FRACTION * span:
            raise StepSizeUnderflow(
                f"step size {h:.3e} below floor at t={t:.6g}")
        ks = [k1]
        for stage in range(5):
            a = _DP_A[stage]
            dy = sum(a[j] * ks[j] for j in range(stage + 1))
            ks.append(f(t + _DP_C[stage + 1] * h, y + h * dy))
        y_new = y + h * sum(_DP_B[j] * ks[j] for j in range(6))
        k_last = f(t + h, y_new)
        ks.append(k_last)
        err = h * sum(_DP_E[j] * ks[j] for j in range(7))
        if not np.all(np.isfinite(y_new)):
            raise NonFiniteState(f"non-finite state at t={t + h:.6g}")
        enorm = _error_norm(err, y, y_new, rtol, atol)
        if enorm <= 1.0:
            t += h
            y = y_new
            k1 = k_last
            accepted += 1
            if renorm is not None:
                y = renorm(y)
                k1 = f(t, y)
            while si < sample_ts.size and t >= sample_ts[si] - 1e-12 * span:
                out.append(y.copy())
                si += 1
            factor = _MAX_FACTOR if enorm == 0 else min(
                _MAX_FACTOR, _SAFETY * enorm ** -0.2)
            h = min(h * max(factor, _MIN_FACTOR), span)
        else:
            rejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * enorm ** -0.2)
    stats = {"accepted": accepted, "rejected": rejected}
    return sample_ts, np.array(out), stats


def rk4(f, t0, t1, y0, nsteps, sample_ts=None, renorm=None):
    """Classical fixed-step RK4; deterministic and reproducible.

    The step grid is the union of uniform substeps within each sample interval,
    sized so the total count is at least nsteps.
    """
    if sample_ts is None:
        sample_ts = np.array([t1])
    else:
        sample_ts = np.asarray(sample_ts, dtype=float)
    edges = np.concatenate(([t0], sample_ts))
    y = np.array(y0, dtype=float)
    span = float(t1) - float(t0)
    out = []
    for i in range(len(edges) - 1):
        a, b = edges[i], edges[i + 1]
        if b <= a + 1e-300:
            out.append(y.copy())
            continue
        n = max(1, int(np.ceil(nsteps * (b - a) / span)))
        h = (b - a) / n
        for j in range(n):
            t = a + j * h
            k1 = f(t, y)
            k2 = f(t + h / 2, y + h / 2 * k1)
            k3 = f(t + h / 2, y + h / 2 * k2)
            k4 = f(t + h, y + h * k3)
            y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            if renorm is not None:
                y = renorm(y)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"non-finite state at t={b:.6g}")
        out.append(y.copy())
    return sample_ts, np.array(out), {"accepted": sum(
        max(1, int(np.ceil(nsteps * (edges[i + 1] - edges[i]) / span)))
        for i in range(len(edges) - 1) if edges[i + 1] > edges[i]), "rejected": 0}


# Pade-13 coefficients for the scaling-and-squaring matrix exponential.
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def expm_batch(A):
    """Matrix exponential of a batch of small matrices, shape (..., m, m).

    Scaling-and-squaring with a degree-13 Pade approximant; one scaling power
    is shared across the batch (the max needed), which only adds accuracy.
    """
    A = np.asarray(A, dtype=float)
    norm = np.max(np.sum(np.abs(A), axis=-1)) if A.size else 0.0
    s = max(0, int(np.ceil(np.log2(norm / _THETA13))) if norm > _THETA13 else 0)
    A = A / (2.0 ** s)
    b = _PADE13
    eye = np.broadcast_to(np.eye(A.shape[-1]), A.shape)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * eye)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * eye)
    X = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        X = X @ X
    return X


def _apply(M, y):
    """Batched matrix @ state for M (..., m, m) and y (..., m)."""
    return np.einsum("...ij,...j->...i", M, y)


_GROWTH_CAP = 200.0
_GAUSS_SHIFT = np.sqrt(3.0) / 6.0
_CF4_X1 = (3.0 - 2.0 * np.sqrt(3.0)) / 12.0
_CF4_X2 = (3.0 + 2.0 * np.sqrt(3.0)) / 12.0


def _exp_step(L, t, h, y, order):
    """One exponential step of size h starting at t; order 2 or 4."""
    if order == 2:
        B = h * L(t + 0.5 * h)
        return _apply(expm_batch(B), y)
    A1 = L(t + (0.5 - _GAUSS_SHIFT) * h)
    A2 = L(t + (0.5 + _GAUSS_SHIFT) * h)
    first = h * (_CF4_X2 * A1 + _CF4_X1 * A2)
    second = h * (_CF4_X1 * A1 + _CF4_X2 * A2)
    y = _apply(expm_batch(first), y)
    return _apply(expm_batch(second), y)


def exponential(L, t0, t1, y0, nsteps, order=4, sample_ts=None, renorm=None):
    """Fixed-step exponential integrator for y' = L(t) y.

    order=2 is the exponential midpoint rule; order=4 the two-exponential
    commutator-free scheme on Gauss nodes.  L(t) may return a batch (n, 4, 4)
    matching a batch of states (n, 4).  Steps whose generator norm exceeds a
    growth cap are split into substeps (with fresh node evaluations) so that
    exponentially growing runs never overflow; pair with renorm for those.
    """
    if sample_ts is None:
        sample_ts = np.array([t1])
    else:
        sample_ts = np.asarray(sample_ts, dtype=float)
    edges = np.concatenate(([t0], sample_ts))
    y = np.array(y0, dtype=float)
    span = float(t1) - float(t0)
    if span <= 0:
        raise ValueError("t1 must exceed t0")
    out = []
    taken = 0
    for i in range(len(edges) - 1):
        a, b = edges[i], edges[i + 1]
        if b <= a + 1e-300:
            out.append(y.copy())
            continue
        n = max(1, int(np.ceil(nsteps * (b - a) / span)))
        h = (b - a) / n
        for j in range(n):
            t = a + j * h
            gnorm = h * np.max(np.sum(np.abs(L(t + 0.5 * h)), axis=-1))
            nsub = max(1, int(np.ceil(gnorm / _GROWTH_CAP)))
            hs = h / nsub
            for k in range(nsub):
                y = _exp_step(L, t + k * hs, hs, y, order)
                if renorm is not None:
                    y = renorm(y)
            taken += nsub
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"non-finite state at t={b:.6g}")
        out.append(y.copy())
    return sample_ts, np.array(out), {"accepted": taken, "rejected": 0}
