"""Batched Dormand-Prince 5(4) integrator for linear two-component systems.

All trajectories in a batch share the same step sequence, which lets a
single pass evaluate many trial eigenvalues at once.  The error norm is the
maximum over every component of every trajectory, so batching never loosens
the per-trajectory tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import StepSizeUnderflow

# Hairer, Norsett & Wanner, Solving ODEs I, table 5.2
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B = _A[6].copy()
_B_LOW = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])
# rows: stage combinations for stages 2..7, then the error estimate
_W = np.vstack([_A[1:], _B - _B_LOW])

OVERFLOW_LIMIT = 1e150


@dataclass
class Trajectory:
    """Accepted steps of a batched integration.

    ``states[k]`` has shape ``(2, m)``.  Values are expressed in the scale of
    the final step: column ``j`` of the true solution is
    ``states[k][:, j] * 2.0**log2_scale[j]``.
    """

    t: np.ndarray
    states: np.ndarray
    log2_scale: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    t1: float,
    y0: np.ndarray,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_step: Optional[float] = None,
    rate: Optional[Callable[[float], float]] = None,
    record: bool = True,
    max_steps: int = 200_000,
) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1`` (either direction).

    ``y0`` has shape ``(2, m)``.  ``rate(t)``, when given, bounds how fast the
    solution rotates in its phase plane; steps are capped at ``0.5 / rate``
    so that the phase advances by less than a quarter turn per step.

    Columns whose magnitude exceeds ``OVERFLOW_LIMIT`` are rescaled by a power
    of two; the exponent is tracked in ``Trajectory.log2_scale``.
    """
    y = np.array(y0, dtype=float, copy=True)
    if y.ndim == 1:
        y = y[:, None]
    span = t1 - t0
    direction = 1.0 if span >= 0 else -1.0
    length = abs(span)
    hmax = length if max_step is None else min(max_step, length)
    exps = np.zeros(y.shape[1], dtype=np.int64)

    ts = [t0]
    states = [y.copy()]
    step_exps = [exps.copy()]
    if length == 0.0:
        return Trajectory(np.array(ts), np.array(states), exps)

    t = t0
    k1 = rhs(t, y)
    h = _initial_step(rhs, t, y, k1, direction, rtol, atol, hmax)
    hmin = 1e-14 * max(1.0, abs(t0), abs(t1))
    K = np.empty((7, y.size))

    for _ in range(max_steps):
        remaining = abs(t1 - t)
        if remaining <= 1e-15 * max(1.0, abs(t1)):
            break
        cap = hmax
        if rate is not None:
            cap = min(cap, 0.5 / max(rate(t), 1e-300))
        h = min(h, cap, remaining)
        if h < hmin:
            raise StepSizeUnderflow(t, h)
        hs = direction * h
        K[0] = k1.ravel()
        yflat = y.ravel()
        for i in range(1, 7):
            yi = yflat + hs * np.dot(_A[i, :i], K[:i])
            K[i] = rhs(t + _C[i] * hs, yi.reshape(y.shape)).ravel()
        # the 7th stage sits at the 5th-order solution (FSAL)
        y_new = yi.reshape(y.shape)
        err = (hs * np.dot(_W[6], K)).reshape(y.shape)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        enorm = float(np.max(np.abs(err) / scale))
        if not np.isfinite(enorm):
            h *= 0.2
            continue
        if enorm <= 1.0:
            t = t1 if h == remaining else t + hs
            y = y_new
            k1 = K[6].reshape(y.shape).copy()
            big = np.max(np.abs(y), axis=0) > OVERFLOW_LIMIT
            if np.any(big):
                shift = np.zeros_like(exps)
                shift[big] = np.frexp(np.max(np.abs(y[:, big]), axis=0))[1]
                y = np.ldexp(y, -shift)
                k1 = np.ldexp(k1, -shift)
                exps = exps + shift
            if record:
                ts.append(t)
                states.append(y.copy())
                step_exps.append(exps.copy())
            factor = 5.0 if enorm == 0.0 else min(5.0, 0.9 * enorm ** -0.2)
            h *= factor
        else:
            h *= max(0.2, 0.9 * enorm ** -0.2)
    else:
        raise StepSizeUnderflow(t, h, reason="maximum step count exceeded")

    if not record:
        ts.append(t)
        states.append(y.copy())
        step_exps.append(exps.copy())
    states_arr = np.array(states)
    shift = np.array(step_exps) - exps[None, :]
    if np.any(shift):
        states_arr = np.ldexp(states_arr, shift[:, None, :])
    return Trajectory(np.array(ts), states_arr, exps)


def _initial_step(rhs, t, y, f0, direction, rtol, atol, hmax):
    # Hairer's starting step heuristic
    scale = atol + rtol * np.abs(y)
    d0 = np.max(np.abs(y) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, hmax)
    f1 = rhs(t + direction * h0, y + direction * h0 * f0)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, hmax)
