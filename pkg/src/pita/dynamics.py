"""Wheelbase-free kinematic bicycle model (KBM) and numerical helpers.

The model moves a state ``(x, y, theta, v)`` under a control
``(kappa, a)`` of path curvature and longitudinal acceleration::

    dx/dt = v cos(theta)    dy/dt = v sin(theta)
    dtheta/dt = v kappa     dv/dt = a

State and control tuples may hold floats, arrays or autodiff nodes, so the
same integrator serves data generation and the differentiable roll-out of
the action-space autoencoder.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from pita import autodiff as ad
from pita.errors import ContractError

KAPPA_SPEED_EPS = 0.1  # m/s; below this, recovered curvature is reported as 0


class KbmState(NamedTuple):
    x: object
    y: object
    theta: object
    v: object


class KbmInput(NamedTuple):
    kappa: object
    a: object


def kbm_derivative(state: KbmState, control: KbmInput) -> KbmState:
    """Time derivative of ``state`` under ``control``."""
    x, y, theta, v = state
    kappa, a = control
    return KbmState(v * ad.cos(theta), v * ad.sin(theta), v * kappa, a)


def _axpy(state, k, h):
    return KbmState(*(s + h * ks for s, ks in zip(state, k)))


def rk4_step(state: KbmState, control: KbmInput, dt: float) -> KbmState:
    """One classical Runge-Kutta step with the control held constant."""
    k1 = kbm_derivative(state, control)
    k2 = kbm_derivative(_axpy(state, k1, 0.5 * dt), control)
    k3 = kbm_derivative(_axpy(state, k2, 0.5 * dt), control)
    k4 = kbm_derivative(_axpy(state, k3, dt), control)
    return KbmState(
        *(
            s + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            for s, a1, a2, a3, a4 in zip(state, k1, k2, k3, k4)
        )
    )


def rk4_rollout(initial, controls, dt: float):
    """Integrate the KBM over a sequence of zero-order-hold controls.

    Returns one state per control; ``states[0]`` is already one step past
    ``initial``.  With an ``(T, 2)`` control array (and a length-4 initial
    state) the result is a ``(T, 4)`` array; with a sequence of
    :class:`KbmInput` it is a list of :class:`KbmState`.
    """
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    if isinstance(controls, np.ndarray):
        controls = np.asarray(controls, dtype=np.float64)
        if controls.ndim != 2 or controls.shape[1] != 2 or len(controls) < 1:
            raise ContractError(f"controls must have shape (T, 2), got {controls.shape}")
        state = KbmState(*np.asarray(initial, dtype=np.float64).tolist())
        out = np.empty((len(controls), 4))
        for t, (kappa, a) in enumerate(controls):
            state = rk4_step(state, KbmInput(kappa, a), dt)
            out[t] = state
        return out
    if len(controls) < 1:
        raise ContractError("rollout needs at least one control")
    state = KbmState(*initial)
    states = []
    for control in controls:
        state = rk4_step(state, KbmInput(*control), dt)
        states.append(state)
    return states


def central_differences(series, dt: float, axis: int = -1) -> np.ndarray:
    """Derivative of a sampled sequence, same length as the input.

    Interior samples use ``(s[t+1] - s[t-1]) / (2 dt)``; the two endpoints
    use one-sided first-order differences.
    """
    s = np.asarray(series, dtype=np.float64)
    if s.shape[axis] < 3:
        raise ContractError(f"central differences need >= 3 samples, got {s.shape[axis]}")
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    return np.gradient(s, dt, axis=axis, edge_order=1)


def recover_kbm_trajectory(positions, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Reconstruct KBM states and controls from positions alone.

    ``positions`` has shape ``(..., T, 2)``.  Returns ``states`` of shape
    ``(..., T, 4)`` and ``controls`` of shape ``(..., T, 2)``.  Speed and
    heading come from the differentiated positions, acceleration and yaw rate
    from a second differentiation; curvature is yaw rate over speed and is
    set to 0 where the speed is below ``KAPPA_SPEED_EPS``.
    """
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim < 2 or p.shape[-1] != 2:
        raise ContractError(f"positions must have shape (..., T, 2), got {p.shape}")
    if p.shape[-2] < 5:
        raise ContractError(f"need at least 5 positions, got {p.shape[-2]}")
    vx = central_differences(p[..., 0], dt)
    vy = central_differences(p[..., 1], dt)
    v = np.hypot(vx, vy)
    theta = np.unwrap(np.arctan2(vy, vx), axis=-1)
    a = central_differences(v, dt)
    yaw_rate = central_differences(theta, dt)
    moving = np.abs(v) > KAPPA_SPEED_EPS
    kappa = np.where(moving, yaw_rate / np.where(moving, v, 1.0), 0.0)
    states = np.stack([p[..., 0], p[..., 1], theta, v], axis=-1)
    controls = np.stack([kappa, a], axis=-1)
    return states, controls


def states_to_array(states: Sequence[KbmState]) -> np.ndarray:
    return np.array([tuple(s) for s in states], dtype=np.float64)
