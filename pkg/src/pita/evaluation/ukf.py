"""Unscented Kalman filter and RTS smoother with a KBM process model.

The filter state is ``(x, y, theta, v, kappa, a)``: the KBM state augmented
with its controls, which evolve as random walks.  Only positions are
measured.  All routines are vectorized over a leading batch axis so that
large numbers of trajectories can be smoothed at once.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from pita.dynamics import KbmInput, KbmState, rk4_step
from pita.errors import ConfigError, ContractError, NumericalError

N_STATE = 6
SIGMA_SCHEME = "scaled symmetric 2n+1 (van der Merwe)"


@dataclass(frozen=True)
class UkfConfig:
    """Noise model and sigma-point parameters.

    ``process_std`` holds the per-step random-walk standard deviations of
    ``(x, y, theta, v, kappa, a)``.
    """

    process_std: tuple[float, ...] = (0.01, 0.01, 0.005, 0.02, 0.05, 0.5)
    measurement_std: float = 0.1
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0
    dt: float = 0.04

    def __post_init__(self):
        object.__setattr__(self, "process_std", tuple(float(s) for s in self.process_std))
        if len(self.process_std) != N_STATE or min(self.process_std) <= 0:
            raise ConfigError(f"process_std needs {N_STATE} positive entries, got {self.process_std}")
        if not self.measurement_std > 0:
            raise ConfigError("measurement_std must be positive")
        if not self.alpha > 0 or N_STATE + self.lam <= 0:
            raise ConfigError("invalid sigma-point parameters")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")

    @property
    def lam(self) -> float:
        return self.alpha**2 * (N_STATE + self.kappa) - N_STATE

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        n, lam = N_STATE, self.lam
        wm = np.full(2 * n + 1, 0.5 / (n + lam))
        wc = wm.copy()
        wm[0] = lam / (n + lam)
        wc[0] = wm[0] + (1.0 - self.alpha**2 + self.beta)
        return wm, wc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["process_std"] = list(self.process_std)
        d["sigma_points"] = SIGMA_SCHEME
        return d


def _process(states: np.ndarray, dt: float) -> np.ndarray:
    """KBM step with held controls; ``states`` is ``(..., 6)``."""
    s = KbmState(states[..., 0], states[..., 1], states[..., 2], states[..., 3])
    u = KbmInput(states[..., 4], states[..., 5])
    nxt = rk4_step(s, u, dt)
    return np.stack([*nxt, states[..., 4], states[..., 5]], axis=-1)


def _chol(P: np.ndarray, step: int, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{what} covariance lost positive definiteness at step {step}") from None


def _sigma_points(m, P, c, step, what):
    """``(B, 2n+1, n)`` sigma points around mean ``m`` (B, n)."""
    L = _chol(c * P, step, what)  # (B, n, n); columns are offsets
    offsets = np.swapaxes(L, -1, -2)  # rows are columns of L
    return np.concatenate([m[:, None, :], m[:, None, :] + offsets, m[:, None, :] - offsets], axis=1)


def _sym(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def _initial_state(z: np.ndarray, dt: float) -> np.ndarray:
    k = min(2, z.shape[1] - 1)
    d = (z[:, k] - z[:, 0]) / (k * dt)
    m = np.zeros((len(z), N_STATE))
    m[:, :2] = z[:, 0]
    m[:, 2] = np.arctan2(d[:, 1], d[:, 0])
    m[:, 3] = np.hypot(d[:, 0], d[:, 1])
    return m


def ukf_smooth_batch(positions, config: UkfConfig = UkfConfig(), return_covariances: bool = False):
    """Smoothed positions for a batch ``(B, T, 2)`` of trajectories.

    Runs a forward UKF pass then an unscented RTS backward pass.
    Covariances are symmetrized and checked for positive definiteness at
    every step; a failure raises :class:`NumericalError` naming the step.
    With ``return_covariances`` the smoothed covariances ``(B, T, 6, 6)`` are
    returned as well.
    """
    z = np.asarray(positions, dtype=np.float64)
    if z.ndim != 3 or z.shape[-1] != 2:
        raise ContractError(f"positions must have shape (B, T, 2), got {z.shape}")
    B, T, _ = z.shape
    if T < 5:
        raise ContractError(f"UKF smoothing needs >= 5 positions, got {T}")
    n = N_STATE
    wm, wc = config.weights()
    c = n + config.lam
    Q = np.diag(np.square(config.process_std))
    R = np.eye(2) * config.measurement_std**2
    H = np.zeros((2, n))
    H[0, 0] = H[1, 1] = 1.0
    eye = np.eye(n)

    mf = np.empty((B, T, n))
    Pf = np.empty((B, T, n, n))
    mp = np.empty((B, T, n))
    Pp = np.empty((B, T, n, n))
    Cx = np.empty((B, T, n, n))  # cross covariance of (x_{k-1}, x_k) at prediction k

    m = _initial_state(z, config.dt)
    P = np.broadcast_to(np.diag([config.measurement_std**2] * 2 + [0.5**2, 2.0**2, 0.1**2, 1.0**2]), (B, n, n)).copy()
    for k in range(T):
        if k > 0:
            X = _sigma_points(m, P, c, k, "filtered")
            FX = _process(X, config.dt)
            m_pred = np.einsum("s,bsn->bn", wm, FX)
            dF = FX - m_pred[:, None, :]
            dX = X - m[:, None, :]
            P_pred = _sym(np.einsum("s,bsi,bsj->bij", wc, dF, dF) + Q)
            Cx[:, k] = np.einsum("s,bsi,bsj->bij", wc, dX, dF)
        else:
            m_pred, P_pred = m, P
        mp[:, k], Pp[:, k] = m_pred, P_pred
        # linear position measurement: the unscented update reduces to the Kalman update
        S = P_pred[:, :2, :2] + R
        K = np.linalg.solve(S, P_pred[:, :2, :]).transpose(0, 2, 1)  # (B, n, 2)
        innov = z[:, k] - m_pred[:, :2]
        m = m_pred + np.einsum("bij,bj->bi", K, innov)
        IKH = eye - K @ H
        P = _sym(IKH @ P_pred @ np.swapaxes(IKH, -1, -2) + K @ R @ np.swapaxes(K, -1, -2))
        _chol(P, k, "filtered")
        mf[:, k], Pf[:, k] = m, P

    ms = mf.copy()
    Ps = Pf.copy()
    for k in range(T - 2, -1, -1):
        G = np.linalg.solve(Pp[:, k + 1], np.swapaxes(Cx[:, k + 1], -1, -2)).transpose(0, 2, 1)
        ms[:, k] = mf[:, k] + np.einsum("bij,bj->bi", G, ms[:, k + 1] - mp[:, k + 1])
        Ps[:, k] = _sym(Pf[:, k] + G @ (Ps[:, k + 1] - Pp[:, k + 1]) @ np.swapaxes(G, -1, -2))
        _chol(Ps[:, k], k, "smoothed")

    if return_covariances:
        return ms[..., :2], Ps
    return ms[..., :2]


def ukf_smooth(positions, config: UkfConfig = UkfConfig()) -> np.ndarray:
    """Smoothed reference path ``(T, 2)`` for one trajectory ``(T, 2)``."""
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 2:
        raise ContractError(f"positions must have shape (T, 2), got {p.shape}")
    return ukf_smooth_batch(p[None], config)[0]
