"""Reconstruction loss, KBM physical loss and the physical-weight schedule."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from pita import autodiff as ad
from pita.errors import ConfigError, ContractError


@dataclass(frozen=True)
class PhysicalLossWeights:
    """Weights of the four residual terms and the two control regularizers."""

    w1: float = 1.0
    w2: float = 1.0
    w3: float = 10.0
    w4: float = 1.0
    w5: float = 10.0
    w6: float = 0.1

    def __post_init__(self):
        for name, w in asdict(self).items():
            if not w >= 0:
                raise ConfigError(f"physical loss weight {name} must be >= 0, got {w}")

    def scaled(self, c: float) -> PhysicalLossWeights:
        return PhysicalLossWeights(*(c * w for w in asdict(self).values()))


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = 1.0
    lambda2: float = 0.0
    m: float = 5.0
    gamma: float = 1.0
    tau_max: int | None = None
    schedule: bool = True
    weights: PhysicalLossWeights = field(default_factory=PhysicalLossWeights)

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be >= 0")
        if not self.m > 0:
            raise ConfigError(f"schedule slope m must be > 0, got {self.m}")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.tau_max is not None and self.tau_max < 1:
            raise ConfigError(f"tau_max must be >= 1, got {self.tau_max}")
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", PhysicalLossWeights(**self.weights))


# Tuned values of the two physics-informed models; m fixed to 5 for both.
PRESETS = {
    "pita-rec": {"lambda1": 1.976e-4, "lambda2": 1.028e-2, "gamma": 0.595, "m": 5.0},
    "pita-phy": {"lambda1": 1.030e-4, "lambda2": 3.012e-2, "gamma": 0.032, "m": 5.0},
}


def reconstruction_loss(predicted, target):
    """Sum over time of squared position errors.

    Both operands have shape ``(..., T, 2)``; leading axes are kept, so a
    batch yields one loss per trajectory.
    """
    ps, ts = ad.value_of(predicted).shape, ad.value_of(target).shape
    if ps != ts:
        raise ContractError(f"predicted {ps} and target {ts} positions differ in shape")
    if len(ps) < 2 or ps[-1] != 2 or ps[-2] < 1:
        raise ContractError(f"positions must have shape (..., T, 2), got {ps}")
    return ad.sum(ad.square(predicted - target), axis=(-2, -1))


def physical_loss(states, controls, weights: PhysicalLossWeights, dt: float):
    """Weighted squared KBM residuals plus control regularization.

    ``states`` is ``(..., T, 4)`` with columns ``(x, y, theta, v)`` and
    ``controls`` is ``(..., T, 2)`` with columns ``(kappa, a)``.  Time
    derivatives are central differences, so the four residual terms are
    summed over interior samples ``1..T-2``; the regularizers use all T.
    """
    ss, cs = ad.value_of(states).shape, ad.value_of(controls).shape
    if len(ss) < 2 or ss[-1] != 4 or len(cs) < 2 or cs[-1] != 2 or ss[:-1] != cs[:-1]:
        raise ContractError(f"inconsistent state {ss} and control {cs} shapes")
    if ss[-2] < 3:
        raise ContractError(f"physical loss needs T >= 3, got {ss[-2]}")
    x, y, theta, v = (states[..., k] for k in range(4))
    kappa, a = controls[..., 0], controls[..., 1]

    def ddt(s):
        return (s[..., 2:] - s[..., :-2]) / (2.0 * dt)

    def inner(s):
        return s[..., 1:-1]

    def norm2(r):
        return ad.sum(ad.square(r), axis=-1)

    v_in, th_in = inner(v), inner(theta)
    r1 = ddt(x) - v_in * ad.cos(th_in)
    r2 = ddt(y) - v_in * ad.sin(th_in)
    r3 = ddt(theta) - v_in * inner(kappa)
    r4 = ddt(v) - inner(a)
    terms = [
        (weights.w1, r1),
        (weights.w2, r2),
        (weights.w3, r3),
        (weights.w4, r4),
        (weights.w5, kappa),
        (weights.w6, a),
    ]
    total = None
    for w, r in terms:
        if w == 0.0:
            continue
        term = ad.scale(norm2(r), w)
        total = term if total is None else total + term
    if total is None:
        total = ad.scale(norm2(kappa), 0.0)
    return total


def physical_loss_terms(states, controls, dt: float) -> dict[str, float]:
    """Unweighted value of each of the six terms, for diagnostics."""
    out = {}
    for k in range(6):
        w = [0.0] * 6
        w[k] = 1.0
        out[f"term{k + 1}"] = float(ad.value_of(physical_loss(states, controls, PhysicalLossWeights(*w), dt)).sum())
    return out


def schedule_alpha(tau: float, config: LossConfig) -> float:
    """Physical-loss weight factor at training step ``tau``."""
    if not config.schedule:
        return 1.0
    if config.tau_max is None:
        raise ContractError("tau_max is not resolved")
    return min(1.0, math.exp(config.m * (tau / (config.gamma * config.tau_max) - 1.0)))


def total_loss(rec, phy, tau: float, config: LossConfig):
    """``lambda1 * rec + alpha(tau) * lambda2 * phy``."""
    weight = schedule_alpha(tau, config) * config.lambda2
    out = ad.scale(rec, config.lambda1)
    if weight == 0.0:
        return out
    return out + ad.scale(phy, weight)
