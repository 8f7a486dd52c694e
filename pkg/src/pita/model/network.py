"""MLP trajectory autoencoders with simple, action-space and PITA heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from pita import autodiff as ad
from pita.dynamics import KbmState, rk4_rollout
from pita.errors import ConfigError, ContractError

VARIANTS = ("simple", "action-space", "pita")
ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu}


def output_width(variant: str, T: int) -> int:
    if variant == "simple":
        return 2 * T
    if variant == "action-space":
        return 2 * T + 4
    if variant == "pita":
        return 6 * T
    raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def geometric_widths(start: int, stop: int, depth: int) -> list[int]:
    """``depth`` layer output widths interpolating geometrically to ``stop``."""
    ratio = (stop / start) ** (1.0 / depth)
    widths = [int(round(start * ratio**k)) for k in range(1, depth)]
    return widths + [stop]


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "simple"
    T: int = 50
    latent_dim: int = 32
    encoder_layers: tuple[int, ...] = ()
    decoder_layers: tuple[int, ...] = ()
    activation: str = "tanh"
    dt: float = 0.04

    def __post_init__(self):
        output_width(self.variant, self.T)
        if self.T < 3:
            raise ConfigError(f"T must be >= 3, got {self.T}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "encoder_layers", tuple(int(w) for w in self.encoder_layers))
        object.__setattr__(self, "decoder_layers", tuple(int(w) for w in self.decoder_layers))
        if not self.encoder_layers or self.encoder_layers[-1] != self.latent_dim:
            raise ConfigError("last encoder layer must have width latent_dim")
        if not self.decoder_layers or self.decoder_layers[-1] != self.output_width:
            raise ConfigError(
                f"last decoder layer must have width {self.output_width} for variant {self.variant}"
            )

    @property
    def input_width(self) -> int:
        return 2 * self.T

    @property
    def output_width(self) -> int:
        return output_width(self.variant, self.T)

    @classmethod
    def build(
        cls,
        variant: str,
        T: int = 50,
        latent_dim: int = 32,
        depth: int = 4,
        activation: str = "tanh",
        dt: float = 0.04,
    ) -> ModelConfig:
        """Encoder narrows geometrically from 2T to the latent width; the
        decoder mirrors the encoder's hidden widths and ends in the variant's
        output width, so variants differ only in their last layer."""
        enc = geometric_widths(2 * T, latent_dim, depth)
        dec = enc[-2::-1] + [output_width(variant, T)]
        return cls(
            variant=variant,
            T=T,
            latent_dim=latent_dim,
            encoder_layers=tuple(enc),
            decoder_layers=tuple(dec),
            activation=activation,
            dt=dt,
        )

    def layer_shapes(self) -> list[tuple[int, int]]:
        shapes = []
        fan_in = self.input_width
        for w in self.encoder_layers + self.decoder_layers:
            shapes.append((fan_in, w))
            fan_in = w
        return shapes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_layers"] = list(self.encoder_layers)
        d["decoder_layers"] = list(self.decoder_layers)
        return d


@dataclass
class ModelParams:
    """Weights and biases per layer, encoder layers first."""

    layers: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in declaration order (W, b per layer)."""
        return [arr for pair in self.layers for arr in pair]

    @classmethod
    def from_arrays(cls, arrays) -> ModelParams:
        arrays = list(arrays)
        return cls([(arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)])

    @property
    def count(self) -> int:
        return int(sum(a.size for a in self.arrays()))

    def check(self, config: ModelConfig) -> None:
        shapes = config.layer_shapes()
        if len(shapes) != len(self.layers):
            raise ContractError(f"expected {len(shapes)} layers, got {len(self.layers)}")
        for (fi, fo), (w, b) in zip(shapes, self.layers):
            if w.shape != (fi, fo) or b.shape != (fo,):
                raise ContractError(f"layer shape {w.shape}/{b.shape} does not match ({fi}, {fo})")


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Uniform weights in +-1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in config.layer_shapes():
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((w, np.zeros(fan_out)))
    return ModelParams(layers)


def parameter_count(config: ModelConfig) -> int:
    return int(sum(fi * fo + fo for fi, fo in config.layer_shapes()))


def _mlp(layers, h, activation):
    act = ACTIVATIONS[activation]
    for k, (w, b) in enumerate(layers):
        h = ad.add_bias(ad.matmul(h, w), b)
        if k < len(layers) - 1:
            h = act(h)
    return h


class Decoded(NamedTuple):
    """Decoder output split into physical quantities.

    ``positions`` is always ``(B, T, 2)``.  ``states``/``controls`` are
    ``(B, T, 4)``/``(B, T, 2)`` for the action-space and PITA heads and
    ``None`` for the simple head; ``initial`` is the action-space head's
    predicted initial state.
    """

    positions: object
    states: object = None
    controls: object = None
    initial: object = None


@dataclass
class Autoencoder:
    """A configured network plus its parameters and input normalization.

    Positions are divided by ``pos_scale`` before encoding and predicted
    positions multiplied by it after decoding.  Predicted speeds are the raw
    network output times ``speed_scale``; heading, curvature and
    acceleration are raw outputs.  All decoded quantities are in physical
    units.
    """

    config: ModelConfig
    params: ModelParams
    pos_scale: float = 1.0
    speed_scale: float = 1.0

    def __post_init__(self):
        self.params.check(self.config)
        if not (self.pos_scale > 0 and self.speed_scale > 0):
            raise ContractError(f"scales must be positive, got {self.pos_scale}, {self.speed_scale}")

    @property
    def n_encoder(self) -> int:
        return len(self.config.encoder_layers)

    def encode_with(self, layers, positions):
        """Encoder pass; ``layers`` may be arrays or autodiff nodes."""
        T = self.config.T
        p = ad.value_of(positions)
        if p.shape[-2:] != (T, 2):
            raise ContractError(f"expected positions of shape (..., {T}, 2), got {p.shape}")
        flat = p.reshape(-1, 2 * T) / self.pos_scale
        return _mlp(layers[: self.n_encoder], flat, self.config.activation)

    def decode_with(self, layers, latent) -> Decoded:
        lv = ad.value_of(latent)
        if lv.ndim != 2 or lv.shape[1] != self.config.latent_dim:
            raise ContractError(
                f"expected latent of shape (B, {self.config.latent_dim}), got {lv.shape}"
            )
        out = _mlp(layers[self.n_encoder :], latent, self.config.activation)
        return split_output(self.config, out, self.pos_scale, self.speed_scale)

    def encode(self, positions) -> np.ndarray:
        return self.encode_with(self.params.layers, positions)

    def decode(self, latent) -> Decoded:
        return self.decode_with(self.params.layers, np.atleast_2d(latent))

    def reconstruct(self, positions) -> np.ndarray:
        """Predicted positions ``(B, T, 2)`` for input positions."""
        return self.decode(self.encode(positions)).positions


def split_output(config: ModelConfig, out, pos_scale: float = 1.0, speed_scale: float = 1.0) -> Decoded:
    """Interpret a raw ``(B, output_width)`` decoder output per variant."""
    width = ad.value_of(out).shape
    if len(width) != 2 or width[1] != config.output_width:
        raise ContractError(f"expected output of shape (B, {config.output_width}), got {width}")
    if config.variant == "simple":
        return decode_simple(config, out, pos_scale)
    if config.variant == "action-space":
        return decode_action_space(config, out, speed_scale)
    return decode_pita(config, out, pos_scale, speed_scale)


def decode_simple(config: ModelConfig, out, pos_scale: float = 1.0) -> Decoded:
    B = ad.value_of(out).shape[0]
    return Decoded(ad.scale(ad.reshape(out, (B, config.T, 2)), pos_scale))


def decode_action_space(config: ModelConfig, out, speed_scale: float = 1.0) -> Decoded:
    """First four outputs are the initial state, then T (kappa, a) pairs.

    The positions are obtained by an RK4 roll-out from the initial state.
    """
    B = ad.value_of(out).shape[0]
    T = config.T
    initial = KbmState(out[:, 0], out[:, 1], out[:, 2], ad.scale(out[:, 3], speed_scale))
    controls = ad.reshape(out[:, 4:], (B, T, 2))
    steps = [(controls[:, t, 0], controls[:, t, 1]) for t in range(T)]
    states = rk4_rollout(initial, steps, config.dt)
    cols = [ad.stack([s[k] for s in states], axis=-1) for k in range(4)]
    positions = ad.stack(cols[:2], axis=-1)
    return Decoded(positions, ad.stack(cols, axis=-1), controls, initial)


def decode_pita(config: ModelConfig, out, pos_scale: float = 1.0, speed_scale: float = 1.0) -> Decoded:
    """Per time step ``(x, y, theta, v, kappa, a)``."""
    B = ad.value_of(out).shape[0]
    per_step = ad.reshape(out, (B, config.T, 6))
    x = ad.scale(per_step[:, :, 0], pos_scale)
    y = ad.scale(per_step[:, :, 1], pos_scale)
    v = ad.scale(per_step[:, :, 3], speed_scale)
    states = ad.stack([x, y, per_step[:, :, 2], v], axis=-1)
    controls = per_step[:, :, 4:6]
    return Decoded(ad.stack([x, y], axis=-1), states, controls)
