"""Gated recurrent cell with drift and diffusion heads, stored as one flat weight vector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..errors import InvalidArgumentError

DIFFUSION_FLOOR = 1e-6
# f_k, t_k normalised, dt, time to next observation, next observed value,
# last-observation-passed indicator, log lam, log sigma2_k
N_FEATURES = 8


def param_layout(hidden_size: int, input_dim: int, m: int) -> dict[str, tuple[int, ...]]:
    """Ordered ``name -> shape`` map of every block in the flat weight vector."""
    H = hidden_size
    return {
        "W": (input_dim, 3 * H),  # input -> (update, reset, candidate)
        "U_zr": (H, 2 * H),
        "U_h": (H, H),
        "b": (3 * H,),
        # heads read [hidden, input]
        "W_head": (H + input_dim, 2 * m),
        "b_head": (2 * m,),
        # initial-state Gaussian: mean and pre-softplus std
        "init": (2 * m,),
    }


def param_count(hidden_size: int, input_dim: int, m: int) -> int:
    return sum(math.prod(s) for s in param_layout(hidden_size, input_dim, m).values())


@dataclass
class BridgeRnn:
    hidden_size: int
    weights: np.ndarray
    m: int = 1
    input_dim: int = N_FEATURES

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        expected = param_count(self.hidden_size, self.input_dim, self.m)
        if self.weights.size != expected:
            raise InvalidArgumentError(
                f"expected {expected} weights for hidden={self.hidden_size}, "
                f"input={self.input_dim}, m={self.m}; got {self.weights.size}"
            )

    @classmethod
    def init(cls, hidden_size: int, seed, m: int = 1, input_dim: int = N_FEATURES) -> "BridgeRnn":
        """Cell weights uniform in +-1/sqrt(fan_in); heads and initial state start at zero."""
        rng = np.random.default_rng(seed)
        blocks = []
        for name, shape in param_layout(hidden_size, input_dim, m).items():
            if name in ("W", "U_zr", "U_h"):
                bound = 1.0 / math.sqrt(shape[0])
                blocks.append(rng.uniform(-bound, bound, size=shape).ravel())
            else:
                blocks.append(np.zeros(math.prod(shape)))
        return cls(hidden_size, np.concatenate(blocks), m, input_dim)

    def unflatten(self, flat) -> dict:
        """Split a flat vector (array or Tensor) into named blocks."""
        out = {}
        offset = 0
        for name, shape in param_layout(self.hidden_size, self.input_dim, self.m).items():
            size = math.prod(shape)
            piece = flat[offset : offset + size]
            out[name] = ad.reshape(piece, shape) if isinstance(piece, ad.Tensor) else piece.reshape(shape)
            offset += size
        return out

    def bind(self, flat: ad.Tensor) -> "BoundCell":
        return BoundCell(self.hidden_size, self.m, self.unflatten(flat))


class BoundCell:
    """Weights of a :class:`BridgeRnn` placed on a tape."""

    def __init__(self, hidden_size: int, m: int, blocks: dict):
        self.H = hidden_size
        self.m = m
        self.p = blocks

    def initial(self, n: int, tape: ad.Tape, log_theta):
        """Mean, std of the initial state and the zero hidden state, for ``n`` rows."""
        init = self.p["init"]
        mean = init[0 : self.m]
        std = ad.softplus(init[self.m : 2 * self.m]) + DIFFUSION_FLOOR
        return mean, std, tape.const(np.zeros((n, self.H)))

    def step(self, x: ad.Tensor, h: ad.Tensor):
        """One gated-recurrent update followed by the heads; returns ``(h', drift, diffusion)``."""
        H, p = self.H, self.p
        xw = x @ p["W"] + p["b"]
        zr = ad.sigmoid(xw[:, : 2 * H] + h @ p["U_zr"])
        z, r = zr[:, :H], zr[:, H:]
        cand = ad.tanh(xw[:, 2 * H :] + (r * h) @ p["U_h"])
        h_new = h + z * (cand - h)
        out = ad.concat([h_new, x], axis=1) @ p["W_head"] + p["b_head"]
        drift = out[:, : self.m]
        diffusion = ad.softplus(out[:, self.m :]) + DIFFUSION_FLOOR
        return h_new, drift, diffusion


class PriorCell:
    """Heads wired to the OU prior: drift ``-lam f``, diffusion ``sqrt(2 sigma2_k lam)``.

    With this cell the variational path law equals the Euler-Maruyama prior.
    Column ``0`` of the cell input is ``f_k`` and the last two are ``log theta``.
    """

    m = 1

    def initial(self, n: int, tape: ad.Tape, log_theta):
        return tape.const(np.zeros(1)), ad.sqrt(ad.exp(log_theta[:, 1:2])), None

    def step(self, x: ad.Tensor, h):
        f = x[:, 0:1]
        lam = ad.exp(x[:, -2:-1])
        s2 = ad.exp(x[:, -1:])
        return h, -(lam * f), ad.sqrt(2.0 * s2 * lam)
