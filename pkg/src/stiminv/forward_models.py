"""Forward mappings from stimulus parameters to responses.

Each model doubles as the data generator and as the evaluation oracle:
``eval`` is the exact, noiseless mapping; dataset sampling adds Gaussian
observation noise on top.  ``eval_tensor`` exposes the same mapping as a
differentiable engine op so diagnostics can backpropagate through the
true forward function.

Registered mappings:

* ``cos``       r = cos(2*pi*theta),   theta in [0, 3]
* ``bump``      r = exp(-theta^2/2),   theta in [-3, 3]
* ``quartic``   r = (theta^2 - 4)^2,   theta in [-3, 3]
* ``linear``    r = 0.5*theta,         theta in [-3, 3]  (invertible control)
* ``surrogate`` 50-d sinusoid coefficients -> two firing rates in [0, 200] Hz

The surrogate replaces a biophysical neuron simulation with a synthetic
but structurally comparable map: severely many-to-one (responses depend
on theta only through the norms of two fixed 5-d projections) and
saturating.  Its constants are frozen in ``data/surrogate_v1.json``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np

from .nn import tensor as T
from .nn.tensor import Tensor

TOY_NOISE_SIGMA = 0.1  # observation noise std for the 1-d toy mappings


# ---------------------------------------------------------------------- #
# sampling domains

@dataclass(frozen=True)
class Box:
    lows: tuple[float, ...]
    highs: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.lows)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lows, self.highs, size=(n, self.dim))

    def contains(self, thetas: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        lo = np.asarray(self.lows) - tol
        hi = np.asarray(self.highs) + tol
        return np.all((thetas >= lo) & (thetas <= hi), axis=1)

    def clip(self, thetas: np.ndarray) -> np.ndarray:
        return np.clip(thetas, self.lows, self.highs)

    def to_dict(self) -> dict:
        return {"kind": "box", "lows": list(self.lows), "highs": list(self.highs)}


@dataclass(frozen=True)
class Ball:
    radius: float
    dim: int
    surface: bool = False  # True: sample the sphere surface instead of the solid ball

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        direction = rng.normal(size=(n, self.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        if self.surface:
            return self.radius * direction
        radii = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / self.dim)
        return direction * radii

    def contains(self, thetas: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        return np.linalg.norm(thetas, axis=1) <= self.radius + tol

    def clip(self, thetas: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(thetas, axis=1, keepdims=True)
        scale = np.where(norms > self.radius, self.radius / np.maximum(norms, 1e-300), 1.0)
        return thetas * scale

    def to_dict(self) -> dict:
        return {"kind": "ball", "radius": self.radius, "dim": self.dim, "surface": self.surface}


def domain_from_dict(d: dict) -> "Box | Ball":
    if d["kind"] == "box":
        return Box(tuple(d["lows"]), tuple(d["highs"]))
    if d["kind"] == "ball":
        return Ball(d["radius"], d["dim"], d.get("surface", False))
    raise ValueError(f"unknown domain kind {d['kind']!r}")


# ---------------------------------------------------------------------- #
# forward models

@dataclass(frozen=True)
class ForwardModel:
    name: str
    theta_dim: int
    response_dim: int
    domain: Box | Ball
    noise_sigma: float
    response_range: tuple[tuple[float, float], ...]  # per response dimension
    eval_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    eval_tensor_fn: Callable[[Tensor], Tensor] = field(repr=False)

    def eval(self, thetas: np.ndarray) -> np.ndarray:
        """Noiseless responses for parameter rows inside the domain."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        inside = self.domain.contains(thetas)
        if not np.all(inside):
            bad = int(np.argmin(inside))
            raise ValueError(f"theta row {bad} lies outside the {self.name} domain")
        return self.eval_fn(thetas)

    def eval_tensor(self, theta: Tensor) -> Tensor:
        """Differentiable oracle; does not enforce the domain constraint."""
        return self.eval_tensor_fn(theta)

    def with_noise_sigma(self, sigma: float) -> "ForwardModel":
        return ForwardModel(
            self.name, self.theta_dim, self.response_dim, self.domain,
            sigma, self.response_range, self.eval_fn, self.eval_tensor_fn,
        )


def _toy(name, fn, tensor_fn, lo, hi, r_range):
    return ForwardModel(
        name=name,
        theta_dim=1,
        response_dim=1,
        domain=Box((lo,), (hi,)),
        noise_sigma=TOY_NOISE_SIGMA,
        response_range=(r_range,),
        eval_fn=fn,
        eval_tensor_fn=tensor_fn,
    )


def _load_surrogate_config() -> dict:
    blob = resources.files("stiminv").joinpath("data/surrogate_v1.json").read_text()
    return json.loads(blob)


_SURROGATE_CONFIG: dict | None = None


def surrogate_config() -> dict:
    global _SURROGATE_CONFIG
    if _SURROGATE_CONFIG is None:
        _SURROGATE_CONFIG = _load_surrogate_config()
    return _SURROGATE_CONFIG


def surrogate_eval(thetas: np.ndarray) -> np.ndarray:
    """Firing rates r_j = max_rate * sigmoid(alpha_j * ||A_j theta|| - b_j)."""
    cfg = surrogate_config()
    alpha = np.array(cfg["alpha"])
    offset = np.array(cfg["offset"])
    norms = np.stack(
        [np.linalg.norm(thetas @ np.array(m).T, axis=1) for m in cfg["projections"]],
        axis=1,
    )
    return cfg["max_rate_hz"] / (1.0 + np.exp(-(alpha * norms - offset)))


def _surrogate_eval_tensor(theta: Tensor) -> Tensor:
    cfg = surrogate_config()
    outs = []
    for j, m in enumerate(cfg["projections"]):
        proj = theta @ np.array(m).T
        norm = T.sqrt(T.tsum(T.square(proj), axis=1) + 1e-300)
        outs.append(T.sigmoid(norm * cfg["alpha"][j] - cfg["offset"][j]) * cfg["max_rate_hz"])
    return T.concat_cols(outs)


def _build_registry() -> dict[str, Callable[..., ForwardModel]]:
    two_pi = 2.0 * np.pi

    def cos_model():
        return _toy(
            "cos",
            lambda th: np.cos(two_pi * th),
            lambda th: T.cos(th * two_pi),
            0.0, 3.0, (-1.0, 1.0),
        )

    def bump_model():
        return _toy(
            "bump",
            lambda th: np.exp(-0.5 * th * th),
            lambda th: T.exp(T.square(th) * -0.5),
            -3.0, 3.0, (0.0, 1.0),
        )

    def quartic_model():
        return _toy(
            "quartic",
            lambda th: (th * th - 4.0) ** 2,
            lambda th: T.square(T.square(th) - 4.0),
            -3.0, 3.0, (0.0, 25.0),
        )

    def linear_model():
        return _toy(
            "linear",
            lambda th: 0.5 * th,
            lambda th: th * 0.5,
            -3.0, 3.0, (-1.5, 1.5),
        )

    def surrogate_model(ball: bool = True):
        cfg = surrogate_config()
        return ForwardModel(
            name="surrogate",
            theta_dim=cfg["theta_dim"],
            response_dim=cfg["response_dim"],
            domain=Ball(cfg["radius"], cfg["theta_dim"], surface=not ball),
            noise_sigma=0.0,
            response_range=((0.0, cfg["max_rate_hz"]),) * cfg["response_dim"],
            eval_fn=surrogate_eval,
            eval_tensor_fn=_surrogate_eval_tensor,
        )

    return {
        "cos": cos_model,
        "bump": bump_model,
        "quartic": quartic_model,
        "linear": linear_model,
        "surrogate": surrogate_model,
    }


_REGISTRY = _build_registry()

MODEL_NAMES = tuple(sorted(_REGISTRY))


def get_model(name: str, noise_multiplier: float = 1.0, ball: bool = True) -> ForwardModel:
    """Look up a forward model by name.

    ``noise_multiplier`` scales the model's base observation-noise std;
    ``ball`` selects solid-ball vs sphere-surface sampling for the
    surrogate (ignored by the box-domain toys).
    """
    if name not in _REGISTRY:
        raise KeyError(f"unknown forward model {name!r}; known: {', '.join(MODEL_NAMES)}")
    model = _REGISTRY[name](ball=ball) if name == "surrogate" else _REGISTRY[name]()
    if noise_multiplier != 1.0:
        if noise_multiplier < 0:
            raise ValueError("noise_multiplier must be >= 0")
        model = model.with_noise_sigma(model.noise_sigma * noise_multiplier)
    return model


# ---------------------------------------------------------------------- #
# stimulus waveforms (export / inspection only; the surrogate consumes
# the coefficient vector directly)

WAVEFORM_DURATION_S = 0.2
WAVEFORM_RADIUS = 2.0


@dataclass(frozen=True)
class StimulusWaveform:
    """u(t) = sum_i theta_i * sin(2*pi*(i-1)*t) sampled on a uniform grid.

    Note the i=1 term is identically zero, so the first coefficient does
    not contribute to the rendered waveform.
    """

    coeffs: np.ndarray  # (50,) sinusoid coefficients, nA
    times: np.ndarray  # seconds, 0 .. 0.2
    samples: np.ndarray

    def __post_init__(self):
        if np.linalg.norm(self.coeffs) > WAVEFORM_RADIUS + 1e-9:
            raise ValueError("coefficient vector exceeds the 2 nA amplitude ball")


def waveform_render(theta: np.ndarray, grid: int) -> StimulusWaveform:
    if grid < 2:
        raise ValueError("grid must have at least 2 points")
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    times = np.arange(grid) * (WAVEFORM_DURATION_S / (grid - 1))
    harmonics = np.arange(len(theta))  # frequency of coefficient i is (i-1) = 0,1,2,...
    samples = np.sin(2.0 * np.pi * np.outer(times, harmonics)) @ theta
    return StimulusWaveform(coeffs=theta, times=times, samples=samples)
