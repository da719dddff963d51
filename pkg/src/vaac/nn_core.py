"""Small numpy MLP engine: forward/backward, Adam, Polyak averaging.

Everything is float64. Inputs may be a single vector ``(in,)`` or a batch
``(n, in)``; batched gradients are summed over the batch, so callers that
minimise a mean loss scale ``output_grad`` by ``1 / n`` themselves.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "ConfigurationError",
    "UsageError",
    "NonFiniteError",
    "MlpSpec",
    "ParamSet",
    "ForwardCache",
    "AdamState",
    "Mlp",
    "init_params",
    "mlp_forward",
    "mlp_forward_cached",
    "mlp_backward",
    "adam_init",
    "adam_step",
    "polyak_update",
    "zero_grads",
    "gradient_check",
    "save_checkpoint",
    "load_checkpoint",
]

ACTIVATIONS = ("relu", "tanh")


class ConfigurationError(ValueError):
    """Shapes or settings that cannot work together."""


class UsageError(RuntimeError):
    """An API was called out of order (e.g. backward without forward)."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared where the contract forbids it."""


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if len(self.hidden_dims) < 1:
            raise ConfigurationError("hidden_dims needs at least one layer")
        if min(self.input_dim, self.output_dim, *self.hidden_dims) < 1:
            raise ConfigurationError(f"all layer widths must be >= 1, got {self.layer_dims}")
        if self.hidden_activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown hidden_activation {self.hidden_activation!r}")
        if self.output_activation != "identity":
            raise ConfigurationError(f"unknown output_activation {self.output_activation!r}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def n_params(self) -> int:
        d = self.layer_dims
        return sum(d[i + 1] * d[i] + d[i + 1] for i in range(len(d) - 1))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(**{**d, "hidden_dims": tuple(d["hidden_dims"])})


class ParamSet:
    """Weights ``(out, in)`` and biases ``(out,)`` per layer, with gradient buffers."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != len(biases):
            raise ConfigurationError("weights and biases must have the same number of layers")
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ConfigurationError(f"bad layer shapes {w.shape} / {b.shape}")
        self.grad_weights = [np.zeros_like(w) for w in self.weights]
        self.grad_biases = [np.zeros_like(b) for b in self.biases]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> Iterator[np.ndarray]:
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def grads(self) -> Iterator[np.ndarray]:
        for gw, gb in zip(self.grad_weights, self.grad_biases):
            yield gw
            yield gb

    def copy(self) -> "ParamSet":
        return ParamSet(self.weights, self.biases)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def flat_grads(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.grads()])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        offset = 0
        for a in self.arrays():
            a[...] = vec[offset:offset + a.size].reshape(a.shape)
            offset += a.size
        if offset != vec.size:
            raise ConfigurationError(f"flat vector has {vec.size} entries, expected {offset}")

    def matches(self, spec: MlpSpec) -> bool:
        d = spec.layer_dims
        if self.n_layers != len(d) - 1:
            return False
        return all(w.shape == (d[i + 1], d[i]) for i, w in enumerate(self.weights))

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in self.arrays():
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def init_params(spec: MlpSpec, rng: np.random.Generator, head_scale: float = 1.0,
                head_bias: np.ndarray | None = None, input_bias_bound: float = 0.0) -> ParamSet:
    """Uniform fan-in init (He bound for relu, LeCun bound for tanh); zero biases.

    The output layer uses the plain ``1/sqrt(fan_in)`` bound times ``head_scale``.
    ``input_bias_bound > 0`` draws first-layer biases from U(-bound, bound) so the
    first-layer kinks do not all pass through the origin.
    """
    d = spec.layer_dims
    weights, biases = [], []
    for i in range(len(d) - 1):
        fan_in, fan_out = d[i], d[i + 1]
        if i == len(d) - 2:
            bound = head_scale / np.sqrt(fan_in)
        elif spec.hidden_activation == "relu":
            bound = np.sqrt(6.0 / fan_in)
        else:
            bound = np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    if input_bias_bound > 0:
        biases[0] = rng.uniform(-input_bias_bound, input_bias_bound, size=d[1])
    if head_bias is not None:
        biases[-1][...] = head_bias
    return ParamSet(weights, biases)


@dataclass
class ForwardCache:
    """Layer inputs and hidden activations kept for the backward pass."""

    inputs: list[np.ndarray] = field(default_factory=list)
    single: bool = False


def _as_batch(spec: MlpSpec, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ConfigurationError(f"input shape {x.shape} does not match input_dim {spec.input_dim}")
    return x, single


def _check_params(spec: MlpSpec, params: ParamSet) -> None:
    if not params.matches(spec):
        raise ConfigurationError("parameter shapes do not match the MlpSpec")


def mlp_forward_cached(spec: MlpSpec, params: ParamSet, x) -> tuple[np.ndarray, ForwardCache]:
    _check_params(spec, params)
    h, single = _as_batch(spec, x)
    cache = ForwardCache(single=single)
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(h)
        z = h @ w.T
        z += b
        if i < last:
            if spec.hidden_activation == "relu":
                np.maximum(z, 0.0, out=z)
            else:
                np.tanh(z, out=z)
        h = z
    return (h[0] if single else h), cache


def mlp_forward(spec: MlpSpec, params: ParamSet, x) -> np.ndarray:
    return mlp_forward_cached(spec, params, x)[0]


def mlp_backward(spec: MlpSpec, params: ParamSet, cache: ForwardCache | None, output_grad,
                 accumulate: bool = True) -> np.ndarray:
    """Backpropagate ``output_grad``; add parameter grads (unless ``accumulate`` is
    False) and return the gradient with respect to the input."""
    if cache is None or len(cache.inputs) != params.n_layers:
        raise UsageError("mlp_backward needs the cache of a matching forward pass")
    g = np.asarray(output_grad, dtype=np.float64)
    if cache.single:
        g = g[None, :]
    if g.shape != (cache.inputs[0].shape[0], spec.output_dim):
        raise ConfigurationError(f"output_grad shape {g.shape} does not match the forward pass")
    for i in range(params.n_layers - 1, -1, -1):
        h_in = cache.inputs[i]
        if accumulate:
            params.grad_weights[i] += g.T @ h_in
            params.grad_biases[i] += g.sum(axis=0)
        g = g @ params.weights[i]
        if i > 0:
            # h_in is the activation output of layer i - 1
            if spec.hidden_activation == "relu":
                g = g * (h_in > 0.0)
            else:
                g = g * (1.0 - h_in * h_in)
    return g[0] if cache.single else g


def zero_grads(params: ParamSet) -> None:
    for g in params.grads():
        g.fill(0.0)


@dataclass
class AdamState:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigurationError("Adam betas must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ConfigurationError("Adam epsilon must be positive")


def adam_init(params: ParamSet, learning_rate: float = 3e-4, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        learning_rate, beta1, beta2, epsilon, 0,
        [np.zeros_like(a) for a in params.arrays()],
        [np.zeros_like(a) for a in params.arrays()],
    )


def adam_step(params: ParamSet, state: AdamState) -> None:
    """Bias-corrected Adam update in place. Gradients are left for the caller to zero."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    step_size = state.learning_rate / (1.0 - b1 ** t)
    v_correction = 1.0 / (1.0 - b2 ** t)
    for p, g, m, v in zip(params.arrays(), params.grads(), state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step_size * m / (np.sqrt(v * v_correction) + state.epsilon)
        if not np.isfinite(p).all():
            raise NonFiniteError(f"non-finite parameter after Adam step {t}")


def polyak_update(target: ParamSet, online: ParamSet, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, elementwise and in place."""
    if not 0.0 <= tau <= 1.0:
        raise ConfigurationError(f"tau must lie in [0, 1], got {tau}")
    pairs = list(zip(target.arrays(), online.arrays()))
    if any(t.shape != o.shape for t, o in pairs):
        raise ConfigurationError("target and online parameter shapes differ")
    for t, o in pairs:
        t *= 1.0 - tau
        t += tau * o


class Mlp:
    """An MlpSpec bundled with its parameters."""

    def __init__(self, spec: MlpSpec, params: ParamSet):
        _check_params(spec, params)
        self.spec = spec
        self.params = params

    @classmethod
    def create(cls, spec: MlpSpec, rng: np.random.Generator, **init_kwargs) -> "Mlp":
        return cls(spec, init_params(spec, rng, **init_kwargs))

    def __call__(self, x) -> np.ndarray:
        return mlp_forward(self.spec, self.params, x)

    def forward(self, x) -> tuple[np.ndarray, ForwardCache]:
        return mlp_forward_cached(self.spec, self.params, x)

    def backward(self, cache: ForwardCache, output_grad, accumulate: bool = True) -> np.ndarray:
        return mlp_backward(self.spec, self.params, cache, output_grad, accumulate)

    def zero_grads(self) -> None:
        zero_grads(self.params)

    def copy(self) -> "Mlp":
        return Mlp(self.spec, self.params.copy())


def gradient_check(spec: MlpSpec, params: ParamSet, x: np.ndarray, output_weights: np.ndarray,
                   step: float = 1e-5, coords: Sequence[int] | None = None) -> tuple[float, float]:
    """Compare analytic gradients of ``L = sum(output_weights * f(x))`` with central
    differences. ``coords`` picks flat parameter indices (default: all of them).
    Returns ``(max relative error over parameters, over inputs)``."""
    x = np.array(x, dtype=np.float64)
    work = params.copy()
    _, cache = mlp_forward_cached(spec, work, x)
    gx = mlp_backward(spec, work, cache, output_weights)
    analytic = work.flat_grads()
    arrays = list(work.arrays())
    offsets = np.cumsum([0] + [a.size for a in arrays])
    if coords is None:
        coords = range(int(offsets[-1]))

    def loss() -> float:
        return float(np.sum(output_weights * mlp_forward(spec, work, x)))

    def central(buf: np.ndarray, j: int) -> float:
        orig = buf[j]
        buf[j] = orig + step
        up = loss()
        buf[j] = orig - step
        down = loss()
        buf[j] = orig
        return (up - down) / (2 * step)

    coords = np.asarray(list(coords), dtype=np.int64)
    numeric = np.empty(len(coords))
    for n, c in enumerate(coords):
        k = int(np.searchsorted(offsets, c, side="right") - 1)
        numeric[n] = central(arrays[k].reshape(-1), int(c - offsets[k]))
    flat_x = x.reshape(-1)
    numeric_x = np.array([central(flat_x, j) for j in range(flat_x.size)])
    return relative_error(analytic[coords], numeric), relative_error(gx.ravel(), numeric_x)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max elementwise ``|a - n| / max(|a| + |n|, floor)``."""
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom, initial=0.0))


# -- checkpoint container ---------------------------------------------------

def _pack_params(prefix: str, params: ParamSet, out: dict) -> None:
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        out[f"{prefix}/w{i}"] = w
        out[f"{prefix}/b{i}"] = b


def _unpack_params(prefix: str, n_layers: int, arrays) -> ParamSet:
    return ParamSet([arrays[f"{prefix}/w{i}"] for i in range(n_layers)],
                    [arrays[f"{prefix}/b{i}"] for i in range(n_layers)])


def save_checkpoint(path, nets: dict[str, Mlp], optimizers: dict[str, AdamState] | None = None,
                    rng_states: dict | None = None, extra: dict | None = None,
                    extra_arrays: dict[str, np.ndarray] | None = None) -> Path:
    """Write nets, optimizer moments, RNG states and metadata to one ``.npz`` file."""
    path = Path(path)
    arrays: dict[str, np.ndarray] = {}
    meta = {"nets": {}, "optimizers": {}, "rng_states": rng_states or {}, "extra": extra or {}}
    for name, net in nets.items():
        meta["nets"][name] = net.spec.to_dict()
        _pack_params(f"net/{name}", net.params, arrays)
    for name, st in (optimizers or {}).items():
        meta["optimizers"][name] = {
            "learning_rate": st.learning_rate, "beta1": st.beta1, "beta2": st.beta2,
            "epsilon": st.epsilon, "step_count": st.step_count, "n": len(st.first_moment),
        }
        for i, (m, v) in enumerate(zip(st.first_moment, st.second_moment)):
            arrays[f"opt/{name}/m{i}"] = m
            arrays[f"opt/{name}/v{i}"] = v
    for name, arr in (extra_arrays or {}).items():
        arrays[f"extra/{name}"] = np.asarray(arr)
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> dict:
    """Inverse of :func:`save_checkpoint`; returns a dict with the same keys."""
    with np.load(Path(path)) as data:
        arrays = {k: data[k] for k in data.files}
    meta = json.loads(arrays.pop("__meta__").tobytes().decode())
    nets = {}
    for name, sd in meta["nets"].items():
        spec = MlpSpec.from_dict(sd)
        nets[name] = Mlp(spec, _unpack_params(f"net/{name}", len(spec.layer_dims) - 1, arrays))
    optimizers = {}
    for name, od in meta["optimizers"].items():
        n = od.pop("n")
        optimizers[name] = AdamState(
            **od,
            first_moment=[arrays[f"opt/{name}/m{i}"] for i in range(n)],
            second_moment=[arrays[f"opt/{name}/v{i}"] for i in range(n)],
        )
    extra_arrays = {k[len("extra/"):]: v for k, v in arrays.items() if k.startswith("extra/")}
    return {"nets": nets, "optimizers": optimizers, "rng_states": meta["rng_states"],
            "extra": meta["extra"], "extra_arrays": extra_arrays}
