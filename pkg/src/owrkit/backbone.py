"""The feature extractor f: an MLP (or bare linear map) with hand-written
forward/backward passes, momentum SGD, and frozen parameter snapshots.

All arithmetic is float64 so gradient checks against central finite
differences are reproducible. Gradients flow only into the extractor's
parameters; centroids and sigma^2 are constants during backprop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ExtractorConfig:
    """Architecture of the extractor: input_dim -> layer_dims[0] -> ... .

    The last entry of layer_dims is the feature dimension D. `identity`
    activation is only valid for a single-layer (purely linear) extractor.
    """

    input_dim: int
    layer_dims: tuple[int, ...]
    activation: str = "relu"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not self.layer_dims or any(d < 1 for d in self.layer_dims):
            raise ValueError("layer_dims must be a non-empty list of positive ints")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "identity" and len(self.layer_dims) > 1:
            raise ValueError("identity activation is only valid for a single-layer extractor")

    @property
    def feature_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class ExtractorState:
    """Weights and biases per layer. weights[k] has shape (fan_in, fan_out)."""

    config: ExtractorConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def n_layers(self) -> int:
        return len(self.weights)


def init_extractor(config: ExtractorConfig) -> ExtractorState:
    """Glorot-uniform initialization from config.init_seed, zero biases."""
    rng = np.random.default_rng(config.init_seed)
    dims = (config.input_dim,) + config.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ExtractorState(config=config, weights=weights, biases=biases)


def forward(state: ExtractorState, batch) -> tuple[np.ndarray, dict]:
    """Map a (n, input_dim) batch to (n, D) features.

    Returns (features, cache); the cache holds the layer inputs and
    pre-activations needed by backward(). ReLU is applied between layers,
    never after the last one.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.shape[1] != state.config.input_dim:
        raise ValueError(
            f"batch has {x.shape[1]} columns, extractor expects {state.config.input_dim}"
        )
    layer_inputs = []
    pre_acts = []
    a = x
    n_layers = state.n_layers()
    for k, (w, b) in enumerate(zip(state.weights, state.biases)):
        layer_inputs.append(a)
        z = a @ w + b
        pre_acts.append(z)
        if k < n_layers - 1 and state.config.activation == "relu":
            a = np.maximum(z, 0.0)
        else:
            a = z
    cache = {"layer_inputs": layer_inputs, "pre_acts": pre_acts, "n_rows": x.shape[0]}
    return a, cache


def backward(state: ExtractorState, cache: dict, feature_grads) -> dict:
    """Backpropagate dL/dfeatures to parameter gradients.

    Returns {"weights": [...], "biases": [...]} matching the parameter
    shapes. Does not mutate state.
    """
    g = np.asarray(feature_grads, dtype=np.float64)
    if g.ndim == 1:
        g = g[np.newaxis, :]
    pre_acts = cache["pre_acts"]
    layer_inputs = cache["layer_inputs"]
    if len(pre_acts) != state.n_layers() or cache["n_rows"] != g.shape[0]:
        raise ValueError("cache does not match this extractor/gradient")
    if g.shape != pre_acts[-1].shape:
        raise ValueError(f"feature_grads shape {g.shape} != features shape {pre_acts[-1].shape}")
    w_grads = [None] * state.n_layers()
    b_grads = [None] * state.n_layers()
    delta = g
    for k in range(state.n_layers() - 1, -1, -1):
        # Gradient arrives post-activation; the last layer has no activation.
        if k < state.n_layers() - 1 and state.config.activation == "relu":
            delta = delta * (pre_acts[k] > 0)
        w_grads[k] = layer_inputs[k].T @ delta
        b_grads[k] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ state.weights[k].T
    return {"weights": w_grads, "biases": b_grads}


@dataclass
class OptimizerState:
    """SGD with momentum and coupled weight decay.

    v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
    Velocity buffers are zero-initialized and shaped like the parameters.
    """

    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 1e-3
    velocity_w: list[np.ndarray] = field(default_factory=list)
    velocity_b: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


def init_optimizer(
    state: ExtractorState, learning_rate: float, momentum: float = 0.9, weight_decay: float = 1e-3
) -> OptimizerState:
    return OptimizerState(
        learning_rate=learning_rate,
        momentum=momentum,
        weight_decay=weight_decay,
        velocity_w=[np.zeros_like(w) for w in state.weights],
        velocity_b=[np.zeros_like(b) for b in state.biases],
    )


def sgd_step(state: ExtractorState, opt: OptimizerState, grads: dict) -> tuple[ExtractorState, OptimizerState]:
    """One momentum-SGD update. Returns new (state, optimizer); inputs untouched."""
    new_w, new_b = [], []
    new_vw, new_vb = [], []
    for w, b, gw, gb, vw, vb in zip(
        state.weights, state.biases, grads["weights"], grads["biases"], opt.velocity_w, opt.velocity_b
    ):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise FloatingPointError("non-finite gradient; training aborted")
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ValueError("gradient shapes do not match parameters")
        vw = opt.momentum * vw + gw + opt.weight_decay * w
        vb = opt.momentum * vb + gb + opt.weight_decay * b
        new_w.append(w - opt.learning_rate * vw)
        new_b.append(b - opt.learning_rate * vb)
        new_vw.append(vw)
        new_vb.append(vb)
    new_state = ExtractorState(config=state.config, weights=new_w, biases=new_b)
    new_opt = OptimizerState(
        learning_rate=opt.learning_rate,
        momentum=opt.momentum,
        weight_decay=opt.weight_decay,
        velocity_w=new_vw,
        velocity_b=new_vb,
    )
    return new_state, new_opt


def snapshot(state: ExtractorState) -> ExtractorState:
    """Deep copy of the extractor; forward outputs are bit-identical to the
    source at snapshot time and unaffected by later training."""
    return ExtractorState(
        config=state.config,
        weights=[w.copy() for w in state.weights],
        biases=[b.copy() for b in state.biases],
    )


def flatten_params(state: ExtractorState) -> np.ndarray:
    """All parameters as one vector (weights then biases, layer order)."""
    parts = [w.ravel() for w in state.weights] + [b.ravel() for b in state.biases]
    return np.concatenate(parts)


def unflatten_params(state: ExtractorState, theta: np.ndarray) -> ExtractorState:
    """Inverse of flatten_params; returns a new state with the same config."""
    theta = np.asarray(theta, dtype=np.float64)
    weights, biases = [], []
    i = 0
    for w in state.weights:
        weights.append(theta[i : i + w.size].reshape(w.shape).copy())
        i += w.size
    for b in state.biases:
        biases.append(theta[i : i + b.size].reshape(b.shape).copy())
        i += b.size
    if i != theta.size:
        raise ValueError("parameter vector has the wrong length")
    return ExtractorState(config=state.config, weights=weights, biases=biases)
