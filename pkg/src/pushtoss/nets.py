"""Dense MLP substrate: hand-rolled forward/backward, Adam, polyak updates.

Parameters live in one flat float64 vector laid out per layer as
[W0, b0, W1, b1, ...] with each weight matrix raveled row-major
(input-index major). Weight matrices and bias vectors are exposed as
views into that vector, so optimizer updates on the flat array are
immediately visible to the network.

Forward/backward accept a single sample (1-D input) or a batch of rows
(2-D input); a batched backward returns the sum of per-row parameter
gradients, so a caller that wants a mean-loss gradient scales the output
gradient rows by 1/n.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HIDDEN_ACTIVATION = "relu"
OUTPUT_ACTIVATIONS = ("identity", "tanh")


class ShapeError(ValueError):
    """Input or gradient dimensions do not match the network."""


class StaleTapeError(RuntimeError):
    """Backward called without a matching, current forward tape."""


@dataclass
class GradientTape:
    """Cached activations from one recorded forward pass."""

    net: "MLP"
    version: int
    forward_id: int
    inputs: list  # layer inputs, one (n, n_in) array per layer
    preacts: list  # pre-activations, one (n, n_out) array per layer
    output: np.ndarray  # post-activation network output, (n, n_last)
    single: bool  # True when forward received a 1-D input


class MLP:
    """Fully connected ReLU network with identity or tanh output."""

    def __init__(self, layer_sizes, output_activation="identity", params=None):
        sizes = [int(n) for n in layer_sizes]
        if len(sizes) < 2:
            raise ValueError("layer_sizes needs at least an input and an output size")
        if min(sizes) < 1:
            raise ValueError(f"layer sizes must be >= 1, got {sizes}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {output_activation!r}")
        self.layer_sizes = sizes
        self.output_activation = output_activation
        self.n_params = sum((nin + 1) * nout for nin, nout in zip(sizes, sizes[1:]))
        if params is None:
            flat = np.zeros(self.n_params, dtype=np.float64)
        else:
            flat = np.array(params, dtype=np.float64).ravel()
            if flat.size != self.n_params:
                raise ShapeError(
                    f"parameter vector has {flat.size} entries, expected {self.n_params}"
                )
        self._params = np.ascontiguousarray(flat)
        self._version = 0
        self._forward_id = 0
        self._wb = []
        self._slices = []
        offset = 0
        for nin, nout in zip(sizes, sizes[1:]):
            w_slice = slice(offset, offset + nin * nout)
            offset += nin * nout
            b_slice = slice(offset, offset + nout)
            offset += nout
            self._slices.append((w_slice, b_slice))
            self._wb.append(
                (self._params[w_slice].reshape(nin, nout), self._params[b_slice])
            )

    # -- parameter access ---------------------------------------------------

    def get_params(self) -> np.ndarray:
        """Copy of the flat parameter vector ([W0, b0, W1, b1, ...])."""
        return self._params.copy()

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64).ravel()
        if flat.size != self.n_params:
            raise ShapeError(f"expected {self.n_params} parameters, got {flat.size}")
        self._params[:] = flat
        self._version += 1

    @property
    def weights(self) -> np.ndarray:
        """All weight matrices raveled and concatenated in layer order."""
        return np.concatenate([w.ravel() for w, _ in self._wb])

    @property
    def biases(self) -> np.ndarray:
        """All bias vectors concatenated in layer order."""
        return np.concatenate([b for _, b in self._wb])

    def weight(self, layer: int) -> np.ndarray:
        return self._wb[layer][0]

    def bias(self, layer: int) -> np.ndarray:
        return self._wb[layer][1]

    def clone(self) -> "MLP":
        return MLP(self.layer_sizes, self.output_activation, params=self._params)

    def adam_update(self, grads, state: "AdamState") -> None:
        """adam_step applied in place on this network's parameters."""
        adam_step(self._params, grads, state)
        self._version += 1

    def polyak_toward(self, online: "MLP", tau: float) -> None:
        """polyak_update applied in place, tracking another network."""
        if online.layer_sizes != self.layer_sizes:
            raise ShapeError(
                f"layer sizes differ: {self.layer_sizes} vs {online.layer_sizes}"
            )
        polyak_update(self._params, online._params, tau)
        self._version += 1

    # -- forward / backward -------------------------------------------------

    def forward(self, x, record: bool = False):
        """Evaluate the network; with record=True also return a GradientTape."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[-1] != self.layer_sizes[0]:
            raise ShapeError(
                f"input shape {x.shape} does not match input size {self.layer_sizes[0]}"
            )
        inputs, preacts = [], []
        last = len(self._wb) - 1
        for l, (w, b) in enumerate(self._wb):
            z = h @ w + b
            if record:
                inputs.append(h)
                preacts.append(z)
            if l == last:
                h = np.tanh(z) if self.output_activation == "tanh" else z
            else:
                h = np.maximum(z, 0.0)
        y = h[0] if single else h
        if not record:
            return y
        self._forward_id += 1
        tape = GradientTape(
            net=self,
            version=self._version,
            forward_id=self._forward_id,
            inputs=inputs,
            preacts=preacts,
            output=h,
            single=single,
        )
        return y, tape

    def backward(self, tape: GradientTape, output_gradient,
                 need_input_gradient: bool = True):
        """Reverse pass; returns (flat parameter gradient, input gradient).

        For batched tapes the parameter gradient is the sum over rows. Pass
        need_input_gradient=False to skip the (possibly large) layer-0 GEMM
        when only parameter gradients are wanted; the input gradient is then
        None.
        """
        delta = self._start_backward(tape, output_gradient)
        grads = np.empty(self.n_params, dtype=np.float64)
        dx = None
        for l in range(len(self._wb) - 1, -1, -1):
            w, _ = self._wb[l]
            w_slice, b_slice = self._slices[l]
            h_in = tape.inputs[l]
            grads[w_slice] = (h_in.T @ delta).ravel()
            grads[b_slice] = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ w.T) * (tape.preacts[l - 1] > 0.0)
            elif need_input_gradient:
                dx = delta @ w.T
        if dx is None:
            return grads, None
        return grads, (dx[0] if tape.single else dx)

    def input_gradient(self, tape: GradientTape, output_gradient,
                       input_slice: slice | None = None):
        """Input gradient only (skips the parameter-gradient GEMMs).

        input_slice restricts the returned gradient to those input columns,
        avoiding the full layer-0 GEMM when only a few are needed.
        """
        delta = self._start_backward(tape, output_gradient)
        dx = None
        for l in range(len(self._wb) - 1, -1, -1):
            w = self._wb[l][0]
            if l == 0 and input_slice is not None:
                dx = delta @ w[input_slice].T
            else:
                dx = delta @ w.T
            if l > 0:
                delta = dx * (tape.preacts[l - 1] > 0.0)
        return dx[0] if tape.single else dx

    def _start_backward(self, tape: GradientTape, output_gradient):
        if tape is None or tape.net is not self:
            raise StaleTapeError("tape does not belong to this network")
        if tape.version != self._version or tape.forward_id != self._forward_id:
            raise StaleTapeError(
                "tape is stale: parameters changed or a newer recorded forward exists"
            )
        dy = np.asarray(output_gradient, dtype=np.float64)
        if tape.single:
            if dy.shape != (self.layer_sizes[-1],):
                raise ShapeError(
                    f"output gradient shape {dy.shape}, expected ({self.layer_sizes[-1]},)"
                )
            dy = dy[None, :]
        elif dy.shape != tape.output.shape:
            raise ShapeError(
                f"output gradient shape {dy.shape}, expected {tape.output.shape}"
            )
        if self.output_activation == "tanh":
            return dy * (1.0 - tape.output**2)
        return np.array(dy, dtype=np.float64)


def init_mlp(layer_sizes, seed, output_activation="identity") -> MLP:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    if not list(layer_sizes):
        raise ValueError("layer_sizes is empty")
    net = MLP(layer_sizes, output_activation)
    rng = np.random.default_rng(seed)
    for w, _ in net._wb:
        nin, nout = w.shape
        limit = math.sqrt(6.0 / (nin + nout))
        w[:] = rng.uniform(-limit, limit, size=(nin, nout))
    net._version += 1
    return net


# -- Adam & target updates --------------------------------------------------


@dataclass
class AdamState:
    first_moments: np.ndarray
    second_moments: np.ndarray
    step_count: int = 0
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(n_params: int, learning_rate: float = 3e-4, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    if learning_rate <= 0:
        raise ValueError(f"learning_rate must be > 0, got {learning_rate}")
    return AdamState(
        first_moments=np.zeros(n_params, dtype=np.float64),
        second_moments=np.zeros(n_params, dtype=np.float64),
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(params: np.ndarray, grads, state: AdamState):
    """One bias-corrected Adam update, in place on params; returns (params, state)."""
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moments.shape:
        raise ShapeError(
            f"misaligned arrays: params {params.shape}, grads {grads.shape}, "
            f"moments {state.first_moments.shape}"
        )
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise ValueError(f"non-finite gradient at parameter index {bad[0]}")
    state.step_count += 1
    t = state.step_count
    m, v = state.first_moments, state.second_moments
    # in-place passes; this loop is memory-bound at scale
    m *= state.beta1
    m += (1.0 - state.beta1) * grads
    g2 = grads * grads
    g2 *= 1.0 - state.beta2
    v *= state.beta2
    v += g2
    denom = v / (1.0 - state.beta2**t)  # v_hat
    np.sqrt(denom, out=denom)
    denom += state.epsilon
    np.divide(m, denom, out=denom)  # m / (sqrt(v_hat) + eps)
    denom *= state.learning_rate / (1.0 - state.beta1**t)  # fold bias correction
    params -= denom
    return params, state


def polyak_update(target_params: np.ndarray, online_params: np.ndarray, tau: float):
    """target <- (1 - tau) * target + tau * online, elementwise, in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    if target_params.shape != online_params.shape:
        raise ShapeError(
            f"misaligned arrays: target {target_params.shape}, online {online_params.shape}"
        )
    target_params *= 1.0 - tau
    target_params += tau * online_params
    return target_params


# -- checkpoint format ------------------------------------------------------
#
# A checkpoint is a JSON manifest `<prefix>.json` plus a raw little-endian
# float blob `<prefix>.bin` holding the flat parameter vector (weights then
# biases per layer, in layer order). Parameters are 64-bit; the manifest
# records the dtype so readers never guess. Round-trips are bit-exact.

_MANIFEST_KEYS = {
    "layer_sizes",
    "hidden_activation",
    "output_activation",
    "seed",
    "step_count",
    "dtype",
    "param_count",
}


def save_network(net: MLP, prefix, seed=None, step_count: int = 0) -> None:
    prefix = Path(prefix)
    manifest = {
        "layer_sizes": net.layer_sizes,
        "hidden_activation": HIDDEN_ACTIVATION,
        "output_activation": net.output_activation,
        "seed": seed,
        "step_count": int(step_count),
        "dtype": "<f8",
        "param_count": net.n_params,
    }
    prefix.parent.mkdir(parents=True, exist_ok=True)
    prefix.with_suffix(".json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    prefix.with_suffix(".bin").write_bytes(
        np.ascontiguousarray(net._params, dtype="<f8").tobytes()
    )


def load_network(prefix):
    """Load a checkpoint; returns (net, manifest). Corrupt blobs are rejected."""
    prefix = Path(prefix)
    manifest = json.loads(prefix.with_suffix(".json").read_text())
    missing = _MANIFEST_KEYS - manifest.keys()
    if missing:
        raise ValueError(f"manifest {prefix}.json missing keys: {sorted(missing)}")
    blob = prefix.with_suffix(".bin").read_bytes()
    params = np.frombuffer(blob, dtype=manifest["dtype"])
    if params.size != manifest["param_count"]:
        raise ValueError(
            f"corrupt blob {prefix}.bin: manifest says {manifest['param_count']} "
            f"parameters, blob holds {params.size}"
        )
    net = MLP(
        manifest["layer_sizes"],
        output_activation=manifest["output_activation"],
        params=params.astype(np.float64),
    )
    return net, manifest
