"""Fully connected ReLU classifiers and their exact piecewise-affine structure.

A network with L hidden layers computes

    f(x) = W_{L+1} relu( W_L relu( ... relu(W_1 x + b_1) ... ) + b_L ) + b_{L+1}.

On the linear region containing x the network is exactly affine. This module
extracts that affine form layer by layer: with Sigma_k the 0/1 diagonal of
active units in layer k, the map of layer k+1 is

    V_{k+1} = W_{k+1} Sigma_k V_k,       a_{k+1} = W_{k+1} Sigma_k a_k + b_{k+1},

starting from V_1 = W_1, a_1 = b_1. Units sitting exactly on their kink
(preactivation 0) are treated as inactive: Sigma entry 0 and region row sign
-1. The region polytope collects Delta_k (V_k z + a_k) >= 0 over all hidden
layers, with Delta = 2 Sigma - I, and is closed (ties included).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import Polytope

__all__ = [
    "NetworkFormatError",
    "Layer",
    "Network",
    "AffineMap",
    "LayerTrace",
    "Signature",
    "load_network",
    "save_network",
    "forward",
    "classify",
    "affine_coefficients",
    "affine_maps_for_signature",
    "region_polytope",
    "region_polytope_for_signature",
]


class NetworkFormatError(ValueError):
    """Raised when a serialized network cannot be parsed or validated."""


@dataclass(frozen=True)
class Layer:
    """One affine layer z -> weights @ z + bias."""

    weights: np.ndarray  # shape (n_out, n_in)
    bias: np.ndarray  # shape (n_out,)


@dataclass(frozen=True)
class AffineMap:
    """Affine function z -> V z + a."""

    V: np.ndarray
    a: np.ndarray


class Network:
    """Immutable stack of affine layers with ReLU between them.

    The last layer produces the logits and has no ReLU. A network must have
    at least the output layer; zero hidden layers means a plain affine
    classifier.
    """

    def __init__(self, layers: Iterable):
        built = []
        for index, layer in enumerate(layers):
            if isinstance(layer, Layer):
                w, b = layer.weights, layer.bias
            else:
                w, b = layer
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.ndim != 2:
                raise ValueError(f"layer {index}: weights must be a matrix")
            if b.ndim != 1:
                raise ValueError(f"layer {index}: bias must be a vector")
            if w.shape[0] != b.shape[0]:
                raise ValueError(
                    f"layer {index}: weights have {w.shape[0]} rows "
                    f"but bias has {b.shape[0]} entries"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {index}: weights and bias must be finite")
            if built and w.shape[1] != built[-1].weights.shape[0]:
                raise ValueError(
                    f"layer {index}: expects {w.shape[1]} inputs but layer "
                    f"{index - 1} produces {built[-1].weights.shape[0]} outputs"
                )
            w.setflags(write=False)
            b.setflags(write=False)
            built.append(Layer(w, b))
        if not built:
            raise ValueError("a network needs at least one layer")
        self._layers = tuple(built)

    @property
    def layers(self) -> tuple:
        return self._layers

    @property
    def input_dim(self) -> int:
        return self._layers[0].weights.shape[1]

    @property
    def num_classes(self) -> int:
        return self._layers[-1].weights.shape[0]

    @property
    def num_hidden_layers(self) -> int:
        return len(self._layers) - 1

    @property
    def hidden_sizes(self) -> tuple:
        return tuple(layer.weights.shape[0] for layer in self._layers[:-1])

    @property
    def num_hidden_units(self) -> int:
        return sum(self.hidden_sizes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        if len(self._layers) != len(other._layers):
            return False
        return all(
            np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)
            for a, b in zip(self._layers, other._layers)
        )

    def __repr__(self) -> str:
        dims = [self.input_dim, *self.hidden_sizes, self.num_classes]
        return f"Network({' -> '.join(map(str, dims))})"


@dataclass(frozen=True)
class LayerTrace:
    """Preactivations of every hidden layer plus the final logits."""

    preactivations: tuple  # tuple of arrays, one per hidden layer
    logits: np.ndarray


@dataclass(frozen=True)
class Signature:
    """Activation pattern: one bit per hidden unit, layers concatenated in order.

    Bit 1 means the unit is strictly active (preactivation > 0); exact zeros
    count as inactive.
    """

    bits: tuple

    @classmethod
    def from_trace(cls, trace: LayerTrace) -> "Signature":
        bits = []
        for pre in trace.preactivations:
            bits.extend(int(v) for v in (pre > 0.0))
        return cls(tuple(bits))

    def split(self, sizes: Sequence[int]):
        """Per-layer 0/1 float arrays, in layer order."""
        if sum(sizes) != len(self.bits):
            raise ValueError(
                f"signature has {len(self.bits)} bits but layers sum to {sum(sizes)}"
            )
        out = []
        start = 0
        for size in sizes:
            out.append(np.asarray(self.bits[start : start + size], dtype=np.float64))
            start += size
        return out

    def __len__(self) -> int:
        return len(self.bits)


def load_network(document: str) -> Network:
    """Parse a JSON network description.

    Expected shape: {"layers": [{"weights": [[...], ...], "bias": [...]}, ...]}
    listed input side first, output layer last. NaN and infinities are
    rejected, as are inconsistent layer dimensions.
    """

    def _reject_constant(token):
        raise NetworkFormatError(f"non-finite number {token!r} in network document")

    try:
        data = json.loads(document, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or "layers" not in data:
        raise NetworkFormatError('top level must be an object with a "layers" list')
    raw_layers = data["layers"]
    if not isinstance(raw_layers, list) or not raw_layers:
        raise NetworkFormatError('"layers" must be a non-empty list')
    pairs = []
    for index, entry in enumerate(raw_layers):
        if not isinstance(entry, dict) or "weights" not in entry or "bias" not in entry:
            raise NetworkFormatError(
                f'layer {index}: each layer needs "weights" and "bias"'
            )
        try:
            w = np.asarray(entry["weights"], dtype=np.float64)
            b = np.asarray(entry["bias"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise NetworkFormatError(f"layer {index}: non-numeric entries") from exc
        pairs.append((w, b))
    try:
        return Network(pairs)
    except ValueError as exc:
        raise NetworkFormatError(str(exc)) from exc


def save_network(net: Network) -> str:
    """Serialize a network to the JSON format accepted by load_network."""
    doc = {
        "layers": [
            {"weights": layer.weights.tolist(), "bias": layer.bias.tolist()}
            for layer in net.layers
        ]
    }
    return json.dumps(doc)


def _check_input(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise ValueError(
            f"input must be a vector of length {net.input_dim}, got shape {x.shape}"
        )
    return x


def forward(net: Network, x) -> LayerTrace:
    """Evaluate the network, recording every hidden preactivation."""
    x = _check_input(net, x)
    pre = []
    g = x
    for layer in net.layers[:-1]:
        f = layer.weights @ g + layer.bias
        pre.append(f)
        g = np.maximum(f, 0.0)
    out = net.layers[-1]
    logits = out.weights @ g + out.bias
    return LayerTrace(tuple(pre), logits)


def classify(net: Network, x) -> int:
    """Index of the largest logit; ties go to the lowest index."""
    return int(np.argmax(forward(net, x).logits))


def affine_maps_for_signature(net: Network, signature: Signature):
    """Affine maps (V_k, a_k) of every layer under a fixed activation pattern.

    Returns L + 1 maps: one per hidden layer plus the output map. The
    recursion V_{k+1} = W_{k+1} Sigma_k V_k carries the pattern through the
    network regardless of whether any input actually realizes it.
    """
    per_layer = signature.split(net.hidden_sizes)
    first = net.layers[0]
    V = first.weights
    a = first.bias
    maps = [AffineMap(V, a)]
    for idx, layer in enumerate(net.layers[1:]):
        sigma = per_layer[idx]
        V = layer.weights @ (V * sigma[:, None])
        a = layer.weights @ (a * sigma) + layer.bias
        maps.append(AffineMap(V, a))
    return maps


def affine_coefficients(net: Network, x):
    """Affine maps of every layer on the region of x, plus the signature of x.

    The returned output map reproduces the logits exactly at x, and at every
    point whose signature matches.
    """
    x = _check_input(net, x)
    trace = forward(net, x)
    signature = Signature.from_trace(trace)
    return affine_maps_for_signature(net, signature), signature


def region_polytope_for_signature(
    net: Network, signature: Signature, maps=None
) -> Polytope:
    """Closed polytope of inputs consistent with an activation pattern.

    Rows are Delta_k (V_k z + a_k) >= 0 for each hidden layer k, with Delta
    diagonal +1 on active units and -1 on inactive ones. One row per hidden
    unit; zero hidden layers give a polytope with no rows. ``maps`` may carry
    a precomputed affine_maps_for_signature(net, signature) result.
    """
    if maps is None:
        maps = affine_maps_for_signature(net, signature)
    per_layer = signature.split(net.hidden_sizes)
    if net.num_hidden_layers == 0:
        return Polytope.empty(net.input_dim)
    rows_A = []
    rows_b = []
    for idx in range(net.num_hidden_layers):
        delta = 2.0 * per_layer[idx] - 1.0
        rows_A.append(maps[idx].V * delta[:, None])
        rows_b.append(maps[idx].a * delta)
    return Polytope(np.vstack(rows_A), np.concatenate(rows_b))


def region_polytope(net: Network, x) -> Polytope:
    """Closed polytope of the linear region containing x."""
    x = _check_input(net, x)
    trace = forward(net, x)
    signature = Signature.from_trace(trace)
    return region_polytope_for_signature(net, signature)
