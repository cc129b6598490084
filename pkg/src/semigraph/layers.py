"""Parameter initialization and the feed-forward block shared by every head."""

from __future__ import annotations

import numpy as np

from . import tensor as tn
from .tensor import Tensor

Params = dict  # name -> Tensor


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; every stochastic step takes one explicitly."""
    return np.random.Generator(np.random.Philox(seed))


def init_matrix(rng: np.random.Generator, fan_in: int, fan_out: int, scheme: str = "glorot") -> np.ndarray:
    if scheme == "glorot":
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_in, fan_out))
    if scheme == "gaussian":
        return rng.normal(0.0, 0.01, size=(fan_in, fan_out))
    raise ValueError(f"unknown init scheme {scheme!r}")


def add_mlp(params: Params, prefix: str, sizes: list[int], rng, scheme: str = "glorot") -> None:
    for k, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"{prefix}.w{k}"] = Tensor(init_matrix(rng, fi, fo, scheme), requires_grad=True)
        params[f"{prefix}.b{k}"] = Tensor(np.zeros(fo), requires_grad=True)


def mlp_depth(params: Params, prefix: str) -> int:
    k = 0
    while f"{prefix}.w{k}" in params:
        k += 1
    return k


def mlp(x: Tensor, params: Params, prefix: str, dropout: float = 0.0,
        train: bool = False, rng=None) -> Tensor:
    """Linear layers with ReLU and dropout between them; last layer is linear."""
    depth = mlp_depth(params, prefix)
    for k in range(depth):
        x = tn.matmul(x, params[f"{prefix}.w{k}"]) + params[f"{prefix}.b{k}"]
        if k < depth - 1:
            x = tn.dropout(tn.relu(x), dropout, train, rng)
    return x
