"""Trainable embedding head: dense -> batch-norm -> ReLU -> dense -> L2 norm.

The head maps pooled footage vectors onto the unit hypersphere. Forward,
backward and optimizer steps are implemented explicitly on numpy arrays so
gradients can be audited against finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BatchTooSmall,
    CacheMismatch,
    IoError,
    NonFiniteActivation,
    ParseError,
    ShapeMismatch,
)
from .seeds import rng_for

CHECKPOINT_FORMAT = "head-v1"

# Trainable tensors, in update order. Running statistics are buffers, not
# parameters: they receive no gradient.
PARAM_NAMES = ("W1", "b1", "bn_gamma", "bn_beta", "W2", "b2")
_NORM_FLOOR = 1e-12


@dataclass
class HeadParams:
    """Weights and batch-norm state of the projection head."""

    W1: np.ndarray
    b1: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.W2.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "HeadParams":
        return HeadParams(
            W1=self.W1.copy(),
            b1=self.b1.copy(),
            bn_gamma=self.bn_gamma.copy(),
            bn_beta=self.bn_beta.copy(),
            bn_running_mean=self.bn_running_mean.copy(),
            bn_running_var=self.bn_running_var.copy(),
            W2=self.W2.copy(),
            b2=self.b2.copy(),
            bn_eps=self.bn_eps,
            bn_momentum=self.bn_momentum,
        )


@dataclass
class ForwardCache:
    """Activations saved by a train-mode forward for the backward pass."""

    x: np.ndarray
    z1: np.ndarray
    x_hat: np.ndarray
    batch_var: np.ndarray
    h1: np.ndarray
    a: np.ndarray
    y: np.ndarray
    norms: np.ndarray
    out: np.ndarray


@dataclass
class HeadGrads:
    """Gradients for every trainable tensor, plus the input gradient."""

    W1: np.ndarray
    b1: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    x: np.ndarray

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}


def head_init(p: int, d: int, seed: int, hidden: int = 512) -> HeadParams:
    """Deterministic initialization.

    Dense weights are uniform on (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases
    start at zero, batch-norm at the identity transform.
    """
    if p < 1 or d < 1 or hidden < 1:
        raise ShapeMismatch("p, d and hidden must be positive")
    rng = rng_for(seed, "head-init")
    bound1 = 1.0 / np.sqrt(p)
    bound2 = 1.0 / np.sqrt(hidden)
    return HeadParams(
        W1=rng.uniform(-bound1, bound1, size=(hidden, p)),
        b1=np.zeros(hidden),
        bn_gamma=np.ones(hidden),
        bn_beta=np.zeros(hidden),
        bn_running_mean=np.zeros(hidden),
        bn_running_var=np.ones(hidden),
        W2=rng.uniform(-bound2, bound2, size=(d, hidden)),
        b2=np.zeros(d),
    )


def head_forward(
    params: HeadParams, batch: np.ndarray, mode: str = "infer"
) -> tuple[np.ndarray, ForwardCache | None]:
    """Embed a batch of input vectors onto the unit hypersphere.

    In ``train`` mode batch statistics normalize the hidden layer and the
    running statistics are updated in place via momentum; a cache for
    head_backward is returned. In ``infer`` mode the stored running
    statistics are used, nothing is mutated and the cache is None.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeMismatch(f"batch shape {x.shape} does not match input dim {params.input_dim}")
    n = x.shape[0]
    if n < 1:
        raise BatchTooSmall("batch must contain at least one row")
    if mode == "train" and n < 2:
        raise BatchTooSmall("train mode needs at least 2 rows for batch statistics")

    z1 = x @ params.W1.T + params.b1
    if mode == "train":
        mu = z1.mean(axis=0)
        var = z1.var(axis=0)  # biased, matches the normalization denominator
        x_hat = (z1 - mu) / np.sqrt(var + params.bn_eps)
        m = params.bn_momentum
        unbiased = var * n / (n - 1)
        params.bn_running_mean *= 1.0 - m
        params.bn_running_mean += m * mu
        params.bn_running_var *= 1.0 - m
        params.bn_running_var += m * unbiased
    else:
        x_hat = (z1 - params.bn_running_mean) / np.sqrt(
            params.bn_running_var + params.bn_eps
        )
        var = params.bn_running_var
    h1 = params.bn_gamma * x_hat + params.bn_beta
    a = np.maximum(h1, 0.0)
    y = a @ params.W2.T + params.b2
    norms = np.maximum(np.linalg.norm(y, axis=1, keepdims=True), _NORM_FLOOR)
    out = y / norms
    if not np.isfinite(out).all():
        raise NonFiniteActivation("forward pass produced a non-finite embedding")
    if mode == "infer":
        return out, None
    return out, ForwardCache(
        x=x, z1=z1, x_hat=x_hat, batch_var=var, h1=h1, a=a, y=y, norms=norms, out=out
    )


def head_backward(
    params: HeadParams, cache: ForwardCache | None, grad_embeddings: np.ndarray
) -> HeadGrads:
    """Back-propagate through L2 normalization, dense layers and batch norm.

    ``cache`` must come from a train-mode forward on the same batch. The
    returned input gradient accounts for the batch statistics depending on
    every row.
    """
    if cache is None:
        raise CacheMismatch("backward needs the cache of a train-mode forward")
    g = np.asarray(grad_embeddings, dtype=np.float64)
    if g.shape != cache.out.shape:
        raise CacheMismatch(
            f"upstream gradient shape {g.shape} does not match cached batch {cache.out.shape}"
        )
    n = cache.x.shape[0]

    # L2 normalization: J = (I - uu^T) / ||y||  with u the normalized row.
    radial = np.sum(g * cache.out, axis=1, keepdims=True)
    dy = (g - radial * cache.out) / cache.norms

    dW2 = dy.T @ cache.a
    db2 = dy.sum(axis=0)
    da = dy @ params.W2

    dh1 = da * (cache.h1 > 0.0)

    dgamma = (dh1 * cache.x_hat).sum(axis=0)
    dbeta = dh1.sum(axis=0)
    dx_hat = dh1 * params.bn_gamma
    inv_std = 1.0 / np.sqrt(cache.batch_var + params.bn_eps)
    dz1 = (inv_std / n) * (
        n * dx_hat
        - dx_hat.sum(axis=0)
        - cache.x_hat * (dx_hat * cache.x_hat).sum(axis=0)
    )

    dW1 = dz1.T @ cache.x
    db1 = dz1.sum(axis=0)
    dx = dz1 @ params.W1
    return HeadGrads(W1=dW1, b1=db1, bn_gamma=dgamma, bn_beta=dbeta, W2=dW2, b2=db2, x=dx)


@dataclass
class OptimizerState:
    """Adaptive-moment optimizer state (first/second moments per tensor)."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_init(
    params: HeadParams,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> OptimizerState:
    tensors = params.tensors()
    return OptimizerState(
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        step=0,
        m={name: np.zeros_like(t) for name, t in tensors.items()},
        v={name: np.zeros_like(t) for name, t in tensors.items()},
    )


def optimizer_step(params: HeadParams, grads: HeadGrads, state: OptimizerState) -> None:
    """One bias-corrected adaptive-moment update, in place."""
    tensors = params.tensors()
    gradients = grads.tensors()
    for name, tensor in tensors.items():
        if gradients[name].shape != tensor.shape or state.m[name].shape != tensor.shape:
            raise ShapeMismatch(f"gradient/state shape mismatch for {name}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, tensor in tensors.items():
        g = gradients[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / (1.0 - b1**t)
        v_hat = state.v[name] / (1.0 - b2**t)
        tensor -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


def save_head(params: HeadParams, path: str | Path) -> None:
    """Write a head-v1 checkpoint (tensor name -> shape + row-major values)."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "scalars": {"bn_eps": params.bn_eps, "bn_momentum": params.bn_momentum},
        "tensors": {
            name: {"shape": list(t.shape), "data": [float(v) for v in t.ravel()]}
            for name, t in {
                **params.tensors(),
                "bn_running_mean": params.bn_running_mean,
                "bn_running_var": params.bn_running_var,
            }.items()
        },
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_head(path: str | Path) -> HeadParams:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid checkpoint document: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(
            f"{path}: expected format {CHECKPOINT_FORMAT!r}, got {doc.get('format')!r}"
        )
    tensors = {}
    expected = set(PARAM_NAMES) | {"bn_running_mean", "bn_running_var"}
    for name in expected:
        entry = doc["tensors"].get(name)
        if entry is None:
            raise ParseError(f"{path}: checkpoint missing tensor {name!r}")
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        tensors[name] = arr
    return HeadParams(
        W1=tensors["W1"],
        b1=tensors["b1"],
        bn_gamma=tensors["bn_gamma"],
        bn_beta=tensors["bn_beta"],
        bn_running_mean=tensors["bn_running_mean"],
        bn_running_var=tensors["bn_running_var"],
        W2=tensors["W2"],
        b2=tensors["b2"],
        bn_eps=float(doc["scalars"]["bn_eps"]),
        bn_momentum=float(doc["scalars"]["bn_momentum"]),
    )
