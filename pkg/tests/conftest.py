"""Shared test helpers: finite differences and small dataset builders."""

from __future__ import annotations

import numpy as np
import pytest

from gaitreid import BackboneMeta, Dataset, FootageEmbedding


def finite_difference(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function at x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        original = xf[i]
        xf[i] = original + step
        up = f(x)
        xf[i] = original - step
        down = f(x)
        xf[i] = original
        flat[i] = (up - down) / (2.0 * step)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-4) -> float:
    """Max relative error, with an absolute floor for near-zero entries.

    Entries whose combined magnitude falls below ``floor`` are compared
    absolutely at the floor scale; central differences carry ~1e-10 of
    round-off noise, so exact-zero gradients would otherwise divide noise
    by itself.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.abs(a) + np.abs(b), floor)
    return float(np.max(np.abs(a - b) / scale))


def make_dataset(rows: list[tuple[str, int, list[float]]], name: str = "test") -> Dataset:
    dim = len(rows[0][2])
    meta = BackboneMeta(name=name, frames_per_clip=8, feature_dim=dim)
    records = [
        FootageEmbedding(rid, rp, np.array(vec, dtype=np.float64)) for rid, rp, vec in rows
    ]
    return Dataset(meta, records)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
