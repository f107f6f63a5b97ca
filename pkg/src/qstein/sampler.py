"""Exact sampling from q-Gaussians and their escorts by radial decomposition.

A draw is built as ``x = mu + L r u`` with ``u`` uniform on the unit sphere
and ``r^2 / R^2 ~ Beta(D/2, m + 1 + k)`` (``k = 0`` base law, ``k = 1``
escort). The Gaussian limit uses ``x = mu + L n`` with ``n`` standard normal.

Random streams
--------------
Batches are split into fixed chunks of ``CHUNK_SIZE`` draws. Chunk ``c`` of a
batch with seed ``seed`` is filled from a Philox4x64-10 generator keyed by
``numpy.random.SeedSequence(seed, spawn_key=(c,))``. Inside a chunk the
stream is consumed in a fixed order:

1. ``count * D`` standard normals (numpy's ziggurat), row-major, for the
   direction (or, in the Gaussian limit, the draw itself);
2. the Gamma draws for the Beta numerator, then for the denominator
   (Marsaglia-Tsang; shapes below 1 are boosted by one and corrected with
   ``U^{1/shape}``).

Because chunk layout never depends on the worker count, a batch filled by
any number of threads is bit-identical to the single-threaded fill.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from . import _parallel
from .core import QGaussian, radius_sq

__all__ = [
    "CHUNK_SIZE",
    "SampleBatch",
    "GaussianLimitWarning",
    "chunk_rng",
    "sample",
    "sample_isotropic",
    "derive_seed",
    "sample_sphere",
    "sample_gamma",
    "sample_beta",
    "write_csv",
]

CHUNK_SIZE = 1 << 16

Source = Literal["base", "escort"]

# Largest double below one: keeps r strictly inside the support after rounding.
_B_MAX = 1.0 - 4.0 * np.finfo(float).eps


class GaussianLimitWarning(UserWarning):
    """The escort of a Gaussian is the Gaussian itself; base draws are returned."""


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Generator for chunk ``chunk`` of the batch stream ``seed``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(chunk),))))


def sample_sphere(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Rows uniform on the unit sphere S^{D-1}, by normalizing standard normals."""
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    n = rng.standard_normal((count, dim))
    norms = np.sqrt(np.einsum("ij,ij->i", n, n))
    # An all-zero normal vector has probability zero; map it to e_1 rather than NaN.
    bad = norms == 0.0
    if np.any(bad):
        n[bad] = 0.0
        n[bad, 0] = 1.0
        norms[bad] = 1.0
    return n / norms[:, None]


def sample_gamma(shape: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Gamma(shape, 1) variates by Marsaglia-Tsang squeeze-free rejection."""
    if not shape > 0:
        raise ValueError(f"Gamma shape must be positive, got {shape}")
    boost = shape < 1.0
    a = shape + 1.0 if boost else shape
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(count)
    filled = 0
    while filled < count:
        need = count - filled
        k = need + need // 16 + 8
        x = rng.standard_normal(k)
        u = 1.0 - rng.random(k)  # (0, 1]
        v = 1.0 + c * x
        pos = v > 0.0
        v3 = np.where(pos, v * v * v, 1.0)
        ok = pos & (np.log(u) < 0.5 * x * x + d - d * v3 + d * np.log(v3))
        acc = (d * v3)[ok][:need]
        out[filled : filled + acc.size] = acc
        filled += acc.size
    if boost:
        u = 1.0 - rng.random(count)
        out = np.exp(np.log(out) + np.log(u) / shape)
    return out


def sample_beta(alpha: float, beta: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Beta(alpha, beta) variates as G1 / (G1 + G2) with independent Gammas."""
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"Beta shapes must be positive, got ({alpha}, {beta})")
    g1 = sample_gamma(alpha, count, rng)
    g2 = sample_gamma(beta, count, rng)
    return g1 / (g1 + g2)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """S draws from a q-Gaussian (``source='base'``) or its escort (``'escort'``).

    ``s_values`` caches the squared radii s(x_k); it is exact up to rounding
    of the triangular transform applied to ``points``.
    """

    points: np.ndarray
    s_values: np.ndarray
    seed: int
    source: str
    dist: QGaussian
    note: str | None = None

    @property
    def size(self) -> int:
        return self.points.shape[0]


def derive_seed(*keys: int) -> int:
    """Deterministic 64-bit seed from a tuple of nonnegative integer keys."""
    lo, hi = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def _fill_chunk(dim: int, m: float | None, r2: float, count: int, rng: np.random.Generator, order: int):
    if m is None:
        z = rng.standard_normal((count, dim))
        s = np.einsum("ij,ij->i", z, z)
    else:
        u = sample_sphere(dim, count, rng)
        b = np.minimum(sample_beta(0.5 * dim, m + 1.0 + order, count, rng), _B_MAX)
        s = r2 * b
        z = u * np.sqrt(s)[:, None]
    return z, s


def _draw_standard(dim, m, r2, S, seed, order, workers):
    bounds = _parallel.chunk_bounds(S, CHUNK_SIZE)

    def work(c: int):
        lo, hi = bounds[c]
        return _fill_chunk(dim, m, r2, hi - lo, chunk_rng(seed, c), order)

    parts = _parallel.ordered_map(work, len(bounds), workers)
    if len(parts) == 1:
        return parts[0]
    return np.concatenate([z for z, _ in parts]), np.concatenate([s for _, s in parts])


def sample_isotropic(dim: int, q: float, S: int, seed: int, workers: int | None = None) -> np.ndarray:
    """Draws of N_q(0, I_D) as an (S, D) array, without forming a scale factor.

    Uses the same stream layout as :func:`sample`, so for a standard
    instance the two agree bit-for-bit.
    """
    if q == 1.0:
        z, _ = _draw_standard(int(dim), None, math.inf, int(S), seed, 0, workers)
    else:
        z, _ = _draw_standard(int(dim), 1.0 / (1.0 - q), radius_sq(q, dim), int(S), seed, 0, workers)
    return z


def sample(p: QGaussian, S: int, seed: int, source: Source = "base", workers: int | None = None) -> SampleBatch:
    """Draw ``S`` points from ``p`` (or its escort) deterministically from ``seed``."""
    S = int(S)
    if S < 1:
        raise ValueError(f"sample count must be >= 1, got {S}")
    if source not in ("base", "escort"):
        raise ValueError(f"source must be 'base' or 'escort', got {source!r}")
    note = None
    order = 1 if source == "escort" else 0
    if p.is_gaussian and source == "escort":
        note = "Gaussian limit: the escort equals the base law; base draws returned"
        warnings.warn(note, GaussianLimitWarning, stacklevel=2)
        order = 0
    m = None if p.is_gaussian else p.m
    z, s = _draw_standard(p.dim, m, p.radius_sq, S, seed, order, workers)
    x = z @ p.sigma_factor.T + p.mu
    x.setflags(write=False)
    s.setflags(write=False)
    return SampleBatch(points=x, s_values=s, seed=int(seed), source=source, dist=p, note=note)


def write_csv(batch: SampleBatch, path) -> None:
    """Dump a batch as RFC-4180 CSV with columns x_1..x_D, s."""
    D = batch.points.shape[1]
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow([f"x_{j + 1}" for j in range(D)] + ["s"])
        for row, s in zip(batch.points.tolist(), batch.s_values.tolist()):
            w.writerow([repr(v) for v in row] + [repr(s)])
