"""Seeded generators with known ground truth.

Every generator takes an explicit seed (or a ``numpy.random.Generator``) and
draws from a Philox counter-based stream, so output is bit-identical for a
given seed and configuration.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, InvalidInputError
from .grassmann import Subspace


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def random_orthogonal(d: int, rng) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix)."""
    rng = make_rng(rng)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def random_subspace(d: int, n: int, rng) -> Subspace:
    rng = make_rng(rng)
    q, _ = np.linalg.qr(rng.standard_normal((d, n)))
    return Subspace(q)


def rotated_subspace_pair(d: int, n: int, angles, seed) -> tuple[Subspace, Subspace]:
    """Source/target pair whose principal angles are exactly ``angles``.

    Basis column ``i`` of the source is rotated by ``angles[i]`` towards the
    complement direction ``n + i``; the planes are disjoint, so the angles do
    not interact.
    """
    if n < 1 or n > d // 2:
        raise DimensionError(f"need 1 <= n <= floor(d/2), got n={n}, d={d}")
    theta = np.asarray(angles, dtype=np.float64).reshape(-1)
    if theta.shape[0] != n:
        raise InvalidInputError(f"expected {n} angles, got {theta.shape[0]}")
    if np.any(theta < 0) or np.any(theta > np.pi / 2):
        raise InvalidInputError("angles must lie in [0, π/2]")
    q = random_orthogonal(d, seed)
    src = q[:, :n]
    tgt = src * np.cos(theta) + q[:, n : 2 * n] * np.sin(theta)
    return Subspace(src), Subspace(tgt)


def imbalanced_label_grid(
    h: int, w: int, class_probs, seed, color_noise: float = 0.05
) -> tuple[np.ndarray, np.ndarray]:
    """I.i.d. labels drawn from ``class_probs`` plus an RGB-like colour grid.

    Returns ``(labels, colors)`` with shapes ``(h, w)`` and ``(h, w, 3)``.
    Each class gets a distinct base colour; pixels add Gaussian noise.
    """
    p = np.asarray(class_probs, dtype=np.float64)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError("class_probs must be a probability vector")
    rng = make_rng(seed)
    labels = rng.choice(p.size, size=(h, w), p=p)
    base = np.linspace(0.0, 1.0, p.size, endpoint=False)
    palette = np.stack([base, (base + 1 / 3) % 1.0, (base + 2 / 3) % 1.0], axis=1)
    colors = palette[labels] + color_noise * rng.standard_normal((h, w, 3))
    return labels, colors


def gaussian_mixture(
    counts: Sequence[int], dim: int, separation: float, seed
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit-variance isotropic clusters.

    Class ``k`` is centred at ``separation * e_k`` when there are at most
    ``dim`` classes, else at ``separation`` times a random unit direction.
    Returns ``(features, labels, means)``.
    """
    counts = [int(c) for c in counts]
    if any(c < 1 for c in counts):
        raise InvalidInputError("every class needs at least one sample")
    rng = make_rng(seed)
    k = len(counts)
    if k <= dim:
        dirs = np.eye(dim)[:k]
    else:
        dirs = rng.standard_normal((k, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = separation * dirs
    feats = [means[i] + rng.standard_normal((c, dim)) for i, c in enumerate(counts)]
    labels = np.repeat(np.arange(k), counts)
    return np.vstack(feats), labels, means


def chain_attention(t: int, strength: float, noise: float, seed) -> np.ndarray:
    """T×T grid with ``strength`` on (i → i+1) and ``noise·U(0,1)`` elsewhere."""
    if strength <= 0:
        raise InvalidInputError("strength must be positive")
    rng = make_rng(seed)
    grid = noise * rng.random((t, t))
    idx = np.arange(t - 1)
    grid[idx, idx + 1] = strength
    return grid


def permute_grid(grid: np.ndarray, perm) -> np.ndarray:
    """Relabel frames: frame ``i`` of the input becomes frame ``perm[i]``."""
    perm = np.asarray(perm)
    out = np.empty_like(grid)
    out[np.ix_(perm, perm)] = grid
    return out


@dataclass(frozen=True)
class PairedViews:
    source_items: np.ndarray
    target_items: np.ndarray
    source_outputs: np.ndarray
    target_outputs: np.ndarray
    # correspondence[i] is the row of the target view paired with source row i
    correspondence: np.ndarray


def _apply(m, x):
    if m is None:
        return x.copy()
    if callable(m):
        return np.asarray(m(x), dtype=np.float64)
    return x @ np.asarray(m, dtype=np.float64).T


def paired_views(
    base,
    linear_map=None,
    output_map: Callable | np.ndarray | None = None,
    noise: float = 0.0,
    seed=0,
    shuffle: bool = True,
) -> PairedViews:
    """Two views of the same samples with a recorded correspondence.

    Target items are ``linear_map @ x + noise``; outputs of both views come from
    ``output_map``. With ``shuffle`` the target rows are randomly permuted.
    """
    x = np.asarray(base, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError("base samples must be 2-D")
    rng = make_rng(seed)
    tgt = _apply(linear_map, x)
    if tgt.shape[0] != x.shape[0]:
        raise DimensionError("linear map changed the number of samples")
    tgt = tgt + noise * rng.standard_normal(tgt.shape)
    y_src = _apply(output_map, x)
    y_tgt = _apply(output_map, tgt)
    m = x.shape[0]
    perm = rng.permutation(m) if shuffle else np.arange(m)
    # target row perm[i] holds the partner of source row i
    tgt_rows = np.empty_like(tgt)
    tgt_out = np.empty_like(y_tgt)
    tgt_rows[perm] = tgt
    tgt_out[perm] = y_tgt
    return PairedViews(x, tgt_rows, y_src, tgt_out, perm)


def write_dataset(path, arrays: dict) -> None:
    """Dump named arrays: 1-D/2-D arrays to CSV, the index to JSON."""
    os.makedirs(path, exist_ok=True)
    index = {}
    for name, arr in arrays.items():
        a = np.asarray(arr)
        fname = f"{name}.csv"
        with open(os.path.join(path, fname), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            for row in np.atleast_2d(a.reshape(a.shape[0], -1) if a.ndim > 1 else a):
                writer.writerow([format(float(v), ".17g") for v in row])
        index[name] = {"file": fname, "shape": list(a.shape), "dtype": str(a.dtype)}
    with open(os.path.join(path, "index.json"), "w", encoding="utf-8") as fh:
        json.dump(index, fh, sort_keys=True, indent=2)
        fh.write("\n")
