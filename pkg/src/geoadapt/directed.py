"""Directed temporal attention, the order-guided loss and frame-order recovery.

Orders are sequences of frame indices. Recovery returns 0-based indices; the
scoring functions accept any labelling as long as both sides agree.
"""

from __future__ import annotations

import itertools
import json
import math

import numpy as np

from .errors import DegenerateNormError, ExhaustionError, InvalidInputError, SizeLimitError
from .synthdata import make_rng

MAX_EXACT_T = 16


def _as_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 2:
        raise InvalidInputError("attention grid must be T×T with T >= 2")
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("attention grid has non-finite entries")
    return g


def directed_cosine_attention(queries, keys, scale_dim: int | None = None) -> np.ndarray:
    """Entry (t, t') is the cosine between ``q_t / √D`` and ``k_t'``.

    The √D divisor is applied as written even though a cosine ignores it.
    """
    q = np.asarray(queries, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or q.shape != k.shape:
        raise InvalidInputError("queries and keys must both be T×D")
    d = q.shape[1] if scale_dim is None else int(scale_dim)
    q = q / math.sqrt(d)
    qn = np.linalg.norm(q, axis=1)
    kn = np.linalg.norm(k, axis=1)
    if np.any(qn == 0) or np.any(kn == 0):
        raise DegenerateNormError("zero-norm query or key vector")
    return np.clip((q @ k.T) / np.outer(qn, kn), -1.0, 1.0)


def average_spatial(stack) -> np.ndarray:
    """Reduce an S×T×T stack of attention grids to one T×T grid."""
    s = np.asarray(stack, dtype=np.float64)
    if s.ndim == 2:
        return _as_grid(s)
    if s.ndim != 3:
        raise InvalidInputError("expected an S×T×T stack")
    return _as_grid(s.mean(axis=0))


def _check_order(order, t: int | None = None) -> np.ndarray:
    o = np.asarray(order)
    if o.ndim != 1 or len(set(o.tolist())) != o.size:
        raise InvalidInputError("order must be a sequence of distinct labels")
    if t is not None and o.size != t:
        raise InvalidInputError(f"order has length {o.size}, grids have T={t}")
    return o


def order_sign_matrix(order) -> np.ndarray:
    """ς(o_t, o_t') = +1 if o_t < o_t' else −1 (so −1 on the diagonal)."""
    o = _check_order(order)
    return np.where(o[:, None] < o[None, :], 1.0, -1.0)


def guided_order_loss(grids, order, include_diagonal: bool = True) -> float:
    """``1/(L·N·T²) · Σ (1 − a_tt')·ς(o_t, o_t')`` over every supplied grid.

    ``grids`` may be one T×T grid, a list of them, or an array whose last two
    axes are T×T (e.g. layers × patches × T × T). Excluding the diagonal keeps
    the same normaliser so the two parts add up to the full loss.
    """
    if isinstance(grids, (list, tuple)):
        g = np.stack([np.asarray(x, dtype=np.float64) for x in grids])
    else:
        g = np.asarray(grids, dtype=np.float64)
    if g.ndim < 2 or g.shape[-1] != g.shape[-2]:
        raise InvalidInputError("grids must end in T×T axes")
    t = g.shape[-1]
    g = g.reshape(-1, t, t)
    sign = order_sign_matrix(_check_order(order, t))
    if not include_diagonal:
        np.fill_diagonal(sign, 0.0)
    return float(np.sum((1.0 - g) * sign) / (g.shape[0] * t * t))


def path_weight(grid, path) -> float:
    g = np.asarray(grid, dtype=np.float64)
    p = np.asarray(path, dtype=int)
    return float(sum(g[p[i], p[i + 1]] for i in range(p.size - 1)))


def _tie_tolerance(g: np.ndarray) -> float:
    return 1e-12 * (1.0 + float(np.abs(g).sum()))


def _suffix_table(g: np.ndarray) -> np.ndarray:
    """best[mask, v]: max weight of a path from v through every node outside mask.

    Only entries with v in mask are meaningful. Filled level by level in
    decreasing popcount, each level vectorised over masks and current nodes.
    """
    t = g.shape[0]
    full = (1 << t) - 1
    masks = np.arange(1 << t)
    popcount = np.zeros(1 << t, dtype=np.int64)
    for b in range(t):
        popcount += (masks >> b) & 1
    best = np.full((1 << t, t), -np.inf)
    best[full] = 0.0
    for level in range(t - 1, 0, -1):
        lm = masks[popcount == level]
        for u in range(t):
            sel = lm[(lm >> u) & 1 == 0]
            if sel.size == 0:
                continue
            cand = g[:, u][None, :] + best[sel | (1 << u), u][:, None]
            np.maximum(best[sel], cand, out=cand)
            best[sel] = cand
    return best


def recover_order(grid) -> np.ndarray:
    """Max-weight Hamiltonian path with free endpoints (Held-Karp).

    Edge t → t' carries ``grid[t, t']``. Among paths within a relative 1e-12
    of the optimum the lexicographically smallest sequence is returned.
    """
    g = _as_grid(grid)
    t = g.shape[0]
    if t > MAX_EXACT_T:
        raise SizeLimitError(f"exact recovery supports T <= {MAX_EXACT_T}, got {t}")
    best = _suffix_table(g)
    starts = np.array([best[1 << v, v] for v in range(t)])
    need = starts.max() - _tie_tolerance(g)
    v = int(np.flatnonzero(starts >= need)[0])
    mask = 1 << v
    path = [v]
    for _ in range(t - 1):
        for u in range(t):
            if mask >> u & 1:
                continue
            if g[v, u] + best[mask | (1 << u), u] >= need:
                need -= g[v, u]
                v, mask = u, mask | (1 << u)
                path.append(u)
                break
        else:  # pragma: no cover - guarded by the table
            raise ExhaustionError("path reconstruction failed")
    return np.array(path)


def brute_force_order(grid) -> np.ndarray:
    """Exhaustive search over all T! paths, same tie rule as ``recover_order``."""
    g = _as_grid(grid)
    t = g.shape[0]
    if t > 9:
        raise SizeLimitError("brute force is limited to T <= 9")
    perms = list(itertools.permutations(range(t)))
    weights = np.array([path_weight(g, p) for p in perms])
    need = weights.max() - _tie_tolerance(g)
    # permutations() yields in lexicographic order
    return np.array(perms[int(np.flatnonzero(weights >= need)[0])])


def order_accuracy(recovered, truth) -> float:
    """Longest common subsequence length over T, as a percentage."""
    a, b = list(np.asarray(recovered).tolist()), list(np.asarray(truth).tolist())
    if len(a) != len(b) or not a:
        raise InvalidInputError("orders must have equal, nonzero length")
    n = len(a)
    prev = [0] * (n + 1)
    for x in a:
        cur = [0] * (n + 1)
        for j, y in enumerate(b):
            cur[j + 1] = prev[j] + 1 if x == y else max(prev[j + 1], cur[j])
        prev = cur
    return 100.0 * prev[n] / n


def hamming(p, q) -> int:
    return int(np.sum(np.asarray(p) != np.asarray(q)))


def min_hamming_permutations(
    t: int, how_many: int, seed, n_candidates: int = 64, max_rounds: int = 1000
) -> list[tuple[int, ...]]:
    """Greedy set of distinct permutations with small mutual Hamming distance.

    Starts from a random permutation; each round draws ``n_candidates`` fresh
    permutations and keeps the unseen one minimising the maximum Hamming
    distance to the selection (earliest drawn wins ties).
    """
    if t < 1 or how_many < 1:
        raise InvalidInputError("t and how_many must be positive")
    if how_many > math.factorial(t):
        raise InvalidInputError(f"only {math.factorial(t)} permutations of {t} exist")
    rng = make_rng(seed)
    chosen = [tuple(rng.permutation(t).tolist())]
    seen = set(chosen)
    rounds = 0
    while len(chosen) < how_many:
        rounds += 1
        if rounds > max_rounds:
            raise ExhaustionError(f"found {len(chosen)} of {how_many} permutations after {max_rounds} rounds")
        cands = [tuple(c) for c in rng.permuted(np.tile(np.arange(t), (n_candidates, 1)), axis=1).tolist()]
        cands = [c for c in dict.fromkeys(cands) if c not in seen]
        if not cands:
            continue
        sel = np.array(chosen)
        scores = [int((np.array(c)[None, :] != sel).sum(axis=1).max()) for c in cands]
        pick = cands[int(np.argmin(scores))]
        chosen.append(pick)
        seen.add(pick)
    return chosen


def max_pairwise_hamming(perms) -> int:
    p = np.asarray(perms)
    if len(p) < 2:
        return 0
    return int((p[:, None, :] != p[None, :, :]).sum(axis=2).max())


def order_report(grid, truth) -> dict:
    g = _as_grid(grid)
    rec = recover_order(g)
    return {
        "T": int(g.shape[0]),
        "recovered": [int(x) for x in rec],
        "truth": [int(x) for x in np.asarray(truth)],
        "order_accuracy": order_accuracy(rec, truth),
        "path_weight": path_weight(g, rec),
    }


def order_report_json(grid, truth) -> str:
    return json.dumps(order_report(grid, truth), sort_keys=True)
