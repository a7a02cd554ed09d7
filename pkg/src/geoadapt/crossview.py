"""Cross-view correlation metrics and the unpaired adaptation losses.

A metric here is any callable ``metric(a, b) -> float``. The classes below add
a vectorised ``pairwise(A, B)`` used by the losses; plain callables fall back to
a double loop.

Unpaired expectations are estimated as the mean over the full cross product
of a minibatch, and the per-pair penalty is the squared error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateNormError, InvalidInputError
from .grassmann import GeodesicKernel
from .synthdata import make_rng

DEFAULT_ALPHA = 1.5
DEFAULT_GAMMA = 1.0
DEFAULT_LAMBDA_I = 1.0
DEFAULT_LAMBDA_P = 0.5
DEFAULT_BETA = 200.0
DEFAULT_CVAR_LAMBDA = 5e-3
DEFAULT_KL_EPSILON = 1e-12
DEFAULT_PROJECTIONS = 64


def _vec(a, name="vector") -> np.ndarray:
    v = np.asarray(a, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return v


def _clamp(value, beta):
    return value if beta is None else np.minimum(value, beta)


# --------------------------------------------------------------------------
# metrics


def geodesic_distance(a, b, kernel: GeodesicKernel, zero_policy: str = "error") -> float:
    """``1 - aᵀQb / sqrt(aᵀQa · bᵀQb)`` for the geodesic flow kernel ``Q``.

    ``zero_policy`` decides what happens when either argument has (numerically)
    zero Q-norm: ``"error"`` raises :class:`DegenerateNormError`,
    ``"saturate"`` returns 1.
    """
    a, b = _vec(a, "a"), _vec(b, "b")
    if a.shape[0] != kernel.dim or b.shape[0] != kernel.dim:
        raise InvalidInputError(
            f"vectors must have length {kernel.dim}, got {a.shape[0]} and {b.shape[0]}"
        )
    q = kernel.q
    qa, qb = a @ q @ a, b @ q @ b
    qnorm = kernel.spectral_norm
    if qa <= 1e-12 * qnorm * (a @ a) or qb <= 1e-12 * qnorm * (b @ b):
        if zero_policy == "saturate":
            return 1.0
        if zero_policy == "error":
            raise DegenerateNormError("vector has (near) zero norm under Q")
        raise InvalidInputError(f"unknown zero_policy {zero_policy!r}")
    return float(1.0 - (a @ q @ b) / (math.sqrt(qa) * math.sqrt(qb)))


def deep_euclidean_metric(a, b, embedding: Callable | None = None, beta: float | None = DEFAULT_BETA) -> float:
    """``min(‖G(a) − G(b)‖², β)``; ``embedding=None`` means identity."""
    ga = _vec(a if embedding is None else embedding(a))
    gb = _vec(b if embedding is None else embedding(b))
    if ga.shape != gb.shape:
        raise InvalidInputError("embedding outputs have different lengths")
    diff = ga - gb
    return float(_clamp(diff @ diff, beta))


def _check_prob(p, name):
    p = _vec(p, name)
    if np.any(p < 0):
        raise InvalidInputError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"{name} does not sum to 1")
    return p


def _smooth(p, eps):
    p = p + eps
    return p / p.sum(axis=-1, keepdims=True)


def symmetric_kl_metric(p, q, epsilon: float = DEFAULT_KL_EPSILON, beta: float | None = DEFAULT_BETA) -> float:
    """Symmetrised KL divergence ``½(KL(p‖q) + KL(q‖p))`` in nats, clamped at β.

    Both inputs are ε-smoothed and renormalised first, so zeros are allowed.
    """
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be positive")
    p, q = _check_prob(p, "p"), _check_prob(q, "q")
    if p.shape != q.shape:
        raise InvalidInputError("p and q have different lengths")
    ps, qs = _smooth(p, epsilon), _smooth(q, epsilon)
    # ½ Σ (p − q)(log p − log q) is the same quantity, symmetric by construction
    value = 0.5 * np.sum((ps - qs) * (np.log(ps) - np.log(qs)))
    return float(_clamp(max(value, 0.0), beta))


@dataclass(frozen=True)
class GeodesicCosine:
    kernel: GeodesicKernel
    zero_policy: str = "error"
    clamp: float | None = None
    kind: str = field(default="geodesic_cosine", init=False)

    def __post_init__(self):
        if self.clamp is not None and self.clamp <= 0:
            raise InvalidInputError("clamp must be positive")

    def __call__(self, a, b) -> float:
        return float(_clamp(geodesic_distance(a, b, self.kernel, self.zero_policy), self.clamp))

    def pairwise(self, xa, xb) -> np.ndarray:
        xa = np.asarray(xa, dtype=np.float64)
        xb = np.asarray(xb, dtype=np.float64)
        q = self.kernel.q
        na = np.einsum("ij,jk,ik->i", xa, q, xa)
        nb = np.einsum("ij,jk,ik->i", xb, q, xb)
        qn = self.kernel.spectral_norm
        bad_a = na <= 1e-12 * qn * np.einsum("ij,ij->i", xa, xa)
        bad_b = nb <= 1e-12 * qn * np.einsum("ij,ij->i", xb, xb)
        if (bad_a.any() or bad_b.any()) and self.zero_policy == "error":
            raise DegenerateNormError("vector has (near) zero norm under Q")
        na = np.where(bad_a, 1.0, na)
        nb = np.where(bad_b, 1.0, nb)
        d = 1.0 - (xa @ q @ xb.T) / np.outer(np.sqrt(na), np.sqrt(nb))
        d[bad_a, :] = 1.0
        d[:, bad_b] = 1.0
        return _clamp(d, self.clamp)


@dataclass(frozen=True)
class DeepEuclidean:
    embedding: Callable | None = None
    clamp: float | None = DEFAULT_BETA
    kind: str = field(default="deep_euclidean", init=False)

    def __post_init__(self):
        if self.clamp is not None and self.clamp <= 0:
            raise InvalidInputError("clamp must be positive")

    def __call__(self, a, b) -> float:
        return deep_euclidean_metric(a, b, self.embedding, self.clamp)

    def pairwise(self, xa, xb) -> np.ndarray:
        if self.embedding is not None:
            ga = np.array([_vec(self.embedding(x)) for x in xa])
            gb = np.array([_vec(self.embedding(x)) for x in xb])
        else:
            ga = np.asarray(xa, dtype=np.float64)
            gb = np.asarray(xb, dtype=np.float64)
        if ga.shape[1] != gb.shape[1]:
            raise InvalidInputError("embedding outputs have different lengths")
        diff = ga[:, None, :] - gb[None, :, :]
        return _clamp(np.einsum("ijk,ijk->ij", diff, diff), self.clamp)


@dataclass(frozen=True)
class SymmetricKL:
    epsilon: float = DEFAULT_KL_EPSILON
    clamp: float | None = DEFAULT_BETA
    kind: str = field(default="symmetric_kl", init=False)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InvalidInputError("epsilon must be positive")
        if self.clamp is not None and self.clamp <= 0:
            raise InvalidInputError("clamp must be positive")

    def __call__(self, p, q) -> float:
        return symmetric_kl_metric(p, q, self.epsilon, self.clamp)

    def pairwise(self, pa, pb) -> np.ndarray:
        pa = np.array([_check_prob(p, "p") for p in pa])
        pb = np.array([_check_prob(p, "q") for p in pb])
        sa, sb = _smooth(pa, self.epsilon), _smooth(pb, self.epsilon)
        la, lb = np.log(sa), np.log(sb)
        # Σ (p − q)(log p − log q) = Σ p log p + Σ q log q − Σ p log q − Σ q log p
        self_a = np.sum(sa * la, axis=1)
        self_b = np.sum(sb * lb, axis=1)
        d = 0.5 * (self_a[:, None] + self_b[None, :] - sa @ lb.T - la @ sb.T)
        return _clamp(np.maximum(d, 0.0), self.clamp)


def metric_kind(metric) -> str:
    return getattr(metric, "kind", "custom")


def pairwise_matrix(metric, xa, xb) -> np.ndarray:
    """Matrix of ``metric(xa[i], xb[j])``."""
    if hasattr(metric, "pairwise"):
        return np.asarray(metric.pairwise(xa, xb), dtype=np.float64)
    return np.array([[metric(a, b) for b in xb] for a in xa], dtype=np.float64)


# --------------------------------------------------------------------------
# losses


@dataclass(frozen=True)
class CrossViewBatch:
    source_items: np.ndarray
    target_items: np.ndarray
    source_outputs: np.ndarray
    target_outputs: np.ndarray

    def __post_init__(self):
        for name in ("source_items", "target_items", "source_outputs", "target_outputs"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1)
            object.__setattr__(self, name, arr)
        if len(self.source_items) != len(self.source_outputs):
            raise InvalidInputError("source items and outputs differ in count")
        if len(self.target_items) != len(self.target_outputs):
            raise InvalidInputError("target items and outputs differ in count")
        if len(self.source_items) == 0 or len(self.target_items) == 0:
            raise InvalidInputError("batch must be nonempty")

    @classmethod
    def from_views(cls, views) -> "CrossViewBatch":
        return cls(views.source_items, views.target_items, views.source_outputs, views.target_outputs)

    @property
    def pair_count(self) -> int:
        return len(self.source_items) * len(self.target_items)


def unpaired_crossview_loss(batch: CrossViewBatch, mx, my, alpha: float = DEFAULT_ALPHA) -> float:
    """Mean over all (source i, target j) of ``(D_x − α·D_y)²``."""
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    dx = pairwise_matrix(mx, batch.source_items, batch.target_items)
    dy = pairwise_matrix(my, batch.source_outputs, batch.target_outputs)
    return float(np.mean((dx - alpha * dy) ** 2))


def _broadcast_rows(vectors, count):
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim == 1:
        arr = np.broadcast_to(arr, (count, arr.shape[0]))
    if arr.shape[0] != count:
        raise InvalidInputError("prompt embeddings must be one vector or one per item")
    return arr


def combined_prompt_loss(
    batch: CrossViewBatch,
    prompt_src,
    prompt_tgt,
    mx,
    my,
    mp,
    alpha: float = DEFAULT_ALPHA,
    gamma: float = DEFAULT_GAMMA,
    lambda_i: float = DEFAULT_LAMBDA_I,
    lambda_p: float = DEFAULT_LAMBDA_P,
) -> float:
    """Image term plus view-condition prompt term, averaged over cross pairs.

    ``prompt_src``/``prompt_tgt`` are either one embedding per view or one per
    item.
    """
    if lambda_i < 0 or lambda_p < 0:
        raise InvalidInputError("loss weights must be nonnegative")
    if alpha <= 0 or gamma <= 0:
        raise InvalidInputError("alpha and gamma must be positive")
    ns, nt = len(batch.source_items), len(batch.target_items)
    dx = pairwise_matrix(mx, batch.source_items, batch.target_items)
    dy = pairwise_matrix(my, batch.source_outputs, batch.target_outputs)
    dp = pairwise_matrix(mp, _broadcast_rows(prompt_src, ns), _broadcast_rows(prompt_tgt, nt))
    per_pair = lambda_i * (dx - alpha * dy) ** 2 + lambda_p * (dp - gamma * dy) ** 2
    return float(np.mean(per_pair))


def cvar_selfattention_loss(
    video_pairs: CrossViewBatch,
    attn_src: Sequence,
    attn_tgt: Sequence,
    embedding: Callable | None = None,
    alpha: float = DEFAULT_ALPHA,
    lam: float = DEFAULT_CVAR_LAMBDA,
    beta: float = DEFAULT_BETA,
    epsilon: float = DEFAULT_KL_EPSILON,
) -> float:
    """``λ · mean (D_x − α·D_a)²`` with clamped deep-Euclidean and symmetric-KL metrics.

    Attention maps are passed flattened and normalised to sum to one.
    """
    if lam <= 0:
        raise InvalidInputError("lambda must be positive")
    if len(attn_src) != len(video_pairs.source_items) or len(attn_tgt) != len(video_pairs.target_items):
        raise InvalidInputError("one attention map per video is required")
    dx = pairwise_matrix(DeepEuclidean(embedding, beta), video_pairs.source_items, video_pairs.target_items)
    da = pairwise_matrix(SymmetricKL(epsilon, beta), attn_src, attn_tgt)
    return float(lam * np.mean((dx - alpha * da) ** 2))


@dataclass(frozen=True)
class LossReport:
    loss: float
    pair_count: int
    alpha: float
    gamma: float | None
    lambdas: dict
    metric_kinds: dict
    beta: float | None

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "pair_count": self.pair_count,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "lambdas": dict(self.lambdas),
            "metric_kinds": dict(self.metric_kinds),
            "beta": self.beta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def paired_vs_unpaired_bound_report(
    views, mx, my, alpha: float = DEFAULT_ALPHA, estimator: str = "cross"
) -> dict:
    """Compare the paired constraint with its unpaired surrogate.

    ``views`` carries ``correspondence`` (see :class:`synthdata.PairedViews`).
    ``estimator="cross"`` averages the unpaired term over all cross pairs;
    ``"index"`` pairs rows by position instead. Only finiteness is checked;
    the ratio ``unpaired / paired`` is reported as a diagnostic.
    """
    batch = CrossViewBatch.from_views(views)
    corr = np.asarray(views.correspondence)
    n = len(batch.source_items)
    if sorted(corr.tolist()) != list(range(len(batch.target_items))) or len(corr) != n:
        raise InvalidInputError("correspondence must be a bijection onto the target rows")
    dx = pairwise_matrix(mx, batch.source_items, batch.target_items)
    dy = pairwise_matrix(my, batch.source_outputs, batch.target_outputs)
    resid = (dx - alpha * dy) ** 2
    paired = float(np.mean(resid[np.arange(n), corr]))
    if estimator == "cross":
        unpaired = float(np.mean(resid))
    elif estimator == "index":
        unpaired = float(np.mean(resid[np.arange(n), np.arange(n)]))
    else:
        raise InvalidInputError(f"unknown estimator {estimator!r}")
    if paired == unpaired:
        ratio = 1.0
    elif paired == 0.0:
        ratio = math.inf
    else:
        ratio = unpaired / paired
    return {"paired_loss": paired, "unpaired_loss": unpaired, "ratio": ratio}


# --------------------------------------------------------------------------
# sliced Gromov-Wasserstein


def random_directions(dim: int, n_projections: int, seed) -> np.ndarray:
    """``n_projections`` seeded unit vectors in R^dim, one per row."""
    rng = make_rng(seed)
    dirs = rng.standard_normal((n_projections, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def gw_1d_cost(u, v) -> float:
    """1-D GW cost for the coupling ``u[i] ↔ v[i]`` with uniform weights.

    Intra-set cost is the squared difference, so the cost is
    ``n⁻² Σ_{i,j} ((u_i − u_j)² − (v_i − v_j)²)²``.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    cu = (u[:, None] - u[None, :]) ** 2
    cv = (v[:, None] - v[None, :]) ** 2
    return float(np.mean((cu - cv) ** 2))


def gw_1d(u, v) -> float:
    """Smaller of the sorted-identity and sorted-reversed coupling costs."""
    us, vs = np.sort(u), np.sort(v)
    return min(gw_1d_cost(us, vs), gw_1d_cost(us, vs[::-1]))


def canonical_frame(points: np.ndarray) -> np.ndarray:
    """Centre a point set and express it in its principal axes.

    Axis signs are fixed by the sign of the third moment along each axis, with
    the largest-magnitude coordinate as a fallback, so any rigid motion of the
    input (rotation, reflection, translation) maps to the same coordinates
    when the covariance spectrum is simple.
    """
    x = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    y = x @ vt.T
    for k in range(y.shape[1]):
        col = y[:, k]
        m3 = np.sum(col**3)
        scale = np.sum(np.abs(col) ** 3)
        if abs(m3) > 1e-8 * scale:
            s = np.sign(m3)
        else:
            s = np.sign(col[np.argmax(np.abs(col))]) or 1.0
        y[:, k] = s * col
    return y


def sliced_gw_alignment(
    set_a,
    set_b,
    n_projections: int = DEFAULT_PROJECTIONS,
    seed=0,
    align_frames: bool = True,
    directions: np.ndarray | None = None,
) -> float:
    """Sliced Gromov-Wasserstein discrepancy between two equal-size point sets.

    Each set is optionally moved to its canonical principal frame, the lower
    dimensional one is zero-padded, and the 1-D GW cost is averaged over
    seeded random projections.
    """
    a = np.asarray(set_a, dtype=np.float64)
    b = np.asarray(set_b, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if b.ndim == 1:
        b = b.reshape(-1, 1)
    if len(a) == 0 or len(b) == 0:
        raise InvalidInputError("point sets must be nonempty")
    if len(a) != len(b):
        raise InvalidInputError("point sets must have equal cardinality")
    if align_frames:
        a, b = canonical_frame(a), canonical_frame(b)
    d = max(a.shape[1], b.shape[1])
    a = np.pad(a, ((0, 0), (0, d - a.shape[1])))
    b = np.pad(b, ((0, 0), (0, d - b.shape[1])))
    if directions is None:
        directions = random_directions(d, n_projections, seed)
    pa, pb = a @ directions.T, b @ directions.T
    costs = [gw_1d(pa[:, k], pb[:, k]) for k in range(directions.shape[0])]
    return float(np.mean(costs))
