"""Contrastive and fairness contrastive clustering.

Features and centroids are rows of 2-D arrays. An assignment is an integer
array with one entry per feature, ``-1`` meaning unassigned.
"""

from __future__ import annotations

import copy
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from .errors import InvalidInputError, InvalidStateError, NumericalFailure
from .synthdata import make_rng

UNASSIGNED = -1

DEFAULT_ETA = 0.99
DEFAULT_UPDATE_PERIOD = 100
DEFAULT_BANK_CAP = 500
DEFAULT_MARGIN = 10.0
DEFAULT_ALPHA = 5e-2
DEFAULT_MIN_PTS = 5


@dataclass
class ClusterModel:
    """Centroids with transitive vectors, bounded feature banks and momentum state.

    The transitive vector of each centroid starts at the centroid itself.
    Updates go through :func:`prototype_update`, which returns a new model.
    """

    centroids: np.ndarray
    transitive: np.ndarray | None = None
    eta: float = DEFAULT_ETA
    update_period: int = DEFAULT_UPDATE_PERIOD
    margin: float = DEFAULT_MARGIN
    bank_cap: int = DEFAULT_BANK_CAP
    frozen: np.ndarray | None = None
    banks: list = field(default=None, repr=False)
    step: int = 0

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.float64, ndmin=2)
        self.centroids = c
        k = c.shape[0]
        self.transitive = c.copy() if self.transitive is None else np.array(self.transitive, dtype=np.float64, ndmin=2)
        if self.transitive.shape != c.shape:
            raise InvalidInputError("transitive vectors must match centroid shape")
        self.frozen = np.zeros(k, dtype=bool) if self.frozen is None else np.asarray(self.frozen, dtype=bool)
        if self.frozen.shape != (k,):
            raise InvalidInputError("one frozen flag per centroid is required")
        if not 0.0 < self.eta < 1.0:
            raise InvalidInputError("eta must lie in (0, 1)")
        if self.update_period < 1 or self.bank_cap < 1:
            raise InvalidInputError("update_period and bank_cap must be positive")
        if self.margin <= 0:
            raise InvalidInputError("margin must be positive")
        if self.banks is None:
            self.banks = [deque(maxlen=self.bank_cap) for _ in range(k)]

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    def snapshot(self) -> dict:
        """JSON-ready state without the feature banks."""
        return {
            "centroids": self.centroids.tolist(),
            "transitive": self.transitive.tolist(),
            "margin": self.margin,
            "eta": self.eta,
            "update_period": self.update_period,
            "bank_cap": self.bank_cap,
            "frozen": self.frozen.tolist(),
            "step": self.step,
        }

    def to_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True)

    @classmethod
    def from_snapshot(cls, data: dict) -> "ClusterModel":
        return cls(
            centroids=np.array(data["centroids"]),
            transitive=np.array(data["transitive"]),
            eta=data["eta"],
            update_period=data["update_period"],
            margin=data["margin"],
            bank_cap=data.get("bank_cap", DEFAULT_BANK_CAP),
            frozen=np.array(data.get("frozen", [False] * len(data["centroids"]))),
            step=data.get("step", 0),
        )


def _features(features) -> np.ndarray:
    f = np.array(features, dtype=np.float64, ndmin=2)
    if f.shape[0] == 0:
        raise InvalidInputError("empty feature batch")
    return f


def _check_assignment(assignment, n_feat, n_clusters) -> np.ndarray:
    a = np.asarray(assignment, dtype=int).reshape(-1)
    if a.shape[0] != n_feat:
        raise InvalidInputError("assignment length differs from number of features")
    bad = (a != UNASSIGNED) & ((a < 0) | (a >= n_clusters))
    if bad.any():
        raise InvalidInputError("assignment refers to a nonexistent centroid")
    return a


def _log_enforcement(features, centroids):
    """log ℓ for every (feature, centroid); softmax runs over the features."""
    logits = features @ centroids.T
    return logits - logsumexp(logits, axis=0, keepdims=True), logsumexp(logits, axis=0)


def contrastive_cluster_loss(features, assignment, model: ClusterModel) -> float:
    f = _features(features)
    a = _check_assignment(assignment, f.shape[0], model.n_clusters)
    if not np.any(a != UNASSIGNED):
        raise InvalidInputError("no feature is assigned to a centroid")
    log_l, _ = _log_enforcement(f, model.centroids)
    rows = np.flatnonzero(a != UNASSIGNED)
    return float(-np.sum(log_l[rows, a[rows]]))


def fairness_cluster_loss(
    features, assignment, model: ClusterModel, alpha: float = DEFAULT_ALPHA,
    include_transitive: bool = True,
) -> float:
    """Per centroid ``−α Σ log ℓ_i − log ℓ_v``, summed over centroids.

    ``ℓ_v = exp(v·c) / Σ_f' exp(f'·c)`` uses the same batch denominator as the
    feature enforcements. Every centroid contributes its transitive term.
    """
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    f = _features(features)
    a = _check_assignment(assignment, f.shape[0], model.n_clusters)
    log_l, lse = _log_enforcement(f, model.centroids)
    rows = np.flatnonzero(a != UNASSIGNED)
    loss = -alpha * np.sum(log_l[rows, a[rows]])
    if include_transitive:
        v_logits = np.einsum("kd,kd->k", model.transitive, model.centroids)
        loss -= np.sum(v_logits - lse)
    return float(loss)


def enforcement_optimum_oracle(
    alpha: float | None, L: int, seed=0, tol: float = 1e-12, max_iter: int = 200_000
) -> float:
    """Numerically maximise the enforcement objective on the simplex.

    Maximises ``Σ_i w_i log ℓ_i`` with ``w_i = α`` for the ``L`` features
    (1 when ``alpha`` is None) plus ``log ℓ_v`` for the transitive vector when
    ``alpha`` is given, subject to the enforcements summing to one. The
    simplex is parametrised by softmax logits started from a seeded random
    point and climbed by gradient ascent with Armijo backtracking. Returns the
    mean feature enforcement at the optimum.
    """
    if L < 1:
        raise InvalidInputError("L must be at least 1")
    if alpha is not None and alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    w = np.full(L, 1.0 if alpha is None else float(alpha))
    if alpha is not None:
        w = np.append(w, 1.0)
    total = w.sum()
    rng = make_rng(seed)
    s = rng.standard_normal(w.size)

    def objective(logits):
        return float(w @ (logits - logsumexp(logits)))

    val = objective(s)
    step = 1.0
    for _ in range(max_iter):
        ell = np.exp(s - logsumexp(s))
        grad = w - total * ell
        gnorm2 = float(grad @ grad)
        if np.sqrt(gnorm2) <= tol * total:
            break
        if np.sqrt(gnorm2) <= 1e-6 * total:
            # objective differences drown in rounding here; the Hessian norm
            # is bounded by total·max ℓ, so a fixed step of its inverse is safe
            s = s + grad / (total * ell.max())
            continue
        while True:
            cand = s + step * grad
            cand_val = objective(cand)
            if cand_val >= val + 1e-4 * step * gnorm2:
                break
            step *= 0.5
            if step < 1e-30:
                raise NumericalFailure("line search collapsed in enforcement oracle")
        s, val = cand, cand_val
        step *= 2.0
    else:
        raise NumericalFailure(f"enforcement oracle did not converge in {max_iter} iterations")
    ell = np.exp(s - logsumexp(s))
    return float(np.mean(ell[:L]))


def enforcement_closed_form(alpha: float | None, L: int) -> float:
    return 1.0 / L if alpha is None else 1.0 / (1.0 / alpha + L)


def enforcement_gap(alpha: float | None, l_major: int, l_minor: int) -> float:
    """Gap between the optimal enforcement of a minor and a major class."""
    return enforcement_closed_form(alpha, l_minor) - enforcement_closed_form(alpha, l_major)


def hinge_prototype_loss(features, labels, model: ClusterModel, delta: float = DEFAULT_MARGIN) -> float:
    """Pull each feature to its own prototype, push it ≥ Δ from the others."""
    if delta <= 0:
        raise InvalidInputError("delta must be positive")
    f = _features(features)
    y = np.asarray(labels, dtype=int).reshape(-1)
    if y.shape[0] != f.shape[0]:
        raise InvalidInputError("one label per feature is required")
    if np.any((y < 0) | (y >= model.n_clusters)):
        raise InvalidInputError("label out of range")
    dist = np.linalg.norm(f[:, None, :] - model.centroids[None, :, :], axis=2)
    own = np.zeros_like(dist, dtype=bool)
    own[np.arange(len(y)), y] = True
    return float(np.sum(np.where(own, dist, np.maximum(0.0, delta - dist))))


def prototype_update(model: ClusterModel, new_features: dict) -> ClusterModel:
    """Push features into the banks and, when due, apply the momentum step.

    ``new_features`` maps centroid index to an array of features. The step
    counter advances by one per call and centroids move on every
    ``update_period``-th call: ``c ← η·c + (1 − η)·mean(bank)``. Frozen
    centroids and their banks are left untouched. Returns a new model.
    """
    out = copy.deepcopy(model)
    for idx, feats in new_features.items():
        if not 0 <= idx < out.n_clusters:
            raise InvalidInputError(f"no centroid {idx}")
        if out.frozen[idx]:
            continue
        out.banks[idx].extend(np.array(feats, dtype=np.float64, ndmin=2))
    out.step += 1
    if out.step % out.update_period == 0:
        for idx in range(out.n_clusters):
            if out.frozen[idx] or not out.banks[idx]:
                continue
            mean = np.mean(np.asarray(out.banks[idx]), axis=0)
            out.centroids[idx] = out.eta * out.centroids[idx] + (1.0 - out.eta) * mean
    return out


def cluster_repulsion(model_or_centroids, margin: float | None = None) -> float:
    """``Σ_{i<j} max(0, 2∇ − ‖c_i − c_j‖)²``."""
    if isinstance(model_or_centroids, ClusterModel):
        c = model_or_centroids.centroids
        margin = model_or_centroids.margin if margin is None else margin
    else:
        c = np.array(model_or_centroids, dtype=np.float64, ndmin=2)
        margin = DEFAULT_MARGIN if margin is None else margin
    if c.shape[0] < 2:
        return 0.0
    i, j = np.triu_indices(c.shape[0], k=1)
    dist = np.linalg.norm(c[i] - c[j], axis=1)
    return float(np.sum(np.maximum(0.0, 2.0 * margin - dist) ** 2))


def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """DB-SCAN labels: cluster ids from 0 upward, -1 for noise.

    A point is core when its closed ε-ball (itself included) holds at least
    ``min_pts`` points. Clusters are grown from core points in index order.
    """
    x = np.array(points, dtype=np.float64, ndmin=2)
    n = x.shape[0]
    labels = np.full(n, UNASSIGNED)
    if n == 0:
        return labels
    neighbours = cKDTree(x).query_ball_point(x, r=eps)
    core = np.array([len(nb) >= min_pts for nb in neighbours])
    cluster = 0
    for start in range(n):
        if not core[start] or labels[start] != UNASSIGNED:
            continue
        labels[start] = cluster
        queue = deque([start])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for nb in neighbours[p]:
                if labels[nb] == UNASSIGNED:
                    labels[nb] = cluster
                    queue.append(nb)
        cluster += 1
    return labels


def merge_close_centroids(centroids, margin: float) -> np.ndarray:
    """Merge the closest pair closer than 2·margin into its midpoint, to a fixpoint."""
    c = [np.asarray(v, dtype=np.float64) for v in np.array(centroids, dtype=np.float64, ndmin=2)]
    while len(c) > 1:
        arr = np.array(c)
        d = np.linalg.norm(arr[:, None, :] - arr[None, :, :], axis=2)
        d[np.diag_indices(len(c))] = np.inf
        i, j = np.unravel_index(np.argmin(d), d.shape)
        if d[i, j] >= 2.0 * margin:
            break
        i, j = min(i, j), max(i, j)
        merged = 0.5 * (c[i] + c[j])
        c[i] = merged
        del c[j]
    return np.array(c).reshape(len(c), -1) if c else np.empty((0, 0))


def unknown_cluster_init(
    unknown_features, eps: float | None = None, min_pts: int = DEFAULT_MIN_PTS,
    margin: float = DEFAULT_MARGIN,
) -> np.ndarray:
    """Centroids of DB-SCAN clusters over unknown-class features, merged.

    ``eps`` defaults to ``margin / 2``. Noise points are discarded.
    """
    eps = margin / 2.0 if eps is None else eps
    if eps <= 0 or min_pts < 1:
        raise InvalidInputError("eps must be positive and min_pts at least 1")
    x = np.asarray(unknown_features, dtype=np.float64)
    if x.size == 0:
        return np.empty((0, x.shape[-1] if x.ndim == 2 else 0))
    x = x.reshape(x.shape[0], -1)
    labels = dbscan(x, eps, min_pts)
    n_clusters = labels.max() + 1
    if n_clusters == 0:
        return np.empty((0, x.shape[1]))
    cents = np.array([x[labels == k].mean(axis=0) for k in range(n_clusters)])
    return merge_close_centroids(cents, margin)


def assign_nearest(features, model_or_centroids) -> np.ndarray:
    """Index of the nearest centroid per feature; ties go to the lowest index."""
    c = model_or_centroids.centroids if isinstance(model_or_centroids, ClusterModel) else np.asarray(model_or_centroids, dtype=np.float64)
    if c.size == 0:
        raise InvalidStateError("no centroids to assign to")
    c = c.reshape(c.shape[0], -1)
    f = _features(features)
    d2 = np.sum((f[:, None, :] - c[None, :, :]) ** 2, axis=2)
    return np.argmin(d2, axis=1)
