"""Invertible flow layers with exact log-determinants, the flow likelihood
loss, the cross-entropy/entropy bound and the latent transport transformation.

Layers act on the last axis, so a single vector of length ``d`` and a batch of
shape ``(n, d)`` are both accepted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvalidInputError, NumericalFailure

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_RHO = 0.5
PROB_FLOOR = 1e-12


class ActNorm:
    kind = "actnorm"

    def __init__(self, scale, bias):
        self.scale = np.asarray(scale, dtype=np.float64).reshape(-1)
        self.bias = np.asarray(bias, dtype=np.float64).reshape(-1)
        if self.scale.shape != self.bias.shape:
            raise DimensionError("scale and bias must have equal length")
        if np.any(self.scale == 0):
            raise InvalidInputError("actnorm scales must be nonzero")
        self.dim = self.scale.size

    def forward(self, y):
        z = y * self.scale + self.bias
        logdet = np.full(np.shape(y)[:-1], np.sum(np.log(np.abs(self.scale))))
        return z, logdet

    def inverse(self, z):
        return (z - self.bias) / self.scale

    def params(self) -> dict:
        return {"scale": self.scale.tolist(), "bias": self.bias.tolist()}


class InvertibleLinear:
    """``z = W y``; the vector-scale form of an invertible 1×1 convolution."""

    kind = "invertible_linear"

    def __init__(self, weight):
        w = np.asarray(weight, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionError("weight must be square")
        sign, logabs = np.linalg.slogdet(w)
        if sign == 0 or logabs < math.log(1e-12):
            raise InvalidInputError("weight matrix is (nearly) singular")
        self.weight = w
        self.dim = w.shape[0]
        self._logdet = float(logabs)

    def forward(self, y):
        return y @ self.weight.T, np.full(np.shape(y)[:-1], self._logdet)

    def inverse(self, z):
        try:
            return np.linalg.solve(self.weight, np.asarray(z).T).T
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"invertible_linear: {exc}") from exc

    def params(self) -> dict:
        return {"weight": self.weight.tolist()}


class AffineCoupling:
    """Affine coupling with fixed (untrained) coefficient tables.

    The first ``split`` coordinates pass through; they drive a one-hidden-layer
    ``tanh`` map that yields a log-scale and shift for the rest:
    ``h = tanh(A·y₁ + a)``, ``log s = S·h + s₀``, ``t = T·h + t₀``,
    ``z₂ = y₂·exp(log s) + t``.
    """

    kind = "affine_coupling"

    def __init__(self, split, hidden_w, hidden_b, scale_w, scale_b, shift_w, shift_b):
        self.split = int(split)
        self.hidden_w = np.asarray(hidden_w, dtype=np.float64)
        self.hidden_b = np.asarray(hidden_b, dtype=np.float64).reshape(-1)
        self.scale_w = np.asarray(scale_w, dtype=np.float64)
        self.scale_b = np.asarray(scale_b, dtype=np.float64).reshape(-1)
        self.shift_w = np.asarray(shift_w, dtype=np.float64)
        self.shift_b = np.asarray(shift_b, dtype=np.float64).reshape(-1)
        n_hidden, n_in = self.hidden_w.shape
        n_out = self.scale_w.shape[0]
        if n_in != self.split or self.split < 1 or n_out < 1:
            raise DimensionError("coupling split must be strictly interior")
        if (
            self.hidden_b.size != n_hidden
            or self.scale_w.shape != (n_out, n_hidden)
            or self.shift_w.shape != (n_out, n_hidden)
            or self.scale_b.size != n_out
            or self.shift_b.size != n_out
        ):
            raise DimensionError("coupling coefficient tables have inconsistent shapes")
        self.dim = self.split + n_out

    @classmethod
    def random(cls, dim: int, split: int, rng, hidden: int = 8, scale: float = 0.3):
        if not 0 < split < dim:
            raise DimensionError("coupling split must be strictly interior")
        n_out = dim - split
        return cls(
            split,
            rng.standard_normal((hidden, split)),
            rng.standard_normal(hidden),
            scale * rng.standard_normal((n_out, hidden)),
            scale * rng.standard_normal(n_out),
            rng.standard_normal((n_out, hidden)),
            rng.standard_normal(n_out),
        )

    def _coefficients(self, y1):
        h = np.tanh(y1 @ self.hidden_w.T + self.hidden_b)
        return h @ self.scale_w.T + self.scale_b, h @ self.shift_w.T + self.shift_b

    def forward(self, y):
        y1, y2 = y[..., : self.split], y[..., self.split :]
        log_s, t = self._coefficients(y1)
        z2 = y2 * np.exp(log_s) + t
        return np.concatenate([y1, z2], axis=-1), np.sum(log_s, axis=-1)

    def inverse(self, z):
        z1, z2 = z[..., : self.split], z[..., self.split :]
        log_s, t = self._coefficients(z1)
        return np.concatenate([z1, (z2 - t) * np.exp(-log_s)], axis=-1)

    def params(self) -> dict:
        return {
            "split": self.split,
            "hidden_w": self.hidden_w.tolist(),
            "hidden_b": self.hidden_b.tolist(),
            "scale_w": self.scale_w.tolist(),
            "scale_b": self.scale_b.tolist(),
            "shift_w": self.shift_w.tolist(),
            "shift_b": self.shift_b.tolist(),
        }


LAYER_KINDS = {cls.kind: cls for cls in (ActNorm, InvertibleLinear, AffineCoupling)}


@dataclass
class FlowStack:
    dim: int
    layers: list = field(default_factory=list)

    def __post_init__(self):
        for i, layer in enumerate(self.layers):
            if layer.dim != self.dim:
                raise DimensionError(f"layer {i} ({layer.kind}) has dimension {layer.dim}, stack has {self.dim}")

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "layers": [{"kind": layer.kind, **layer.params()} for layer in self.layers],
        }

    def to_json(self) -> str:
        # json writes floats with repr, which round-trips exactly
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "FlowStack":
        layers = []
        for spec in data["layers"]:
            spec = dict(spec)
            kind = spec.pop("kind")
            if kind not in LAYER_KINDS:
                raise InvalidInputError(f"unknown layer kind {kind!r}")
            layers.append(LAYER_KINDS[kind](**spec))
        return cls(int(data["dim"]), layers)

    @classmethod
    def from_json(cls, text: str) -> "FlowStack":
        return cls.from_dict(json.loads(text))


def _check_dim(stack, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != stack.dim:
        raise DimensionError(f"expected last dimension {stack.dim}, got {v.shape[-1]}")
    return v


def flow_forward(stack: FlowStack, y):
    """Map ``y`` to the latent ``z`` and accumulate the exact log|det J|."""
    z = _check_dim(stack, y)
    logdet = np.zeros(z.shape[:-1])
    for i, layer in enumerate(stack.layers):
        with np.errstate(over="ignore", invalid="ignore"):
            z, ld = layer.forward(z)
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(ld))):
            raise NumericalFailure(f"non-finite output in layer {i} ({layer.kind})")
        logdet = logdet + ld
    return z, (float(logdet) if logdet.ndim == 0 else logdet)


def flow_inverse(stack: FlowStack, z):
    y = _check_dim(stack, z)
    for i, layer in reversed(list(enumerate(stack.layers))):
        with np.errstate(over="ignore", invalid="ignore"):
            y = layer.inverse(y)
        if not np.all(np.isfinite(y)):
            raise NumericalFailure(f"non-finite output inverting layer {i} ({layer.kind})")
    return y


def random_stack(dim: int, n_layers: int, rng) -> FlowStack:
    """Seeded stack cycling actnorm → invertible linear → coupling.

    Couplings are skipped when ``dim == 1``.
    """
    kinds = ["actnorm", "invertible_linear", "affine_coupling"]
    if dim == 1:
        kinds = kinds[:2]
    layers = []
    for i in range(n_layers):
        kind = kinds[i % len(kinds)]
        if kind == "actnorm":
            sign = rng.choice([-1.0, 1.0], size=dim)
            layers.append(ActNorm(sign * rng.uniform(0.5, 2.0, dim), rng.standard_normal(dim)))
        elif kind == "invertible_linear":
            q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
            layers.append(InvertibleLinear(q * rng.uniform(0.5, 2.0, dim)))
        else:
            layers.append(AffineCoupling.random(dim, int(rng.integers(1, dim)), rng))
    return FlowStack(dim, layers)


def standard_normal_logpdf(z):
    z = np.asarray(z, dtype=np.float64)
    return -0.5 * np.sum(z * z, axis=-1) - 0.5 * z.shape[-1] * LOG_2PI


def bimal_loss(stack: FlowStack, y):
    """Negative log-likelihood of ``y`` under the flow with a standard normal prior."""
    z, logdet = flow_forward(stack, y)
    out = -standard_normal_logpdf(z) - logdet
    return float(out) if np.ndim(out) == 0 else out


def bimal_target_loss(stack: FlowStack, y, tau: float = 0.0):
    """Likelihood term plus a smoothness term, weighted equally."""
    return bimal_loss(stack, y) + tau


def gibbs_bound_check(p, q, floor: float = PROB_FLOOR) -> dict:
    """Cross-entropy ``−Σ p log q`` against entropy ``−Σ p log p``."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    for name, v in (("p", p), ("q", q)):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"{name} must be a probability vector")
    if p.shape != q.shape:
        raise InvalidInputError("p and q have different lengths")
    qf = np.maximum(q, floor)
    nz = p > 0
    ce = float(-np.sum(p[nz] * np.log(qf[nz])))
    ent = float(-np.sum(p[nz] * np.log(p[nz])))
    return {"cross_entropy": ce, "entropy": ent, "holds": ce >= ent - 1e-12}


@dataclass(frozen=True)
class LatentSample:
    z: np.ndarray
    source: np.ndarray | None = None
    rho: float | None = None
    alpha: np.ndarray | float | None = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        if not np.all(np.isfinite(z)):
            raise InvalidInputError("latent sample must be finite")
        object.__setattr__(self, "z", z)


def transport_transform(z_s, rho: float = DEFAULT_RHO, rng=None, alpha=None) -> LatentSample:
    """``z* = (z_s + g) / √2`` with ``g ~ N(α√2·1, I)`` and ``α ~ U(−ρ, ρ)``.

    One α is drawn per sample (per row for a batch). Passing ``alpha`` fixes
    it instead of drawing.
    """
    if rho < 0:
        raise InvalidInputError("rho must be nonnegative")
    if rng is None:
        raise InvalidInputError("an explicit random generator is required")
    zs = z_s.z if isinstance(z_s, LatentSample) else np.asarray(z_s, dtype=np.float64)
    batch_shape = zs.shape[:-1]
    if alpha is None:
        alpha = rng.uniform(-rho, rho, size=batch_shape) if rho > 0 else np.zeros(batch_shape)
    a = np.asarray(alpha, dtype=np.float64)
    g = rng.standard_normal(zs.shape) + (a * math.sqrt(2.0))[..., None]
    z_t = (zs + g) / math.sqrt(2.0)
    return LatentSample(z=z_t, source=zs, rho=rho, alpha=float(a) if a.ndim == 0 else a)


def gaussian_w2_per_dim(mean_a, cov_diag_a, mean_b, cov_diag_b, d: int | None = None) -> float:
    """Dimension-normalised W2 between Gaussians with diagonal covariances.

    ``sqrt(‖μa − μb‖² + Σ(√σa − √σb)²) / √d`` where σ are the variances.
    """
    ma, mb = np.asarray(mean_a, float).reshape(-1), np.asarray(mean_b, float).reshape(-1)
    va, vb = np.asarray(cov_diag_a, float).reshape(-1), np.asarray(cov_diag_b, float).reshape(-1)
    if not (ma.shape == mb.shape == va.shape == vb.shape):
        raise DimensionError("means and variances must share one dimension")
    if np.any(va <= 0) or np.any(vb <= 0):
        raise InvalidInputError("variances must be positive")
    if d is None:
        d = ma.size
    elif d != ma.size:
        raise DimensionError(f"d={d} does not match vectors of length {ma.size}")
    sq = np.sum((ma - mb) ** 2) + np.sum((np.sqrt(va) - np.sqrt(vb)) ** 2)
    return float(math.sqrt(sq) / math.sqrt(d))
