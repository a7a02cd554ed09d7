"""Subspaces, principal angles and the geodesic flow kernel.

The kernel ``Q`` built by :func:`gfk_closed_form` is exactly twice the
integral of ``Π(ν)Π(ν)ᵀ`` over ``ν ∈ [0, 1]``; :func:`gfk_quadrature` returns
the plain integral. Cosine-type distances built on ``Q`` do not see the
factor.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionError, InvalidInputError, RankDeficiencyError
from .linalg import (
    as_matrix,
    check_orthonormal_columns,
    orthonormal_complement,
    projector_distance,
    psd_sqrt,
    thin_svd,
    write_matrix_csv,
)

DEFAULT_SIN_FLOOR = 1e-8
# below this value of 2ω the λ formulas switch to their Taylor expansions
TAYLOR_SWITCH = 1e-4


@dataclass(frozen=True)
class Subspace:
    """An N-dimensional subspace of R^D given by an orthonormal basis."""

    basis: np.ndarray
    mean: np.ndarray | None = None

    def __post_init__(self):
        b = as_matrix(self.basis, "basis")
        d, n = b.shape
        if not 0 < n < d:
            raise DimensionError(f"need 0 < N < D, got N={n}, D={d}")
        check_orthonormal_columns(b, 1e-8)
        object.__setattr__(self, "basis", b)
        if self.mean is not None:
            mu = np.asarray(self.mean, dtype=np.float64).reshape(-1)
            if mu.shape[0] != d:
                raise DimensionError("mean length must equal ambient dimension")
            object.__setattr__(self, "mean", mu)

    @property
    def dim_ambient(self) -> int:
        return self.basis.shape[0]

    @property
    def dim_sub(self) -> int:
        return self.basis.shape[1]

    def distance_to(self, other: "Subspace | np.ndarray") -> float:
        other_basis = other.basis if isinstance(other, Subspace) else other
        return projector_distance(self.basis, other_basis)


def _numerical_rank(s: np.ndarray, shape) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = s[0] * max(shape) * np.finfo(np.float64).eps
    return int(np.sum(s > tol))


def subspace_from_data(samples, n_sub: int, center: bool = True) -> Subspace:
    """PCA basis: the top ``n_sub`` right singular vectors of the data.

    Parameters
    ----------
    samples : array-like, shape (M, D)
    n_sub : int
        Subspace dimension, ``1 <= n_sub < D`` and ``n_sub <= M``.
    center : bool
        Subtract the column mean first (recorded on the result).
    """
    x = as_matrix(samples, "samples")
    m, d = x.shape
    if not 1 <= n_sub < d:
        raise DimensionError(f"n_sub must satisfy 1 <= n_sub < D={d}")
    if m < n_sub:
        raise DimensionError(f"need at least n_sub={n_sub} samples, got {m}")
    mean = x.mean(axis=0) if center else None
    if center:
        x = x - mean
    svd = thin_svd(x)
    rank = _numerical_rank(svd.sigma, x.shape)
    if rank < n_sub:
        raise RankDeficiencyError(rank, n_sub)
    return Subspace(basis=svd.v[:, :n_sub], mean=mean)


def subspaces_from_batches(
    batches: Sequence, n_sub: int, mode: str = "dataset", center: bool = True
) -> list[Subspace]:
    """Estimate bases either once over all batches or once per batch.

    ``mode="dataset"`` stacks every batch and returns a single-element list;
    ``mode="batch"`` returns one subspace per batch.
    """
    if mode == "dataset":
        return [subspace_from_data(np.vstack(batches), n_sub, center)]
    if mode == "batch":
        return [subspace_from_data(b, n_sub, center) for b in batches]
    raise InvalidInputError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class PrincipalSystem:
    """Principal-angle system of a (source, target) pair.

    ``u1``, ``v`` come from the SVD of ``P_sᵀP_t`` (cosines), ``u2`` from
    ``RᵀP_t`` with ``R`` the stored complement of the source basis. Columns of
    ``u2`` whose sine is below the floor are zero.
    """

    u1: np.ndarray
    u2: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    complement: np.ndarray

    @property
    def cosines(self) -> np.ndarray:
        return np.cos(self.omega)


def principal_system(
    source: Subspace, target: Subspace, sin_floor: float = DEFAULT_SIN_FLOOR
) -> PrincipalSystem:
    if source.dim_ambient != target.dim_ambient:
        raise DimensionError("source and target live in different ambient spaces")
    if source.dim_sub != target.dim_sub:
        raise DimensionError("source and target have different dimensions")
    ps, pt = source.basis, target.basis
    r = orthonormal_complement(ps)
    svd = thin_svd(ps.T @ pt)
    u1, v = svd.u, svd.v
    cos = np.clip(svd.sigma, 0.0, 1.0)
    b = r.T @ pt @ v
    sin = np.linalg.norm(b, axis=0)
    # atan2 keeps small angles accurate where arccos(cos) would not
    omega = np.arctan2(sin, cos)
    order = np.argsort(omega, kind="stable")
    u1, v, omega, b, sin = u1[:, order], v[:, order], omega[order], b[:, order], sin[order]
    u2 = np.zeros_like(b)
    keep = sin > sin_floor
    u2[:, keep] = -b[:, keep] / sin[keep]
    return PrincipalSystem(u1=u1, u2=u2, v=v, omega=omega, complement=r)


def lambda_coefficients(omega) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Diagonals of Λ1, Λ2, Λ3 for each principal angle."""
    w = np.atleast_1d(np.asarray(omega, dtype=np.float64))
    if np.any(w < 0) or np.any(w > np.pi / 2 + 1e-12):
        raise InvalidInputError("principal angles must lie in [0, π/2]")
    x = 2.0 * w
    small = x < TAYLOR_SWITCH
    xs = np.where(small, 1.0, x)  # placeholder avoids 0/0 in the masked branch
    sinc = np.where(small, 1.0 - x**2 / 6.0 + x**4 / 120.0, np.sin(xs) / xs)
    # cos x − 1 = −2 sin²(x/2) avoids cancellation for moderate x
    cosm = np.where(small, -x / 2.0 + x**3 / 24.0, -2.0 * np.sin(xs / 2.0) ** 2 / xs)
    return 1.0 + sinc, cosm, 1.0 - sinc


@dataclass(frozen=True)
class GeodesicKernel:
    q: np.ndarray
    q_sqrt: np.ndarray
    system: PrincipalSystem
    source: Subspace
    target: Subspace | None = None

    @cached_property
    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.q, 2))

    @property
    def dim(self) -> int:
        return self.q.shape[0]


def _flow_factors(system: PrincipalSystem, source: Subspace):
    x = source.basis @ system.u1
    y = system.complement @ system.u2
    return x, y


def gfk_closed_form(
    system: PrincipalSystem, source: Subspace, target: Subspace | None = None
) -> GeodesicKernel:
    x, y = _flow_factors(system, source)
    l1, l2, l3 = lambda_coefficients(system.omega)
    q = (x * l1) @ x.T + (x * l2) @ y.T + (y * l2) @ x.T + (y * l3) @ y.T
    q = 0.5 * (q + q.T)
    return GeodesicKernel(
        q=q, q_sqrt=psd_sqrt(q), system=system, source=source, target=target
    )


def geodesic_flow_kernel(source: Subspace, target: Subspace, **kwargs) -> GeodesicKernel:
    """Convenience wrapper: principal system followed by the closed form."""
    return gfk_closed_form(principal_system(source, target, **kwargs), source, target)


def geodesic_point(system: PrincipalSystem, source: Subspace, nu: float) -> np.ndarray:
    """Orthonormal basis Π(ν) of the subspace at position ν on the geodesic."""
    if not 0.0 <= nu <= 1.0:
        raise InvalidInputError(f"nu must lie in [0, 1], got {nu}")
    x, y = _flow_factors(system, source)
    return x * np.cos(nu * system.omega) - y * np.sin(nu * system.omega)


def gfk_quadrature(system: PrincipalSystem, source: Subspace, n_nodes: int = 64) -> np.ndarray:
    """Gauss-Legendre estimate of the integral of Π(ν)Π(ν)ᵀ over [0, 1]."""
    if n_nodes < 8:
        raise InvalidInputError("n_nodes must be at least 8")
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    x, y = _flow_factors(system, source)
    d = x.shape[0]
    acc = np.zeros((d, d))
    for nu, wt in zip(nodes, weights):
        pi = x * np.cos(nu * system.omega) - y * np.sin(nu * system.omega)
        acc += wt * (pi @ pi.T)
    return 0.5 * (acc + acc.T)


def quadrature_residual(kernel: GeodesicKernel, n_nodes: int = 64) -> float:
    """Relative Frobenius gap between the closed form and twice the quadrature."""
    quad = gfk_quadrature(kernel.system, kernel.source, n_nodes)
    return float(np.linalg.norm(kernel.q - 2.0 * quad) / np.linalg.norm(kernel.q))


def export_kernel(kernel: GeodesicKernel, directory, n_nodes: int = 64) -> dict:
    """Write ``q.csv``, ``omega.csv`` and ``summary.json`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    write_matrix_csv(kernel.q, os.path.join(directory, "q.csv"), header="Q")
    write_matrix_csv(
        kernel.system.omega.reshape(1, -1), os.path.join(directory, "omega.csv"),
        header="omega (radians)",
    )
    summary = {
        "ambient_dim": kernel.source.dim_ambient,
        "sub_dim": kernel.source.dim_sub,
        "omega": [float(w) for w in kernel.system.omega],
        "quad_residual": quadrature_residual(kernel, n_nodes),
    }
    with open(os.path.join(directory, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return summary
