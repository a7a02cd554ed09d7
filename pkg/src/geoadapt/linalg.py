"""Dense real linear algebra used by the rest of the package.

Matrices are plain 2-D ``float64`` numpy arrays. The helpers here add input
validation, a deterministic column-sign convention and typed errors on top of
LAPACK.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidInputError, NumericalFailure

DEFAULT_EIGEN_FLOOR = 1e-10


def as_matrix(a, name="matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array or raise."""
    m = np.array(a, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidInputError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return m


def fix_column_signs(u: np.ndarray, *others: np.ndarray):
    """Flip columns so the largest-magnitude entry of each column of ``u`` is
    positive; the same flips are applied to the matching columns of ``others``.
    """
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    out = [u * signs]
    out.extend(o * signs for o in others)
    return out[0] if not others else tuple(out)


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def thin_svd(a) -> SvdResult:
    """Thin SVD ``a = u @ diag(sigma) @ v.T`` with ``k = min(m, n)``.

    Singular values are nonincreasing. Each column of ``u`` has its
    largest-magnitude entry positive (``v`` flipped to match), which makes the
    factors reproducible across calls.
    """
    m = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    u, v = fix_column_signs(u, vt.T)
    return SvdResult(u=u, sigma=s, v=v)


def check_orthonormal_columns(p: np.ndarray, tol: float = 1e-8, name="basis"):
    gram = p.T @ p
    err = np.max(np.abs(gram - np.eye(p.shape[1])))
    if err > tol:
        raise InvalidInputError(
            f"{name} columns are not orthonormal (max |PᵀP - I| = {err:.3e})"
        )


def orthonormal_complement(p) -> np.ndarray:
    """Orthonormal basis ``R`` (D×(D−N)) of the complement of span(p)."""
    p = as_matrix(p, "p")
    d, n = p.shape
    if n >= d:
        raise DimensionError(f"no complement for {n} columns in R^{d}")
    check_orthonormal_columns(p, 1e-8, "p")
    q, _ = np.linalg.qr(p, mode="complete")
    r = q[:, n:]
    # one re-orthogonalisation pass keeps RᵀP at rounding level
    r = r - p @ (p.T @ r)
    r, _ = np.linalg.qr(r)
    return fix_column_signs(r)


def symmetric_eig(q) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of a symmetric matrix."""
    q = as_matrix(q, "q")
    if q.shape[0] != q.shape[1]:
        raise DimensionError(f"expected a square matrix, got {q.shape}")
    scale = max(1.0, np.max(np.abs(q)))
    if np.max(np.abs(q - q.T)) > 1e-8 * scale:
        raise InvalidInputError("matrix is not symmetric")
    try:
        w, v = np.linalg.eigh(0.5 * (q + q.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    return w, v


def psd_sqrt(q, eigen_floor: float = DEFAULT_EIGEN_FLOOR) -> np.ndarray:
    """Symmetric square root of a PSD matrix.

    Eigenvalues below ``eigen_floor * max_eigenvalue`` are clamped to zero
    before the square root is taken.
    """
    w, v = symmetric_eig(q)
    top = max(w[-1], 0.0)
    w = np.where(w < eigen_floor * top, 0.0, w)
    s = (v * np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def projector_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius distance between the orthogonal projectors onto span(a), span(b).

    Both inputs must have orthonormal columns.
    """
    return float(np.linalg.norm(a @ a.T - b @ b.T))


def write_matrix_csv(m, path_or_buf, header: str | None = None) -> None:
    m = as_matrix(m)
    lines = []
    if header is not None:
        lines.append("# " + header)
    for row in m:
        lines.append(",".join(format(float(x), ".17g") for x in row))
    text = "\n".join(lines) + "\n"
    if isinstance(path_or_buf, (str, os.PathLike)):
        with open(path_or_buf, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        path_or_buf.write(text)


def read_matrix_csv(path_or_buf) -> np.ndarray:
    if isinstance(path_or_buf, (str, os.PathLike)):
        with open(path_or_buf, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = path_or_buf.read()
    rows = []
    for line in io.StringIO(text):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(x) for x in line.split(",")])
    if not rows:
        raise InvalidInputError("CSV holds no matrix rows")
    if len({len(r) for r in rows}) != 1:
        raise InvalidInputError("CSV rows have unequal lengths")
    return as_matrix(rows)
