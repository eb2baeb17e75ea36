"""Dense linear algebra and seeded randomness shared by the numeric modules.

Matrices are plain ``numpy.ndarray`` objects in float64.  The SVD is a
one-sided (Hestenes) Jacobi routine with a round-robin pair ordering so that
each sweep is ``n - 1`` vectorised rotation steps instead of ``n^2 / 2``
scalar ones.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_EPS = np.finfo(np.float64).eps


class InvalidArgument(ValueError):
    pass


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.T


def as_matrix(a, *, name: str = "matrix") -> np.ndarray:
    m = np.array(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise InvalidArgument(f"{name} must be two-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidArgument(f"{name} has non-finite entries")
    return m


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint column pairings covering every pair exactly once per sweep."""
    players = list(range(n)) if n % 2 == 0 else list(range(n)) + [-1]
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p >= 0 and q >= 0:
                ps.append(min(p, q))
                qs.append(max(p, q))
        if ps:
            rounds.append((np.array(ps), np.array(qs)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _complete_basis(U: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace the columns of ``U`` not flagged in ``keep`` by an orthonormal completion."""
    m, k = U.shape
    basis = [U[:, j] for j in range(k) if keep[j]]
    out = U.copy()
    candidates = iter(np.eye(m))
    for j in range(k):
        if keep[j]:
            continue
        while True:
            e = next(candidates)
            for b in basis:
                e = e - (b @ e) * b
            for b in basis:  # second pass for numerical orthogonality
                e = e - (b @ e) * b
            norm = np.linalg.norm(e)
            if norm > 1e-8:
                e = e / norm
                break
        out[:, j] = e
        basis.append(e)
    return out


def _jacobi_tall(A: np.ndarray, max_sweeps: int) -> SvdResult:
    m, n = A.shape
    W = A.copy()
    V = np.eye(n)
    rounds = _round_robin(n)
    tol = 10 * n * _EPS
    for _ in range(max_sweeps):
        rotated = False
        for ps, qs in rounds:
            wp, wq = W[:, ps], W[:, qs]
            alpha = np.einsum("ij,ij->j", wp, wp)
            beta = np.einsum("ij,ij->j", wq, wq)
            gamma = np.einsum("ij,ij->j", wp, wq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            active &= gamma != 0.0
            if not np.any(active):
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            with np.errstate(over="ignore"):
                zeta = (beta - alpha) / (2.0 * g)
                sign = np.where(zeta >= 0, 1.0, -1.0)
                t = sign / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            W[:, ps], W[:, qs] = c * wp - s * wq, s * wp + c * wq
            vp, vq = V[:, ps], V[:, qs]
            V[:, ps], V[:, qs] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break

    sv = np.linalg.norm(W, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, W, V = sv[order], W[:, order], V[:, order]
    scale = sv[0] if sv.size and sv[0] > 0 else 1.0
    keep = sv > scale * n * _EPS * 10
    U = np.zeros_like(W)
    U[:, keep] = W[:, keep] / sv[keep]
    if not np.all(keep):
        U = _complete_basis(U, keep)
        sv = np.where(keep, sv, 0.0)
    return SvdResult(U, sv, V)


def svd(A, max_sweeps: int = 60) -> SvdResult:
    """Thin SVD ``A = U diag(s) V^T`` with singular values in descending order.

    ``U`` is rows x r and ``V`` is cols x r with ``r = min(rows, cols)``.
    """
    A = as_matrix(A, name="A")
    m, n = A.shape
    if m == 0 or n == 0:
        k = min(m, n)
        return SvdResult(np.zeros((m, k)), np.zeros(k), np.zeros((n, k)))
    if m >= n:
        return _jacobi_tall(A, max_sweeps)
    r = _jacobi_tall(A.T, max_sweeps)
    return SvdResult(r.V, r.singular_values, r.U)


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise InvalidArgument(f"length mismatch: {u.size} vs {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def cosine_matrix(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise cosines between rows of ``X`` and rows of ``Y`` (zero rows give 0)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    nx = np.linalg.norm(X, axis=1)
    ny = np.linalg.norm(Y, axis=1)
    dots = X @ Y.T
    denom = np.outer(nx, ny)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(out, -1.0, 1.0)


def derive_seed(master: int, stream: str) -> int:
    """Stable 63-bit seed for a named substream of ``master``."""
    digest = hashlib.sha256(f"{int(master)}/{stream}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def rng(seed: int, stream: str | None = None) -> np.random.Generator:
    if stream is not None:
        seed = derive_seed(seed, stream)
    return np.random.default_rng(seed)
