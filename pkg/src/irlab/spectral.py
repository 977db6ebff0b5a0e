"""Dense symmetric linear algebra.

Cyclic Jacobi eigendecomposition, effective rank, rank-L truncation and the
perturbation inequalities (Weyl, Davis-Kahan, eigenvector distance) that the
stability checks are built from. Matrices are plain ``numpy.ndarray`` objects;
:func:`as_symmetric` is the single entry point that validates and symmetrizes
them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateSpectrumError, InputError, OutOfRegimeError, UndefinedRankError

JACOBI_TOL = 1e-12
MAX_SWEEPS = 100
# eigenvalues closer than this (relative to the spectral scale) count as repeated
DEGENERACY_TOL = 1e-9


def as_symmetric(a) -> np.ndarray:
    """Return a read-only symmetric copy of ``a`` built from its upper triangle."""
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise InputError(f"expected a nonempty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix has non-finite entries")
    upper = np.triu(a)
    sym = upper + np.triu(a, 1).T
    sym.setflags(write=False)
    return sym


@dataclass(frozen=True)
class EigenDecomp:
    """Orthogonal eigenbasis with eigenvalues sorted in descending order.

    ``V[:, i]`` is the eigenvector of ``lambdas[i]``; ``delta_s`` is the minimal
    pairwise distance between eigenvalues (``inf`` for a 1x1 matrix). Gaps at
    round-off level (see :func:`is_degenerate`) are reported as exactly 0.
    """

    V: np.ndarray
    lambdas: np.ndarray
    delta_s: float = field(init=False)

    def __post_init__(self):
        gap = 0.0 if is_degenerate(self.lambdas) else min_eigengap(self.lambdas)
        object.__setattr__(self, "delta_s", gap)

    @property
    def n(self) -> int:
        return len(self.lambdas)

    def reconstruct(self) -> np.ndarray:
        return (self.V * self.lambdas) @ self.V.T


def min_eigengap(lambdas, indices: Sequence[int] | None = None) -> float:
    """min over i in ``indices`` (default: all) and j != i of |lambda_i - lambda_j|."""
    lam = np.asarray(lambdas, dtype=float)
    if lam.size < 2:
        return math.inf
    idx = range(lam.size) if indices is None else indices
    gap = math.inf
    for i in idx:
        others = np.delete(lam, i)
        gap = min(gap, float(np.min(np.abs(others - lam[i]))))
    return gap


def _jacobi(a: np.ndarray, tol: float = JACOBI_TOL):
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(MAX_SWEEPS):
        off = math.sqrt(float(np.sum(a[offmask] ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300 * max(1.0, scale):
                    a[p, q] = a[q, p] = 0.0
                    continue
                diff = a[q, q] - a[p, p]
                if abs(diff) > 1e100 * abs(apq):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:  # pragma: no cover - Jacobi converges quadratically for symmetric input
        raise ArithmeticError("Jacobi sweeps did not converge")
    return np.diag(a).copy(), v


def _canonical_signs(v: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive (first one on ties)
    pivots = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivots, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def eigendecompose(a) -> EigenDecomp:
    """Eigendecomposition of a symmetric matrix by row-cyclic Jacobi sweeps.

    Sweeps stop once the off-diagonal Frobenius mass drops below
    ``1e-12 * ||A||_F``. Eigenvalues come back descending; each eigenvector is
    signed so that its largest-magnitude entry is positive.
    """
    a = as_symmetric(a)
    lam, v = _jacobi(a)
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    v = _canonical_signs(v[:, order])
    lam.setflags(write=False)
    v.setflags(write=False)
    return EigenDecomp(V=v, lambdas=lam)


def eigenvalues(a) -> np.ndarray:
    """Descending eigenvalues via LAPACK; used on hot paths (per-iteration)."""
    a = np.asarray(a, dtype=float)
    return np.linalg.eigvalsh(0.5 * (a + a.T))[::-1]


def spectral_norm(a) -> float:
    """Operator norm of a symmetric matrix: largest |eigenvalue| (Jacobi)."""
    lam = eigendecompose(a).lambdas
    return float(np.max(np.abs(lam)))


def effective_rank_from_eigenvalues(lambdas) -> float:
    lam = np.abs(np.asarray(lambdas, dtype=float))
    top = float(np.max(lam)) if lam.size else 0.0
    if top == 0.0:
        raise UndefinedRankError("effective rank of the zero matrix is undefined")
    return float(np.sum(lam) / top)


def effective_rank(w) -> float:
    """Nuclear norm over operator norm, ``sum |lambda_i| / max |lambda_i|``."""
    return effective_rank_from_eigenvalues(eigenvalues(w))


def nuclear_norm(w) -> float:
    return float(np.sum(np.abs(eigenvalues(w))))


def best_rank_L(decomp: EigenDecomp, L: int) -> np.ndarray:
    """``V_L diag(lambda_1..lambda_L) V_L^T`` from the top-L eigenpairs."""
    if not 1 <= L <= decomp.n:
        raise InputError(f"L must lie in [1, {decomp.n}], got {L}")
    vl = decomp.V[:, :L]
    return as_symmetric((vl * decomp.lambdas[:L]) @ vl.T)


def weyl_gap(lam: float, lam_tilde: float, E_norm: float) -> bool:
    """True when |lam - lam_tilde| <= ||E||."""
    if E_norm < 0:
        raise InputError("E_norm must be nonnegative")
    return abs(lam - lam_tilde) <= E_norm


def align_signs(V: np.ndarray, V_tilde: np.ndarray) -> np.ndarray:
    """Flip columns of ``V_tilde`` so that <v_i, v~_i> >= 0 for every i."""
    dots = np.einsum("ij,ij->j", V, V_tilde)
    signs = np.where(dots < 0, -1.0, 1.0)
    return V_tilde * signs


def sin_theta(v, v_tilde) -> float:
    """sin of the angle between two unit vectors, sqrt(1 - <v, v~>^2)."""
    v = np.asarray(v, dtype=float)
    v_tilde = np.asarray(v_tilde, dtype=float)
    for u in (v, v_tilde):
        if abs(np.linalg.norm(u) - 1.0) > 1e-8:
            raise InputError("sin_theta expects unit vectors")
    c = float(np.dot(v, v_tilde))
    return math.sqrt(max(0.0, 1.0 - c * c))


def _require_gap(delta_s: float):
    if not delta_s > 0 or not math.isfinite(delta_s) and delta_s != math.inf:
        raise DegenerateSpectrumError(f"eigengap must be positive, got {delta_s}")


def davis_kahan_bound(E_norm: float, delta_s: float) -> float:
    """2 ||E|| / delta_s."""
    _require_gap(delta_s)
    return 2.0 * E_norm / delta_s


def davis_kahan_holds(sin_value: float, E_norm: float, delta_s: float) -> bool | None:
    """Check sin(theta) <= 2||E||/delta_s; ``None`` outside ||E|| <= delta_s/2."""
    _require_gap(delta_s)
    if E_norm > delta_s / 2:
        return None
    return sin_value <= davis_kahan_bound(E_norm, delta_s)


def eigvec_distance_bound(E_norm: float, delta_s: float) -> float:
    """2*sqrt(2)*||E||/delta_s, valid for sign-aligned unit eigenvectors."""
    _require_gap(delta_s)
    if E_norm < 0:
        raise InputError("E_norm must be nonnegative")
    if E_norm > delta_s / 2:
        raise OutOfRegimeError(f"||E|| = {E_norm} exceeds delta_s/2 = {delta_s / 2}")
    return 2.0 * math.sqrt(2.0) * E_norm / delta_s


def is_degenerate(lambdas, tol: float = DEGENERACY_TOL) -> bool:
    lam = np.asarray(lambdas, dtype=float)
    scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
    return min_eigengap(lam) <= tol * scale


# -- target synthesis ---------------------------------------------------------


@dataclass(frozen=True)
class SpectrumSpec:
    """Prescribed leading eigenvalues plus a tail rule, on a random basis.

    ``tail`` is ``("constant", value)`` or ``("logspace", high, low)``.
    """

    leading: tuple
    n: int
    tail: tuple = ("constant", 0.01)
    basis_seed: int = 0

    def __post_init__(self):
        lead = tuple(float(x) for x in self.leading)
        object.__setattr__(self, "leading", lead)
        if not lead or self.n < len(lead):
            raise InputError("need 1 <= len(leading) <= n")
        if any(b >= a for a, b in zip(lead, lead[1:])) or lead[-1] <= 0:
            raise InputError("leading eigenvalues must be positive and strictly descending")
        kind = self.tail[0]
        if kind not in ("constant", "logspace"):
            raise InputError(f"unknown tail rule {kind!r}")
        if any(x < 0 for x in self.eigenvalues()):
            raise InputError("synthesized eigenvalues must be nonnegative")

    def eigenvalues(self) -> np.ndarray:
        m = self.n - len(self.leading)
        kind = self.tail[0]
        if kind == "constant":
            tail = np.full(m, float(self.tail[1]))
        else:
            hi, lo = float(self.tail[1]), float(self.tail[2])
            tail = np.geomspace(hi, lo, m) if m else np.zeros(0)
        return np.concatenate([np.array(self.leading), tail])


def random_orthogonal(n: int, seed: int) -> np.ndarray:
    """Modified Gram-Schmidt on a seeded Gaussian matrix, det normalized to +1."""
    g = np.random.Generator(np.random.PCG64(seed)).standard_normal((n, n))
    q = np.zeros_like(g)
    for j in range(n):
        v = g[:, j].copy()
        for i in range(j):
            v -= np.dot(q[:, i], v) * q[:, i]
        q[:, j] = v / np.linalg.norm(v)
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q


def synthesize(spec: SpectrumSpec) -> np.ndarray:
    """Ground-truth ``V diag(lambda) V^T`` for a spectrum spec."""
    v = random_orthogonal(spec.n, spec.basis_seed)
    return as_symmetric((v * spec.eigenvalues()) @ v.T)


def truncate_rank(w, L: int) -> np.ndarray:
    """Best rank-L approximation of a (numerically) symmetric matrix by top eigenvalues.

    LAPACK-backed; used inside simulation loops where Jacobi would dominate runtime.
    """
    w = np.asarray(w, dtype=float)
    lam, v = np.linalg.eigh(0.5 * (w + w.T))
    order = np.argsort(-lam, kind="stable")[:L]
    vl = v[:, order]
    return (vl * lam[order]) @ vl.T
