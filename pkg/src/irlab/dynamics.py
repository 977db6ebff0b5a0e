"""Gradient descent on deep matrix factorization.

Two views of the same dynamics are provided: the full factor chain
``W_j(k+1) = W_j(k) - eta * grad_j`` with ``W_j(0) = alpha I``, and the scalar
channel recursion ``d(k+1) = d(k) - eta d^(N-1) (d^N - lam)`` that every
eigen-direction of a symmetric target follows under identical initialization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DivergenceError, InputError, OutOfRegimeError
from .spectral import eigenvalues, effective_rank_from_eigenvalues

DIVERGENCE_LIMIT = 1e12
SCALAR_STOP = 1e-14


@dataclass(frozen=True)
class DynamicsConfig:
    N: int = 2
    eta: float = 0.005
    alpha: float = 0.01
    max_iters: int = 10_000
    record_every: int = 1

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InputError(f"depth N must be a positive integer, got {self.N}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise InputError(f"eta must be positive, got {self.eta}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InputError(f"alpha must be positive, got {self.alpha}")
        if self.max_iters < 1:
            raise InputError("max_iters must be at least 1")
        if self.record_every < 1:
            raise InputError("record_every must be at least 1")

    def replace(self, **changes) -> "DynamicsConfig":
        fields = dict(N=self.N, eta=self.eta, alpha=self.alpha,
                      max_iters=self.max_iters, record_every=self.record_every)
        fields.update(changes)
        return DynamicsConfig(**fields)


@dataclass(frozen=True)
class TrajectoryRecord:
    """State at iteration ``k``: factor values in the target eigenbasis, loss, effective rank."""

    k: int
    diag: np.ndarray
    loss: float
    eff_rank: float


# -- factor chain ---------------------------------------------------------------


def initial_factors(n: int, cfg: DynamicsConfig) -> list[np.ndarray]:
    return [cfg.alpha * np.eye(n) for _ in range(cfg.N)]


def chain_product(factors) -> np.ndarray:
    """W_N ... W_1 (``factors[0]`` is W_1)."""
    out = factors[0]
    for w in factors[1:]:
        out = w @ out
    return out


def factor_loss(factors, target) -> float:
    r = chain_product(factors) - target
    return 0.5 * float(np.sum(r * r))


def factor_gradients(factors, target) -> list[np.ndarray]:
    """Gradient of 0.5 ||W_N...W_1 - target||_F^2 with respect to each factor."""
    N = len(factors)
    n = factors[0].shape[0]
    eye = np.eye(n)
    # prefix[j] = W_j ... W_1 (prefix[0] = I); suffix[j] = W_N ... W_{j+1}
    prefix = [eye]
    for w in factors:
        prefix.append(w @ prefix[-1])
    suffix = [eye] * (N + 1)
    for j in range(N - 1, -1, -1):
        suffix[j] = suffix[j + 1] @ factors[j]
    resid = prefix[N] - target
    return [suffix[j + 1].T @ resid @ prefix[j].T for j in range(N)]


def _check_shapes(factors, target):
    target = np.asarray(target, dtype=float)
    if target.ndim != 2 or target.shape[0] != target.shape[1]:
        raise InputError(f"target must be square, got shape {target.shape}")
    for w in factors:
        if w.shape != target.shape:
            raise InputError(f"factor shape {w.shape} does not match target {target.shape}")
    return target


def factor_gd_step(factors, target, cfg: DynamicsConfig, k: int = 0) -> list[np.ndarray]:
    """One simultaneous gradient step on every factor.

    ``k`` is the index of the current iterate and is only used to label a
    :class:`DivergenceError` raised for the produced iterate ``k + 1``.
    """
    target = _check_shapes(factors, target)
    grads = factor_gradients(factors, target)
    new = [w - cfg.eta * g for w, g in zip(factors, grads)]
    for w in new:
        if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"factor iterate diverged at iteration {k + 1}", iteration=k + 1)
    return new


def factor_iterates(target, cfg: DynamicsConfig) -> Iterator[tuple[int, list[np.ndarray]]]:
    """Yield ``(k, factors)`` for k = 0..max_iters (never stops early)."""
    target = np.asarray(target, dtype=float)
    factors = initial_factors(target.shape[0], cfg)
    yield 0, factors
    for k in range(cfg.max_iters):
        factors = factor_gd_step(factors, target, cfg, k)
        yield k + 1, factors


def record_state(k: int, factors, target, basis: np.ndarray | None = None) -> TrajectoryRecord:
    w = chain_product(factors)
    r = w - target
    loss = 0.5 * float(np.sum(r * r))
    if basis is None:
        diag = np.diag(factors[0]).copy()
    else:
        diag = np.einsum("ij,ik,kj->j", basis, factors[0], basis)
    try:
        er = effective_rank_from_eigenvalues(eigenvalues(w))
    except InputError:
        er = math.nan
    return TrajectoryRecord(k=k, diag=diag, loss=loss, eff_rank=er)


def simulate_factors(target, cfg: DynamicsConfig, basis: np.ndarray | None = None) -> list[TrajectoryRecord]:
    """Full factor-chain gradient descent, recorded every ``record_every`` steps.

    ``diag`` holds the diagonal of ``basis^T W_1(k) basis`` (the factor values
    per eigen-direction when ``basis`` is the target eigenbasis). The last
    iterate is always recorded. On divergence the raised error carries the
    records collected so far.
    """
    records: list[TrajectoryRecord] = []
    last = None
    try:
        for k, factors in factor_iterates(target, cfg):
            last = (k, factors)
            if k % cfg.record_every == 0:
                records.append(record_state(k, factors, target, basis))
    except DivergenceError as err:
        err.partial = records
        raise
    if last is not None and records[-1].k != last[0]:
        records.append(record_state(last[0], last[1], target, basis))
    return records


# -- scalar channels -----------------------------------------------------------


def scalar_step(d: float, lam_tilde: float, cfg: DynamicsConfig) -> float:
    """d - eta d^(N-1) (d^N - lam_tilde)."""
    N = cfg.N
    try:
        out = d - cfg.eta * d ** (N - 1) * (d**N - lam_tilde)
    except OverflowError:
        raise DivergenceError("scalar iterate overflowed", iteration=0) from None
    if not math.isfinite(out):
        raise DivergenceError("scalar iterate is not finite", iteration=0)
    return out


@dataclass(frozen=True)
class ScalarTrajectory:
    """Recorded scalar channel: iteration indices ``k`` and values ``d``.

    ``converged`` is true when the run stopped early on the residual test, in
    which case the channel sits at its fixed point for every later k.
    """

    lam_tilde: float
    N: int
    k: np.ndarray
    d: np.ndarray
    converged: bool

    @property
    def final(self) -> float:
        return float(self.d[-1])

    def value_at(self, k: int) -> float:
        """d(k), extended by the fixed point after early stopping."""
        idx = int(np.searchsorted(self.k, k, side="right")) - 1
        if idx < 0:
            raise InputError(f"iteration {k} precedes the trajectory")
        if self.k[idx] != k and not (self.converged and idx == len(self.k) - 1):
            raise InputError(f"iteration {k} was not recorded")
        return float(self.d[idx])

    def records(self) -> list[TrajectoryRecord]:
        out = []
        for k, d in zip(self.k, self.d):
            resid = d**self.N - self.lam_tilde
            out.append(TrajectoryRecord(k=int(k), diag=np.array([d]), loss=0.5 * resid * resid,
                                        eff_rank=1.0 if d != 0 else math.nan))
        return out


def scalar_simulate(lam_tilde: float, cfg: DynamicsConfig) -> ScalarTrajectory:
    """Iterate the scalar recursion from d(0) = alpha.

    Stops after ``max_iters`` steps, once |d^N - lam_tilde| <= 1e-14, or when
    the iterate no longer changes in floating point.
    Raises :class:`DivergenceError` if |d| exceeds 1e12.
    """
    N, eta = cfg.N, cfg.eta
    d = cfg.alpha
    ks, ds = [0], [d]
    converged = abs(d**N - lam_tilde) <= SCALAR_STOP
    k = 0
    while not converged and k < cfg.max_iters:
        prev = d
        try:
            d = d - eta * d ** (N - 1) * (d**N - lam_tilde)
        except OverflowError:
            d = math.inf
        k += 1
        if not math.isfinite(d) or abs(d) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"scalar channel diverged at iteration {k}", iteration=k,
                                  partial=list(zip(ks, ds)))
        # a floating-point fixed point can sit a few ulps above the residual tolerance
        converged = abs(d**N - lam_tilde) <= SCALAR_STOP or d == prev
        if k % cfg.record_every == 0 or converged or k == cfg.max_iters:
            ks.append(k)
            ds.append(d)
    return ScalarTrajectory(lam_tilde=float(lam_tilde), N=N, k=np.array(ks), d=np.array(ds),
                            converged=converged)


def scalar_channels(lams, cfg: DynamicsConfig, steps: int | None = None) -> np.ndarray:
    """All channels at once, no early stop: array of shape (steps + 1, len(lams))."""
    lams = np.asarray(lams, dtype=float)
    steps = cfg.max_iters if steps is None else steps
    out = np.empty((steps + 1, lams.size))
    d = np.full(lams.size, cfg.alpha)
    out[0] = d
    N, eta = cfg.N, cfg.eta
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            d = d - eta * d ** (N - 1) * (d**N - lams)
            if not np.all(np.isfinite(d)) or np.max(np.abs(d)) > DIVERGENCE_LIMIT:
                raise DivergenceError(f"scalar channels diverged at iteration {k + 1}",
                                      iteration=k + 1, partial=out[: k + 1].copy())
            out[k + 1] = d
    return out


def hitting_time(trajectory, target_value: float, tol: float) -> int | None:
    """Smallest recorded k with |d(k) - target_value| <= tol, else ``None``.

    ``trajectory`` is a :class:`ScalarTrajectory` or a 1-D array indexed by k.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    if isinstance(trajectory, ScalarTrajectory):
        ks, ds = trajectory.k, trajectory.d
    else:
        ds = np.asarray(trajectory, dtype=float)
        ks = np.arange(ds.size)
    hits = np.nonzero(np.abs(ds - target_value) <= tol)[0]
    return int(ks[hits[0]]) if hits.size else None


def scalar_hitting_time(lam_tilde: float, target_value: float, tol: float,
                        cfg: DynamicsConfig) -> int | None:
    """Hitting time of a freshly simulated channel, without storing the trajectory."""
    if tol <= 0:
        raise InputError("tol must be positive")
    N, eta = cfg.N, cfg.eta
    d = cfg.alpha
    for k in range(cfg.max_iters + 1):
        if abs(d - target_value) <= tol:
            return k
        d = d - eta * d ** (N - 1) * (d**N - lam_tilde)
        if not math.isfinite(d) or abs(d) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"scalar channel diverged at iteration {k + 1}", iteration=k + 1)
    return None


@dataclass(frozen=True)
class StepSizeBounds:
    """Admissible step sizes for one channel.

    ``convergence``: threshold of the convergence lemma (case named in ``case``).
    ``complexity``: the stricter threshold under which hitting-time bounds hold
    (``None`` for N = 1).
    """

    convergence: float
    complexity: float | None
    case: str
    M: float


def step_size_bounds(lam_tilde: float, cfg: DynamicsConfig) -> StepSizeBounds:
    N, alpha = cfg.N, cfg.alpha
    root = abs(lam_tilde) ** (1.0 / N)
    M = max(alpha, root)
    if N == 1:
        return StepSizeBounds(convergence=1.0, complexity=None, case="N=1", M=M)
    if lam_tilde > 0:
        conv, case = 1.0 / (N * M ** (2 * N - 2)), "positive"
    elif alpha >= root:
        conv, case = alpha ** (-2 * N + 2), "nonpositive, alpha above root"
    else:
        conv, case = 1.0 / ((3 * N - 2) * abs(lam_tilde) ** (2 - 2 / N)), "negative, alpha below root"
    if lam_tilde >= 0:
        comp = 1.0 / (2 * N * M ** (2 * N - 2))
    else:
        comp = 1.0 / ((3 * N - 2) * M ** (2 * N - 2))
    return StepSizeBounds(convergence=conv, complexity=comp, case=case, M=M)


def warn_if_unstable(lams, cfg: DynamicsConfig) -> bool:
    """Warn (never raise) when eta exceeds a channel's convergence threshold."""
    bad = [lam for lam in np.ravel(lams) if cfg.eta >= step_size_bounds(float(lam), cfg).convergence]
    if bad:
        warnings.warn(f"eta={cfg.eta} exceeds the convergence threshold for eigenvalues {bad[:3]}",
                      RuntimeWarning, stacklevel=2)
    return not bad


def scalar_limit(lam_tilde: float, cfg: DynamicsConfig) -> float:
    """Predicted limit max(lam_tilde, 0)^(1/N) of a channel (N >= 2)."""
    if cfg.N < 2:
        raise OutOfRegimeError("the positive-part limit needs N >= 2")
    bound = step_size_bounds(lam_tilde, cfg).convergence
    if not cfg.eta < bound:
        raise OutOfRegimeError(f"eta={cfg.eta} is not below the convergence threshold {bound}")
    return max(lam_tilde, 0.0) ** (1.0 / cfg.N)


@dataclass
class ProductTrace:
    """Per-iteration measurements of a factor-chain run, k = 0..steps.

    ``eff_rank[k]`` is r(W(k)); ``projected[name][k]`` the diagonal of
    ``B^T W(k) B`` for each supplied basis ``B``; ``factor_diag[k]`` the
    diagonal of ``B0^T W_1(k) B0`` for the factor basis ``B0``; ``kept`` maps
    k to W(k) for iterations inside ``keep``; ``ref_err[k]`` is
    ||W(k) - reference||_F when a reference matrix is given.
    """

    eff_rank: np.ndarray
    loss: np.ndarray
    projected: dict
    factor_diag: np.ndarray | None
    kept: dict
    ref_err: np.ndarray | None = None


def trace_product(target, cfg: DynamicsConfig, steps: int, bases: dict | None = None,
                  factor_basis: np.ndarray | None = None,
                  keep: tuple[int, int] | None = None, reference=None) -> ProductTrace:
    target = np.asarray(target, dtype=float)
    n = target.shape[0]
    bases = bases or {}
    eff = np.empty(steps + 1)
    loss = np.empty(steps + 1)
    proj = {name: np.empty((steps + 1, n)) for name in bases}
    fdiag = np.empty((steps + 1, n)) if factor_basis is not None else None
    kept = {}
    ref = None if reference is None else np.asarray(reference, dtype=float)
    ref_err = np.empty(steps + 1) if ref is not None else None
    factors = initial_factors(n, cfg)
    for k in range(steps + 1):
        if k:
            factors = factor_gd_step(factors, target, cfg, k - 1)
        w = chain_product(factors)
        r = w - target
        loss[k] = 0.5 * float(np.sum(r * r))
        eff[k] = effective_rank_from_eigenvalues(eigenvalues(w))
        for name, b in bases.items():
            proj[name][k] = np.einsum("ij,ik,kj->j", b, w, b)
        if fdiag is not None:
            fdiag[k] = np.einsum("ij,ik,kj->j", factor_basis, factors[0], factor_basis)
        if ref_err is not None:
            ref_err[k] = float(np.linalg.norm(w - ref))
        if keep is not None and keep[0] <= k <= keep[1]:
            kept[k] = w
    return ProductTrace(eff_rank=eff, loss=loss, projected=proj, factor_diag=fdiag, kept=kept,
                        ref_err=ref_err)
