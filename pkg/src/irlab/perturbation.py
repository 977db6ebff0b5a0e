"""Noise model and stability bounds for the perturbed factorization problem.

A symmetric Gaussian perturbation ``E`` is added to the ground truth ``W_hat``
and gradient descent is run against ``W_tilde = W_hat + E``. The functions
here evaluate the closed-form guarantees (eigenvalue recovery, window shifts,
effective-rank stability, approximation error, hitting-time sandwich) and pair
each with the quantity it bounds, measured on a simulation.

Every bound is evaluated with the exact spectral norm of the sampled ``E``;
``e_norm_bound`` is only a reference envelope.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import spectral
from .dynamics import (SCALAR_STOP, DynamicsConfig, scalar_channels, scalar_hitting_time,
                       step_size_bounds, trace_product)
from .errors import DegenerateSpectrumError, InputError, OutOfRegimeError
from .timing import (WindowParams, c_N, k_epsilon, rank_indices, t0, t1, t2id_raw)

# -- noise -------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Entries E_ij ~ N(0, sigma^2) on and above the diagonal, mirrored below.

    Draws come from numpy's PCG64 bit generator (uniform doubles) pushed
    through the Box-Muller transform, so a given (sigma, seed, n) is
    bit-reproducible.
    """

    sigma: float
    seed: int
    n: int
    delta_prime: float = 0.05
    C_abs: float = 1.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise InputError(f"sigma must be nonnegative, got {self.sigma}")
        if self.n < 1:
            raise InputError("n must be positive")
        if not 0 < self.delta_prime < 1:
            raise InputError("delta_prime must lie in (0, 1)")


def box_muller(count: int, seed: int) -> np.ndarray:
    """``count`` standard normals from PCG64 uniforms via Box-Muller."""
    pairs = (count + 1) // 2
    u = np.random.Generator(np.random.PCG64(seed)).random((pairs, 2))
    u1 = 1.0 - u[:, 0]  # (0, 1], keeps the log finite
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.column_stack([r * np.cos(theta), r * np.sin(theta)]).ravel()
    return z[:count]


def sample_noise(model: NoiseModel) -> np.ndarray:
    """Symmetric noise matrix; the upper triangle is filled row-major."""
    n = model.n
    if model.sigma == 0:
        return spectral.as_symmetric(np.zeros((n, n)))
    iu = np.triu_indices(n)
    e = np.zeros((n, n))
    e[iu] = model.sigma * box_muller(len(iu[0]), model.seed)
    return spectral.as_symmetric(e)


def e_norm_bound(model: NoiseModel) -> float:
    """C sigma (sqrt(n) + sqrt(ln(4/delta')))."""
    return model.C_abs * model.sigma * (math.sqrt(model.n) + math.sqrt(math.log(4.0 / model.delta_prime)))


# -- perturbed instance -------------------------------------------------------------


def positive_part(x):
    return np.maximum(np.asarray(x, dtype=float), 0.0)


@dataclass(frozen=True)
class PerturbedProblem:
    W_hat: np.ndarray
    E: np.ndarray
    W_tilde: np.ndarray
    decomp_hat: spectral.EigenDecomp
    decomp_tilde: spectral.EigenDecomp
    E_norm: float
    beta: np.ndarray
    M: float
    N: int
    alpha: float

    @classmethod
    def build(cls, W_hat, E, N: int = 2, alpha: float = 0.01) -> "PerturbedProblem":
        W_hat = spectral.as_symmetric(W_hat)
        E = spectral.as_symmetric(E)
        if W_hat.shape != E.shape:
            raise InputError("W_hat and E must have the same shape")
        W_tilde = spectral.as_symmetric(W_hat + E)
        dh = spectral.eigendecompose(W_hat)
        dt = spectral.eigendecompose(W_tilde)
        # eigenvector signs of W_tilde follow those of W_hat
        vt = spectral.align_signs(dh.V, dt.V)
        vt.setflags(write=False)
        dt = spectral.EigenDecomp(V=vt, lambdas=dt.lambdas)
        e_norm = spectral.spectral_norm(E)
        beta = np.abs(positive_part(dt.lambdas) ** (1.0 / N) - positive_part(dh.lambdas) ** (1.0 / N))
        w_norm = float(np.max(np.abs(dt.lambdas)))
        M = max(alpha, w_norm ** (1.0 / N))
        return cls(W_hat=W_hat, E=E, W_tilde=W_tilde, decomp_hat=dh, decomp_tilde=dt,
                   E_norm=e_norm, beta=beta, M=M, N=N, alpha=alpha)

    @property
    def n(self) -> int:
        return self.W_hat.shape[0]

    @property
    def lambdas(self) -> np.ndarray:
        return self.decomp_hat.lambdas

    @property
    def lambdas_tilde(self) -> np.ndarray:
        return self.decomp_tilde.lambdas


def perturbed_window(spectrum_tilde, params: WindowParams) -> tuple[float, float]:
    """(T0, T1) evaluated on the positive parts of the perturbed spectrum."""
    lam = positive_part(spectrum_tilde)
    L = params.L
    if L >= lam.size:
        raise InputError("perturbed window needs lambda_(L+1)")
    if not lam[L - 1] > 0:
        raise OutOfRegimeError(f"(lambda~_L)+ = {lam[L - 1]} is not positive")
    if not params.alpha**params.N < params.eps_prime * lam[L - 1]:
        raise OutOfRegimeError("alpha^N >= eps' (lambda~_L)+")
    return t0(lam[:L], params), t1(float(lam[L]), params)


def _shift_regime(lam_next: float, E_norm: float, params: WindowParams):
    if E_norm < 0:
        raise InputError("E_norm must be nonnegative")
    if params.N != 2:
        raise OutOfRegimeError("window shift bounds are stated for N = 2")
    if not lam_next - E_norm > params.alpha**2:
        raise OutOfRegimeError(f"need lambda_(L+1) - ||E|| > alpha^2 "
                               f"({lam_next} - {E_norm} <= {params.alpha**2})")
    q = 2.0 / 3.0 * params.eta * (lam_next + E_norm)
    if not 0 < q < 1:
        raise OutOfRegimeError(f"need 0 < (2/3) eta (lambda_(L+1) + ||E||) < 1, got {q}")


def _H(lam: float, alpha: float) -> float:
    return math.log(lam / alpha**2 - 1.0)


def _log_shift_term(lam_next, E_norm, params, const):
    a2 = params.alpha**2
    return (E_norm / (2.0 * params.eta * (lam_next - E_norm))
            * (1.0 / (lam_next - E_norm - a2) + abs(_H(lam_next, params.alpha) - const) / lam_next))


def t1_shift_bound(lam_next: float, E_norm: float, params: WindowParams) -> float:
    """Bound on |T1~ - T1| driven by the movement of lambda_(L+1)."""
    _shift_regime(lam_next, E_norm, params)
    return _log_shift_term(lam_next, E_norm, params, math.log(1.0 / params.eps_prime - 1.0))


@dataclass(frozen=True)
class ShiftTerms:
    log_term: float
    level_term: float
    rate_term: float
    ceiling: float = 1.0

    @property
    def total(self) -> float:
        return self.log_term + self.level_term + self.rate_term + self.ceiling


def t0_shift_terms(lam_next: float, E_norm: float, params: WindowParams) -> ShiftTerms:
    _shift_regime(lam_next, E_norm, params)
    a, eta = params.alpha, params.eta
    log_term = _log_shift_term(lam_next, E_norm, params, math.log(2.0))
    level_term = E_norm / (math.sqrt(3.0) * a) / (math.sqrt(lam_next - E_norm) + math.sqrt(lam_next))
    rate_term = (9.0 * k_epsilon(params.eps) * E_norm
                 / (2.0 * eta * lam_next * (lam_next - E_norm) * abs(3.0 - 2.0 * eta * (lam_next + E_norm))))
    return ShiftTerms(log_term=log_term, level_term=level_term, rate_term=rate_term)


def t0_shift_bound(lam_next: float, E_norm: float, params: WindowParams) -> float:
    """Bound on |T0~ - T0|: three terms proportional to ||E|| plus one for the ceiling."""
    return t0_shift_terms(lam_next, E_norm, params).total


# -- effective-rank stability -------------------------------------------------------------


def rank_L_effective_rank(lambdas, L: int) -> float:
    top = np.abs(np.asarray(lambdas, dtype=float)[:L])
    return spectral.effective_rank_from_eigenvalues(top)


def _stability_hypotheses(problem: PerturbedProblem, params: WindowParams) -> list[str]:
    lt = positive_part(problem.lambdas_tilde)
    L, N, a = params.L, params.N, params.alpha
    bad = []
    if L >= problem.n:
        raise InputError("stability bound needs lambda_(L+1)")
    if not lt[L - 1] > 0:
        bad.append("(lambda~_L)+ is not positive")
    if not a**N < params.eps_prime * lt[L - 1]:
        bad.append("alpha^N >= eps' (lambda~_L)+")
    if not a**N < params.eps_prime * lt[L]:
        bad.append("alpha^N >= eps' (lambda~_(L+1))+ (perturbed window is empty)")
    limit = 1.0 / ((3 * N - 2) * max(a ** (N - 2), lt[0] ** (2 - 2 / N)))
    if not params.eta < limit:
        bad.append(f"eta >= {limit:.6g}")
    if problem.lambdas[-1] < 0:
        bad.append("W_hat is not positive semidefinite")
    return bad


def effective_rank_stability_bound(problem: PerturbedProblem, params: WindowParams) -> float:
    """Bound on |r(W_hat_L) - r(W(k))| over the perturbed window.

    2L||E||/lambda_1 + eps r(W~+_L) + (2(L'-L)/c_N)((l~_(L+1))+/(l~_1)+) eps'
    + (n-L') 2 alpha^N/(eps' (l~_1)+), with L' counted on the perturbed spectrum.
    """
    bad = _stability_hypotheses(problem, params)
    if bad:
        raise OutOfRegimeError("; ".join(bad))
    lt = positive_part(problem.lambdas_tilde)
    L, n = params.L, problem.n
    lp, _ = rank_indices(lt, params)
    return (2.0 * L * problem.E_norm / problem.lambdas[0]
            + params.eps * rank_L_effective_rank(lt, L)
            + 2.0 * (lp - L) / params.c_N * lt[L] / lt[0] * params.eps_prime
            + (n - lp) * 2.0 * params.alpha**params.N / (params.eps_prime * lt[0]))


def simplified_parameters(problem: PerturbedProblem, L: int, eps: float, N: int = 2) -> tuple[float, float]:
    """(eps', alpha) chosen so the stability bound collapses to the short form.

    eps' is capped just below c_N so that it stays inside the open interval.
    """
    lt = positive_part(problem.lambdas_tilde)
    n = problem.n
    r = rank_L_effective_rank(lt, L)
    ratio = eps * r / (2.0 * (n - L))
    cn = c_N(N)
    eps_p = cn * min(lt[0] / lt[L] * ratio, 1.0)
    eps_p = min(eps_p, cn * (1.0 - 1e-9))
    alpha = min((eps_p * lt[0]) ** (1.0 / N) * ratio ** (1.0 / N), (eps_p * lt[L]) ** (1.0 / N))
    return eps_p, alpha


def effective_rank_stability_bound_simplified(problem: PerturbedProblem, params: WindowParams) -> float:
    """2L||E||/lambda_1 + 3 eps r(W~+_L), for parameters from :func:`simplified_parameters`."""
    eps_p, alpha = simplified_parameters(problem, params.L, params.eps, params.N)
    if not (math.isclose(eps_p, params.eps_prime, rel_tol=1e-12)
            and math.isclose(alpha, params.alpha, rel_tol=1e-12)):
        raise OutOfRegimeError("eps' and alpha do not follow the simplifying choice")
    bad = _stability_hypotheses(problem, params)
    if bad:
        raise OutOfRegimeError("; ".join(bad))
    lt = positive_part(problem.lambdas_tilde)
    return (2.0 * params.L * problem.E_norm / problem.lambdas[0]
            + 3.0 * params.eps * rank_L_effective_rank(lt, params.L))


# -- eigenvalue recovery ---------------------------------------------------------------------


def eigen_recovery_bound(problem: PerturbedProblem, i: int, eps_tilde: float,
                         params: WindowParams | DynamicsConfig, delta_s: float | None = None) -> float:
    """Bound on |[V^T W(k) V]_ii - (lambda_i)+| once channel i is eps~-accurate.

    ``i`` is 1-based. ``delta_s`` defaults to the global minimal gap of W_hat.
    """
    N = params.N
    if not 1 <= i <= problem.n:
        raise InputError(f"index {i} outside 1..{problem.n}")
    ds = problem.decomp_hat.delta_s if delta_s is None else delta_s
    if not ds > 0:
        raise DegenerateSpectrumError("eigen recovery needs a positive eigengap")
    if problem.E_norm > ds / 2:
        raise OutOfRegimeError(f"||E|| = {problem.E_norm:.6g} exceeds delta_s/2 = {ds / 2:.6g}")
    base = (4.0 * math.sqrt(2.0) * problem.M**N / ds + 1.0) * problem.E_norm
    lt = problem.lambdas_tilde[i - 1]
    if lt > 0:
        return base + eps_tilde * N * lt ** (1.0 - 1.0 / N)
    return base + eps_tilde**N


def recovery_step_limit(problem: PerturbedProblem, N: int) -> float:
    return 1.0 / ((3 * N - 2) * problem.M ** (2 * N - 2))


# -- iteration sandwich ------------------------------------------------------------------------


@dataclass(frozen=True)
class Sandwich:
    """Hitting times of one channel and their closed-form brackets.

    ``T`` hits lambda+^(1/N) within eps~ + beta, ``T_tilde`` hits
    lambda~+^(1/N) within eps~, ``T_tilde_2beta`` within eps~ + 2 beta.
    ``lower`` is ``None`` when its branch is not available in closed form;
    ``lower_note`` says why.
    """

    beta: float
    upper: float | None
    lower: float | None
    lower_note: str
    T: int | None
    T_tilde: int | None
    T_tilde_2beta: int | None


def sandwich_lower(lam_tilde: float, eps_tilde: float, beta: float, cfg: DynamicsConfig):
    N, a, eta = cfg.N, cfg.alpha, cfg.eta
    if not lam_tilde > a**N:
        return None, "lambda~ <= alpha^N: no lower bound stated"
    cn = c_N(N)
    if a**N < cn * lam_tilde:
        return None, "alpha^N < c_N lambda~: branch needs an externally defined term"
    rate = abs(math.log1p(-eta * N * (cn * lam_tilde) ** (2 - 2 / N)))
    num = math.log((lam_tilde ** (1.0 / N) - a) / (eps_tilde + 2 * beta))
    return num / rate, "closed form (alpha^N >= c_N lambda~)"


def iteration_sandwich(lam: float, lam_tilde: float, eps_tilde: float, cfg: DynamicsConfig) -> Sandwich:
    N, a = cfg.N, cfg.alpha
    if N < 2:
        raise OutOfRegimeError("the hitting-time sandwich needs N >= 2")
    root_t = max(lam_tilde, 0.0) ** (1.0 / N)
    root = max(lam, 0.0) ** (1.0 / N)
    if not 0 < eps_tilde < abs(a - root_t):
        raise OutOfRegimeError(f"need 0 < eps~ < |alpha - lambda~+^(1/N)| = {abs(a - root_t):.6g}")
    limit = step_size_bounds(lam_tilde, cfg).complexity
    if not cfg.eta < limit:
        raise OutOfRegimeError(f"eta = {cfg.eta} >= complexity threshold {limit:.6g}")
    beta = abs(root_t - root)
    upper = None
    if N == 2:
        try:
            upper = t2id_raw(lam_tilde, eps_tilde, a, cfg.eta)
        except OutOfRegimeError:
            upper = None
    lower, note = sandwich_lower(lam_tilde, eps_tilde, beta, cfg)
    T = scalar_hitting_time(lam_tilde, root, eps_tilde + beta, cfg)
    Tt = scalar_hitting_time(lam_tilde, root_t, eps_tilde, cfg)
    Tt2 = scalar_hitting_time(lam_tilde, root_t, eps_tilde + 2 * beta, cfg)
    return Sandwich(beta=beta, upper=upper, lower=lower, lower_note=note, T=T, T_tilde=Tt,
                    T_tilde_2beta=Tt2)


# -- approximation error -----------------------------------------------------------------------


def localized_gap(lambdas, L: int) -> float:
    """min over i <= L, j != i of |lambda_i - lambda_j|."""
    return spectral.min_eigengap(lambdas, indices=range(L))


def approx_error_bound(problem: PerturbedProblem, L: int, params: WindowParams,
                       delta_s: float | None = None) -> float:
    """Bound on ||W(k)_L - W_hat_L||_F over the perturbed window.

    (4 sqrt(2L) lambda_1/delta_s + sqrt(L)) ||E|| + eps sqrt(L) (lambda_1 + ||E||)/4, where
    ``delta_s`` defaults to the gap of the top-L eigenvalues.
    """
    if not 1 <= L < problem.n:
        raise InputError(f"L must lie in [1, {problem.n - 1}]")
    ds = localized_gap(problem.lambdas, L) if delta_s is None else delta_s
    if not ds > 0:
        raise DegenerateSpectrumError("approximation bound needs a positive eigengap")
    lam1, e = float(problem.lambdas[0]), problem.E_norm
    return (4.0 * math.sqrt(2.0 * L) / ds * lam1 + math.sqrt(L)) * e + params.eps * math.sqrt(L) * (lam1 + e) / 4.0


# -- convergence envelope ----------------------------------------------------------------------


@dataclass(frozen=True)
class Envelope:
    stated: float
    mvt: float


def convergence_envelope(lam: float, lam_tilde: float, E_norm: float, cfg: DynamicsConfig) -> Envelope:
    """Two bounds on |d(inf) - lambda+^(1/N)|.

    ``stated`` is (1/N) min(l~+, l+)^(1/N) ||E||; ``mvt`` is the mean-value form
    (1/N) a^(1/N - 1) |l~+ - l+| with a = min(l~+, l+) (infinite when a = 0 and
    the positive parts differ).
    """
    N = cfg.N
    if N < 2:
        raise OutOfRegimeError("use n1_envelope for N = 1")
    limit = step_size_bounds(lam_tilde, cfg).convergence
    if not cfg.eta < limit:
        raise OutOfRegimeError(f"eta = {cfg.eta} >= convergence threshold {limit:.6g}")
    lp, ltp = max(lam, 0.0), max(lam_tilde, 0.0)
    a = min(lp, ltp)
    stated = a ** (1.0 / N) * E_norm / N
    diff = abs(ltp - lp)
    if diff == 0:
        mvt = 0.0
    elif a == 0:
        mvt = math.inf
    else:
        mvt = a ** (1.0 / N - 1.0) * diff / N
    return Envelope(stated=stated, mvt=mvt)


def n1_envelope(k, lam_tilde: float, E_norm: float, cfg: DynamicsConfig):
    """(1 - eta)^k |alpha - lambda~| + ||E|| for the depth-1 channel."""
    if cfg.N != 1 or not 0 < cfg.eta < 1:
        raise OutOfRegimeError("the depth-1 envelope needs N = 1 and eta in (0, 1)")
    k = np.asarray(k, dtype=float)
    return (1.0 - cfg.eta) ** k * abs(cfg.alpha - lam_tilde) + E_norm


# -- report ------------------------------------------------------------------------------------


@dataclass
class BoundCheck:
    """One theorem bound against its measured counterpart.

    ``holds`` is ``None`` when the hypotheses fail: the comparison is kept but
    not asserted.
    """

    name: str
    theoretical_bound: float
    empirical_value: float
    hypothesis_ok: bool
    index: int | None = None
    note: str = ""

    @property
    def margin(self) -> float:
        return self.theoretical_bound - self.empirical_value

    @property
    def holds(self) -> bool | None:
        if not self.hypothesis_ok:
            return None
        return bool(self.empirical_value <= self.theoretical_bound)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["margin"] = self.margin
        d["holds"] = self.holds
        return d


def _skip(name, reason, index=None) -> BoundCheck:
    return BoundCheck(name=name, theoretical_bound=math.nan, empirical_value=math.nan,
                      hypothesis_ok=False, index=index, note=reason)


@dataclass
class StabilityReport:
    meta: dict
    checks: list = field(default_factory=list)

    def violations(self) -> list[BoundCheck]:
        return [c for c in self.checks if c.holds is False]

    def by_name(self, name: str) -> list[BoundCheck]:
        return [c for c in self.checks if c.name == name]

    def to_dict(self) -> dict:
        return {"meta": self.meta, "checks": [c.to_dict() for c in self.checks]}


def _first_hit(values: np.ndarray, target: float, tol: float) -> int | None:
    hits = np.nonzero(np.abs(values - target) <= tol)[0]
    return int(hits[0]) if hits.size else None


def stability_report(problem: PerturbedProblem, params: WindowParams, steps: int | None = None,
                     eps_tilde: float = 1e-3, recovery_indices=None, include=None,
                     envelope_steps: int = 20000) -> StabilityReport:
    """Simulate gradient descent on W_tilde and evaluate every applicable bound.

    ``include`` restricts the families evaluated (names: weyl, davis_kahan,
    eigvec, recovery, envelope, stability, approx, shift). ``steps`` defaults
    to just past the perturbed T1. Convergence envelopes compare the channel
    limit, so channels still moving after ``envelope_steps`` are left unchecked.
    """
    fams = set(include) if include is not None else {
        "weyl", "davis_kahan", "eigvec", "recovery", "envelope", "stability", "approx", "shift"}
    N, L = params.N, params.L
    cfg = DynamicsConfig(N=N, eta=params.eta, alpha=params.alpha, max_iters=1)
    lam, lt = problem.lambdas, problem.lambdas_tilde
    n = problem.n
    e = problem.E_norm
    V, Vt = problem.decomp_hat.V, problem.decomp_tilde.V
    ds = problem.decomp_hat.delta_s
    meta = {"n": n, "L": L, "E_norm": e, "delta_s": ds, "M": problem.M,
            "lambdas": lam.tolist(), "lambdas_tilde": lt.tolist(), "eps_tilde": eps_tilde}
    report = StabilityReport(meta=meta)
    add = report.checks.append

    if "weyl" in fams:
        for i in range(n):
            add(BoundCheck("weyl", e, abs(lt[i] - lam[i]), True, index=i + 1))

    gap_ok = ds > 0 and e <= ds / 2
    if "davis_kahan" in fams or "eigvec" in fams:
        for i in range(n):
            if not ds > 0:
                note = "degenerate spectrum"
            else:
                note = "" if gap_ok else "||E|| > delta_s/2"
            sin_t = spectral.sin_theta(V[:, i], Vt[:, i])
            dist = float(np.linalg.norm(V[:, i] - Vt[:, i]))
            if "davis_kahan" in fams:
                b = spectral.davis_kahan_bound(e, ds) if ds > 0 else math.nan
                add(BoundCheck("davis_kahan", b, sin_t, gap_ok, index=i + 1, note=note))
            if "eigvec" in fams:
                b = 2 * math.sqrt(2) * e / ds if ds > 0 else math.nan
                add(BoundCheck("eigvec_distance", b, dist, gap_ok, index=i + 1, note=note))

    # perturbed window and horizon
    window = None
    window_note = ""
    try:
        T0t, T1t = perturbed_window(lt, params)
        window = (T0t, T1t)
    except (OutOfRegimeError, InputError) as err:
        window_note = str(err)
    meta["perturbed_window"] = list(window) if window else None
    if steps is None:
        steps = int(math.floor(window[1])) + 1 if window else 2000
    meta["steps"] = steps

    need_sim = fams & {"recovery", "stability", "approx"}
    trace = None
    if need_sim:
        keep = None
        if window and "approx" in fams:
            keep = (math.ceil(window[0]), min(math.floor(window[1]), steps))
        trace = trace_product(problem.W_tilde, cfg, steps, bases={"hat": V}, factor_basis=Vt, keep=keep)
        meta["final_eff_rank"] = float(trace.eff_rank[-1])

    if "recovery" in fams:
        idx = recovery_indices if recovery_indices is not None else range(1, n + 1)
        rec_ok = gap_ok and params.eta < recovery_step_limit(problem, N) and lam[-1] > 0
        for i in idx:
            if not ds > 0:
                add(_skip("eigen_recovery", "degenerate spectrum", i))
                continue
            target = max(lt[i - 1], 0.0) ** (1.0 / N)
            hit = _first_hit(trace.factor_diag[:, i - 1], target, eps_tilde)
            if hit is None:
                add(_skip("eigen_recovery", "channel did not reach eps~ within the horizon", i))
                continue
            err = float(np.max(np.abs(trace.projected["hat"][hit:, i - 1] - max(lam[i - 1], 0.0))))
            if rec_ok:
                b = eigen_recovery_bound(problem, i, eps_tilde, params)
            else:
                b = (4 * math.sqrt(2) * problem.M**N / ds + 1) * e + eps_tilde * N * max(lt[i - 1], 0) ** (1 - 1 / N)
            add(BoundCheck("eigen_recovery", b, err, rec_ok, index=i,
                           note=f"from k={hit}" + ("" if rec_ok else "; hypotheses fail")))

    if "envelope" in fams:
        envs = {}
        for i in range(n):
            try:
                envs[i] = convergence_envelope(float(lam[i]), float(lt[i]), e, cfg)
            except OutOfRegimeError as err:
                add(_skip("convergence_envelope", str(err), i + 1))
        if envs:
            idx = sorted(envs)
            path = scalar_channels(lt[idx], cfg, envelope_steps)
            last, prev = path[-1], path[-2]
            for j, i in enumerate(idx):
                d = float(last[j])
                ok = abs(d**N - lt[i]) <= SCALAR_STOP or d == float(prev[j])
                gap = abs(d - max(lam[i], 0.0) ** (1.0 / N))
                note = f"stated form {envs[i].stated:.6g}"
                if not ok:
                    note += f"; not converged within {envelope_steps} steps"
                add(BoundCheck("convergence_envelope", envs[i].mvt, gap, ok, index=i + 1, note=note))

    if "stability" in fams:
        try:
            b = effective_rank_stability_bound(problem, params)
            ok = window is not None
            reason = window_note
        except OutOfRegimeError as err:
            b, ok, reason = math.nan, False, str(err)
        if window is not None and math.ceil(window[0]) <= min(math.floor(window[1]), steps):
            lo, hi = math.ceil(window[0]), min(math.floor(window[1]), steps)
            r_L = rank_L_effective_rank(lam, L)
            dev = float(np.max(np.abs(r_L - trace.eff_rank[lo:hi + 1])))
            add(BoundCheck("effective_rank_stability", b, dev, ok, note=f"k in [{lo}, {hi}] {reason}"))
        else:
            add(_skip("effective_rank_stability", reason or "empty perturbed window"))

    if "approx" in fams:
        if window is not None and trace.kept:
            try:
                b = approx_error_bound(problem, L, params)
                ok = not _stability_hypotheses(problem, params)
            except (OutOfRegimeError, DegenerateSpectrumError) as err:
                b, ok = math.nan, False
                window_note = str(err)
            W_L = spectral.best_rank_L(problem.decomp_hat, L)
            worst = max(float(np.linalg.norm(spectral.truncate_rank(w, L) - W_L))
                        for w in trace.kept.values())
            ks = sorted(trace.kept)
            add(BoundCheck("approx_error", b, worst, ok, note=f"k in [{ks[0]}, {ks[-1]}]"))
        else:
            add(_skip("approx_error", window_note or "empty perturbed window"))

    if "shift" in fams:
        try:
            T0n, T1n = t0(positive_part(lam)[:L], params), t1(float(lam[L]), params)
        except OutOfRegimeError as err:
            T0n = T1n = None
            add(_skip("t1_shift", str(err)))
            add(_skip("t0_shift", str(err)))
        if T0n is not None:
            meta["window"] = [T0n, T1n]
            for name, fn, base, pert in (("t1_shift", t1_shift_bound, T1n, window and window[1]),
                                         ("t0_shift", t0_shift_bound, T0n, window and window[0])):
                if pert is None:
                    add(_skip(name, window_note or "empty perturbed window"))
                    continue
                try:
                    b = fn(float(lam[L]), e, params)
                    add(BoundCheck(name, b, abs(pert - base), True))
                except OutOfRegimeError as err:
                    add(BoundCheck(name, math.nan, abs(pert - base), False, note=str(err)))
    return report
