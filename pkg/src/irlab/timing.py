"""Window calculus for the depth-2 low-rank plateaus.

``T0`` is the iteration by which the top-L channels have been fitted and ``T1``
the iteration at which channel L+1 starts to leave its initial scale; the
rank-L plateau is observable on ``[T0, T1]``. The helpers here evaluate these
thresholds, the A/B/C split of ``T(x) = T2Id(x, sqrt(x) eps / 8)``, the gap
condition that makes ``T0`` collapse to ``T(lambda_L)``, and the initialization
and step-size thresholds ``alpha*`` and ``eta*``.

All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError, OutOfRegimeError, WindowImpossibleError

SQRT_THIRD = math.sqrt(1.0 / 3.0)
ABS_LOG_C = abs(math.log(1.0 - SQRT_THIRD))
EPS_MAX = 8.0 * (1.0 - SQRT_THIRD)


def c_N(N: int) -> float:
    return (N - 1) / (2 * N - 1)


@dataclass(frozen=True)
class WindowParams:
    """Accuracy and scale parameters of the rank-L window.

    ``eps`` controls how well the top-L channels are fitted at ``T0``;
    ``eps_prime`` how far channel L+1 may have grown by ``T1``.
    """

    L: int = 1
    eps: float = 0.05
    eps_prime: float = 0.1
    alpha: float = 0.01
    eta: float = 0.005
    N: int = 2

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise InputError(f"L must be a positive integer, got {self.L}")
        if int(self.N) != self.N or self.N < 2:
            raise InputError(f"window calculus needs N >= 2, got {self.N}")
        if not 0 < self.eps < 1:
            raise InputError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.eps_prime < self.c_N:
            raise InputError(f"eps_prime must lie in (0, {self.c_N:.6g}), got {self.eps_prime}")
        if not self.alpha > 0:
            raise InputError(f"alpha must be positive, got {self.alpha}")
        if not self.eta > 0:
            raise InputError(f"eta must be positive, got {self.eta}")

    @property
    def c_N(self) -> float:
        return c_N(self.N)

    def replace(self, **changes) -> "WindowParams":
        fields = dict(L=self.L, eps=self.eps, eps_prime=self.eps_prime,
                      alpha=self.alpha, eta=self.eta, N=self.N)
        fields.update(changes)
        return WindowParams(**fields)

    def domain(self) -> tuple[float, float]:
        """Admissible interval D = [alpha^2/eps', 1/(4 eta)] for T(x)."""
        return self.alpha**2 / self.eps_prime, 1.0 / (4.0 * self.eta)


def robust_ceil(v: float) -> int:
    # values within a few ulps of an integer are treated as that integer, so the
    # level boundaries x = 3 alpha^2 z^2 do not flip on rounding noise
    r = round(v)
    if abs(v - r) <= 8 * np.finfo(float).eps * max(1.0, abs(v)):
        return int(r)
    return int(math.ceil(v))


def level_index(x: float, alpha: float) -> int:
    """z with x in I_z, i.e. ceil(sqrt(x/3)/alpha)."""
    if x < 0:
        raise InputError("level sets are defined for x >= 0")
    return robust_ceil(math.sqrt(x / 3.0) / alpha)


def k_epsilon(eps: float) -> float:
    """K_eps = ln(8/eps) - |ln(1 - sqrt(1/3))|, positive for eps < 8(1 - sqrt(1/3))."""
    if not eps > 0:
        raise OutOfRegimeError(f"eps must be positive, got {eps}")
    if eps > EPS_MAX * (1 + 1e-12):
        raise OutOfRegimeError(f"K_eps <= 0 for eps={eps} >= {EPS_MAX:.6g}")
    return max(0.0, math.log(8.0 / eps) - ABS_LOG_C)


def _rate_log(eta: float, lam: float) -> float:
    q = 2.0 * eta * lam / 3.0
    if not 0 < q < 1:
        raise OutOfRegimeError(f"need 0 < (2/3) eta lambda < 1, got {q:.6g} (eta={eta}, lambda={lam})")
    return abs(math.log1p(-q))


def t2id_raw(lam: float, eps: float, alpha: float, eta: float) -> float:
    """Depth-2 hitting-time estimate T2Id(lam, eps, alpha, eta).

    The first term is negative when lam/alpha^2 - 1 < 2; the raw value is
    returned in that case.
    """
    if not lam > alpha**2:
        raise OutOfRegimeError(f"need lambda > alpha^2, got lambda={lam}, alpha^2={alpha**2}")
    if not eps > 0:
        raise OutOfRegimeError(f"accuracy must be positive, got {eps}")
    first = (math.log(lam / alpha**2 - 1.0) - math.log(2.0)) / (2.0 * eta * lam)
    middle = level_index(lam, alpha)
    last = (math.log(math.sqrt(lam) / eps) - ABS_LOG_C) / _rate_log(eta, lam)
    return first + middle + last


def t2id(lam: float, eps: float, params: WindowParams) -> float:
    if params.N != 2:
        raise OutOfRegimeError("closed-form T2Id is only available for N = 2")
    return t2id_raw(lam, eps, params.alpha, params.eta)


def _check_leading(leading, alpha):
    lead = [float(x) for x in leading]
    if not lead:
        raise InputError("need at least one leading eigenvalue")
    if any(b >= a for a, b in zip(lead, lead[1:])):
        raise InputError("leading eigenvalues must be strictly descending")
    if lead[-1] <= alpha**2:
        raise OutOfRegimeError(f"leading eigenvalue {lead[-1]} does not exceed alpha^2")
    return lead


def t0_candidates(leading, params: WindowParams) -> list[float]:
    """[T2Id(l1, l1/2), T(l_1), ..., T(l_L)] whose maximum is T0."""
    lead = _check_leading(leading, params.alpha)
    out = [t2id(lead[0], lead[0] / 2.0, params)]
    out += [t2id(lam, math.sqrt(lam) / 8.0 * params.eps, params) for lam in lead]
    return out


def t0(leading, params: WindowParams) -> float:
    """T0 as the full maximum over its L + 1 candidates."""
    return max(t0_candidates(leading, params))


def t1(lam_next: float, params: WindowParams) -> float:
    """(1/(2 eta l)) [ln(l/alpha^2 - 1) - ln(1/eps' - 1)] at l = lambda_{L+1}."""
    a2 = params.alpha**2
    if not lam_next > a2:
        raise OutOfRegimeError(f"need lambda_(L+1) > alpha^2, got {lam_next} <= {a2}")
    h = math.log(lam_next / a2 - 1.0)
    c = math.log(1.0 / params.eps_prime - 1.0)
    return (h - c) / (2.0 * params.eta * lam_next)


# -- T(x) = A + B + C -------------------------------------------------------------


def part_A(x: float, params: WindowParams) -> float:
    a2 = params.alpha**2
    if not x > a2:
        raise OutOfRegimeError("A(x) needs x > alpha^2")
    return (math.log(x / a2 - 1.0) - math.log(2.0)) / (2.0 * params.eta * x)


def part_B(x: float, params: WindowParams) -> int:
    return level_index(x, params.alpha)


def part_C(x: float, params: WindowParams) -> float:
    return k_epsilon(params.eps) / _rate_log(params.eta, x)


def dA(x: float, params: WindowParams) -> float:
    """Closed-form A'(x) = -phi(x/alpha^2 - 1) / (2 eta x^2)."""
    return -phi(x / params.alpha**2 - 1.0) / (2.0 * params.eta * x * x)


def dC(x: float, params: WindowParams) -> float:
    q = 2.0 * params.eta * x / 3.0
    return -2.0 * params.eta * k_epsilon(params.eps) / (3.0 * (1.0 - q) * math.log1p(-q) ** 2)


@dataclass(frozen=True)
class TimingBreakdown:
    x: float
    A: float
    B: int
    C: float
    T_value: float
    level: int
    domain_ok: bool


def in_domain(x: float, params: WindowParams) -> bool:
    lo, hi = params.domain()
    return lo <= x <= hi


def decompose_T(x: float, params: WindowParams, strict: bool = True) -> TimingBreakdown:
    """Split T(x) into A + B + C.

    With ``strict`` a point outside D raises :class:`DomainError`; otherwise
    the components are still evaluated and ``domain_ok`` is false.
    """
    ok = in_domain(x, params)
    if strict and not ok:
        lo, hi = params.domain()
        raise DomainError(f"x={x} lies outside D=[{lo:.6g}, {hi:.6g}]")
    a, b, c = part_A(x, params), part_B(x, params), part_C(x, params)
    return TimingBreakdown(x=x, A=a, B=b, C=c, T_value=a + b + c, level=b, domain_ok=ok)


def T_of_x(x: float, params: WindowParams) -> float:
    return t2id(x, math.sqrt(x) / 8.0 * params.eps, params)


# -- gap condition ----------------------------------------------------------------


def kappa(lam_hi: float, lam_lo: float, params: WindowParams) -> float:
    """Guaranteed decay rate of A + C between lam_lo and lam_hi.

    2 eta K / (3 (1 - (2/3) eta lam_lo) ln(1 - (2/3) eta lam_hi)^2)
    """
    log_hi = _rate_log(params.eta, lam_hi)
    _rate_log(params.eta, lam_lo)
    k = k_epsilon(params.eps)
    return 2.0 * params.eta * k / (3.0 * (1.0 - 2.0 * params.eta * lam_lo / 3.0) * log_hi**2)


def level_gap(lam_hi: float, lam_lo: float, alpha: float) -> int:
    return level_index(lam_hi, alpha) - level_index(lam_lo, alpha)


def required_gap(lam_hi: float, lam_lo: float, params: WindowParams) -> float:
    """Smallest lam_hi - lam_lo for which A + C outweighs the jump in B."""
    return level_gap(lam_hi, lam_lo, params.alpha) / kappa(lam_hi, lam_lo, params)


@dataclass(frozen=True)
class GapCheck:
    index: int  # 1-based l of the pair (lambda_l, lambda_l+1)
    lam_hi: float
    lam_lo: float
    actual: float
    required: float
    levels: int
    kappa: float
    passed: bool
    domain_ok: bool


def gap_check(index: int, lam_hi: float, lam_lo: float, params: WindowParams) -> GapCheck:
    try:
        kap = kappa(lam_hi, lam_lo, params)
    except OutOfRegimeError:
        kap = 0.0
    m = level_gap(lam_hi, lam_lo, params.alpha)
    req = m / kap if kap > 0 else math.inf
    actual = lam_hi - lam_lo
    dom = in_domain(lam_lo, params) and in_domain(lam_hi, params)
    return GapCheck(index=index, lam_hi=lam_hi, lam_lo=lam_lo, actual=actual, required=req,
                    levels=m, kappa=kap, passed=actual >= req, domain_ok=dom)


def check_gap_condition(spectrum, params: WindowParams) -> list[GapCheck]:
    """Gap test for every adjacent pair among the top-L eigenvalues."""
    lead = [float(x) for x in list(spectrum)[: params.L]]
    return [gap_check(i + 1, lead[i], lead[i + 1], params) for i in range(len(lead) - 1)]


# -- alpha*, eta* -------------------------------------------------------------------


def alpha_star(lam_L: float, lam_next: float, params: WindowParams) -> float:
    """Initialization threshold below which the step-size threshold is positive.

    exp([lam_L ln(eps' lam_next) - lam_next (ln lam_L - ln 2 + 3 K)] / (2 (lam_L - lam_next)))
    """
    if lam_L <= 0 or lam_next <= 0:
        raise OutOfRegimeError("alpha* needs positive eigenvalues")
    if lam_L == lam_next:
        raise OutOfRegimeError("alpha* is undefined for equal eigenvalues (zero gap)")
    k = k_epsilon(params.eps)
    num = lam_L * math.log(params.eps_prime * lam_next) - lam_next * (
        math.log(lam_L) - math.log(2.0) + 3.0 * k)
    return math.exp(num / (2.0 * (lam_L - lam_next)))


def g1(lam_L: float, lam_next: float, params: WindowParams) -> float:
    """Numerator of eta*: the eta-free part of a lower bound on 2 eta (T1 - T0)."""
    a2 = params.alpha**2
    if not (lam_L > a2 and lam_next > a2):
        raise OutOfRegimeError("g1 needs both eigenvalues above alpha^2")
    k = k_epsilon(params.eps)
    upper = (math.log(lam_next / a2 - 1.0) - math.log(1.0 / params.eps_prime - 1.0)) / lam_next
    lower = (math.log(lam_L / a2 - 1.0) - math.log(2.0) + 3.0 * k) / lam_L
    return upper - lower


def g1_lower(lam_L: float, lam_next: float, params: WindowParams) -> float:
    """The alpha-explicit lower bound on g1 whose sign change defines alpha*."""
    k = k_epsilon(params.eps)
    a = params.alpha
    return (2.0 * (lam_next - lam_L) * math.log(a) / (lam_L * lam_next)
            + math.log(params.eps_prime * lam_next) / lam_next
            - (math.log(lam_L) - math.log(2.0) + 3.0 * k) / lam_L)


def eta_star(lam_L: float, lam_next: float, params: WindowParams) -> float:
    """Step-size threshold g1 / (2 ceil(sqrt(lam_L/3)/alpha))."""
    num = g1(lam_L, lam_next, params)
    if not num > 0:
        raise WindowImpossibleError(f"step-size threshold numerator is {num:.6g} <= 0")
    return num / (2.0 * level_index(lam_L, params.alpha))


# -- verdict ----------------------------------------------------------------------------


def rank_indices(spectrum, params: WindowParams) -> tuple[int, int]:
    """(L', L''): the last 1-based indices with eps' lam > alpha^N and lam > alpha^N."""
    lam = np.asarray(spectrum, dtype=float)
    aN = params.alpha**params.N
    lp = np.nonzero(params.eps_prime * lam > aN)[0]
    ldp = np.nonzero(lam > aN)[0]
    return (int(lp[-1]) + 1 if lp.size else 0, int(ldp[-1]) + 1 if ldp.size else 0)


def step_size_limit(spectrum, params: WindowParams) -> float:
    """eta bound 1/((3N-2) max(alpha^(N-2), lambda_1^(2-2/N)))."""
    N = params.N
    lam1 = max(float(spectrum[0]), 0.0)
    return 1.0 / ((3 * N - 2) * max(params.alpha ** (N - 2), lam1 ** (2 - 2 / N)))


@dataclass(frozen=True)
class WindowVerdict:
    """Outcome of the window analysis for one rank L.

    ``nonempty`` compares T0 and T1 directly. ``certified`` additionally needs
    the hypotheses under which the effective-rank bound is guaranteed on the
    window (``alpha^N < eps' lambda_(L+1)`` and the step-size limit).
    """

    L: int
    T0: float
    T1: float
    T0_full: float
    explicit: bool
    nonempty: bool
    certified: bool
    gap_checks: list
    alpha_star: float | None
    eta_star: float | None
    L_prime: int
    L_dprime: int
    failure_reasons: list = field(default_factory=list)

    def window(self) -> tuple[int, int] | None:
        """Integer iterations [ceil(T0), floor(T1)], or ``None`` when empty."""
        lo, hi = robust_ceil(self.T0), math.floor(self.T1)
        return (lo, hi) if self.nonempty and lo <= hi else None


def window_verdict(spectrum, params: WindowParams) -> WindowVerdict:
    lam = [float(x) for x in spectrum]
    L = params.L
    if L >= len(lam):
        raise InputError(f"L={L} leaves no lambda_(L+1) in a spectrum of size {len(lam)}")
    if params.N != 2:
        raise OutOfRegimeError("closed-form window thresholds exist only for N = 2")
    leading, lam_next = lam[:L], lam[L]
    reasons = []
    a = params.alpha
    theorem_ok = True
    if not a**params.N < params.eps_prime * lam_next:
        reasons.append(f"alpha^N = {a**params.N:.6g} >= eps' lambda_(L+1) = {params.eps_prime * lam_next:.6g}")
        theorem_ok = False
    limit = step_size_limit(lam, params)
    if not params.eta < limit:
        reasons.append(f"eta = {params.eta:.6g} >= step-size limit {limit:.6g}")
        theorem_ok = False
    explicit_ok = True
    if lam[0] < 1:
        reasons.append(f"lambda_1 = {lam[0]:.6g} < 1")
        explicit_ok = False
    floor = 2 * (math.e + 1) * a**2
    if leading[-1] < floor:
        reasons.append(f"lambda_L = {leading[-1]:.6g} < 2(e+1) alpha^2 = {floor:.6g}")
        explicit_ok = False
    checks = check_gap_condition(lam, params)
    for c in checks:
        if not c.passed:
            reasons.append(f"gap lambda_{c.index} - lambda_{c.index + 1} = {c.actual:.6g} "
                           f"< required {c.required:.6g}")
            explicit_ok = False
        if not c.domain_ok:
            reasons.append(f"pair ({c.lam_hi:.6g}, {c.lam_lo:.6g}) leaves D = "
                           f"[{params.domain()[0]:.6g}, {params.domain()[1]:.6g}]")
    a_star = e_star = None
    try:
        a_star = alpha_star(leading[-1], lam_next, params)
        if not a < a_star:
            reasons.append(f"alpha = {a:.6g} >= alpha* = {a_star:.6g}")
    except OutOfRegimeError as err:
        reasons.append(f"alpha*: {err}")
    try:
        e_star = eta_star(leading[-1], lam_next, params)
        if not params.eta < e_star:
            reasons.append(f"eta = {params.eta:.6g} >= eta* = {e_star:.6g}")
    except OutOfRegimeError as err:
        reasons.append(f"eta*: {err}")

    T0_full = t0(leading, params)
    if explicit_ok:
        T0 = T_of_x(leading[-1], params)
    else:
        T0 = T0_full
    T1 = t1(lam_next, params)
    nonempty = T0 < T1
    if not nonempty:
        reasons.append(f"T0 = {T0:.6g} >= T1 = {T1:.6g}")
    lp, ldp = rank_indices(lam, params)
    return WindowVerdict(L=L, T0=T0, T1=T1, T0_full=T0_full, explicit=explicit_ok,
                         nonempty=nonempty, certified=nonempty and theorem_ok,
                         gap_checks=checks, alpha_star=a_star, eta_star=e_star,
                         L_prime=lp, L_dprime=ldp, failure_reasons=reasons)


def effective_rank_bound(spectrum, params: WindowParams) -> float:
    """Guaranteed |r(W_L) - r(W(k))| on the window for a nonnegative spectrum.

    eps r(W_L) + (2(L'-L)/c_N)(lambda_(L+1)/lambda_1) eps' + (n-L') 2 alpha^N/(eps' lambda_1)
    """
    lam = np.asarray(spectrum, dtype=float)
    L, n = params.L, lam.size
    if L >= n:
        raise InputError("effective-rank bound needs lambda_(L+1)")
    lp, _ = rank_indices(lam, params)
    lam1 = lam[0]
    r_L = float(np.sum(np.abs(lam[:L])) / np.max(np.abs(lam[:L])))
    return (params.eps * r_L
            + 2.0 * (lp - L) / params.c_N * lam[L] / lam1 * params.eps_prime
            + (n - lp) * 2.0 * params.alpha**params.N / (params.eps_prime * lam1))


# -- phi ----------------------------------------------------------------------------------


def phi(t: float) -> float:
    """ln(t/2) - 1/t - 1."""
    if not t > 0:
        raise InputError("phi is defined for t > 0")
    return math.log(t / 2.0) - 1.0 / t - 1.0


def phi_root(tol: float = 1e-12) -> float:
    """Unique positive root of phi, by bisection on (0, 2e + 1]."""
    lo, hi = 1e-12, 2.0 * math.e + 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
