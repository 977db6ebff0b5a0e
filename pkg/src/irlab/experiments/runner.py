"""Experiment drivers behind the CLI subcommands.

Each driver returns plain Python data (dicts, lists, numpy arrays); writing
files is left to :mod:`irlab.experiments.emit`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import spectral
from ..dynamics import DynamicsConfig, trace_product
from ..errors import DivergenceError, OutOfRegimeError
from ..perturbation import (NoiseModel, PerturbedProblem, e_norm_bound, perturbed_window,
                            positive_part, sample_noise, stability_report)
from ..timing import (WindowParams, alpha_star, check_gap_condition, effective_rank_bound,
                      eta_star, k_epsilon, robust_ceil, step_size_limit, window_verdict)
from .config import ExperimentConfig, SweepPoint


def verdict_dict(v) -> dict:
    return {
        "L": v.L, "T0": v.T0, "T1": v.T1, "T0_full": v.T0_full, "explicit": v.explicit,
        "nonempty": v.nonempty, "certified": v.certified,
        "alpha_star": v.alpha_star, "alpha_star_sq": None if v.alpha_star is None else v.alpha_star**2,
        "eta_star": v.eta_star, "L_prime": v.L_prime, "L_dprime": v.L_dprime,
        "window": list(v.window()) if v.window() else None,
        "gap_checks": [gap_dict(c) for c in v.gap_checks],
        "failure_reasons": list(v.failure_reasons),
    }


def gap_dict(c) -> dict:
    return {"index": c.index, "lam_hi": c.lam_hi, "lam_lo": c.lam_lo, "actual": c.actual,
            "required": c.required, "levels": c.levels, "kappa": c.kappa, "passed": c.passed,
            "domain_ok": c.domain_ok}


def rank_L_eff(lambdas, L: int) -> float:
    lam = np.abs(np.asarray(lambdas, dtype=float)[:L])
    return float(np.sum(lam) / np.max(lam))


def window_containment(eff_rank: np.ndarray, lambdas, verdict, params: WindowParams) -> dict:
    """Max |r(W_L) - r(W(k))| over the integer window against the guaranteed bound."""
    win = verdict.window()
    bound = effective_rank_bound(lambdas, params)
    if win is None:
        return {"L": params.L, "window": None, "bound": bound, "max_deviation": None, "holds": None}
    lo, hi = win[0], min(win[1], eff_rank.size - 1)
    if lo > hi:
        return {"L": params.L, "window": list(win), "bound": bound, "max_deviation": None,
                "holds": None, "note": "window lies past the horizon"}
    dev = float(np.max(np.abs(rank_L_eff(lambdas, params.L) - eff_rank[lo:hi + 1])))
    return {"L": params.L, "window": [lo, hi], "bound": bound, "max_deviation": dev,
            "holds": dev <= bound}


@dataclass
class PointResult:
    point: SweepPoint
    lambdas: np.ndarray
    k: np.ndarray
    eff_rank: np.ndarray
    loss: np.ndarray
    diag: np.ndarray
    verdicts: dict
    containment: dict

    def summary(self) -> dict:
        return {
            "label": self.point.label,
            "eta": self.point.dynamics.eta,
            "leading": list(self.point.spectrum.leading),
            "horizon": int(self.k[-1]),
            "final_eff_rank": float(self.eff_rank[-1]),
            "verdicts": {str(L): verdict_dict(v) for L, v in self.verdicts.items()},
            "containment": {str(L): c for L, c in self.containment.items()},
        }


def simulate_point(point: SweepPoint, ranks) -> PointResult:
    lam = point.eigenvalues()
    W = spectral.synthesize(point.spectrum)
    V = spectral.eigendecompose(W).V
    cfg = point.dynamics
    steps = cfg.max_iters
    try:
        tr = trace_product(W, cfg, steps, factor_basis=V)
    except DivergenceError as err:
        raise DivergenceError(f"sweep point {point.label}: {err}", err.iteration, err.partial) from err
    verdicts, contain = {}, {}
    for L in ranks:
        params = point.window(L)
        v = window_verdict(lam, params)
        verdicts[L] = v
        if v.certified:
            contain[L] = window_containment(tr.eff_rank, lam, v, params)
    return PointResult(point=point, lambdas=lam, k=np.arange(steps + 1), eff_rank=tr.eff_rank,
                       loss=tr.loss, diag=tr.factor_diag, verdicts=verdicts, containment=contain)


def run_observability(config: ExperimentConfig) -> list[PointResult]:
    """Noiseless runs for every sweep point, with window verdicts per rank."""
    return [simulate_point(p, config.ranks(p)) for p in config.sweep_points()]


# -- certify ---------------------------------------------------------------------------------


def certify_point(point: SweepPoint, ranks) -> dict:
    lam = [float(x) for x in point.eigenvalues()]
    lead = list(point.spectrum.leading)
    base = point.window(1)
    pairs = [gap_dict(c) for c in check_gap_condition(lam, base.replace(L=len(lead)))]
    per_L = {}
    for L in ranks:
        params = point.window(L)
        v = window_verdict(lam, params)
        d = verdict_dict(v)
        d["step_size_limit"] = step_size_limit(lam, params)
        per_L[str(L)] = d
    return {"label": point.label, "eta": point.dynamics.eta, "alpha": point.dynamics.alpha,
            "eps": point.eps, "eps_prime": point.eps_prime, "leading": lead,
            "K_eps": k_epsilon(point.eps), "pairs": pairs, "ranks": per_L}


def certify(config: ExperimentConfig) -> list[dict]:
    return [certify_point(p, config.ranks(p)) for p in config.sweep_points()]


def format_certify(results: list[dict]) -> str:
    lines = []
    for r in results:
        lines.append(f"[{r['label']}] eta={r['eta']:g} alpha={r['alpha']:g} eps={r['eps']:g} "
                     f"eps'={r['eps_prime']:g} leading={r['leading']}")
        lines.append(f"  K_eps = {r['K_eps']:.4f}")
        for p in r["pairs"]:
            mark = "pass" if p["passed"] else "FAIL"
            lines.append(f"  gap l={p['index']}: lambda_l - lambda_l+1 = {p['actual']:.4g}, "
                         f"required = {p['required']:.4f} (levels {p['levels']}, kappa {p['kappa']:.6g}) {mark}")
        for L, d in r["ranks"].items():
            a2 = d["alpha_star_sq"]
            a2s = f"{a2:.4g}" if a2 is not None else "n/a"
            es = f"{d['eta_star']:.4g}" if d["eta_star"] is not None else "n/a"
            lines.append(f"  L={L}: T0={d['T0']:.2f} T1={d['T1']:.2f} (alpha*)^2={a2s} eta*={es} "
                         f"nonempty={d['nonempty']} certified={d['certified']}")
            for reason in d["failure_reasons"]:
                lines.append(f"      - {reason}")
    return "\n".join(lines)


# -- noise sweep --------------------------------------------------------------------------------


def plateau_exit(eff_rank: np.ndarray, lambdas, L: int) -> int | None:
    """First iteration past the rank-L plateau.

    From identical initialization r(W(k)) starts at n, drops toward 1 while
    the top channel is learned, then climbs through the rank-j values. The
    plateau is reached once r falls below the midpoint between the rank-(L-1)
    and rank-L values (below the rank-L/rank-(L+1) midpoint when L = 1); it is
    left at the first later iteration where r reaches the midpoint between the
    rank-L and rank-(L+1) values.
    """
    r = [rank_L_eff(lambdas, j) for j in range(1, L + 2)]
    leave_at = 0.5 * (r[L - 1] + r[L])
    reach_at = 0.5 * (r[L - 2] + r[L - 1]) if L >= 2 else leave_at
    below = np.nonzero(eff_rank < reach_at)[0]
    if not below.size:
        return None
    after = np.nonzero(eff_rank[below[0]:] >= leave_at)[0]
    return int(below[0] + after[0]) if after.size else None


@dataclass
class LevelResult:
    level: float
    sigma: float
    seed: int
    problem: PerturbedProblem
    frob_err: np.ndarray
    eff_rank: np.ndarray
    windows: dict
    exit_iteration: int | None
    report: object = None

    def summary(self, L: int) -> dict:
        lam, lt = self.problem.lambdas, self.problem.lambdas_tilde
        return {
            "level": self.level, "sigma": self.sigma, "seed": self.seed,
            "E_norm": self.problem.E_norm,
            "lambdas_tilde_top": lt[: L + 2].tolist(),
            "shift_up": bool(lt[L] > lam[L]),
            "windows": {str(k): (list(v) if v else None) for k, v in self.windows.items()},
            "terminal_frob_err": float(self.frob_err[-1]),
            "terminal_eff_rank": float(self.eff_rank[-1]),
            "plateau_exit": self.exit_iteration,
            "stability": None if self.report is None else self.report.to_dict(),
        }


def _windows(lt, point: SweepPoint, ranks) -> dict:
    out = {}
    for L in ranks:
        try:
            out[L] = perturbed_window(lt, point.window(L))
        except OutOfRegimeError:
            out[L] = None
    return out


def run_noise_sweep(config: ExperimentConfig, seed: int | None = None) -> dict:
    """Perturbed runs for every noise level with one shared seed.

    The same standard-normal draw is reused at every level (E scales with the
    level), so curves differ only through the noise magnitude.
    """
    raw = config.raw
    seed = int(raw["noise"]["seed"] if seed is None else seed)
    base = config.with_overrides(sweep=None).sweep_points()[0]
    L = config.noise_rank()
    ranks = list(range(1, len(base.spectrum.leading) + 1))
    W = spectral.synthesize(base.spectrum)
    n = base.spectrum.n
    steps = base.dynamics.max_iters
    levels = []
    for c in config.noise_levels():
        sigma = config.sigma_for(c)
        model = NoiseModel(sigma=sigma, seed=seed, n=n, delta_prime=float(raw["noise"]["delta_prime"]),
                           C_abs=float(raw["noise"]["C_abs"]))
        E = sample_noise(model)
        prob = PerturbedProblem.build(W, E, N=base.dynamics.N, alpha=base.dynamics.alpha)
        try:
            tr = trace_product(prob.W_tilde, base.dynamics, steps, reference=W)
        except DivergenceError as err:
            raise DivergenceError(f"noise level {c:g}: {err}", err.iteration, err.partial) from err
        lt = prob.lambdas_tilde
        rep = stability_report(prob, base.window(L), include=["weyl", "davis_kahan", "eigvec",
                                                              "stability", "approx", "shift"])
        rep.meta["e_norm_reference"] = e_norm_bound(model)
        levels.append(LevelResult(level=c, sigma=sigma, seed=seed, problem=prob, frob_err=tr.ref_err,
                                  eff_rank=tr.eff_rank, windows=_windows(lt, base, ranks),
                                  exit_iteration=plateau_exit(tr.eff_rank, prob.lambdas, L), report=rep))
    return {"point": base, "L": L, "levels": levels, "summary": noise_summary(levels, L)}


def _strictly(seq, op) -> bool:
    return all(op(a, b) for a, b in zip(seq, seq[1:]))


def noise_summary(levels: list[LevelResult], L: int) -> dict:
    ordered = sorted(levels, key=lambda r: r.level)
    frob = [r.frob_err[-1] for r in ordered]
    T1s = [r.windows.get(L)[1] if r.windows.get(L) else math.nan for r in ordered]
    exits = [r.exit_iteration for r in ordered]
    moved_down = [r.level for r in ordered
                  if r.level > 0 and r.problem.lambdas_tilde[L] <= r.problem.lambdas[L]]
    noisy = [r for r in ordered if r.level > 0]
    lt_next = [r.problem.lambdas_tilde[L] for r in ordered]
    return {
        "levels": [r.level for r in ordered],
        "terminal_frob_err": frob,
        "terminal_frob_increasing": _strictly(frob, lambda a, b: a < b),
        "T1_tilde": T1s,
        "T1_tilde_decreasing": _strictly(T1s, lambda a, b: a > b),
        "lambda_next_tilde": lt_next,
        "lambda_next_increasing": _strictly(lt_next, lambda a, b: a < b),
        "plateau_exit": exits,
        "plateau_exit_decreasing": None if any(e is None for e in exits)
        else _strictly(exits, lambda a, b: a > b),
        "flag_moved_down": moved_down,
        "all_shift_up": bool(noisy) and not moved_down,
    }


# -- bounds ---------------------------------------------------------------------------------------


def bounds(config: ExperimentConfig, seeds) -> dict:
    """Stability reports for every positive noise level and seed (no figure data)."""
    raw = config.raw
    base = config.with_overrides(sweep=None).sweep_points()[0]
    L = config.noise_rank()
    W = spectral.synthesize(base.spectrum)
    n = base.spectrum.n
    runs = []
    for s in seeds:
        for c in config.noise_levels():
            if c == 0:
                continue
            model = NoiseModel(sigma=config.sigma_for(c), seed=int(s), n=n,
                               delta_prime=float(raw["noise"]["delta_prime"]),
                               C_abs=float(raw["noise"]["C_abs"]))
            prob = PerturbedProblem.build(W, sample_noise(model), N=base.dynamics.N, alpha=base.dynamics.alpha)
            rep = stability_report(prob, base.window(L))
            rep.meta.update(level=c, seed=int(s), e_norm_reference=e_norm_bound(model))
            runs.append(rep)
    violations = sum(len(r.violations()) for r in runs)
    skipped = sum(1 for r in runs for c in r.checks if c.holds is None)
    return {"L": L, "runs": runs, "violations": violations, "unchecked": skipped}
