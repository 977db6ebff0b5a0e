"""Command line front end: ``irlab {certify,observe,noise,bounds}``.

Exit codes: 0 success, 2 config/input error, 3 hypotheses violated under
``--strict``, 4 divergence, 5 output error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import ConfigError, IrlabError, OutOfRegimeError
from . import emit, runner
from .config import ExperimentConfig

log = logging.getLogger("irlab")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults embedded; {} is valid)")
    common.add_argument("--out", help="output directory (overrides IRLAB_OUT and the config)")
    common.add_argument("--seed", type=int, help="noise seed (u64)")
    common.add_argument("--seeds", type=int, help="number of consecutive seeds for Monte-Carlo runs")
    common.add_argument("--emit", help="comma-separated subset of csv,svg,report")
    axis = common.add_mutually_exclusive_group()
    axis.add_argument("--log-x", dest="log_x", action="store_true", default=None,
                      help="logarithmic iteration axis (default)")
    axis.add_argument("--linear-x", dest="log_x", action="store_false", help="linear iteration axis")
    common.add_argument("--strict", action="store_true",
                        help="exit with status 3 when any theorem hypothesis is violated")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="irlab", description="Low-rank window and stability experiments "
                                "for gradient descent on deep matrix factorization.")
    p.add_argument("--version", action="version", version=f"irlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("certify", parents=[common], help="window thresholds and observability conditions")
    sub.add_parser("observe", parents=[common], help="noiseless effective-rank runs over the sweep")
    sub.add_parser("noise", parents=[common], help="perturbed runs over the noise levels")
    sub.add_parser("bounds", parents=[common], help="stability report over seeds and noise levels")
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
    over = {}
    if args.emit is not None:
        kinds = [e.strip() for e in args.emit.split(",") if e.strip()]
        over["emit"] = kinds
    if args.log_x is not None:
        over["log_x"] = args.log_x
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        over["noise.seed"] = args.seed
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be at least 1")
        over["noise.seeds"] = args.seeds
    return cfg.with_overrides(**over) if over else cfg


def output_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("IRLAB_OUT")
    if env:
        return Path(env)
    return Path(cfg.raw["output_dir"])


def _every(n_rows: int, stride: int):
    idx = list(range(0, n_rows, stride))
    if idx[-1] != n_rows - 1:
        idx.append(n_rows - 1)
    return idx


def _observe(cfg: ExperimentConfig, out: Path, strict: bool) -> list[Path]:
    results = runner.run_observability(cfg)
    files = []
    stride = int(cfg.raw["csv_stride"])
    axis = cfg.raw["sweep"]["axis"] if cfg.raw["sweep"] else "base"
    if "csv" in cfg.emit:
        for r in results:
            n = r.diag.shape[1]
            header = ["sweep_id", "k", "eff_rank", "loss"] + [f"d_{i + 1}" for i in range(n)]
            rows = ([r.point.label, int(r.k[i]), r.eff_rank[i], r.loss[i], *r.diag[i]]
                    for i in _every(r.k.size, stride))
            files.append(emit.emit_csv(header, rows, out / f"observe_{r.point.label}.csv"))
    if "svg" in cfg.emit:
        series = {r.point.label: (r.k, r.eff_rank) for r in results}
        wins = [(v.T0, v.T1, f"{r.point.label} L={L}")
                for r in results for L, v in r.verdicts.items()
                if v.certified and r.containment.get(L, {}).get("holds")]
        files.append(emit.emit_svg(series, out / f"observe_{axis}.svg", "iteration k", "effective rank r(W(k))",
                                   title="effective rank along gradient descent",
                                   log_x=bool(cfg.raw["log_x"]), windows=wins))
    report = {"command": "observe", "config_sha256": cfg.digest(),
              "points": {r.point.label: r.summary() for r in results}}
    if "report" in cfg.emit:
        files.append(emit.emit_report(report, out / "observe_report.json"))
    for r in results:
        for L, v in r.verdicts.items():
            log.info("%s L=%d T0=%.2f T1=%.2f nonempty=%s certified=%s", r.point.label, L,
                     v.T0, v.T1, v.nonempty, v.certified)
    bad = [(r.point.label, L) for r in results for L, c in r.containment.items() if c.get("holds") is False]
    if bad:
        log.warning("effective-rank containment failed on certified windows: %s", bad)
    if strict:
        unc = [(r.point.label, L) for r in results for L, v in r.verdicts.items() if not v.certified]
        if unc or bad:
            raise OutOfRegimeError(f"uncertified windows {unc}; containment failures {bad}")
    return files


def _certify(cfg: ExperimentConfig, out: Path, strict: bool) -> list[Path]:
    results = runner.certify(cfg)
    print(runner.format_certify(results))
    files = []
    if "report" in cfg.emit:
        files.append(emit.emit_report({"command": "certify", "config_sha256": cfg.digest(),
                                       "points": results}, out / "certify_report.json"))
    if strict:
        unc = [(r["label"], L) for r in results for L, d in r["ranks"].items() if not d["certified"]]
        if unc:
            raise OutOfRegimeError(f"windows not certified: {unc}")
    return files


def _noise(cfg: ExperimentConfig, out: Path, strict: bool) -> list[Path]:
    res = runner.run_noise_sweep(cfg)
    L = res["L"]
    levels = sorted(res["levels"], key=lambda r: r.level)
    files = []
    stride = int(cfg.raw["csv_stride"])
    if "csv" in cfg.emit:
        for r in levels:
            tag = format(r.level, "g")
            idx = _every(r.frob_err.size, stride)
            files.append(emit.emit_csv(["level", "k", "frob_err"], ([r.level, i, r.frob_err[i]] for i in idx),
                                       out / f"noise_frob_c_{tag}.csv"))
            files.append(emit.emit_csv(["level", "k", "eff_rank"], ([r.level, i, r.eff_rank[i]] for i in idx),
                                       out / f"noise_rank_c_{tag}.csv"))
    if "svg" in cfg.emit:
        log_x = bool(cfg.raw["log_x"])
        ks = {r.level: np.arange(r.frob_err.size) for r in levels}
        files.append(emit.emit_svg({f"c={r.level:g}": (ks[r.level], r.frob_err) for r in levels},
                                   out / "noise_approx.svg", "iteration k", "||W(k) - W_hat||_F",
                                   title="approximation error by noise level", log_x=log_x, log_y=True))
        wins = [(r.windows[L][0], r.windows[L][1], f"c={r.level:g} L={L}")
                for r in levels if r.windows.get(L)]
        files.append(emit.emit_svg({f"c={r.level:g}": (ks[r.level], r.eff_rank) for r in levels},
                                   out / "noise_rank.svg", "iteration k", "effective rank r(W(k))",
                                   title="effective rank by noise level", log_x=log_x, windows=wins))
    report = {"command": "noise", "config_sha256": cfg.digest(), "L": L,
              "levels": [r.summary(L) for r in levels], "summary": res["summary"]}
    if "report" in cfg.emit:
        files.append(emit.emit_report(report, out / "noise_report.json"))
    if res["summary"]["flag_moved_down"]:
        log.warning("lambda_(L+1) moved down at levels %s on seed %d", res["summary"]["flag_moved_down"],
                    levels[0].seed)
    viol = [(r.level, c.name, c.index) for r in levels for c in r.report.violations()]
    if viol:
        log.warning("bound violations: %s", viol)
    if strict:
        skipped = [(r.level, c.name) for r in levels if r.level > 0 for c in r.report.checks if c.holds is None]
        if skipped or viol:
            raise OutOfRegimeError(f"hypotheses violated for {sorted(set(skipped))}; violations {viol}")
    return files


def _bounds(cfg: ExperimentConfig, out: Path, strict: bool) -> list[Path]:
    seed0 = int(cfg.raw["noise"]["seed"])
    seeds = list(range(seed0, seed0 + int(cfg.raw["noise"]["seeds"])))
    res = runner.bounds(cfg, seeds)
    files = []
    if "csv" in cfg.emit:
        header = ["seed", "level", "check", "index", "bound", "empirical", "hypothesis_ok", "holds"]
        rows = []
        for rep in res["runs"]:
            for c in rep.checks:
                rows.append([rep.meta["seed"], rep.meta["level"], c.name, "" if c.index is None else c.index,
                             c.theoretical_bound, c.empirical_value, c.hypothesis_ok,
                             "" if c.holds is None else c.holds])
        files.append(emit.emit_csv(header, rows, out / "bounds_checks.csv"))
    if "report" in cfg.emit:
        files.append(emit.emit_report({"command": "bounds", "config_sha256": cfg.digest(), "L": res["L"],
                                       "violations": res["violations"], "unchecked": res["unchecked"],
                                       "runs": [r.to_dict() for r in res["runs"]]},
                                      out / "bounds_report.json"))
    print(f"stability checks: {sum(len(r.checks) for r in res['runs'])} evaluated, "
          f"{res['violations']} violations, {res['unchecked']} with unmet hypotheses")
    if strict and (res["unchecked"] or res["violations"]):
        raise OutOfRegimeError(f"{res['unchecked']} checks with unmet hypotheses, "
                               f"{res['violations']} violations")
    return files


COMMANDS = {"certify": _certify, "observe": _observe, "noise": _noise, "bounds": _bounds}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        out = output_dir(args, cfg)
        files = COMMANDS[args.command](cfg, out, args.strict)
        if files:
            seeds = [int(cfg.raw["noise"]["seed"]) + i for i in range(int(cfg.raw["noise"]["seeds"]))]
            emit.emit_manifest(out, files, cfg.digest(), seeds, __version__, args.command,
                               horizon=cfg.horizon(cfg.sweep_points()))
    except IrlabError as err:
        print(f"irlab: error: {err}", file=sys.stderr)
        return err.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
