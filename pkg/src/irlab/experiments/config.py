"""Experiment configuration: a single JSON document with every default embedded.

An empty document ``{}`` describes the default step-size sweep: N = 2, n = 20, alpha = 0.01, eps = 0.05, eps' = 0.1, leading
eigenvalues (10, 5, 1) over a constant 0.01 tail, eta in {0.005, 0.02, 0.1}.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from ..dynamics import DynamicsConfig
from ..errors import ConfigError, InputError, OutOfRegimeError
from ..spectral import SpectrumSpec
from ..timing import WindowParams, t1

DEFAULTS = {
    "spectrum": {"leading": [10.0, 5.0, 1.0], "n": 20,
                 "tail": {"kind": "constant", "value": 0.01}, "basis_seed": 0},
    "dynamics": {"N": 2, "eta": 0.005, "alpha": 0.01, "max_iters": None, "record_every": 1},
    "window": {"eps": 0.05, "eps_prime": 0.1, "L": None},
    "noise": {"levels": [0.0, 0.05, 0.1, 0.2], "scale": "c", "seed": 0, "seeds": 1,
              "delta_prime": 0.05, "C_abs": 1.0, "L": 2},
    "sweep": {"axis": "eta", "values": [0.005, 0.02, 0.1]},
    "output_dir": "irlab_out",
    "emit": ["csv", "svg", "report"],
    "log_x": True,
    "csv_stride": 10,
    "horizon_factor": 2,
    "max_horizon": 100000,
}

EMIT_KINDS = ("csv", "svg", "report")
SWEEP_AXES = ("eta", "leading")


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(val, dict) and key not in ("sweep",):
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass(frozen=True)
class SweepPoint:
    """One configuration along the sweep axis; ``label`` names its output files."""

    label: str
    spectrum: SpectrumSpec
    dynamics: DynamicsConfig
    eps: float
    eps_prime: float

    def window(self, L: int) -> WindowParams:
        return WindowParams(L=L, eps=self.eps, eps_prime=self.eps_prime,
                            alpha=self.dynamics.alpha, eta=self.dynamics.eta, N=self.dynamics.N)

    def eigenvalues(self):
        return self.spectrum.eigenvalues()


def _fmt(x) -> str:
    return format(float(x), "g")


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, data: dict | None) -> "ExperimentConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        cfg = cls(raw=_merge(DEFAULTS, data))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        try:
            data = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as err:
            raise ConfigError(f"config {path} is not valid JSON: {err}") from err
        return cls.from_dict(data)

    def with_overrides(self, **over) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        for key, val in over.items():
            node = raw
            parts = key.split(".")
            for p in parts[:-1]:
                node = node[p]
            node[parts[-1]] = val
        out = ExperimentConfig(raw=raw)
        out.validate()
        return out

    # -- validation --------------------------------------------------------------------

    def validate(self):
        r = self.raw
        sweep = r["sweep"]
        if sweep is not None:
            if not isinstance(sweep, dict) or set(sweep) != {"axis", "values"}:
                raise ConfigError("sweep must be null or {\"axis\": ..., \"values\": [...]}")
            if sweep["axis"] not in SWEEP_AXES:
                raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {sweep['axis']!r}")
            if not isinstance(sweep["values"], list) or not sweep["values"]:
                raise ConfigError("sweep values must be a nonempty list")
        emit = r["emit"]
        if not isinstance(emit, list) or any(e not in EMIT_KINDS for e in emit):
            raise ConfigError(f"emit must be a subset of {EMIT_KINDS}")
        if r["noise"]["scale"] not in ("c", "sigma"):
            raise ConfigError("noise.scale must be 'c' (sigma = c/sqrt(n)) or 'sigma'")
        if any((not isinstance(c, (int, float))) or c < 0 for c in r["noise"]["levels"]):
            raise ConfigError("noise levels must be nonnegative numbers")
        if int(r["noise"]["seeds"]) < 1:
            raise ConfigError("noise.seeds must be at least 1")
        if int(r["csv_stride"]) < 1:
            raise ConfigError("csv_stride must be at least 1")
        try:
            points = self.sweep_points()
            for p in points:
                for L in self.ranks(p):
                    p.window(L)
            self.noise_rank()
        except InputError as err:
            raise ConfigError(str(err)) from err

    # -- derived objects -----------------------------------------------------------------

    def _spectrum(self, leading=None) -> SpectrumSpec:
        s = self.raw["spectrum"]
        tail = s["tail"]
        if not isinstance(tail, dict) or "kind" not in tail:
            raise ConfigError("spectrum.tail must be {\"kind\": ...}")
        if tail["kind"] == "constant":
            rule = ("constant", float(tail.get("value", 0.01)))
        elif tail["kind"] == "logspace":
            rule = ("logspace", float(tail["high"]), float(tail["low"]))
        else:
            raise ConfigError(f"unknown tail kind {tail['kind']!r}")
        lead = s["leading"] if leading is None else leading
        return SpectrumSpec(leading=tuple(lead), n=int(s["n"]), tail=rule, basis_seed=int(s["basis_seed"]))

    def _dynamics(self, eta=None, max_iters=1) -> DynamicsConfig:
        d = self.raw["dynamics"]
        return DynamicsConfig(N=int(d["N"]), eta=float(d["eta"] if eta is None else eta),
                              alpha=float(d["alpha"]), max_iters=max_iters,
                              record_every=int(d["record_every"]))

    def sweep_points(self) -> list[SweepPoint]:
        sweep = self.raw["sweep"]
        w = self.raw["window"]
        pts = []
        if sweep is None:
            raw = [("base", None, None)]
        elif sweep["axis"] == "eta":
            raw = [(f"eta_{_fmt(v)}", float(v), None) for v in sweep["values"]]
        else:
            raw = [("leading_" + "_".join(_fmt(x) for x in v), None, list(v)) for v in sweep["values"]]
        labels = [lab for lab, _, _ in raw]
        if len(set(labels)) != len(labels):
            raise ConfigError("sweep values must be distinct")
        for label, eta, lead in raw:
            spec = self._spectrum(lead)
            dyn = self._dynamics(eta)
            pts.append(SweepPoint(label=label, spectrum=spec, dynamics=dyn,
                                  eps=float(w["eps"]), eps_prime=float(w["eps_prime"])))
        horizon = self.horizon(pts)
        return [SweepPoint(label=p.label, spectrum=p.spectrum, dynamics=p.dynamics.replace(max_iters=horizon),
                           eps=p.eps, eps_prime=p.eps_prime) for p in pts]

    def ranks(self, point: SweepPoint) -> list[int]:
        L = self.raw["window"]["L"]
        n_lead = len(point.spectrum.leading)
        ranks = list(range(1, n_lead + 1)) if L is None else ([L] if isinstance(L, int) else list(L))
        for r in ranks:
            if not 1 <= r < point.spectrum.n:
                raise ConfigError(f"L={r} must lie in [1, n-1] so that lambda_(L+1) exists")
        return ranks

    def noise_rank(self) -> int:
        L = int(self.raw["noise"]["L"])
        if not 1 <= L < int(self.raw["spectrum"]["n"]):
            raise ConfigError("noise.L must lie in [1, n-1]")
        return L

    def horizon(self, points=None) -> int:
        """Iteration horizon shared by every sweep point.

        Explicit ``dynamics.max_iters`` wins. Otherwise ``horizon_factor`` times
        the largest T1 over sweep points at L = number of leading eigenvalues,
        capped at ``max_horizon``.
        """
        mi = self.raw["dynamics"]["max_iters"]
        if mi is not None:
            return int(mi)
        best = 1.0
        w = self.raw["window"]
        for p in points or []:
            lam = p.eigenvalues()
            L = len(p.spectrum.leading)
            if L < lam.size:
                params = WindowParams(L=L, eps=float(w["eps"]), eps_prime=float(w["eps_prime"]),
                                      alpha=p.dynamics.alpha, eta=p.dynamics.eta, N=p.dynamics.N)
                try:
                    best = max(best, t1(float(lam[L]), params))
                except OutOfRegimeError:
                    pass
        h = int(self.raw["horizon_factor"]) * math.ceil(best)
        return max(1, min(h, int(self.raw["max_horizon"])))

    def noise_levels(self) -> list[float]:
        return [float(c) for c in self.raw["noise"]["levels"]]

    def sigma_for(self, level: float) -> float:
        n = int(self.raw["spectrum"]["n"])
        return level / math.sqrt(n) if self.raw["noise"]["scale"] == "c" else level

    @property
    def emit(self) -> list[str]:
        return list(self.raw["emit"])

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()
