"""Scenario configs, presets, and the orchestration of a full run.

A run builds the grid and seed, integrates the flow while monitoring the
energy identities step by step, snapshots the field at amplitude levels,
analyses every snapshot for bubbles, and writes::

    ledger.csv            one EnergyLedgerRow per accepted step
    snapshots/*.csv       field snapshots plus snapshots/index.csv
    analysis.json         per-snapshot bubble analysis
    report.json           stop report, invariant summary, bubble reports
    *.png                 figures

Exit status: 0 clean stop, 1 config error, 2 invariant violation,
3 solver failure.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io
from .bubbles import AnalysisConfig, analyze
from .energy import (Dirichlet, Volume, lambda_dirichlet, lambda_upper_bound, lambda_volume,
                     mt_energy)
from .errors import ConfigError, GridError, MTFlowError
from .flow import FlowState, StopConfig, ledger_row, max_principle_check, run
from .grid import CARTESIAN, RADIAL, Domain, Field, dirichlet_energy, grid_from_spec
from .seeds import (CoronParams, MoserParams, center_of_mass, coron_field, moser_function,
                    normalize_alpha)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_SOLVER = 0, 1, 2, 3
FOUR_PI = 4 * math.pi


# ---------------------------------------------------------------------------
# config


def _default_dt():
    return {"initial": 1e-3, "min": 1e-12, "max": 1.0}


def _default_stop():
    return {"eps_steady": None, "blowup_u_max": 12.0, "max_steps": 1_000_000,
            "monotone_tol": 5e-9}


def _default_snapshots():
    return {"du_max": 0.25, "every_steps": 0}


def _default_checks():
    return {"oracle": False, "oracle_tol": 1e-3, "drift_tol": 1e-8, "lambda_rtol": 1e-6,
            "monotone_tol": 1e-8, "max_principle_tol": 1e-4}


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one run.

    Sections are plain mappings so the JSON form is the config itself;
    :meth:`validate` checks every referenced parameter.  ``sweep`` turns a
    Coron seed into an ``s x angle`` lattice of independent runs.
    """

    name: str
    grid: dict
    seed: dict
    constraint: dict = field(default_factory=lambda: {"kind": "volume", "target": None})
    t_max: float = 50.0
    dt: dict = field(default_factory=_default_dt)
    stop: dict = field(default_factory=_default_stop)
    snapshots: dict = field(default_factory=_default_snapshots)
    analysis: dict = field(default_factory=dict)
    checks: dict = field(default_factory=_default_checks)
    sweep: dict | None = None
    output: str = "runs"
    random_seed: int = 0
    noise: float = 0.0
    figures: bool = True

    # -- serialisation ----------------------------------------------------

    def to_dict(self):
        return copy.deepcopy(asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d, text=None):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object", 1 if text else None)
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"unknown key {key!r}", _line_of(text, [key]))
        for key in ("name", "grid", "seed"):
            if key not in d:
                raise ConfigError(f"missing required key {key!r}", 1 if text else None)
        cfg = cls(**copy.deepcopy(d))
        # fill defaults inside partially specified sections
        for name, default in (("dt", _default_dt), ("stop", _default_stop),
                              ("snapshots", _default_snapshots), ("checks", _default_checks)):
            section = getattr(cfg, name)
            if isinstance(section, dict):
                setattr(cfg, name, {**default(), **section})
        cfg.validate(text)
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
        return cls.from_dict(d, text)

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def with_overrides(self, overrides):
        """Apply ``dotted.key=value`` overrides (values parsed as JSON when possible)."""
        d = self.to_dict()
        for item in overrides:
            key, sep, raw = item.partition("=")
            if not sep or not key:
                raise ConfigError(f"override {item!r} is not key=value")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            target = d
            parts = key.split(".")
            for p in parts[:-1]:
                if not isinstance(target.get(p), dict):
                    target[p] = {} if target.get(p) is None else target[p]
                    if not isinstance(target[p], dict):
                        raise ConfigError(f"override {key!r}: {p!r} is not a section")
                target = target[p]
            target[parts[-1]] = value
        return type(self).from_dict(d)

    @property
    def mode(self):
        return self.constraint.get("kind", "volume")

    def stop_config(self):
        s = self.stop
        return StopConfig(eps_steady=s["eps_steady"], blowup_u_max=float(s["blowup_u_max"]),
                          dt_min=float(self.dt["min"]), dt_max=float(self.dt["max"]),
                          max_steps=int(s["max_steps"]), monotone_tol=float(s["monotone_tol"]))

    def analysis_config(self):
        d = {k: v for k, v in self.analysis.items() if k != "enabled"}
        return AnalysisConfig.from_dict(d)

    # -- validation -------------------------------------------------------

    def validate(self, text=None):
        v = _Validator(text)
        v.check(isinstance(self.name, str) and self.name != "" and "/" not in self.name,
                ["name"], "name must be a non-empty string without '/'")
        self._validate_grid(v)
        self._validate_constraint(v)
        self._validate_seed(v)
        v.number(self.t_max, ["t_max"], lo=0, open_lo=False)
        dt = self.dt
        v.keys(dt, ["dt"], {"initial", "min", "max"})
        v.number(dt["min"], ["dt", "min"], lo=0)
        v.number(dt["max"], ["dt", "max"], lo=dt["min"], open_lo=False)
        v.number(dt["initial"], ["dt", "initial"], lo=0)
        st = self.stop
        v.keys(st, ["stop"], {"eps_steady", "blowup_u_max", "max_steps", "monotone_tol"})
        if st["eps_steady"] is not None:
            v.number(st["eps_steady"], ["stop", "eps_steady"], lo=0)
        v.number(st["blowup_u_max"], ["stop", "blowup_u_max"], lo=0, hi=math.sqrt(700))
        v.number(st["max_steps"], ["stop", "max_steps"], lo=0, integer=True)
        v.number(st["monotone_tol"], ["stop", "monotone_tol"], lo=0, open_lo=False)
        sn = self.snapshots
        v.keys(sn, ["snapshots"], {"du_max", "every_steps"})
        if sn["du_max"] is not None:
            v.number(sn["du_max"], ["snapshots", "du_max"], lo=0)
        v.number(sn["every_steps"], ["snapshots", "every_steps"], lo=0, open_lo=False,
                 integer=True)
        self._validate_analysis(v)
        ch = self.checks
        v.keys(ch, ["checks"], set(_default_checks()))
        v.check(isinstance(ch["oracle"], bool), ["checks", "oracle"], "oracle must be true/false")
        for k in ("oracle_tol", "drift_tol", "lambda_rtol", "monotone_tol", "max_principle_tol"):
            v.number(ch[k], ["checks", k], lo=0)
        if self.sweep is not None:
            self._validate_sweep(v)
        v.check(isinstance(self.output, str) and self.output != "", ["output"],
                "output must be a directory path")
        v.number(self.random_seed, ["random_seed"], lo=0, open_lo=False, integer=True)
        v.number(self.noise, ["noise"], lo=0, hi=1, open_lo=False)
        v.check(isinstance(self.figures, bool), ["figures"], "figures must be true/false")

    def _validate_grid(self, v):
        g = self.grid
        v.check(isinstance(g, dict), ["grid"], "grid must be an object")
        kind = g.get("kind")
        if kind == RADIAL:
            v.keys(g, ["grid"], {"kind", "R", "n", "stretch"})
            v.number(g.get("R"), ["grid", "R"], lo=0)
            v.number(g.get("n"), ["grid", "n"], lo=16, open_lo=False, integer=True)
            v.number(g.get("stretch", 0.0), ["grid", "stretch"], lo=0, hi=50, open_lo=False)
        elif kind == CARTESIAN:
            v.keys(g, ["grid"], {"kind", "h", "domain"})
            v.number(g.get("h"), ["grid", "h"], lo=0)
            v.check(isinstance(g.get("domain"), dict), ["grid", "domain"],
                    "domain must be an object")
            try:
                Domain.from_dict(g["domain"])
            except (GridError, KeyError, TypeError) as exc:
                v.fail(["grid", "domain"], f"bad domain: {exc}")
        else:
            v.fail(["grid", "kind"], f"grid kind must be {RADIAL!r} or {CARTESIAN!r}")

    def _validate_constraint(self, v):
        c = self.constraint
        v.keys(c, ["constraint"], {"kind", "target"})
        v.check(c.get("kind") in ("volume", "dirichlet"), ["constraint", "kind"],
                "constraint kind must be 'volume' or 'dirichlet'")
        if c.get("target") is not None:
            v.number(c["target"], ["constraint", "target"], lo=0)

    def _validate_seed(self, v):
        s = self.seed
        v.check(isinstance(s, dict), ["seed"], "seed must be an object")
        kind = s.get("type")
        norm = {"normalize"}
        if kind == "moser":
            v.keys(s, ["seed"], {"type", "rho", "R", "x0"} | norm)
            v.number(s.get("R"), ["seed", "R"], lo=0)
            v.number(s.get("rho"), ["seed", "rho"], lo=0, hi=s.get("R"))
            x0 = s.get("x0", [0.0, 0.0])
            v.check(isinstance(x0, list) and len(x0) == 2, ["seed", "x0"], "x0 must be [x, y]")
            if self.grid.get("kind") == RADIAL:
                v.check(x0 == [0.0, 0.0] or x0 == [0, 0], ["seed", "x0"],
                        "radial grids need x0 = [0, 0]")
        elif kind == "coron":
            v.keys(s, ["seed"], {"type", "s", "angle", "R", "rho", "R2"} | norm)
            v.check(self.grid.get("kind") == CARTESIAN, ["seed", "type"],
                    "coron seeds need a cartesian grid")
            v.number(s.get("s"), ["seed", "s"], lo=0, hi=1)
            v.number(s.get("angle", 0.0), ["seed", "angle"])
            v.number(s.get("R"), ["seed", "R"], lo=0)
            v.number(s.get("rho"), ["seed", "rho"], lo=0, hi=s.get("R"))
            v.number(s.get("R2"), ["seed", "R2"], lo=0, hi=0.5 * s.get("R", 0))
        elif kind == "snapshot":
            v.keys(s, ["seed"], {"type", "path"} | norm)
            v.check(isinstance(s.get("path"), str), ["seed", "path"], "path must be a string")
        elif kind == "stationary":
            v.keys(s, ["seed"], {"type", "lam"} | norm)
            v.check(self.grid.get("kind") == RADIAL, ["seed", "type"],
                    "stationary seeds need a radial grid")
            v.number(s.get("lam"), ["seed", "lam"], lo=0)
        else:
            v.fail(["seed", "type"], "seed type must be moser, coron, snapshot or stationary")
        nz = s.get("normalize")
        if nz is not None:
            v.check(isinstance(nz, dict) and len(nz) == 1
                    and next(iter(nz)) in ("scale", "dirichlet", "energy"),
                    ["seed", "normalize"],
                    "normalize takes exactly one of scale, dirichlet, energy")
            key = next(iter(nz))
            v.number(nz[key], ["seed", "normalize", key], lo=0)

    def _validate_analysis(self, v):
        a = self.analysis
        allowed = {f.name for f in fields(AnalysisConfig)} | {"enabled"}
        v.keys(a, ["analysis"], allowed)
        if "enabled" in a:
            v.check(isinstance(a["enabled"], bool), ["analysis", "enabled"],
                    "enabled must be true/false")
        for k in ("L_profile", "L_energy", "L_error", "nu_peak", "merge_factor"):
            if k in a:
                v.number(a[k], ["analysis", k], lo=0)
        if "tol_frac" in a:
            v.number(a["tol_frac"], ["analysis", "tol_frac"], lo=0, hi=0.5)
        if "density" in a:
            v.number(a["density"], ["analysis", "density"], lo=4, open_lo=False, integer=True)
        if "neck_shells" in a:
            v.number(a["neck_shells"], ["analysis", "neck_shells"], lo=4, open_lo=False,
                     integer=True)
        if "neck" in a:
            n = a["neck"]
            v.check(isinstance(n, list) and len(n) == 2 and 0 < n[0] < n[1], ["analysis", "neck"],
                    "neck must be [s, t] with 0 < s < t")

    def _validate_sweep(self, v):
        sw = self.sweep
        v.keys(sw, ["sweep"], {"s", "angles", "s0", "delta_frac", "transient"})
        v.check(self.seed.get("type") == "coron", ["sweep"], "sweeps need a coron seed")
        for key in ("s", "angles"):
            vals = sw.get(key)
            v.check(isinstance(vals, list) and len(vals) > 0, ["sweep", key],
                    f"{key} must be a non-empty list")
        for s in sw["s"]:
            v.number(s, ["sweep", "s"], lo=0, hi=1)
        for a in sw["angles"]:
            v.number(a, ["sweep", "angles"])
        v.number(sw.get("s0"), ["sweep", "s0"], lo=0, hi=1)
        v.number(sw.get("delta_frac"), ["sweep", "delta_frac"], lo=0)
        v.number(sw.get("transient"), ["sweep", "transient"], lo=0, open_lo=False)


def _line_of(text, path):
    """Line number of the last key of ``path`` in the JSON ``text`` (best effort)."""
    if not text:
        return None
    pos = 0
    for key in path:
        m = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(text, pos)
        if m is None:
            break
        pos = m.start()
    return text.count("\n", 0, pos) + 1


class _Validator:
    def __init__(self, text):
        self.text = text

    def fail(self, path, msg):
        raise ConfigError(f"{'.'.join(map(str, path))}: {msg}", _line_of(self.text, path))

    def check(self, ok, path, msg):
        if not ok:
            self.fail(path, msg)

    def keys(self, d, path, allowed):
        if not isinstance(d, dict):
            self.fail(path, "must be an object")
        for k in d:
            if k not in allowed:
                self.fail(path + [k], "unknown key")

    def number(self, x, path, lo=None, hi=None, open_lo=True, integer=False):
        ok_type = isinstance(x, (int, float)) and not isinstance(x, bool)
        if integer:
            ok_type = isinstance(x, int) and not isinstance(x, bool)
        if not ok_type or not math.isfinite(x):
            self.fail(path, f"expected {'an integer' if integer else 'a number'}, got {x!r}")
        if lo is not None and (x <= lo if open_lo else x < lo):
            self.fail(path, f"must be {'>' if open_lo else '>='} {lo}, got {x!r}")
        if hi is not None and x > hi:
            self.fail(path, f"must be <= {hi}, got {x!r}")


# ---------------------------------------------------------------------------
# presets


def presets():
    """The canonical scenarios, in a fixed order."""
    e = math.e
    return [
        ScenarioConfig(
            name="subcritical-ball",
            grid={"kind": RADIAL, "R": 1.0, "n": 1024, "stretch": 0.0},
            seed={"type": "moser", "rho": 1 / e, "R": 1.0, "x0": [0.0, 0.0],
                  "normalize": {"scale": 0.8}},
            t_max=50.0,
            checks={**_default_checks(), "oracle": True},
        ),
        ScenarioConfig(
            name="quantize-radial",
            grid={"kind": RADIAL, "R": 1.0, "n": 4096, "stretch": 22.0},
            seed={"type": "moser", "rho": 0.05, "R": 1.0, "x0": [0.0, 0.0],
                  "normalize": {"dirichlet": 1.3 * FOUR_PI}},
            t_max=5000.0,
            dt={"initial": 1e-4, "min": 1e-12, "max": 10.0},
            stop={**_default_stop(), "blowup_u_max": 6.0},
        ),
        ScenarioConfig(
            name="quantize-cartesian",
            grid={"kind": CARTESIAN, "h": 1 / 128, "domain": {"kind": "ball", "R": 1.0}},
            seed={"type": "moser", "rho": 0.1, "R": 1.0, "x0": [0.1, 0.05],
                  "normalize": {"dirichlet": 1.3 * FOUR_PI}},
            t_max=5000.0,
            dt={"initial": 1e-4, "min": 1e-12, "max": 10.0},
            stop={**_default_stop(), "blowup_u_max": 3.0},
        ),
        ScenarioConfig(
            name="coron-annulus-sweep",
            grid={"kind": CARTESIAN, "h": 1 / 64, "domain": {"kind": "annulus", "R1": 1.0,
                                                            "R2": 0.05}},
            seed={"type": "coron", "s": 0.5, "angle": 0.0, "R": 0.25, "rho": 0.05, "R2": 0.05,
                  "normalize": {"energy": 3.0}},
            t_max=3.0,
            dt={"initial": 1e-4, "min": 1e-12, "max": 0.1},
            snapshots={"du_max": None, "every_steps": 0},
            analysis={"enabled": False},
            sweep={"s": [k / 8 for k in range(1, 9)],
                   "angles": [2 * math.pi * j / 8 for j in range(8)],
                   "s0": 0.5, "delta_frac": 0.1, "transient": 0.1},
        ),
        ScenarioConfig(
            name="dirichlet-mode-ball",
            grid={"kind": RADIAL, "R": 1.0, "n": 1024, "stretch": 0.0},
            constraint={"kind": "dirichlet", "target": None},
            seed={"type": "moser", "rho": 1 / e, "R": 1.0, "x0": [0.0, 0.0],
                  "normalize": {"dirichlet": 0.8 * FOUR_PI}},
            t_max=50.0,
        ),
    ]


def preset(name):
    for cfg in presets():
        if cfg.name == name:
            return cfg
    raise ConfigError(f"unknown preset {name!r}; choose from "
                      + ", ".join(c.name for c in presets()))


# ---------------------------------------------------------------------------
# seeds


def build_seed(cfg: ScenarioConfig, grid, base_dir=None) -> Field:
    """Initial field: constructor, optional noise, then normalisation."""
    s = cfg.seed
    kind = s["type"]
    if kind == "moser":
        u = moser_function(MoserParams(s["rho"], s["R"], tuple(s.get("x0", (0.0, 0.0)))), grid)
    elif kind == "coron":
        p = CoronParams.at_angle(s["s"], s.get("angle", 0.0), s["R"], s["rho"], s["R2"])
        u = coron_field(p, grid)
    elif kind == "snapshot":
        path = Path(s["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        u = io.read_snapshot(path, grid)
    elif kind == "stationary":
        from .stationary import solve_for_lambda
        u = solve_for_lambda(s["lam"], grid.coords[-1]).on_grid(grid)
    else:  # pragma: no cover - rejected by validation
        raise ConfigError(f"unknown seed type {kind!r}")

    if cfg.noise > 0:
        rng = np.random.default_rng(cfg.random_seed)
        v = u.values * (1.0 + cfg.noise * rng.standard_normal(grid.size))
        v = np.maximum(v, 0.0)
        v[grid.boundary] = 0.0
        u = Field(grid, v)

    norm = s.get("normalize")
    if norm:
        (key, val), = norm.items()
        if key == "scale":
            u = u.scaled(val)
        elif key == "dirichlet":
            u = u.scaled(math.sqrt(val / dirichlet_energy(grid, u)))
        else:
            _, u = normalize_alpha(u, val)
    target = cfg.constraint.get("target")
    if target is not None:
        if cfg.mode == "volume":
            _, u = normalize_alpha(u, target)
        else:
            u = u.scaled(math.sqrt(target / dirichlet_energy(grid, u)))
    return u


def initial_flow_state(cfg, u):
    if cfg.mode == "volume":
        c = Volume(mt_energy(u))
    else:
        c = Dirichlet(dirichlet_energy(u.grid, u))
    lam = lambda_volume(u) if cfg.mode == "volume" else lambda_dirichlet(u)
    return FlowState(0.0, u, lam, c, float(cfg.dt["initial"]))


# ---------------------------------------------------------------------------
# invariants


class InvariantMonitor:
    """Online check of the per-step identities and bounds along a run."""

    def __init__(self, state0: FlowState, row0, checks):
        self.checks = checks
        self.volume = isinstance(state0.constraint, Volume)
        self.prev = row0
        self.Lambda0 = row0.D
        self.lam_max = (lambda_upper_bound(state0.constraint, self.Lambda0)
                        if self.volume else None)
        self.worst = {"constraint_drift": 0.0, "lambda_min": math.inf, "lambda_max": -math.inf,
                      "monotone_violation": 0.0, "clipped": 0}
        self.first_violation = None
        self.steps = 0

    def update(self, state, row):
        self.steps += 1
        w = self.worst
        w["constraint_drift"] = max(w["constraint_drift"], row.constraint_residual)
        w["lambda_min"] = min(w["lambda_min"], row.lam)
        w["lambda_max"] = max(w["lambda_max"], row.lam)
        if self.volume:
            rise = row.D - self.prev.D
        else:
            rise = self.prev.E - row.E
        w["monotone_violation"] = max(w["monotone_violation"], rise)
        w["clipped"] += state.clipped
        if self.first_violation is None and not all(c["ok"] for c in self._items().values()):
            self.first_violation = {"step": self.steps, "t": row.t}
        self.prev = row

    def _items(self):
        c, w = self.checks, self.worst
        items = {
            "constraint_drift": {"value": w["constraint_drift"], "limit": c["drift_tol"],
                                 "ok": w["constraint_drift"] <= c["drift_tol"]},
            "lambda_positive": {"value": w["lambda_min"] if self.steps else None, "limit": 0.0,
                                "ok": not self.steps or w["lambda_min"] > 0},
            "energy_monotone": {"value": w["monotone_violation"], "limit": c["monotone_tol"],
                                "ok": w["monotone_violation"] <= c["monotone_tol"],
                                "law": "D non-increasing" if self.volume else "E non-decreasing"},
            "no_clipping": {"value": w["clipped"], "limit": 0, "ok": w["clipped"] == 0},
        }
        if self.volume:
            lim = self.lam_max * (1 + c["lambda_rtol"])
            items["lambda_upper_bound"] = {"value": w["lambda_max"] if self.steps else None,
                                           "limit": lim,
                                           "ok": not self.steps or w["lambda_max"] <= lim}
        return items

    def summary(self, rows):
        items = self._items()
        if len(rows) >= 2:
            mp = max_principle_check(rows, self.checks["max_principle_tol"])
            items["max_principle"] = {"value": mp.worst_margin,
                                      "limit": self.checks["max_principle_tol"],
                                      "ok": mp.ok, "worst_pair": list(mp.worst_pair)}
        return {"checks": items, "ok": all(v["ok"] for v in items.values()),
                "first_violation": self.first_violation}


# ---------------------------------------------------------------------------
# running


def analysis_threads():
    """Worker count for snapshot analysis, capped by ``MTFLOW_THREADS``."""
    cap = os.environ.get("MTFLOW_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer MTFLOW_THREADS=%r", cap)
    return n


@dataclass
class RunResult:
    exit_code: int
    outdir: Path
    report: dict


class _Snapshotter:
    """Keeps the states at which the field is recorded.

    A snapshot is taken at the start, whenever ``u_max`` first passes the
    next multiple of ``du_max``, every ``every_steps`` steps, and at the end.
    """

    def __init__(self, state0, du, every):
        self.du, self.every = du, every
        self.states = [state0]
        self.steps = 0
        self.next_level = (math.floor(state0.u.sup / du) + 1) * du if du else math.inf

    def __call__(self, state, row):
        self.steps += 1
        take = False
        if row.u_max >= self.next_level:
            take = True
            self.next_level = (math.floor(row.u_max / self.du) + 1) * self.du
        if self.every and self.steps % self.every == 0:
            take = True
        if take:
            self.states.append(state)

    def finish(self, state):
        if state is not self.states[-1]:
            self.states.append(state)


def _analyse(states, acfg):
    def one(s):
        try:
            return analyze(s.u, s.lam, acfg)
        except MTFlowError as exc:
            return exc
    with ThreadPoolExecutor(max_workers=analysis_threads()) as pool:
        return list(pool.map(one, states))


def _oracle_check(u, tol):
    from .stationary import solve_for_lambda
    lam = lambda_volume(u)
    res = solve_for_lambda(lam, float(u.grid.coords[-1]))
    diff = float(np.max(np.abs(u.values - res(u.grid.coords))))
    return {"lambda": lam, "a": res.a, "u_max": u.sup, "sup_diff": diff, "tol": tol,
            "ok": diff <= tol}


def _trajectory(cfg, state0, callback):
    return run(state0, float(cfg.t_max), cfg.stop_config(), callback=callback)


def _exit_code(stop_reason, invariants_ok):
    if stop_reason in ("overflow", "step-failure"):
        return EXIT_SOLVER
    return EXIT_OK if invariants_ok else EXIT_INVARIANT


def run_scenario(cfg: ScenarioConfig, outdir=None, base_dir=None) -> RunResult:
    """Run one scenario (or a sweep) and write its artifacts."""
    outdir = Path(outdir if outdir is not None else Path(cfg.output) / cfg.name)
    outdir.mkdir(parents=True, exist_ok=True)
    io.dump_json(outdir / "config.json", cfg.to_dict())
    if cfg.sweep is not None:
        return _run_sweep(cfg, outdir, base_dir)

    grid = grid_from_spec(cfg.grid)
    u0 = build_seed(cfg, grid, base_dir)
    state0 = initial_flow_state(cfg, u0)
    monitor = InvariantMonitor(state0, ledger_row(state0), cfg.checks)
    snaps = _Snapshotter(state0, cfg.snapshots["du_max"], cfg.snapshots["every_steps"])
    last = [state0]

    def callback(state, row):
        monitor.update(state, row)
        snaps(state, row)
        last[0] = state

    rows, stop = _trajectory(cfg, state0, callback)
    snaps.finish(last[0])
    invariants = monitor.summary(rows)

    io.write_ledger(outdir / "ledger.csv", rows)
    index_rows = []
    for k, s in enumerate(snaps.states):
        fname = f"snap_{k:04d}.csv"
        io.write_snapshot(outdir / "snapshots" / fname, s.u)
        index_rows.append((k, s.t, s.lam, s.u.sup, fname))
    io.write_rows(outdir / "snapshots" / "index.csv",
                  ("index", "t", "lambda", "u_max", "file"), index_rows)

    analyses = []
    if cfg.analysis.get("enabled", True):
        results = _analyse(snaps.states, cfg.analysis_config())
        for k, (s, res) in enumerate(zip(snaps.states, results)):
            entry = {"index": k, "t": s.t}
            if isinstance(res, Exception):
                entry["error"] = f"{type(res).__name__}: {res}"
            else:
                entry.update(res.to_dict())
                entry["_profiles"] = res.profiles
            analyses.append(entry)
    io.dump_json(outdir / "analysis.json",
                 [{k: v for k, v in a.items() if k != "_profiles"} for a in analyses])

    oracle = None
    if cfg.checks["oracle"]:
        if grid.kind == RADIAL and stop.reason == "steady":
            oracle = _oracle_check(last[0].u, cfg.checks["oracle_tol"])
        else:
            oracle = {"ok": False, "skipped": f"needs a radial steady run (got {stop.reason})"}
        invariants["checks"]["oracle"] = oracle
        invariants["ok"] = invariants["ok"] and oracle["ok"]

    code = _exit_code(stop.reason, invariants["ok"])
    report = {
        "scenario": cfg.name,
        "exit_status": code,
        "stop": stop.to_dict(),
        "initial": {"E": rows[0].E, "D": rows[0].D, "lambda": rows[0].lam,
                    "u_max": rows[0].u_max, "constraint": state0.constraint.name,
                    "target": state0.constraint.target},
        "invariants": invariants,
        "snapshots": [{"index": k, "t": t, "lambda": lam, "u_max": um, "file": f}
                      for k, t, lam, um, f in index_rows],
        "bubbles": [{"index": a["index"], "t": a["t"], "u_max": a.get("u_max"),
                     "reports": a.get("bubbles", []), "error": a.get("error")}
                    for a in analyses],
    }
    io.dump_json(outdir / "report.json", report)
    if cfg.figures:
        from . import plotting
        plotting.scenario_figures(outdir, rows, snaps.states, analyses)
    log.info("%s: %s at t=%.4g after %d steps, exit %d", cfg.name, stop.reason,
             stop.t_final, stop.steps, code)
    return RunResult(code, outdir, report)


def _run_sweep(cfg, outdir, base_dir):
    sw = cfg.sweep
    grid = grid_from_spec(cfg.grid)
    R1 = 4 * cfg.seed["R"]
    delta = sw["delta_frac"] * R1
    track, table, sub_reports = [], [], []
    worst = EXIT_OK
    for i, s in enumerate(sw["s"]):
        for j, angle in enumerate(sw["angles"]):
            sub = copy.deepcopy(cfg)
            sub.seed = {**cfg.seed, "s": s, "angle": angle}
            sub.sweep = None
            u0 = build_seed(sub, grid, base_dir)
            state0 = initial_flow_state(sub, u0)
            monitor = InvariantMonitor(state0, ledger_row(state0), cfg.checks)
            m0 = center_of_mass(u0)
            this_track = [(s, angle, 0.0, float(m0[0]), float(m0[1]))]

            def callback(state, row, s=s, angle=angle, monitor=monitor, tr=this_track):
                monitor.update(state, row)
                m = center_of_mass(state.u)
                tr.append((s, angle, state.t, float(m[0]), float(m[1])))

            rows, stop = _trajectory(sub, state0, callback)
            inv = monitor.summary(rows)
            code = _exit_code(stop.reason, inv["ok"])
            worst = max(worst, code)
            run_dir = outdir / "runs" / f"s{i}_a{j}"
            io.write_ledger(run_dir / "ledger.csv", rows)
            after = [math.hypot(mx, my) for _, _, t, mx, my in this_track if t >= sw["transient"]]
            min_m = min(after) if after else math.nan
            checked = s <= sw["s0"] + 1e-12
            ok = bool(min_m >= delta) if checked else None
            table.append((s, angle, min_m, stop.reason, "yes" if checked else "no",
                          "n/a" if ok is None else ("pass" if ok else "fail")))
            sub_reports.append({"s": s, "x0_angle": angle, "exit_status": code,
                                "stop": stop.to_dict(), "invariants": inv,
                                "min_abs_m": min_m, "checked": checked, "pass": ok})
            track.extend(this_track)
            log.info("sweep s=%.3f angle=%.3f: %s, min|m|=%.3f", s, angle, stop.reason, min_m)

    io.write_rows(outdir / "com_track.csv", ("s", "x0_angle", "t", "m_x", "m_y"), track)
    io.write_rows(outdir / "sweep_table.csv",
                  ("s", "x0_angle", "min_abs_m", "stop_reason", "checked", "result"), table)
    checked = [r for r in sub_reports if r["checked"]]
    report = {
        "scenario": cfg.name,
        "exit_status": worst,
        "delta": delta,
        "transient": sw["transient"],
        "s0": sw["s0"],
        "sweep_ok": all(r["pass"] for r in checked),
        "invariants_ok": all(r["invariants"]["ok"] for r in sub_reports),
        "runs": sub_reports,
    }
    io.dump_json(outdir / "analysis.json", {"com_table": [list(t) for t in table]})
    io.dump_json(outdir / "report.json", report)
    if cfg.figures:
        from . import plotting
        plotting.sweep_figure(outdir / "com_tracks.png", track, delta, sw["s0"])
    return RunResult(worst, outdir, report)
