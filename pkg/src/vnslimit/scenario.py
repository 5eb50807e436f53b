"""Scenario configuration and the time loops for VNS, limit and sweep runs."""
from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .diagnostics import (EnergyTracker, MonitorTracker, Snapshot, convergence_report,
                          energy_terms)
from .fluid import FluidState, LimitState, cfl_bound, limit_step, ns_step
from .grid import Grid, ScalarField, VectorField
from .kinetic import (InitialKineticSpec, advance_particles, deposit, monokinetic_functional,
                      sample_initial)


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "domain": {"dim": 2, "extent": 4.0, "height": 4.0, "cells": 64},
    "time": {"T": 2.0, "dt": 0.0, "cfl": 0.9, "checkpoints": 20, "cadence": "uniform"},
    "physics": {"eps": 0.1, "eps_list": [0.4, 0.2, 0.1, 0.05]},
    "fluid": {"profile": "cellular", "amplitude": 0.05, "advection": "skew",
              "implicit": False},
    "kinetic": {"n_particles": 20000, "mass": 1.0, "density": "blob",
                "center": [2.0, 2.5], "radius": 0.75, "temperature_factor": 0.1,
                "tail_bottom": 0.5, "tail_top": 22.0, "layer": [1.0, 2.0],
                "seed": 0},
    "limit": {"frozen_u": False, "remap_every": 0, "n_sub": 2},
    "output": {"dir": "runs/default", "fields_every": 0},
}


# Named scenarios; each entry overrides DEFAULTS.
PRESETS: dict = {
    "default": {},
    "decay": {
        "domain": {"cells": 32, "extent": 24.0, "height": 24.0},
        "time": {"T": 20.0, "checkpoints": 40, "cadence": "geometric"},
        "fluid": {"amplitude": 0.01},
        "kinetic": {"density": "tail"},
        "output": {"dir": "runs/decay"},
    },
    "transport": {
        "time": {"T": 0.5},
        "kinetic": {"density": "layer"},
        "limit": {"frozen_u": True},
        "output": {"dir": "runs/transport"},
    },
}


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{path}{k}"
        if k not in out:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{key!r} must be a table")
            out[k] = _merge(out[k], v, key + ".")
        else:
            out[k] = v
    return out


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings (values parsed as TOML literals)."""
    raw = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_value(text.strip())
    return raw


@dataclass(frozen=True)
class ScenarioConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        object.__setattr__(self, "data", _merge(DEFAULTS, self.data))
        self.validate()

    @classmethod
    def preset(cls, name: str, **sections):
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(_merge(_merge(DEFAULTS, PRESETS[name]), sections))

    @classmethod
    def from_toml(cls, path=None, overrides=()):
        raw = {}
        if path is not None:
            try:
                with open(path, "rb") as fh:
                    raw = tomllib.load(fh)
            except (OSError, tomllib.TOMLDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(apply_overrides(raw, overrides))

    def with_overrides(self, **sections):
        return ScenarioConfig(_merge(self.data, sections))

    def __getitem__(self, key):
        return self.data[key]

    def validate(self):
        d = self.data
        dom = d["domain"]
        if dom["dim"] not in (2, 3):
            raise ConfigError("domain.dim must be 2 or 3")
        if min(dom["extent"], dom["height"]) <= 0 or int(dom["cells"]) < 4:
            raise ConfigError("domain extents must be positive and cells >= 4")
        tm = d["time"]
        if tm["T"] <= 0 or tm["dt"] < 0 or not 0 < tm["cfl"] <= 1 or tm["checkpoints"] < 1:
            raise ConfigError("time.T, time.cfl and time.checkpoints must be positive")
        if tm["cadence"] not in ("uniform", "geometric"):
            raise ConfigError("time.cadence must be 'uniform' or 'geometric'")
        ph = d["physics"]
        if ph["eps"] <= 0 or any(e <= 0 for e in ph["eps_list"]):
            raise ConfigError("eps values must be positive")
        el = ph["eps_list"]
        if any(b >= a for a, b in zip(el, el[1:])):
            raise ConfigError("physics.eps_list must be strictly decreasing")
        fl = d["fluid"]
        if fl["profile"] not in ("rest", "cellular"):
            raise ConfigError(f"unknown fluid.profile {fl['profile']!r}")
        if fl["advection"] not in ("skew", "upwind", "none"):
            raise ConfigError(f"unknown fluid.advection {fl['advection']!r}")
        kn = d["kinetic"]
        if kn["n_particles"] < 0 or kn["mass"] < 0 or kn["temperature_factor"] < 0:
            raise ConfigError("kinetic counts, mass and temperature must be nonnegative")
        if kn["density"] not in ("blob", "tail", "layer", "none"):
            raise ConfigError(f"unknown kinetic.density {kn['density']!r}")
        H = dom["height"]
        if kn["density"] == "blob":
            c = kn["center"]
            if len(c) != dom["dim"]:
                raise ConfigError("kinetic.center needs one coordinate per axis")
            if kn["radius"] <= 0 or c[-1] - kn["radius"] <= 0 or c[-1] + kn["radius"] >= H:
                raise ConfigError("blob must lie strictly inside 0 < z < height")
        if kn["density"] == "tail" and not 0 < kn["tail_bottom"] < kn["tail_top"] < H:
            raise ConfigError("tail density needs 0 < tail_bottom < tail_top < height")
        if kn["density"] == "layer" and not 0 < kn["layer"][0] < kn["layer"][1] < H:
            raise ConfigError("layer density needs 0 < z0 < z1 < height")

    # --- builders ---------------------------------------------------------------
    @property
    def grid(self) -> Grid:
        dom = self["domain"]
        return Grid.uniform(int(dom["cells"]), extent=float(dom["extent"]),
                            height=float(dom["height"]), dim=int(dom["dim"]))

    def initial_fluid(self) -> FluidState:
        g = self.grid
        fl = self["fluid"]
        if fl["profile"] == "rest" or fl["amplitude"] == 0:
            return FluidState.rest(g)
        return FluidState(cellular_flow(g, fl["amplitude"]), ScalarField.zeros(g))

    def density_function(self):
        kn = self["kinetic"]
        dom = self["domain"]
        kind = kn["density"]
        if kind == "tail":
            za, zb, Lx = kn["tail_bottom"], kn["tail_top"], dom["extent"]

            def rho(*c):
                z = c[-1]
                mod = 1.0 + 0.5 * np.cos(2 * np.pi * c[0] / Lx)
                return np.where((z > za) & (z < zb), mod / (1.0 + z - za) ** 2, 0.0)

            return rho
        if kind == "layer":
            z0, z1 = kn["layer"]
            return lambda *c: np.where((c[-1] > z0) & (c[-1] < z1), 1.0, 0.0)
        return "blob"

    def kinetic_spec(self, eps: float) -> InitialKineticSpec:
        kn = self["kinetic"]
        n = 0 if kn["density"] == "none" else int(kn["n_particles"])
        return InitialKineticSpec(
            n_particles=n, mass=float(kn["mass"]), density=self.density_function(),
            center=tuple(kn["center"]), radius=float(kn["radius"]),
            temperature=float(kn["temperature_factor"]) * eps)

    def time_step(self, u: VectorField | None = None) -> float:
        tm = self["time"]
        if tm["dt"] > 0:
            dt = float(tm["dt"])
        else:
            g = self.grid
            bound = cfl_bound(u if u is not None else VectorField.zeros(g),
                              implicit=self["fluid"]["implicit"])
            # the transport speed u - e_z also limits the step
            bound = min(bound, min(g.spacing) / (1.0 + (u.max_abs() if u is not None else 0.0)))
            dt = tm["cfl"] * bound
        n = max(1, math.ceil(tm["T"] / dt - 1e-9))
        return tm["T"] / n

    def checkpoint_steps(self, n_steps: int) -> list[int]:
        tm = self["time"]
        k = int(tm["checkpoints"])
        if tm["cadence"] == "uniform":
            s = np.round(np.linspace(0, n_steps, k + 1)).astype(int)
        else:
            T = tm["T"]
            t = np.geomspace(1.0, 1.0 + T, k + 1) - 1.0
            s = np.round(t / T * n_steps).astype(int)
        return sorted(set(int(v) for v in s))


def cellular_flow(grid: Grid, amplitude: float) -> VectorField:
    """Discretely divergence-free single cell from the corner stream function
    ``A sin(2 pi x / Lx) 16 (z/H)^2 (1 - z/H)^2``."""
    Lx = grid.domain.extents[0]
    H = grid.domain.vertical_extent
    xf = grid.faces(0)
    zf = np.arange(grid.cells[-1] + 1) * grid.spacing[-1]
    s = zf / H
    psi = amplitude * np.sin(2 * np.pi * xf / Lx)[:, None] * (16 * s ** 2 * (1 - s) ** 2)[None, :]
    ux = np.diff(psi, axis=1) / grid.spacing[-1]
    uz = -(np.roll(psi, -1, axis=0) - psi) / grid.spacing[0]
    comps = [ux, uz]
    if grid.dim == 3:
        ny = grid.cells[1]
        comps = [np.repeat(ux[:, None, :], ny, axis=1), np.zeros(grid.face_shape(1)),
                 np.repeat(uz[:, None, :], ny, axis=1)]
    return VectorField(grid, tuple(comps), div_tol=1e-10)


# --- run loops ------------------------------------------------------------------

@dataclass
class RunResult:
    kind: str
    eps: float | None
    dt: float
    snapshots: list = field(default_factory=list)
    metrics: list = field(default_factory=list)  # long format rows (t, metric, value)
    energy: EnergyTracker | None = None
    max_ledger_error: float = 0.0
    final: object = None
    series: dict = field(default_factory=dict)  # per-step scalar series

    def metric(self, name):
        return [(t, v) for t, m, v in self.metrics if m == name]


def _advection(cfg):
    a = cfg["fluid"]["advection"]
    return None if a == "none" else a


def _gap_sq(mom, grid):
    """``||F + rho e_z||^2`` with ``F`` the collocated drag density."""
    comps = [np.array(c) for c in mom.brinkman.components]
    comps[-1] = comps[-1] + mom.rho.values
    return float(sum((c ** 2).sum() for c in comps) * grid.cell_volume)


def _brinkman_l2(mom, grid):
    return float(math.sqrt(sum((c ** 2).sum() for c in mom.brinkman.components) * grid.cell_volume))


def simulate_vns(cfg: ScenarioConfig, eps: float | None = None, dt: float | None = None,
                 record_every_step: bool = True) -> RunResult:
    eps = cfg["physics"]["eps"] if eps is None else eps
    g = cfg.grid
    fluid = cfg.initial_fluid()
    ens = sample_initial(cfg.kinetic_spec(eps), g, seed=int(cfg["kinetic"]["seed"]), u0=fluid.u)
    dt = cfg.time_step(fluid.u) if dt is None else dt
    n_steps = max(1, round(cfg["time"]["T"] / dt))
    checkpoints = set(cfg.checkpoint_steps(n_steps))
    res = RunResult("vns", eps, dt, energy=EnergyTracker())
    monitors = MonitorTracker(fluid.u)
    adv = _advection(cfg)
    implicit = cfg["fluid"]["implicit"]
    gap_sq = 0.0
    prev_gap = None
    series = {k: [] for k in ("t", "u_l2_sq", "brinkman_l2", "monokinetic", "alive_mass",
                              "absorbed_mass", "ledger_error", "energy_total")}
    for n in range(n_steps + 1):
        t = n * dt
        fluid = FluidState(fluid.u, fluid.p, t)
        mom = deposit(ens, fluid.u)
        cur_gap = _gap_sq(mom, g)
        if prev_gap is not None:
            gap_sq += 0.5 * dt * (prev_gap + cur_gap)
        prev_gap = cur_gap
        bl2 = _brinkman_l2(mom, g)
        kin, pot, diss = energy_terms(ens, fluid, eps)
        rep = res.energy.record(t, kin, pot, diss)
        mon = monitors.record(t, fluid.u, bl2)
        ledger = ens.ledger_error()
        res.max_ledger_error = max(res.max_ledger_error, ledger)
        if record_every_step or n in checkpoints:
            series["t"].append(t)
            series["u_l2_sq"].append(fluid.u.l2_norm_sq())
            series["brinkman_l2"].append(bl2)
            series["monokinetic"].append(monokinetic_functional(ens, fluid.u))
            series["alive_mass"].append(ens.alive_mass)
            series["absorbed_mass"].append(ens.absorbed_mass)
            series["ledger_error"].append(ledger)
            series["energy_total"].append(rep.total)
        if n in checkpoints:
            res.snapshots.append(Snapshot(t, fluid.u, mom.rho, gap_sq))
            for k, v in rep.to_dict().items():
                if k != "t":
                    res.metrics.append((t, f"energy.{k}", v))
            for k, v in mon.to_dict().items():
                if k not in ("t", "regime"):
                    res.metrics.append((t, f"monitor.{k}", v))
            res.metrics.append((t, "energy.worst_pair_residual",
                                max(res.energy.worst_residual, 0.0) if n else 0.0))
            res.metrics.append((t, "mass.alive", ens.alive_mass))
            res.metrics.append((t, "mass.absorbed", ens.absorbed_mass))
            res.metrics.append((t, "mass.truncated", ens.truncated_mass))
            res.metrics.append((t, "mass.ledger_error", ledger))
            res.metrics.append((t, "fluid.u_l2_sq", fluid.u.l2_norm_sq()))
            res.metrics.append((t, "brinkman.l2", bl2))
            res.metrics.append((t, "brinkman.gap_sq_integral", gap_sq))
            res.metrics.append((t, "monokinetic", series["monokinetic"][-1] if series["t"]
                                and series["t"][-1] == t else monokinetic_functional(ens, fluid.u)))
            res.metrics.append((t, "rho.max", float(mom.rho.values.max())))
        if n == n_steps:
            break
        u_old = fluid.u
        fluid = ns_step(fluid, mom.fluid_force, dt, advection=adv, implicit=implicit)
        ens = advance_particles(ens, u_old, eps, dt, t0=t)
    res.final = (fluid, ens)
    res.series = {k: np.asarray(v) for k, v in series.items()}
    return res


def initial_limit_state(cfg: ScenarioConfig) -> LimitState:
    g = cfg.grid
    fluid = cfg.initial_fluid()
    if cfg["limit"]["frozen_u"]:
        fluid = FluidState.rest(g)
    kn = cfg["kinetic"]
    if kn["density"] == "none":
        return LimitState.from_parcels(fluid, np.zeros((0, g.dim)), np.zeros(0))
    if kn["density"] == "layer":
        fn = cfg.density_function()
        rho0 = ScalarField(g, fn(*g.mesh()))
        return LimitState.from_density(fluid, rho0, n_sub=int(cfg["limit"]["n_sub"]))
    # same sampled points as the kinetic run: identical initial density
    ens = sample_initial(cfg.kinetic_spec(0.0), g, seed=int(kn["seed"]), u0=fluid.u)
    return LimitState.from_parcels(fluid, ens.positions, ens.weights)


def simulate_limit(cfg: ScenarioConfig, dt: float | None = None,
                   record_every_step: bool = True) -> RunResult:
    state = initial_limit_state(cfg)
    g = cfg.grid
    dt = cfg.time_step(state.fluid.u) if dt is None else dt
    n_steps = max(1, round(cfg["time"]["T"] / dt))
    checkpoints = set(cfg.checkpoint_steps(n_steps))
    res = RunResult("limit", 0.0, dt)
    frozen = bool(cfg["limit"]["frozen_u"])
    remap = int(cfg["limit"]["remap_every"]) or None
    series = {k: [] for k in ("t", "mass", "absorbed_mass", "ledger_error", "u_l2_sq")}
    for n in range(n_steps + 1):
        t = n * dt
        total = state.mass + state.absorbed_mass + state.truncated_mass
        ledger = abs(total - state.initial_mass) / state.initial_mass if state.initial_mass else abs(total)
        res.max_ledger_error = max(res.max_ledger_error, ledger)
        if record_every_step or n in checkpoints:
            series["t"].append(t)
            series["mass"].append(state.mass)
            series["absorbed_mass"].append(state.absorbed_mass)
            series["ledger_error"].append(ledger)
            series["u_l2_sq"].append(state.fluid.u.l2_norm_sq())
        if n in checkpoints:
            res.snapshots.append(Snapshot(t, state.fluid.u, state.rho, 0.0))
            res.metrics.append((t, "mass.alive", state.mass))
            res.metrics.append((t, "mass.absorbed", state.absorbed_mass))
            res.metrics.append((t, "mass.truncated", state.truncated_mass))
            res.metrics.append((t, "mass.ledger_error", ledger))
            res.metrics.append((t, "fluid.u_l2_sq", state.fluid.u.l2_norm_sq()))
            res.metrics.append((t, "rho.max", float(state.rho.values.max())))
            res.metrics.append((t, "rho.min", float(state.rho.values.min())))
        if n == n_steps:
            break
        state = limit_step(state, dt, frozen_u=frozen, advection=_advection(cfg),
                           implicit=cfg["fluid"]["implicit"], remap_every=remap)
    res.final = state
    res.series = {k: np.asarray(v) for k, v in series.items()}
    return res


@dataclass
class SweepResult:
    report: object
    runs: dict
    limit: RunResult


def sweep(cfg: ScenarioConfig) -> SweepResult:
    """All eps runs and the limit run share grid, time step and initial points."""
    eps_list = list(cfg["physics"]["eps_list"])
    if len(eps_list) < 3:
        raise ConfigError("a sweep needs at least 3 eps values")
    lim = simulate_limit(cfg, record_every_step=False)
    runs = {e: simulate_vns(cfg, e, dt=lim.dt, record_every_step=False) for e in eps_list}
    report = convergence_report({e: r.snapshots for e, r in runs.items()}, lim.snapshots)
    return SweepResult(report, runs, lim)
