"""Run directories: write fields, reports, plots and a hashed manifest."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import io
from .characteristics import EgcQuery, StaticField, VelocitySeries, egc_check
from .diagnostics import ConvergenceReport
from .scenario import ScenarioConfig, simulate_limit, simulate_vns, sweep


class ValidationFailure(RuntimeError):
    pass


def _prepare(out_dir) -> Path:
    out = Path(out_dir)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    (out / "plots").mkdir(exist_ok=True)
    return out


def _write_snapshots(out: Path, res) -> None:
    rows = []
    for k, s in enumerate(res.snapshots):
        uname, rname = f"fields/u_{k:04d}.bin", f"fields/rho_{k:04d}.bin"
        io.write_field(out / uname, s.u)
        io.write_field(out / rname, s.rho)
        rows.append((k, s.t, uname, rname))
    io._write_rows(out / "fields" / "index.csv", ["index", "t", "u", "rho"], rows)


def _time_plot(path, res, names, title, logy=True):
    series = []
    for n in names:
        pts = [(t, v) for t, v in res.metric(n) if not logy or v > 0]
        if pts:
            series.append((n, [p[0] for p in pts], [p[1] for p in pts]))
    io.svg_plot(path, series, title=title, xlabel="t", ylabel="value", logx=False, logy=logy)


def run_vns(cfg: ScenarioConfig, out_dir=None) -> Path:
    out = _prepare(out_dir or cfg["output"]["dir"])
    res = simulate_vns(cfg)
    fluid, ens = res.final
    _write_snapshots(out, res)
    io.write_metrics(out / "metrics.csv", res.metrics)
    io.write_ensemble(out / "ensemble_final.bin", ens)
    io.ensemble_csv(ens, out / "ensemble_final.csv")
    _time_plot(out / "plots" / "energy.svg", res, ["energy.total", "energy.kinetic"],
               "energy", logy=False)
    _time_plot(out / "plots" / "brinkman.svg", res, ["brinkman.l2", "fluid.u_l2_sq"],
               "Brinkman force and fluid energy")
    E0 = res.energy.initial_energy
    summary = {
        "kind": "vns", "eps": res.eps, "dt": res.dt, "steps": len(res.energy.times) - 1,
        "initial_energy": E0,
        "worst_pair_residual": res.energy.worst_residual if len(res.energy.times) > 1 else 0.0,
        "residual_tolerance": max(1e-3, 10 * res.dt) * E0,
        "max_ledger_error": res.max_ledger_error,
        "absorbed_mass": ens.absorbed_mass, "truncated_mass": ens.truncated_mass,
    }
    io.write_json(out / "summary.json", summary)
    io.write_manifest(out, cfg.data, summary)
    return out


def run_limit(cfg: ScenarioConfig, out_dir=None) -> Path:
    out = _prepare(out_dir or cfg["output"]["dir"])
    res = simulate_limit(cfg)
    _write_snapshots(out, res)
    io.write_metrics(out / "metrics.csv", res.metrics)
    _time_plot(out / "plots" / "absorbed_mass.svg", res, ["mass.absorbed", "mass.alive"],
               "limit density mass", logy=False)
    absorbed = [v for _, v in res.metric("mass.absorbed")]
    summary = {
        "kind": "limit", "dt": res.dt, "max_ledger_error": res.max_ledger_error,
        "absorbed_monotone": bool(np.all(np.diff(absorbed) >= 0)),
        "final_mass": res.final.mass, "absorbed_mass": res.final.absorbed_mass,
    }
    io.write_json(out / "summary.json", summary)
    io.write_manifest(out, cfg.data, summary)
    return out


def write_convergence(out: Path, rep: ConvergenceReport) -> None:
    io.write_json(out / "convergence.json", rep.to_dict())
    rows = list(rep.rows())
    io._write_rows(out / "convergence.csv", list(rows[0].keys()), [list(r.values()) for r in rows])
    label = "n/a" if rep.slope is None else f"{rep.slope:.2f}"
    io.svg_plot(out / "plots" / "error_vs_eps.svg",
                [("total error", rep.eps, rep.total_error), ("u L2", rep.eps, rep.u_err_L2),
                 ("rho H^-1", rep.eps, rep.rho_err_Hm1)],
                title="error vs eps", xlabel="eps", ylabel="error",
                annotation=f"fitted slope {label}")
    glabel = "n/a" if rep.gap_slope is None else f"{rep.gap_slope:.2f}"
    io.svg_plot(out / "plots" / "gap_vs_eps.svg",
                [("||F + rho e_z||", rep.eps, rep.brinkman_gravity_gap)],
                title="Brinkman-gravity gap", xlabel="eps", ylabel="gap",
                annotation=f"fitted slope {glabel}")


def synthetic_report(eps_list, exponent=0.5) -> ConvergenceReport:
    from .diagnostics import _safe_slope
    e = tuple(sorted(eps_list, reverse=True))
    err = tuple(x ** exponent for x in e)
    zero = tuple(0.0 for _ in e)
    return ConvergenceReport(e, err, zero, err, _safe_slope(e, err), _safe_slope(e, err))


def sweep_eps(cfg: ScenarioConfig, out_dir=None, synthetic=False) -> tuple[Path, ConvergenceReport]:
    out = _prepare(out_dir or cfg["output"]["dir"])
    eps_list = cfg["physics"]["eps_list"]
    if synthetic:
        rep = synthetic_report(eps_list)
        write_convergence(out, rep)
        io.write_manifest(out, cfg.data, {"kind": "sweep", "synthetic": True, "slope": rep.slope})
        return out, rep
    try:
        sw = sweep(cfg)
    except Exception as exc:
        io.write_manifest(out, cfg.data, {"kind": "sweep", "error": str(exc)}, status="partial")
        raise
    rep = sw.report
    metrics = []
    for e, r in sw.runs.items():
        metrics.extend((t, f"eps={e!r}.{m}", v) for t, m, v in r.metrics)
    metrics.extend((t, f"limit.{m}", v) for t, m, v in sw.limit.metrics)
    io.write_metrics(out / "metrics.csv", metrics)
    write_convergence(out, rep)
    tot = rep.total_error
    gaps = rep.brinkman_gravity_gap
    summary = {
        "kind": "sweep", "slope": rep.slope, "gap_slope": rep.gap_slope,
        "errors_decreasing": all(b < a for a, b in zip(tot, tot[1:])),
        "gap_decreasing": all(b < a for a, b in zip(gaps, gaps[1:])),
        "max_ledger_error": max([r.max_ledger_error for r in sw.runs.values()]
                                + [sw.limit.max_ledger_error]),
    }
    io.write_json(out / "summary.json", summary)
    io.write_manifest(out, cfg.data, summary)
    return out, rep


def velocity_source(source: str, dim: int = 2):
    """``"trivial"`` (fluid at rest) or a run directory with ``fields/index.csv``."""
    if source == "trivial":
        return StaticField(None, dim=dim)
    run = Path(source)
    index = run / "fields" / "index.csv"
    if not index.exists():
        raise FileNotFoundError(f"{source}: no fields/index.csv")
    rows = np.genfromtxt(index, delimiter=",", names=True, dtype=None, encoding="utf-8")
    rows = np.atleast_1d(rows)
    times = [float(t) for t in rows["t"]]
    fields = [io.read_field(run / str(name)) for name in rows["u"]]
    return VelocitySeries(times, fields, hold_last=True)


def check_egc(L, R, T, eps, source="trivial", resolution=21, out_path=None):
    src = velocity_source(source)
    res = egc_check(src, EgcQuery(L, R, T, eps, resolution))
    if out_path is not None:
        Path(out_path).write_text(res.to_json() + "\n")
    return res
