"""Run loop: initial data, coupled stepping, diagnostics, CSV/JSON persistence."""

from __future__ import annotations

import csv
import json
import logging
import math
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SimConfig
from .diagnostics import DiagnosticsRecord, centers, snapshot, total_energy, v_infinity
from .fitting import DEFAULT_FLOOR, fit_decay_rate
from .fluid import BlowUpError, FluidState, random_solenoidal, taylor_green
from .kinetic import CommunicationWeight, ParticleEnsemble, Toggles, sample_ensemble, step_coupled
from .torus import SpectralField, l2_norm_sq, mean_mode

logger = logging.getLogger(__name__)

FITTED_SERIES = ("lyapunov", "support_radius", "drag_l2", "vorticity_l2", "uc_vc_gap", "moment_p2")


def version_string() -> str:
    """``git describe``-style identifier, falling back to the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    from . import __version__

    return __version__


def initial_state(cfg: SimConfig) -> tuple[ParticleEnsemble, FluidState]:
    rng = np.random.default_rng(cfg.seed)
    ens = sample_ensemble(
        cfg.dim,
        cfg.particles,
        cfg.M0,
        cfg.init.v_mean,
        cfg.init.v_std,
        rng,
        cfg.init.x_perturbation,
    )
    fi = cfg.init.fluid
    if fi.kind == "taylor_green":
        u = taylor_green(cfg.grid, fi.amplitude)
        c = u.coeffs.copy()
        c[:, 0, 0] = np.asarray(fi.mean, dtype=float)
        u = u.replace(c)
    elif fi.kind == "random":
        u = random_solenoidal(cfg.dim, cfg.grid, rng, fi.amplitude, fi.kmax, fi.mean)
    else:
        u = SpectralField.zeros(cfg.dim, cfg.grid)
        u.coeffs[(slice(None),) + (0,) * cfg.dim] = np.asarray(fi.mean, dtype=float)
    return ens, FluidState(u, cfg.mu, 0.0)


def limit_velocity(cfg: SimConfig, ens: ParticleEnsemble, fluid: FluidState) -> np.ndarray:
    """Expected common velocity: the momentum-conservation value, or the frozen/decoupled analogue."""
    u_c = mean_mode(fluid.u)
    if ens.N == 0:
        return u_c
    v_c, _, M = centers(ens, fluid.u)
    if cfg.toggles.freeze_fluid:
        # momentum is not exchanged: drag pulls toward the frozen fluid, alignment conserves v_c
        return u_c if cfg.toggles.drag else v_c
    if not cfg.toggles.drag:
        return v_c
    return v_infinity(v_c, u_c, M)


@dataclass
class RunResult:
    config: SimConfig
    records: list[DiagnosticsRecord]
    summary: dict
    ensemble: ParticleEnsemble
    fluid: FluidState
    timeseries_path: Path | None = None
    summary_path: Path | None = None
    error: BlowUpError | None = None
    rows: list[dict] = field(default_factory=list)

    def series(self, column: str) -> tuple[np.ndarray, np.ndarray]:
        t = np.array([r["t"] for r in self.rows])
        return t, np.array([r[column] for r in self.rows], dtype=float)


def fit_series(t, y, tmin: float, floor: float = DEFAULT_FLOOR):
    """Decay fit on t >= tmin with floor clipping; None when it cannot be fitted."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (t >= tmin) & np.isfinite(y)
    if keep.sum() < 8:
        return None
    rate, r2 = fit_decay_rate(t[keep], np.maximum(y[keep], floor))
    return {"rate": rate, "r_squared": r2, "tmin": tmin, "samples": int(keep.sum())}


def momentum_scale(ens: ParticleEnsemble, fluid: FluidState) -> float:
    """Reference size for relative momentum drift, nonzero even when total momentum vanishes."""
    p0 = (ens.w @ ens.v if ens.N else 0.0) + mean_mode(fluid.u)
    gross = float(ens.w @ np.linalg.norm(ens.v, axis=1)) if ens.N else 0.0
    gross += math.sqrt(l2_norm_sq(fluid.u))
    return max(float(np.linalg.norm(p0)), gross, 1e-300)


def _summarize(cfg, rows, vinf, scale, energy_jump, runtime, status, last_t):
    tmin = cfg.diagnostics.fit_tmin
    t = np.array([r["t"] for r in rows])

    def col(name):
        return np.array([r.get(name, np.nan) for r in rows], dtype=float)

    fits = {name: fit_series(t, col(name), tmin) for name in FITTED_SERIES if name in rows[0]}
    for name in ("w1_exact", "w1_bound_sub", "w_bound_p1"):
        if name in rows[0]:
            fits[name] = fit_series(t, col(name), tmin)
    growth = {}
    for key in rows[0]:
        if key.startswith("fq_q"):
            fit = fit_series(t, col(key), tmin)
            if fit is not None:
                growth[key] = {"rate": -fit["rate"], "r_squared": fit["r_squared"]}
    d = cfg.dim
    mom = np.stack([col(f"momentum_{k}") for k in range(d)], axis=1)
    p0 = mom[0]
    v0 = np.stack([col(f"v_c_{k}") for k in range(d)], axis=1)
    mass = col("mass")
    density = col("max_cell_density")
    summary = {
        "status": status,
        "last_t": last_t,
        "runtime_s": runtime,
        "version": version_string(),
        "seed": cfg.seed,
        "psi_min": cfg.psi_min,
        "psi_max": cfg.psi_max,
        "M0": cfg.M0,
        "v_infinity": [float(x) for x in vinf],
        "fits": fits,
        "fq_growth": growth,
        "conservation": {
            "mass_drift": float(np.max(np.abs(mass - mass[0]))) if mass.size else 0.0,
            "momentum_drift_abs": float(np.max(np.linalg.norm(mom - p0, axis=1))),
            "momentum_drift_rel": float(np.max(np.linalg.norm(mom - p0, axis=1)) / scale),
            "energy_max_step_increase": energy_jump,
            "v_c_drift": float(np.nanmax(np.linalg.norm(v0 - v0[0], axis=1))) if np.all(np.isfinite(v0[0])) else None,
        },
        "max_cell_density": {
            "min": float(np.nanmin(density)),
            "max": float(np.nanmax(density)),
        },
        "config": cfg.to_dict(),
    }
    return summary


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(float(obj)) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def run(cfg: SimConfig, out_dir=None, log_every: int = 0) -> RunResult:
    """Integrate the coupled system per ``cfg`` and record diagnostics.

    Writes ``timeseries.csv`` and ``summary.json`` under ``out_dir`` (or
    ``cfg.output.dir``) when one is given. A blow-up flushes what was recorded,
    writes the summary with ``status='blow-up'`` and re-raises.
    """
    start = time.perf_counter()
    out_dir = out_dir if out_dir is not None else cfg.output.dir
    psi = CommunicationWeight(cfg.psi.kappa0, cfg.psi.kappa1)
    toggles = Toggles(cfg.toggles.drag, cfg.toggles.alignment, cfg.toggles.freeze_fluid)
    dg = cfg.diagnostics
    workers = cfg.threads
    ens, fluid = initial_state(cfg)
    vinf = limit_velocity(cfg, ens, fluid)
    scale = momentum_scale(ens, fluid)
    w1_rng = np.random.default_rng([cfg.seed, 1])
    p_list = [float(p) for p in dg.p_list]
    q_list = [float(q) for q in dg.q_list]

    ts_path = sm_path = None
    writer = handle = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ts_path = out / cfg.output.timeseries
        sm_path = out / cfg.output.summary
        handle = open(ts_path, "w", newline="")

    records: list[DiagnosticsRecord] = []
    rows: list[dict] = []

    def record(step: int):
        nonlocal writer
        w1 = None
        if dg.wasserstein_cadence and step % dg.wasserstein_cadence == 0 and ens.N:
            w1 = (dg.wasserstein_subsample, w1_rng)
        rec = snapshot(
            step * cfg.dt,
            ens,
            fluid.u,
            psi,
            cfg.M0,
            vinf,
            mu=cfg.mu,
            toggles=toggles,
            p_list=p_list,
            q_list=q_list,
            histogram_bins=dg.histogram_bins,
            pair_threshold=dg.pair_threshold,
            w1_sample=w1,
        )
        records.append(rec)
        row = rec.as_row()
        rows.append(row)
        if handle is not None:
            if writer is None:
                writer = csv.DictWriter(handle, fieldnames=list(row))
                writer.writeheader()
            writer.writerow({k: repr(float(v)) for k, v in row.items()})
            handle.flush()

    status, error = "ok", None
    energy = total_energy(ens, fluid.u)
    energy_jump = -math.inf
    n_steps = cfg.n_steps
    try:
        record(0)
        for step in range(1, n_steps + 1):
            ens, fluid = step_coupled(ens, fluid, psi, cfg.dt, toggles, workers)
            e_new = total_energy(ens, fluid.u)
            energy_jump = max(energy_jump, e_new - energy)
            energy = e_new
            if step % dg.cadence == 0 or step == n_steps:
                record(step)
            if log_every and step % log_every == 0:
                logger.info("step %d/%d t=%.4g energy=%.6g", step, n_steps, fluid.t, energy)
    except BlowUpError as exc:
        status, error = "blow-up", exc
        logger.error("blow-up: %s", exc)
    finally:
        if handle is not None:
            handle.close()

    last_t = records[-1].t if records else 0.0
    summary = _summarize(cfg, rows, vinf, scale, energy_jump, time.perf_counter() - start, status, last_t)
    if sm_path is not None:
        sm_path.write_text(json.dumps(_jsonable(summary), indent=2))
    result = RunResult(cfg, records, summary, ens, fluid, ts_path, sm_path, error, rows)
    if error is not None:
        raise error
    return result
