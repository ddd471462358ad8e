"""End-to-end experiments: bound verification, sweeps, Monte Carlo, push-forward.

Every solve that passes through here gets the full diagnostic battery
(energy balance, Poincare slack, solver residual) attached to its report.
Bound checks are recorded as ratios against the explicit constants with a
configurable generic prefactor; they are never hard-asserted here because
the prefactor is a modelling choice.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .dtn import SpectralGrid
from .errors import ElastripError
from .geometry import (CoefficientLaw, CutoffFn, SourceSpec, SurfaceProfile,
                       invert_vertical, make_profile, sample_ensemble)
from .mesh import StripMesh
from .params import (ElasticParams, StripGeometry, bound_constants,
                     total_bound_stochastic)
from .solver import (DiscreteField, TransformCoefficients, assemble_rhs,
                     energy_balance, poincare_slack, solve_field)
from .sources import BumpSource

ENERGY_TOL = 1e-8
POWER_TOL = -1e-12


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    config_echo: dict
    u_vh: float
    g_l2: float
    g_h1: float
    bound: dict                      # BoundReport.as_dict() with measured_ratio
    diagnostics: dict
    wall_time: float
    label: str = "run"

    CSV_FIELDS = ("label", "omega", "h", "L", "u_vh", "g_l2", "g_h1",
                  "total_bound", "measured_ratio", "energy_residual",
                  "radiated_power", "poincare_slack", "solve_residual",
                  "solve_iterations")

    def csv_row(self) -> dict:
        return {
            "label": self.label,
            "omega": self.config_echo["physics"]["omega"],
            "h": self.config_echo["geometry"]["h"],
            "L": self.diagnostics["surface_L"],
            "u_vh": repr(self.u_vh),
            "g_l2": repr(self.g_l2),
            "g_h1": repr(self.g_h1),
            "total_bound": repr(self.bound["total_bound"]),
            "measured_ratio": repr(self.bound["measured_ratio"]),
            "energy_residual": repr(self.diagnostics["energy_residual"]),
            "radiated_power": repr(self.diagnostics["radiated_power"]),
            "poincare_slack": repr(self.diagnostics["poincare_slack"]),
            "solve_residual": repr(self.diagnostics["solve_residual"]),
            "solve_iterations": self.diagnostics["solve_iterations"],
        }

    def as_dict(self) -> dict:
        return {"config": self.config_echo, "label": self.label,
                "u_vh": self.u_vh, "g_l2": self.g_l2, "g_h1": self.g_h1,
                "bound": self.bound, "diagnostics": self.diagnostics,
                "wall_time": self.wall_time}


@dataclass
class McReport:
    n_samples: int
    n_completed: int
    seed: int
    mean_u_sq: float
    mean_g_sq: float
    se_u_sq: float
    se_g_sq: float
    stochastic_bound: float          # (h-m+2)^2 (C4+C5+C6)^2 with L0 = M0 + L
    ratio: float                     # mean_u_sq / (stochastic_bound * mean_g_sq)
    failures: list = field(default_factory=list)
    sample_rows: list = field(default_factory=list)

    @property
    def completeness(self) -> float:
        return self.n_completed / self.n_samples

    def as_dict(self) -> dict:
        return {"n_samples": self.n_samples, "n_completed": self.n_completed,
                "completeness": self.completeness, "seed": self.seed,
                "mean_u_sq": self.mean_u_sq, "mean_g_sq": self.mean_g_sq,
                "se_u_sq": self.se_u_sq, "se_g_sq": self.se_g_sq,
                "stochastic_bound": self.stochastic_bound, "ratio": self.ratio,
                "failures": self.failures}


# ---------------------------------------------------------------------------
# setup plumbing
# ---------------------------------------------------------------------------

def build_setup(cfg: RunConfig):
    """Instantiate typed objects for one run (flat reference, optional bumps)."""
    params = cfg.elastic_params()
    geom = cfg.strip_geometry()
    d = cfg.discretization
    grid = SpectralGrid(N1=d.N1, N2=d.N2, cell=geom.cell)
    s = cfg.surface
    if not (geom.m < s.f0_offset < geom.M_sup):
        from .errors import ConfigError
        raise ConfigError(
            f"reference level {s.f0_offset} outside the slab ({geom.m}, {geom.M_sup})")
    f0 = SurfaceProfile(offset=s.f0_offset, terms=(), cell=geom.cell)
    mesh = StripMesh(grid=grid, bottom=s.f0_offset, top=geom.h, n_elements=d.n_z)
    profile = make_profile(s.f0_offset, s.terms, geom) if s.terms else f0
    cutoff = CutoffFn(delta=s.delta, gamma_gap=geom.h - s.f0_offset)
    src_bottom = geom.M_sup + 0.1 * (geom.h - geom.M_sup)
    sc = cfg.source
    source = BumpSource.centered(geom, src_bottom, amplitude=sc.amplitude,
                                 component=sc.component, j1=sc.j1, j2=sc.j2,
                                 phase=sc.phase)
    return params, geom, grid, mesh, f0, profile, cutoff, source


def _quad_heights(mesh: StripMesh, coeffs: TransformCoefficients | None):
    if coeffs is None:
        return mesh.zq[None, None, :, :]
    return coeffs.x3


def field_physical_norms(field: DiscreteField, coeffs: TransformCoefficients | None):
    """(L2^2, grad^2) of the field over the physical strip (change of variables)."""
    from .solver import _physical_gradient

    mesh = field.mesh
    g = mesh.grid
    xi1, xi2 = g.frequencies()
    ixi1 = 1j * xi1[None, :, None, None, None]
    ixi2 = 1j * xi2[None, None, :, None, None]
    Uq = mesh.eval_at_quad(field.coeff)
    dUq = mesh.deriv_at_quad(field.coeff)
    Gy_hat = np.stack([ixi1 * Uq, ixi2 * Uq, dUq], axis=1)
    u_phys = mesh.to_physical(Uq, ax1=1, ax2=2)
    Gy = mesh.to_physical(Gy_hat, ax1=2, ax2=3)
    Gx = _physical_gradient(Gy, None if (coeffs is None or coeffs.is_identity) else coeffs)
    wgt = mesh.wq[None, None, :, :] * mesh.point_weight
    if coeffs is not None and not coeffs.is_identity:
        wgt = wgt * coeffs.det
    l2 = float(np.sum(wgt * np.abs(u_phys) ** 2))
    grad = float(np.sum(wgt * np.abs(Gx) ** 2))
    return l2, grad


def source_norms(source, mesh: StripMesh, coeffs: TransformCoefficients | None,
                 physical: bool = False):
    """(||g||_L2, ||g||_H1) over the strip by the solver's quadrature."""
    x1, x2 = mesh.collocation_padded()
    X1 = x1[:, None, None, None]
    X2 = x2[None, :, None, None]
    Z = _quad_heights(mesh, coeffs) if physical else mesh.zq[None, None, :, :]
    vals = source.values(X1, X2, Z)
    grads = source.gradients(X1, X2, Z)
    wgt = mesh.wq[None, None, :, :] * mesh.point_weight
    if physical and coeffs is not None and not coeffs.is_identity:
        wgt = wgt * coeffs.det
    l2_sq = float(np.sum(wgt * vals ** 2))
    h1_sq = l2_sq + float(np.sum(wgt * grads ** 2))
    return np.sqrt(l2_sq), np.sqrt(h1_sq)


def _diagnose(field: DiscreteField, rhs, params: ElasticParams, info, profile):
    res, power = energy_balance(field, rhs, params)
    diag = {
        "energy_residual": res,
        "radiated_power": power,
        "poincare_slack": poincare_slack(field),
        "solve_residual": info.residual,
        "solve_iterations": info.iterations,
        "solve_method": info.method,
        "surface_L": profile.L,
    }
    diag["energy_ok"] = bool(res <= ENERGY_TOL and power >= POWER_TOL)
    diag["poincare_ok"] = bool(diag["poincare_slack"] >= -1e-12)
    return diag


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def deterministic_run(cfg: RunConfig, label: str = "run") -> tuple[RunReport, DiscreteField]:
    """One full solve with the configured surface; bound ratio in physical norms."""
    t0 = time.perf_counter()
    params, geom, grid, mesh, f0, profile, cutoff, source = build_setup(cfg)
    coeffs = None
    if not profile.is_flat():
        coeffs = TransformCoefficients(mesh, f0, profile, cutoff)
    rhs = assemble_rhs(mesh, source, coeffs, physical=True)
    field, info = solve_field(mesh, params, rhs, coeffs,
                              tol=cfg.discretization.solver_tol)
    l2_sq, grad_sq = field_physical_norms(field, coeffs)
    u_vh = float(np.sqrt(l2_sq + grad_sq))
    g_l2, g_h1 = source_norms(source, mesh, coeffs, physical=True)
    report = bound_constants(params, geom, L=profile.L, generic_C=cfg.run.generic_C)
    ratio = u_vh / (report.total_bound * g_h1) if g_h1 > 0 else 0.0
    report = report.with_ratio(ratio)
    diag = _diagnose(field, rhs, params, info, profile)
    run = RunReport(config_echo=cfg.as_dict(), u_vh=u_vh, g_l2=g_l2, g_h1=g_h1,
                    bound=report.as_dict(), diagnostics=diag,
                    wall_time=time.perf_counter() - t0, label=label)
    return run, field


_SWEEP_AXES = ("omega", "h", "L_amplitude")


def _with_axis(cfg: RunConfig, axis: str, value: float) -> RunConfig:
    from dataclasses import replace

    if axis == "omega":
        return replace(cfg, physics=replace(cfg.physics, omega=float(value)))
    if axis == "h":
        return replace(cfg, geometry=replace(cfg.geometry, h=float(value)))
    if axis == "L_amplitude":
        terms = tuple((j1, j2, value * c, value * s) for j1, j2, c, s in cfg.surface.terms)
        return replace(cfg, surface=replace(cfg.surface, terms=terms))
    raise ValueError(f"sweep axis must be one of {_SWEEP_AXES}, got {axis!r}")


def parameter_sweep(cfg: RunConfig, axis: str, values) -> list[dict]:
    """One deterministic run per value; per-point failures recorded, not raised."""
    rows = []
    for v in values:
        v = float(v)
        if not np.isfinite(v):
            raise ValueError(f"sweep value must be finite, got {v}")
        try:
            point_cfg = _with_axis(cfg, axis, v)
            rep, _ = deterministic_run(point_cfg, label=f"{axis}={v:g}")
            rows.append({"axis": axis, "value": v, "report": rep, "error": None})
        except ElastripError as exc:
            rows.append({"axis": axis, "value": v, "report": None,
                         "error": f"{type(exc).__name__}: {exc}"})
    return rows


def monte_carlo(cfg: RunConfig, n: int | None = None, seed: int | None = None) -> McReport:
    """Ensemble of transformed solves; stochastic bound ratio with L0 = M0 + L.

    Sources are drawn per sample on the reference strip; norms are plain
    reference-strip H1 quantities.  Failed samples are recorded and skipped,
    the means run over completed samples only.
    """
    n = cfg.run.n_samples if n is None else int(n)
    seed = cfg.run.seed if seed is None else int(seed)
    params, geom, grid, mesh, f0, _, cutoff, _ = build_setup(cfg)
    s = cfg.surface
    if not s.law_bands:
        raise ElastripError("monte_carlo needs surface.law_bands in the config")
    law = CoefficientLaw(bands=tuple(tuple(b) for b in s.law_bands))
    spec = SourceSpec(amplitude=cfg.source.amplitude)
    samples = sample_ensemble(seed, n, s.M0, law, geom, f0, source_spec=spec)

    u_sqs, g_sqs, rows, failures = [], [], [], []
    for sample in samples:
        try:
            coeffs = None
            if not sample.surface.is_flat():
                coeffs = TransformCoefficients(mesh, f0, sample.surface, cutoff)
            rhs = assemble_rhs(mesh, sample.source, coeffs)
            field, info = solve_field(mesh, params, rhs, coeffs,
                                      tol=cfg.discretization.solver_tol)
            u_sq = field.vh_norm() ** 2
            _, g_h1 = source_norms(sample.source, mesh, None)
            g_sq = g_h1 ** 2
            res, power = energy_balance(field, rhs, params)
            u_sqs.append(u_sq)
            g_sqs.append(g_sq)
            rows.append({"sample_id": sample.sample_id, "u_h1_sq": u_sq,
                         "g_h1_sq": g_sq, "energy_residual": res,
                         "radiated_power": power, "surface_L": sample.surface.L,
                         "iterations": info.iterations})
        except ElastripError as exc:
            failures.append({"sample_id": sample.sample_id,
                             "error": f"{type(exc).__name__}: {exc}"})

    if not u_sqs:
        raise ElastripError("all Monte Carlo samples failed")
    u_arr, g_arr = np.array(u_sqs), np.array(g_sqs)
    L0 = s.M0 + f0.L
    rep = bound_constants(params, geom, L=L0, generic_C=cfg.run.generic_C)
    sbound = total_bound_stochastic(rep, geom)
    ratio = float(u_arr.mean() / (sbound * g_arr.mean()))

    def se(a):
        return float(a.std(ddof=1) / np.sqrt(len(a))) if len(a) > 1 else 0.0

    return McReport(n_samples=n, n_completed=len(u_sqs), seed=seed,
                    mean_u_sq=float(u_arr.mean()), mean_g_sq=float(g_arr.mean()),
                    se_u_sq=se(u_arr), se_g_sq=se(g_arr),
                    stochastic_bound=sbound, ratio=ratio,
                    failures=failures, sample_rows=rows)


def pushforward_check(cfg: RunConfig, profile: SurfaceProfile | None = None,
                      n_z: int | None = None, n_pts: int = 12) -> dict:
    """Cross-check two flattening routes of the same physical problem.

    The same rough surface is solved through two different transforms (the
    configured cutoff and a second one with a smaller plateau), both driven
    by the physical source.  Each discrete solution is pulled back to shared
    physical sample points by inverting its own vertical map; the relative
    L2 discrepancy over those points is returned together with a V_h-norm
    comparison of the two reference-strip fields.
    """
    params, geom, grid, mesh, f0, cfg_profile, cutoff_a, source = build_setup(cfg)
    profile = profile if profile is not None else cfg_profile
    if n_z is not None:
        mesh = StripMesh(grid=grid, bottom=mesh.bottom, top=mesh.top, n_elements=n_z)
    gap = geom.h - cfg.surface.f0_offset
    cutoff_b = CutoffFn(delta=0.5 * cutoff_a.delta, gamma_gap=gap)

    fields = []
    for cutoff in (cutoff_a, cutoff_b):
        coeffs = TransformCoefficients(mesh, f0, profile, cutoff)
        rhs = assemble_rhs(mesh, source, coeffs, physical=True)
        fld, _ = solve_field(mesh, params, rhs, coeffs,
                             tol=cfg.discretization.solver_tol)
        fields.append((fld, cutoff))

    # shared physical sample points: horizontal lattice x heights above the
    # surface maximum (both transforms are invertible there)
    x1 = geom.cell[0] * (np.arange(n_pts) + 0.3) / n_pts
    x2 = geom.cell[1] * (np.arange(n_pts) + 0.7) / n_pts
    z_lo = profile.f_max + 0.05 * (geom.h - profile.f_max)
    z_hi = geom.h - 0.05 * (geom.h - profile.f_max)
    x3 = np.linspace(z_lo, z_hi, n_pts)
    X1, X2, X3 = np.meshgrid(x1, x2, x3, indexing="ij")
    if X3.min() <= profile.f_max or X3.max() >= geom.h:
        raise ElastripError("pushforward sample points leave the strip")

    pulled = []
    for fld, cutoff in fields:
        Y3 = invert_vertical(X3, X1, X2, f0, profile, cutoff, geom.h)
        vals = fld.values_at_points(X1.ravel(), X2.ravel(), Y3.ravel())
        pulled.append(vals)
    diff = np.linalg.norm(pulled[0] - pulled[1])
    ref = max(np.linalg.norm(pulled[0]), np.linalg.norm(pulled[1]))
    rel_l2 = float(diff / ref) if ref > 0 else 0.0

    dv = DiscreteField(fields[0][0].coeff - fields[1][0].coeff, mesh)
    rel_vh = dv.vh_norm() / max(fields[0][0].vh_norm(), fields[1][0].vh_norm())
    return {"rel_l2": rel_l2, "rel_vh": float(rel_vh), "n_z": mesh.n_elements,
            "n_modes": (grid.n1, grid.n2)}


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def write_run_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RunReport.CSV_FIELDS)
        w.writeheader()
        for r in reports:
            w.writerow(r.csv_row())


def write_sweep_csv(path, rows) -> None:
    fields = ("axis", "value", "status", "u_vh", "g_h1", "total_bound",
              "measured_ratio", "energy_residual")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            rep = row["report"]
            if rep is None:
                w.writerow({"axis": row["axis"], "value": repr(row["value"]),
                            "status": row["error"]})
            else:
                w.writerow({"axis": row["axis"], "value": repr(row["value"]),
                            "status": "ok", "u_vh": repr(rep.u_vh),
                            "g_h1": repr(rep.g_h1),
                            "total_bound": repr(rep.bound["total_bound"]),
                            "measured_ratio": repr(rep.bound["measured_ratio"]),
                            "energy_residual": repr(rep.diagnostics["energy_residual"])})


def write_mc_csv(path, report: McReport) -> None:
    fields = ("sample_id", "u_h1_sq", "g_h1_sq", "energy_residual",
              "radiated_power", "surface_L", "iterations")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in report.sample_rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v)
                        for k, v in row.items()})


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
