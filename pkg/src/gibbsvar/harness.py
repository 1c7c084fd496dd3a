"""Experiment runner: simulate replicates, fit every estimator, persist rows.

Replicate seeds derive deterministically from the master seed, so a rerun of
the same plan reproduces the same estimates row for row; workers only change
scheduling, never content. Rows stream to CSV in replicate order and a crashed
run resumes by recomputing only the replicates whose rows are incomplete.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import GibbsvarError
from .estimators import (EmpiricalSystem, EstimateResult, grid_system,
                         pooled_estimate, sandwich_covariance,
                         shift_invariant_system, solve)
from .geometry import Configuration, Window
from .models import GibbsModel, model_from_spec, theta_is_valid
from .mple import build_quadrature, fit_mple
from .sampler import SamplerConfig, simulate

__all__ = [
    "EstimatorSpec",
    "ExperimentPlan",
    "ExperimentReport",
    "child_seed",
    "fit_one",
    "run_experiment",
    "summarize",
    "ROW_HEADER",
]

ROW_HEADER = "rep,estimator,theta1,theta2,sigma,eps,valid,cond,seconds,status"
WORKERS_ENV = "GIBBSVAR_WORKERS"


def child_seed(master: int, rep: int) -> int:
    """Replicate seed via the splittable SeedSequence scheme."""
    seq = np.random.SeedSequence(master, spawn_key=(rep,))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str                      # invariant | grid | mple
    label: Optional[str] = None
    formula: str = "simplified"
    cell_side: float = 0.2
    border: float = 0.0
    covariance: bool = False
    grid_res: int = 128
    rescale: Optional[float] = None   # None: true sigma when available

    def __post_init__(self):
        if self.kind not in ("invariant", "grid", "mple"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.label is None:
            object.__setattr__(self, "label", self.kind)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class ExperimentPlan:
    model: dict
    window: Window
    replicates: int
    estimators: Sequence[EstimatorSpec]
    seed: int = 0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    outdir: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "window": {"lower": list(self.window.lower),
                       "upper": list(self.window.upper)},
            "replicates": self.replicates,
            "seed": self.seed,
            "sampler": {
                "steps": self.sampler.steps,
                "mix": list(self.sampler.mix),
                "move_scale": self.sampler.move_scale,
                "burn_in_fraction": self.sampler.burn_in_fraction,
                "fixed_n": self.sampler.fixed_n,
                "capacity_factor": self.sampler.capacity_factor,
            },
            "estimators": [e.to_dict() for e in self.estimators],
            "outdir": self.outdir,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        win = Window(np.array(d["window"]["lower"]),
                     np.array(d["window"]["upper"]))
        samp = d.get("sampler", {})
        cfg = SamplerConfig(
            steps=samp.get("steps", 500_000),
            mix=tuple(samp.get("mix", (0.35, 0.35, 0.30))),
            move_scale=samp.get("move_scale"),
            burn_in_fraction=samp.get("burn_in_fraction", 1.0),
            fixed_n=samp.get("fixed_n"),
            capacity_factor=samp.get("capacity_factor", 8.0),
        )
        ests = [EstimatorSpec(**e) for e in d["estimators"]]
        return cls(model=d["model"], window=win, replicates=int(d["replicates"]),
                   estimators=ests, seed=int(d.get("seed", 0)), sampler=cfg,
                   outdir=d.get("outdir"))

    @classmethod
    def from_json(cls, path) -> "ExperimentPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_one(config: Configuration, model: GibbsModel, est: EstimatorSpec):
    """Fit one estimator; returns (EstimateResult, EmpiricalSystem or None)."""
    basis = model.basis
    if est.kind == "invariant":
        system = shift_invariant_system(config, basis, formula=est.formula,
                                        border=est.border)
        return solve(system), system
    if est.kind == "grid":
        system = grid_system(config, basis, cell_side=est.cell_side,
                             formula=est.formula, border=est.border)
        result = solve(system)
        if est.covariance:
            result.covariance = sandwich_covariance(
                config, basis, cell_side=est.cell_side, theta=result.theta,
                formula=est.formula)
        return result, system
    # mple
    rescale = est.rescale
    if rescale is None:
        theta = model.theta
        if theta.shape == (2,) and theta_is_valid(theta):
            rescale = float((-theta[0] / theta[1]) ** (1.0 / 6.0))
        else:
            rescale = 1.0
    quad = build_quadrature(config, basis, grid_res=est.grid_res,
                            rescale=rescale)
    return fit_mple(quad), None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _row_line(row: dict) -> str:
    seconds = row.get("seconds")
    return ",".join([
        str(row["rep"]), row["estimator"],
        _fmt(row.get("theta1")), _fmt(row.get("theta2")),
        _fmt(row.get("sigma")), _fmt(row.get("eps")),
        _fmt(row.get("valid")), _fmt(row.get("cond")),
        "" if seconds is None else f"{seconds:.3f}",
        row["status"],
    ])


def _parse_rows(path: Path):
    rows = []
    lines = path.read_text().strip().splitlines()
    for line in lines[1:]:
        f = line.split(",")
        rows.append({
            "rep": int(f[0]), "estimator": f[1],
            "theta1": float(f[2]) if f[2] else None,
            "theta2": float(f[3]) if f[3] else None,
            "sigma": float(f[4]) if f[4] else None,
            "eps": float(f[5]) if f[5] else None,
            "valid": bool(int(f[6])) if f[6] else None,
            "cond": float(f[7]) if f[7] else None,
            "seconds": float(f[8]) if f[8] else None,
            "status": f[9],
        })
    return rows


def _result_to_row(rep: int, label: str, result: EstimateResult,
                   seconds: float) -> dict:
    theta = result.theta
    return {
        "rep": rep, "estimator": label,
        "theta1": float(theta[0]), "theta2": float(theta[1]) if len(theta) > 1 else None,
        "sigma": result.sigma, "eps": result.epsilon,
        "valid": result.valid, "cond": result.cond,
        "seconds": seconds, "status": "ok",
    }


def _error_row(rep: int, label: str, err: GibbsvarError, seconds: float) -> dict:
    status = {
        "SingularSystemError": "singular",
        "DivergedError": "diverged",
        "InfeasibleDataError": "infeasible",
        "InsufficientCellsError": "insufficient-cells",
        "InvalidEstimateError": "invalid",
    }.get(type(err).__name__, "error")
    return {"rep": rep, "estimator": label, "theta1": None, "theta2": None,
            "sigma": None, "eps": None, "valid": None, "cond": None,
            "seconds": seconds, "status": status}


@dataclass
class ExperimentReport:
    plan: ExperimentPlan
    rows: list
    systems: dict      # label -> list of EmpiricalSystem
    summary: dict
    sim_seconds: list


def _run_replicate(rep: int, plan: ExperimentPlan, model: GibbsModel):
    cfg = replace(plan.sampler, seed=child_seed(plan.seed, rep))
    t0 = time.perf_counter()
    config = simulate(model, plan.window, cfg)
    sim_seconds = time.perf_counter() - t0
    rows, systems = [], {}
    for est in plan.estimators:
        t1 = time.perf_counter()
        try:
            result, system = fit_one(config, model, est)
            rows.append(_result_to_row(rep, est.label, result,
                                       time.perf_counter() - t1))
            if system is not None:
                systems[est.label] = system
        except GibbsvarError as err:
            rows.append(_error_row(rep, est.label, err,
                                   time.perf_counter() - t1))
    return rep, sim_seconds, rows, systems


def _system_line(rep: int, label: str, system: EmpiricalSystem) -> str:
    a = system.a_hat.ravel()
    b = system.b_hat
    vals = [str(rep), label, str(system.count), f"{system.volume:.17g}",
            system.variant, system.formula]
    vals += [f"{v:.17g}" for v in a] + [f"{v:.17g}" for v in b]
    return ",".join(vals)


def _parse_systems(path: Path, p: int):
    """rep -> {label: EmpiricalSystem} from a persisted systems.csv."""
    out: dict[int, dict] = {}
    lines = path.read_text().strip().splitlines()
    for line in lines[1:]:
        f = line.split(",")
        rep, label = int(f[0]), f[1]
        a = np.array([float(v) for v in f[6:6 + p * p]]).reshape(p, p)
        b = np.array([float(v) for v in f[6 + p * p:6 + p * p + p]])
        out.setdefault(rep, {})[label] = EmpiricalSystem(
            a_hat=a, b_hat=b, count=int(f[2]), volume=float(f[3]),
            variant=f[4], formula=f[5])
    return out


def run_experiment(plan: ExperimentPlan, outdir=None,
                   workers: Optional[int] = None) -> ExperimentReport:
    """Simulate -> fit -> aggregate; deterministic given the master seed."""
    model = model_from_spec(plan.model)
    outdir = Path(outdir or plan.outdir) if (outdir or plan.outdir) else None
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "0")) or (os.cpu_count() or 1)
    workers = max(1, min(workers, plan.replicates))

    done: dict[int, tuple] = {}
    labels = [e.label for e in plan.estimators]
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        rows_path = outdir / "rows.csv"
        if rows_path.exists():
            by_rep: dict[int, list] = {}
            for row in _parse_rows(rows_path):
                by_rep.setdefault(row["rep"], []).append(row)
            sys_path = outdir / "systems.csv"
            saved_systems = (_parse_systems(sys_path, model.basis.p)
                             if sys_path.exists() else {})
            for rep, rws in by_rep.items():
                if sorted(r["estimator"] for r in rws) == sorted(labels):
                    done[rep] = (rep, None, rws, saved_systems.get(rep, {}))

    todo = [r for r in range(plan.replicates) if r not in done]
    results = dict(done)
    if todo:
        if workers == 1:
            for rep in todo:
                results[rep] = _run_replicate(rep, plan, model)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for out in pool.map(lambda r: _run_replicate(r, plan, model), todo):
                    results[out[0]] = out

    all_rows, sim_seconds = [], []
    systems: dict[str, list] = {lab: [] for lab in labels}
    for rep in range(plan.replicates):
        _, secs, rows, syss = results[rep]
        all_rows.extend(rows)
        if secs is not None:
            sim_seconds.append(secs)
        for lab, system in syss.items():
            systems[lab].append(system)

    if outdir is not None:
        lines = [ROW_HEADER] + [_row_line(r) for r in all_rows]
        (outdir / "rows.csv").write_text("\n".join(lines) + "\n")
        sys_lines = ["rep,estimator,count,volume,variant,formula,"
                     + ",".join(f"a{i}{j}" for i in range(model.basis.p)
                                for j in range(model.basis.p))
                     + "," + ",".join(f"b{i}" for i in range(model.basis.p))]
        for rep in range(plan.replicates):
            _, _, _, syss = results[rep]
            for lab in labels:
                if lab in syss:
                    sys_lines.append(_system_line(rep, lab, syss[lab]))
        (outdir / "systems.csv").write_text("\n".join(sys_lines) + "\n")
        plan.to_json(outdir / "plan.json")
    summary = summarize(all_rows, systems=systems, outdir=outdir)
    return ExperimentReport(plan=plan, rows=all_rows, systems=systems,
                            summary=summary, sim_seconds=sim_seconds)


def _stats(values) -> Optional[dict]:
    vals = np.asarray([v for v in values if v is not None], dtype=float)
    if not len(vals):
        return None
    return {"mean": float(np.mean(vals)), "median": float(np.median(vals)),
            "sd": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
            "n": int(len(vals))}


def _vector_stats(rows, keys) -> Optional[dict]:
    vecs = [[r[k] for k in keys] for r in rows
            if all(r[k] is not None for k in keys)]
    if not vecs:
        return None
    arr = np.asarray(vecs, dtype=float)
    return {"mean": np.mean(arr, axis=0).tolist(),
            "median": np.median(arr, axis=0).tolist(),
            "sd": (np.std(arr, axis=0, ddof=1).tolist()
                   if len(arr) > 1 else [0.0] * arr.shape[1]),
            "n": int(len(arr))}


def summarize(rows, systems: Optional[dict] = None, outdir=None) -> dict:
    """Per-estimator summary statistics; both invalid-row conventions emitted.

    sigma/epsilon statistics necessarily cover valid estimates only (the map
    to (sigma, epsilon) needs theta inside the valid region); theta statistics
    are reported both over all estimated rows and over valid rows only.
    """
    if isinstance(rows, (str, Path)):
        rows = _parse_rows(Path(rows))
    by_label: dict[str, list] = {}
    for row in rows:
        by_label.setdefault(row["estimator"], []).append(row)
    summary: dict = {"estimators": {}}
    scatter = ["rep,estimator,theta1_x1e12,theta2_x1e6"]
    for label, rws in by_label.items():
        ok = [r for r in rws if r["status"] == "ok"]
        valid = [r for r in ok if r["valid"]]
        entry = {
            "rows": len(rws),
            "errors": len(rws) - len(ok),
            "error_statuses": sorted({r["status"] for r in rws
                                      if r["status"] != "ok"}),
            "invalid_proportion": (len(ok) - len(valid)) / len(ok) if ok else None,
            "sigma": _stats([r["sigma"] for r in valid]),
            "epsilon": _stats([r["eps"] for r in valid]),
            "theta_all": _vector_stats(ok, ("theta1", "theta2")),
            "theta_valid": _vector_stats(valid, ("theta1", "theta2")),
            "mean_fit_seconds": (float(np.mean([r["seconds"] for r in ok
                                                if r["seconds"] is not None]))
                                 if ok else None),
        }
        if systems and systems.get(label):
            pooled = pooled_estimate(systems[label])
            entry["pooled"] = {"theta": pooled.theta.tolist(),
                               "sigma": pooled.sigma, "epsilon": pooled.epsilon,
                               "valid": pooled.valid}
        summary["estimators"][label] = entry
        for r in ok:
            scatter.append(f"{r['rep']},{label},"
                           f"{r['theta1'] * 1e12:.17g},{r['theta2'] * 1e6:.17g}")
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        (outdir / "scatter.csv").write_text("\n".join(scatter) + "\n")
    return summary
