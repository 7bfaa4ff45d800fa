"""Experiment runners: timing sweeps, noise sweeps, and single solves.

Records share one CSV schema; wall times cover the solve call only, with
assembly time logged separately. Studies re-run bit-identically for a fixed
configuration (timings excluded).
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import admm, certify, ctro, dsdp, local_gn, mw
from .solver import SolverSettings

RECORD_FIELDS = [
    "problem",
    "solver",
    "N",
    "N_m",
    "noise",
    "seed",
    "wall_time_s",
    "assembly_time_s",
    "objective",
    "evr",
    "pos_rmse",
    "rot_rmse",
    "iterations",
    "status",
]

SOLVERS = ("local", "local-gt", "sdp", "dsdp", "dsdp-admm")


@dataclass
class ExperimentRecord:
    problem: str
    solver: str
    N: int
    N_m: int
    noise: float
    seed: int
    wall_time_s: float
    assembly_time_s: float
    objective: float
    evr: float
    pos_rmse: float
    rot_rmse: float
    iterations: int
    status: str

    def as_row(self) -> str:
        vals = []
        for name in RECORD_FIELDS:
            v = getattr(self, name)
            if isinstance(v, (float, np.floating)):
                v = float(v)
                vals.append("nan" if math.isnan(v) else repr(v))
            else:
                vals.append(str(v))
        return ",".join(vals)


@dataclass
class ExperimentConfig:
    problem: str = "ctro"
    solvers: tuple[str, ...] = ("sdp", "dsdp")
    sizes: tuple[int, ...] = (8, 16, 32, 64, 128)
    noises: tuple[float, ...] = (0.1,)
    n_seeds: int = 1
    n_landmarks: int = 8
    redundant: bool = True
    tol: float = 1e-10
    gn_restarts: int = 5
    admm_config: admm.AdmmConfig = field(
        default_factory=lambda: admm.AdmmConfig(fixed_iterations=3, inner_tol=1e-3)
    )
    out_dir: str | None = None
    base_seed: int = 0

    def __post_init__(self):
        if not self.sizes or not self.noises or self.n_seeds < 1:
            raise ValueError("grids must be non-empty and seeds >= 1")
        if self.problem not in ("ctro", "mw"):
            raise ValueError(f"unknown problem {self.problem!r}")
        for s in self.solvers:
            if s not in SOLVERS:
                raise ValueError(f"unknown solver {s!r}")


def make_instance(problem: str, n: int, n_landmarks: int, noise: float, seed: int):
    if problem == "ctro":
        cfg = ctro.CtroConfig(
            n_states=n, n_landmarks=n_landmarks, sigma_d_meas=noise, seed=seed
        )
        return ctro.simulate(cfg)
    cfg = mw.MwConfig(n_poses=n, n_landmarks=n_landmarks, sigma_u=noise, sigma_v=noise, seed=seed)
    return mw.simulate(cfg)


def lift_instance(instance, redundant: bool = True):
    if isinstance(instance, ctro.CtroInstance):
        return ctro.lift(instance)
    return mw.lift(instance, redundant=redundant)


def _ground_truth(instance):
    if isinstance(instance, ctro.CtroInstance):
        return instance.gt_states
    return instance.gt_rotations, instance.gt_translations


def solve_one(
    problem_kind: str,
    instance,
    solver_name: str,
    redundant: bool = True,
    tol: float = 1e-10,
    gn_seed: int = 0,
    admm_config: admm.AdmmConfig | None = None,
) -> ExperimentRecord:
    """Run one solver on one instance and package the metrics."""
    n = instance.n_states if problem_kind == "ctro" else instance.n_poses
    n_m = instance.config.n_landmarks
    noise = (
        instance.config.sigma_d_meas if problem_kind == "ctro" else instance.config.sigma_u
    )
    seed = instance.config.seed
    gt = _ground_truth(instance)
    evr_val = float("nan")
    pos_rmse = float("nan")
    rot_rmse = float("nan")
    assembly_time = 0.0

    if solver_name in ("local", "local-gt"):
        rng = np.random.default_rng(gn_seed)
        if solver_name == "local":
            init = local_gn.random_init(instance, rng)
        else:
            init = local_gn.ground_truth_init(instance)
        t0 = time.perf_counter()
        if problem_kind == "ctro":
            res = local_gn.gn_ctro(instance, init)
            est = res.estimate
        else:
            res = local_gn.gn_mw(instance, init[0], init[1])
            est = res.estimate
        wall = time.perf_counter() - t0
        acc = certify.accuracy(est, gt, problem_kind)
        return ExperimentRecord(
            problem=problem_kind, solver=solver_name, N=n, N_m=n_m, noise=noise,
            seed=seed, wall_time_s=wall, assembly_time_s=0.0, objective=res.cost,
            evr=float("nan"), pos_rmse=acc.pos_rmse,
            rot_rmse=acc.rot_rmse if acc.rot_rmse is not None else float("nan"),
            iterations=res.iterations,
            status="converged" if res.converged else "max_iter",
        )

    lifted = lift_instance(instance, redundant=redundant)
    settings = SolverSettings(tol=tol)
    if solver_name == "sdp":
        result = dsdp.solve_full(lifted, settings)
        wall, assembly_time = result.solve_time, result.assembly_time
        iterations = result.solution.iterations
        status = result.status
    elif solver_name == "dsdp":
        result = dsdp.solve_dsdp(lifted, settings=settings)
        wall, assembly_time = result.solve_time, result.assembly_time
        iterations = result.solution.iterations
        status = result.status
    elif solver_name == "dsdp-admm":
        cfg = admm_config or admm.AdmmConfig(fixed_iterations=3, inner_tol=1e-3)
        worker = admm.ConsensusAdmm(lifted, config=cfg)
        t0 = time.perf_counter()
        result, state = worker.run()
        wall = time.perf_counter() - t0
        iterations = state.iteration
        status = "admm"
    else:
        raise ValueError(f"unknown solver {solver_name!r}")

    try:
        est, cert = certify.extract_state(result, lifted)
        acc = certify.accuracy(est, gt, problem_kind)
        evr_val = cert.evr
        pos_rmse = acc.pos_rmse
        rot_rmse = acc.rot_rmse if acc.rot_rmse is not None else float("nan")
    except (certify.ExtractionError, certify.DegenerateSolutionError) as exc:
        status = f"extraction-failure:{exc}"

    return ExperimentRecord(
        problem=problem_kind, solver=solver_name, N=n, N_m=n_m, noise=noise,
        seed=seed, wall_time_s=wall, assembly_time_s=assembly_time,
        objective=result.objective, evr=evr_val, pos_rmse=pos_rmse,
        rot_rmse=rot_rmse, iterations=iterations, status=status,
    )


def run_timing_study(config: ExperimentConfig) -> list[ExperimentRecord]:
    """One instance per size; sequential execution to avoid timing skew."""
    records = []
    noise = config.noises[0]
    sink = _record_sink(config, "timing")
    for n in sorted(config.sizes):
        seed = config.base_seed + n
        instance = make_instance(config.problem, n, config.n_landmarks, noise, seed)
        for solver_name in config.solvers:
            if solver_name == "local":
                for restart in range(config.gn_restarts):
                    rec = _guarded_solve(config, instance, solver_name, gn_seed=restart)
                    records.append(rec)
                    sink(rec)
            else:
                rec = _guarded_solve(config, instance, solver_name)
                records.append(rec)
                sink(rec)
    return records


def run_noise_study(config: ExperimentConfig) -> list[ExperimentRecord]:
    records = []
    n = config.sizes[0]
    sink = _record_sink(config, "noise")
    for noise in config.noises:
        for s in range(config.n_seeds):
            seed = config.base_seed + 1000 * s + 17
            instance = make_instance(config.problem, n, config.n_landmarks, noise, seed)
            for solver_name in config.solvers:
                rec = _guarded_solve(config, instance, solver_name, gn_seed=s)
                records.append(rec)
                sink(rec)
    return records


def _guarded_solve(config, instance, solver_name, gn_seed=0) -> ExperimentRecord:
    try:
        return solve_one(
            config.problem, instance, solver_name,
            redundant=config.redundant, tol=config.tol,
            gn_seed=gn_seed, admm_config=config.admm_config,
        )
    except Exception as exc:  # record the failure, keep the study going
        n = instance.n_states if config.problem == "ctro" else instance.n_poses
        return ExperimentRecord(
            problem=config.problem, solver=solver_name, N=n,
            N_m=config.n_landmarks, noise=config.noises[0],
            seed=instance.config.seed, wall_time_s=float("nan"),
            assembly_time_s=float("nan"), objective=float("nan"),
            evr=float("nan"), pos_rmse=float("nan"), rot_rmse=float("nan"),
            iterations=0, status=f"error:{type(exc).__name__}",
        )


def _record_sink(config, study):
    if config.out_dir is None:
        return lambda rec: None
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, f"{study}_{config.problem}_records.csv")
    with open(path, "w") as f:
        f.write("# chordalloc records v1\n")
        f.write(",".join(RECORD_FIELDS) + "\n")

    def sink(rec):
        with open(path, "a") as f:
            f.write(rec.as_row() + "\n")

    return sink


def write_records_csv(path: str, records: list[ExperimentRecord]) -> None:
    with open(path, "w") as f:
        f.write("# chordalloc records v1\n")
        f.write(",".join(RECORD_FIELDS) + "\n")
        for rec in records:
            f.write(rec.as_row() + "\n")


def read_records_csv(path: str) -> list[ExperimentRecord]:
    records = []
    with open(path) as f:
        header = None
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            vals = dict(zip(header, line.split(",")))
            records.append(
                ExperimentRecord(
                    problem=vals["problem"], solver=vals["solver"],
                    N=int(vals["N"]), N_m=int(vals["N_m"]),
                    noise=float(vals["noise"]), seed=int(vals["seed"]),
                    wall_time_s=float(vals["wall_time_s"]),
                    assembly_time_s=float(vals["assembly_time_s"]),
                    objective=float(vals["objective"]), evr=float(vals["evr"]),
                    pos_rmse=float(vals["pos_rmse"]), rot_rmse=float(vals["rot_rmse"]),
                    iterations=int(vals["iterations"]), status=vals["status"],
                )
            )
    return records


def loglog_slope(sizes, times) -> float:
    """Least-squares slope of log(time) against log(size)."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(times, dtype=float))
    x = x - x.mean()
    return float((x @ (y - y.mean())) / (x @ x))


def report(records: list[ExperimentRecord], out_dir: str) -> list[str]:
    """Aggregate records into per-solver TSV series with reference lines."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    groups: dict[tuple[str, str], dict[int, list[float]]] = {}
    for rec in records:
        if math.isnan(rec.wall_time_s):
            continue
        groups.setdefault((rec.problem, rec.solver), {}).setdefault(rec.N, []).append(
            rec.wall_time_s
        )
    for (problem, solver_name), per_n in sorted(groups.items()):
        sizes = sorted(per_n)
        med = [float(np.median(per_n[n])) for n in sizes]
        anchor = med[0]
        path = os.path.join(out_dir, f"series_{problem}_{solver_name}.tsv")
        with open(path, "w") as f:
            f.write("N\ttime_s\tref_linear\tref_cubic\n")
            for n, t in zip(sizes, med):
                ref1 = anchor * n / sizes[0]
                ref3 = anchor * (n / sizes[0]) ** 3
                f.write(f"{n}\t{t!r}\t{ref1!r}\t{ref3!r}\n")
        written.append(path)
    return written


def write_metadata(config: ExperimentConfig, out_dir: str, note: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    doc = {
        "problem": config.problem,
        "solvers": list(config.solvers),
        "sizes": list(config.sizes),
        "noises": list(config.noises),
        "n_seeds": config.n_seeds,
        "n_landmarks": config.n_landmarks,
        "redundant": config.redundant,
        "tol": config.tol,
        "note": note,
    }
    with open(os.path.join(out_dir, "metadata.json"), "w") as f:
        json.dump(doc, f, indent=2)
