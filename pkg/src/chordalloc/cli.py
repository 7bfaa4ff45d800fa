"""Command-line interface: generate instances, run solvers, and run studies."""

from __future__ import annotations

import argparse
import json
import sys

from . import admm, ctro, harness, mw


def _load_config_file(path: str) -> dict:
    """Flat key = value per line; '#' starts a comment."""
    out = {}
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key] = value
    return out


def _apply_config_defaults(args, file_cfg: dict):
    casts = {
        "problem": str, "solver": str, "solvers": str, "n": int,
        "n_landmarks": int, "noise": float, "seed": int, "seeds": int,
        "sizes": str, "noises": str, "tol": float, "redundant": str,
        "out": str, "restarts": int,
    }
    for key, raw in file_cfg.items():
        if key not in casts:
            raise ValueError(f"unknown config key {key!r}")
        if getattr(args, key, None) in (None, "") and hasattr(args, key):
            setattr(args, key, casts[key](raw))


def _parse_list(text, cast):
    return tuple(cast(part) for part in str(text).split(",") if part != "")


def _default_noise(problem: str) -> float:
    return 0.1 if problem == "ctro" else 1.0


def _make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="chordalloc",
        description="Certifiably optimal localization via decomposed semidefinite relaxations",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--config", type=str, default=None, help="key = value file")
        sp.add_argument("--redundant", choices=("on", "off"), default=None)
        sp.add_argument("--tol", type=float, default=None)

    g = sub.add_parser("generate", help="write an instance JSON")
    common(g)
    g.add_argument("--problem", choices=("ctro", "mw"), default=None)
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--n-landmarks", dest="n_landmarks", type=int, default=None)
    g.add_argument("--noise", type=float, default=None)

    s = sub.add_parser("solve", help="solve one instance with one solver")
    common(s)
    s.add_argument("--problem", choices=("ctro", "mw"), default=None)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--n-landmarks", dest="n_landmarks", type=int, default=None)
    s.add_argument("--noise", type=float, default=None)
    s.add_argument("--solver", choices=harness.SOLVERS, default=None)
    s.add_argument("--instance", type=str, default=None, help="instance JSON to replay")

    t = sub.add_parser("timing", help="solver times over a size grid")
    common(t)
    t.add_argument("--problem", choices=("ctro", "mw"), default=None)
    t.add_argument("--sizes", type=str, default=None, help="comma list of N values")
    t.add_argument("--solvers", type=str, default=None, help="comma list of solvers")
    t.add_argument("--n-landmarks", dest="n_landmarks", type=int, default=None)
    t.add_argument("--noise", type=float, default=None)
    t.add_argument("--restarts", type=int, default=None, help="random inits for 'local'")

    n = sub.add_parser("noise", help="tightness and accuracy over a noise grid")
    common(n)
    n.add_argument("--problem", choices=("ctro", "mw"), default=None)
    n.add_argument("--n", type=int, default=None)
    n.add_argument("--noises", type=str, default=None, help="comma list of noise levels")
    n.add_argument("--solvers", type=str, default=None)
    n.add_argument("--n-landmarks", dest="n_landmarks", type=int, default=None)
    n.add_argument("--seeds", type=int, default=None)

    r = sub.add_parser("report", help="aggregate records into plot-ready TSV series")
    common(r)
    r.add_argument("--records", type=str, required=True)

    return p


def _load_instance(path: str):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("problem") == "ctro":
        return "ctro", ctro.from_json_dict(doc)
    if doc.get("problem") == "mw":
        return "mw", mw.from_json_dict(doc)
    raise ValueError(f"instance file {path} has unknown problem kind")


def main(argv: list[str] | None = None) -> int:
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.config:
            _apply_config_defaults(args, _load_config_file(args.config))
        return _dispatch(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    redundant = (args.redundant or "on") == "on"
    tol = args.tol if args.tol is not None else 1e-10
    seed = args.seed if args.seed is not None else 0

    if args.command == "generate":
        problem = args.problem or "ctro"
        n = args.n or 8
        n_m = args.n_landmarks or 8
        noise = args.noise if args.noise is not None else _default_noise(problem)
        instance = harness.make_instance(problem, n, n_m, noise, seed)
        out = args.out or f"{problem}_n{n}_seed{seed}.json"
        if problem == "ctro":
            ctro.save_json(instance, out)
        else:
            mw.save_json(instance, out)
        print(out)
        return 0

    if args.command == "solve":
        if args.instance:
            problem, instance = _load_instance(args.instance)
        else:
            problem = args.problem or "ctro"
            n = args.n or 8
            n_m = args.n_landmarks or 8
            noise = args.noise if args.noise is not None else _default_noise(problem)
            instance = harness.make_instance(problem, n, n_m, noise, seed)
        solver_name = args.solver or "dsdp"
        rec = harness.solve_one(
            problem, instance, solver_name, redundant=redundant, tol=tol, gn_seed=seed
        )
        doc = {name: getattr(rec, name) for name in harness.RECORD_FIELDS}
        line = json.dumps(doc)
        print(line)
        if args.out:
            with open(args.out, "w") as f:
                f.write(line + "\n")
        return 0

    if args.command == "timing":
        problem = args.problem or "ctro"
        default_sizes = "8,16,32,64,128" if problem == "ctro" else "4,8,16,32,64"
        sizes = _parse_list(args.sizes or default_sizes, int)
        solvers = _parse_list(args.solvers or "sdp,dsdp", str)
        noise = args.noise if args.noise is not None else _default_noise(problem)
        out_dir = args.out or "out_timing"
        config = harness.ExperimentConfig(
            problem=problem, solvers=solvers, sizes=sizes, noises=(noise,),
            n_landmarks=args.n_landmarks or 8, redundant=redundant, tol=tol,
            gn_restarts=args.restarts or 5, out_dir=out_dir, base_seed=seed,
        )
        records = harness.run_timing_study(config)
        harness.write_metadata(config, out_dir, "desk-scale timing study")
        print(f"{len(records)} records -> {out_dir}")
        return 0

    if args.command == "noise":
        problem = args.problem or "ctro"
        default_noises = "0.01,0.05,0.1,0.2,0.5" if problem == "ctro" else "0.5,1,2,5"
        noises = _parse_list(args.noises or default_noises, float)
        solvers = _parse_list(args.solvers or "sdp,dsdp,local,local-gt", str)
        out_dir = args.out or "out_noise"
        config = harness.ExperimentConfig(
            problem=problem, solvers=solvers, sizes=((args.n or 20),), noises=noises,
            n_seeds=args.seeds or 10, n_landmarks=args.n_landmarks or 8,
            redundant=redundant, tol=tol, out_dir=out_dir, base_seed=seed,
        )
        records = harness.run_noise_study(config)
        harness.write_metadata(
            config, out_dir, "desk-scale noise study (smaller N than the reference runs)"
        )
        print(f"{len(records)} records -> {out_dir}")
        return 0

    if args.command == "report":
        records = harness.read_records_csv(args.records)
        out_dir = args.out or "out_report"
        written = harness.report(records, out_dir)
        for path in written:
            print(path)
        return 0

    return 2


if __name__ == "__main__":
    raise SystemExit(main())
