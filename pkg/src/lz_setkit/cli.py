"""Command-line front end: ``lz-setkit <command> --scenario file.json``.

Exit codes: 0 success, 2 input error, 3 infeasible or no result, 4 numerical
failure. Verbosity comes from the ``LZ_SETKIT_LOG`` environment variable.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import afd
from .errors import DimensionError, EmptySetError, InfeasibleDesignError, SolverError
from .estimator import estimate_run, feasible_sets, simulate, static_set_from_admissible, svd_transform
from .io import write_csv, write_json
from .reduction import ReductionLimits
from .sets import (generalized_intersection, interval_hull, lz_from_strip, lz_zonotope, membership,
                   multi_intersection)
from .scenario import AfdPayload, EstimatePayload, SetsDemoPayload, bundled_scenario, load_scenario

log = logging.getLogger("lz_setkit")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4


def _setup_logging() -> None:
    level = os.environ.get("LZ_SETKIT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _set_json(Z) -> dict:
    return {"M": Z.M, "G": Z.G, "c": Z.c, "S": Z.S, "A": Z.A, "b": Z.b}


# -- estimate ----------------------------------------------------------------------

def _estimate_one(p: EstimatePayload, method: str, seed: int):
    m = p.model.build()
    K = p.steps
    inputs = p.inputs.build(K)
    W, V = p.W.build(), p.V.build()
    traj = simulate(m, p.x0, inputs, seed, W, V)
    limits = p.limits.build()
    if method == "lz":
        states = estimate_run(m, p.X0_lz.build(), W, V, inputs, traj.outputs, limits)
    else:
        if p.X0_cz is None or p.X_A is None:
            raise ValueError("method cz needs X0_cz and X_A in the scenario")
        static = static_set_from_admissible(svd_transform(m), p.X_A.build())
        states = estimate_run(m, p.X0_cz.build(), W, V, inputs, traj.outputs, limits, static_set=static)
    rows_r, rows_h, rows_t = [], [], []
    violations = 0
    first_empty = None
    for st in states:
        if st.empty:
            first_empty = st.k if first_empty is None else first_empty
            rows_r.append((seed, st.k, method, float("nan"), True))
            rows_t.append((seed, st.k, method, st.reduction_time, st.step_time))
            continue
        h = interval_hull(st.Xhat)
        rad = float(np.max(h.width) / 2.0) if h.width.size else 0.0
        rows_r.append((seed, st.k, method, rad, False))
        for i in range(h.lower.size):
            rows_h.append((seed, st.k, method, i, float(h.lower[i]), float(h.upper[i])))
        rows_t.append((seed, st.k, method, st.reduction_time, st.step_time))
        if not membership(traj.states[st.k], st.Xhat, 1e-7):
            violations += 1
    summary = {"seed": seed, "method": method, "first_empty": first_empty, "violations": violations,
               "radius_k0": rows_r[0][3], "radius_k1": rows_r[1][3] if len(rows_r) > 1 else None}
    return rows_r, rows_h, rows_t, summary


def cmd_estimate(p: EstimatePayload, out: Path, seed: int, method: str | None, jobs: int) -> int:
    methods = [method] if method else (["lz", "cz"] if p.X_A is not None and p.X0_cz is not None else ["lz"])
    tasks = [(p, mth, seed + r) for r in range(p.realizations) for mth in methods]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_estimate_one, *zip(*tasks)))
    else:
        results = [_estimate_one(*t) for t in tasks]
    write_csv(out / "radii.csv", ["seed", "k", "method", "radius", "empty"],
              [r for res in results for r in res[0]])
    write_csv(out / "hulls.csv", ["seed", "k", "method", "coord", "lower", "upper"],
              [r for res in results for r in res[1]])
    write_csv(out / "timing.csv", ["seed", "k", "method", "reduction_time", "step_time"],
              [r for res in results for r in res[2]])
    write_json(out / "summary.json", {"runs": [res[3] for res in results]})
    for res in results:
        s = res[3]
        print(f"{s['method']} seed={s['seed']}: violations={s['violations']} first_empty={s['first_empty']}")
    return EXIT_OK


# -- fault diagnosis -------------------------------------------------------------------

def fault_model_set(p: AfdPayload) -> afd.FaultModelSet:
    f = afd.FaultModelSet(
        models=[m.build() for m in p.models], X0=p.X0.build(), W=p.W.build(), V=p.V.build(),
        U=p.U.build(), u0=p.u0, N=p.N, eps=p.eps, u_ref=p.u_ref, R=p.R,
        X_A=p.X_A.build() if p.X_A is not None else None)
    if p.limits is not None:
        big = 10 ** 9
        factor = p.limits.generator_factor
        gens = afd.limits_for(f, factor, 0).max_generators if factor is not None else big
        cons = p.limits.max_constraints if p.limits.max_constraints is not None else big
        f = afd.FaultModelSet(**{**f.__dict__, "limits": ReductionLimits(gens, cons)})
    return f


def _design(f: afd.FaultModelSet, method: str, jobs: int) -> afd.DesignResult:
    if method == "cz":
        return afd.cz_baseline_design(f, jobs=jobs)
    return afd.design_input(f, jobs=jobs)


def cmd_afd_design(p: AfdPayload, out: Path, method: str, jobs: int) -> int:
    f = fault_model_set(p)
    res = _design(f, method, jobs)
    K = f.N + 1
    write_json(out / "u.json", {
        "method": method, "u": res.u, "u_steps": res.u.reshape(K, f.n_u), "cost": res.cost,
        "proven_optimal": res.proven_optimal,
        "kappa": {f"{i},{j}": v for (i, j), v in res.kappa.items()},
    })
    rows = [(sp.pair[0], sp.pair[1], res.kappa.get(sp.pair, float("nan")),
             res.kappa_reduced[sp.pair], sp.kappa_max) for sp in res.problems]
    write_csv(out / "kappa.csv", ["model_i", "model_j", "kappa", "kappa_reduced", "kappa_max"], rows)
    write_csv(out / "tube_hulls.csv", ["model", "k", "output", "lower", "upper"],
              afd.tube_hulls(f, res.u, admissible=(method == "cz")))
    print(f"designed input cost {res.cost:.6g}; min pair margin {min(res.kappa.values()):.6g}")
    return EXIT_OK


def cmd_afd_verify(p: AfdPayload, out: Path, method: str, seed: int, jobs: int) -> int:
    f = fault_model_set(p)
    if p.u == "design":
        u = _design(f, method, jobs).u
    elif p.u == "reference":
        u = f.u_ref
    else:
        u = np.asarray(p.u, dtype=float)
        if u.size != (f.N + 1) * f.n_u:
            raise DimensionError("input sequence length must be (N+1) n_u")
    counts = afd.verify_diagnosis(f, u, p.n_samples, seed)
    n = f.n_models
    write_csv(out / "inclusion.csv", ["model_i", "model_j", "count", "samples"],
              [(i, j, int(counts[i, j]), p.n_samples) for i in range(n) for j in range(n)])
    kap = afd.pairwise_kappa(f, u)
    write_csv(out / "intersections.csv", ["model_i", "model_j", "kappa", "empty"],
              [(i, j, v, bool(v > 0)) for (i, j), v in kap.items()])
    write_json(out / "u_verified.json", {"u": u})
    print("inclusion counts:\n" + "\n".join(" ".join(str(int(c)) for c in row) for row in counts))
    return EXIT_OK


# -- set demos -------------------------------------------------------------------------

def _sample_cloud(Z, n: int, rng: np.random.Generator, box: float):
    if n == 0:
        return []
    h = interval_hull(Z)
    lo = np.where(np.isfinite(h.lower), h.lower, -box)
    hi = np.where(np.isfinite(h.upper), h.upper, box)
    pts = rng.uniform(lo, hi, size=(n, Z.n))
    return [p for p in pts if membership(p, Z, 1e-9)]


def _demo_outputs(name: str, sets: list, out: Path, samples: int, rng, box: float):
    write_json(out / f"{name}_sets.json", {"sets": [_set_json(Z) for Z in sets]})
    hull_rows, cloud_rows = [], []
    for k, Z in enumerate(sets):
        h = interval_hull(Z)
        for i in range(Z.n):
            hull_rows.append((k, i, float(h.lower[i]), float(h.upper[i]), bool(h.bounded)))
        for pt in _sample_cloud(Z, samples, rng, box):
            cloud_rows.append((k, *pt))
    write_csv(out / f"{name}_hull.csv", ["set", "coord", "lower", "upper", "bounded"], hull_rows)
    dim = sets[0].n if sets else 0
    write_csv(out / f"{name}_samples.csv", ["set"] + [f"x{i}" for i in range(dim)], cloud_rows)


def cmd_sets_demo(p: SetsDemoPayload, out: Path, seed: int) -> int:
    rng = np.random.default_rng(seed)
    for d in p.demos:
        if d.type == "zonotope_strip":
            G = np.asarray(d.G, dtype=float).reshape(len(d.c), -1)
            sets = [generalized_intersection(lz_zonotope(G, d.c), lz_from_strip(d.strip.build()))]
            _demo_outputs(d.name, sets, out, d.samples, rng, 2.0)
        elif d.type == "strip_strip":
            strips = [lz_from_strip(s.build()) for s in d.strips]
            n = strips[0].n
            sets = [multi_intersection(strips, [np.eye(n)] * len(strips))]
            _demo_outputs(d.name, sets, out, d.samples, rng, d.sample_box)
        else:
            sets = feasible_sets(d.E, d.A, d.X0.build(), d.steps)
            _demo_outputs(d.name, sets, out, d.samples, rng, 2.0)
        print(f"demo {d.name}: {len(sets)} set(s) written")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lz-setkit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("estimate", "afd-design", "afd-verify", "sets-demo"):
        sp = sub.add_parser(name)
        sp.add_argument("--scenario", required=True, help="scenario JSON file or bundled scenario name")
        sp.add_argument("--out", help="output directory (default: scenario output_dir or ./out)")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--method", choices=["lz", "cz"], help="line zonotopes or the constrained-zonotope baseline")
        sp.add_argument("--jobs", type=int, default=1, help="worker count for independent runs")
    return ap


def _scenario_path(arg: str) -> Path:
    """A file path, or the name of a bundled scenario such as ``est_6_1``."""
    p = Path(arg)
    if not p.exists() and p.suffix == "" and p.name == arg:
        try:
            return bundled_scenario(arg)
        except FileNotFoundError:
            pass
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        sc, payload = load_scenario(_scenario_path(args.scenario))
    except (OSError, ValueError, ValidationError) as exc:
        print(f"error: scenario {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if sc.kind != args.command:
        print(f"error: scenario kind {sc.kind!r} does not match command {args.command!r}", file=sys.stderr)
        return EXIT_INPUT
    seed = args.seed if args.seed is not None else sc.seed
    if not 0 <= seed < 2 ** 64:
        print("error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out or sc.output_dir or "out")
    method = args.method or sc.method
    jobs = max(1, args.jobs)
    try:
        if args.command == "estimate":
            return cmd_estimate(payload, out, seed, method, jobs)
        if args.command == "afd-design":
            return cmd_afd_design(payload, out, method or "lz", jobs)
        if args.command == "afd-verify":
            return cmd_afd_verify(payload, out, method or "lz", seed, jobs)
        return cmd_sets_demo(payload, out, seed)
    except InfeasibleDesignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except EmptySetError as exc:
        print(f"error: no result: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DimensionError, ValueError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
