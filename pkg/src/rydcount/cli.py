"""Command-line front end: ``rydcount {gen,count,sample,eta,survival}``.

Every command writes its outputs atomically into ``--out`` and embeds the fully
resolved configuration, so a run can be replayed from its record alone.

Exit codes: 0 success, 2 usage or parse error, 3 resource cap, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .counter import (
    exact_count_bruteforce,
    exact_count_dp,
    relative_error,
    ryd_count,
    ryd_count_with_oracle_sampler,
    summary_csv,
)
from .evolution import (
    EvolutionEngine,
    NumericalError,
    analyze_ramp_dip,
    averaged_survival,
    basis_state,
    fit_exponential,
    ramp_dip_scan,
)
from .instance import (
    BlockadeGraph,
    InstanceError,
    build_chain,
    build_grid,
    load_instance,
    punch_grid,
    to_cnf,
)
from .sampler import (
    SamplerConfig,
    SamplerError,
    Streams,
    draw_times,
    effective_distribution_fi,
    ff_trajectory,
    non_uniformity,
    run_protocol,
    trajectory_distribution,
    uniform_sample,
)
from .spectrum import ResourceError, build_pxp, build_rydberg, enumerate_solutions

EXIT_OK, EXIT_USAGE, EXIT_RESOURCE, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "protocol": "pff",
    "n_samp": None,  # n**4 when unset
    "k": None,
    "shots_per_step": None,  # n when unset
    "t_min": 10.0,
    "t_max": 1000.0,
    "omega": 1.0,
    "v": 50.0,
    "seed": 0,
    "jobs": 1,
    "format": "json",
    "max_basis": None,
    "repeats": 1,
    "plot": False,
    "timings": False,
    "spacing": False,
    "n_times": 200,
    "trajectories": 10,
    "ks": [1, 10, 100],
    "model": "pxp",
}


class UsageError(Exception):
    pass


# -- io helpers ---------------------------------------------------------------

def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def digest(g: BlockadeGraph) -> str:
    return hashlib.sha256(g.to_json().encode()).hexdigest()


def record(command: str, cfg: dict, instances: list[tuple[str, BlockadeGraph]], outputs) -> dict:
    return {
        "tool": "rydcount",
        "version": __version__,
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "instances": [
            {"name": name, "n": g.n, "m": g.m, "digest": digest(g)} for name, g in instances
        ],
        "outputs": outputs,
    }


def exact_count(g: BlockadeGraph) -> int | None:
    try:
        return exact_count_dp(g)
    except ResourceError:
        pass
    try:
        return exact_count_bruteforce(g)
    except ResourceError:
        return None


# -- config resolution --------------------------------------------------------

def resolve(args: argparse.Namespace) -> dict:
    """Flags override the config file, which overrides the defaults."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(from_file) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(from_file)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if cfg["max_basis"] is not None:
        os.environ["RYDCOUNT_MAX_BASIS"] = str(int(cfg["max_basis"]))
    return cfg


def sampler_config(cfg: dict, n: int, seed: int | None = None, protocol: str | None = None) -> SamplerConfig:
    return SamplerConfig(
        t_min=float(cfg["t_min"]),
        t_max=float(cfg["t_max"]),
        n_samp=int(cfg["n_samp"] or max(1, n ** 4)),
        protocol=protocol or cfg["protocol"],
        k=cfg["k"],
        shots_per_step=int(cfg["shots_per_step"] or max(1, n)),
        seed=int(cfg["seed"] if seed is None else seed),
        enforce_heisenberg_spacing=bool(cfg["spacing"]),
    )


def load_named(path: str) -> tuple[str, BlockadeGraph]:
    try:
        return Path(path).stem, load_instance(path)
    except OSError as exc:
        raise UsageError(f"cannot read instance {path}: {exc}") from exc


def gather_instances(args) -> list[tuple[str, BlockadeGraph]]:
    out = [load_named(p) for p in getattr(args, "instances", []) or []]
    if getattr(args, "chains", None):
        lo, hi = args.chains
        out += [(f"chain_{n}", build_chain(n)) for n in range(lo, hi + 1)]
    if not out:
        raise UsageError("no instances given (paths or --chains LO HI)")
    return out


# -- commands -----------------------------------------------------------------

def cmd_gen(args) -> int:
    d = args.dims
    if args.kind == "chain":
        if len(d) != 1:
            raise UsageError("chain takes one dimension")
        g, name = build_chain(d[0]), f"chain_{d[0]}"
    else:
        if len(d) != 2:
            raise UsageError(f"{args.kind} takes two dimensions")
        g, name = build_grid(*d), f"grid_{d[0]}x{d[1]}"
        if args.kind == "punched":
            g = punch_grid(g, args.holes or [])
            name = f"punched_{d[0]}x{d[1]}_h" + "_".join(map(str, args.holes or []))
    fmt = args.format or "json"
    text = to_cnf(g) if fmt == "dimacs" else json.dumps(g.to_dict(), sort_keys=True) + "\n"
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _count_one(job):
    g, cfg, seed = job
    if cfg["protocol"] == "oracle":
        n_samp = int(cfg["n_samp"] or max(1, g.n ** 4))
        return ryd_count_with_oracle_sampler(g, n_samp, seed), n_samp
    sc = sampler_config(cfg, g.n, seed)
    return ryd_count(g, sc, omega=float(cfg["omega"])), sc.n_samp


def _map(fn, jobs, n_workers):
    if n_workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as ex:
        return list(ex.map(fn, jobs))


def cmd_count(args) -> int:
    cfg = resolve(args)
    out = Path(args.out)
    instances = gather_instances(args)
    t0 = time.perf_counter()
    rows, runs = [], []
    seeds = [int(cfg["seed"]) + r for r in range(int(cfg["repeats"]))]
    jobs = [(g, cfg, s) for _, g in instances for s in seeds]
    results = _map(_count_one, jobs, int(cfg["jobs"]))
    for (name, g), chunk in zip(instances, np.array_split(np.arange(len(jobs)), len(instances))):
        exact = exact_count(g)
        for j in chunk:
            est, n_samp = results[j]
            seed = jobs[j][2]
            rel = relative_error(est.kappa, exact) if exact else None
            rows.append({
                "instance": name, "n": g.n, "protocol": cfg["protocol"], "n_samp": n_samp,
                "kappa": repr(est.kappa), "exact": exact if exact is not None else "",
                "rel_error": repr(rel) if rel is not None else "", "seed": seed,
            })
            runs.append({"instance": name, "seed": seed, "n_samp": n_samp, "exact": exact,
                         "rel_error": rel, **est.to_dict()})
    rec = record("count", cfg, instances, {"runs": runs})
    write_atomic(out / "count.json", dumps(rec))
    write_atomic(out / "count.csv", summary_csv(rows))
    if cfg["plot"]:
        from . import plots

        for name, g in instances:
            ks = [float(r["kappa"]) for r in rows if r["instance"] == name]
            plots.count_estimates([str(r["seed"]) for r in rows if r["instance"] == name], ks,
                                  exact_count(g), out / f"count_{name}.png")
    _timings(cfg, out, "count", t0)
    sys.stdout.write(summary_csv(rows))
    return EXIT_OK


def _engine(g: BlockadeGraph, omega: float):
    basis = enumerate_solutions(g)
    return basis, EvolutionEngine(build_pxp(g, basis, omega))


def _survival_engine(g: BlockadeGraph, cfg: dict):
    """Engine and all-zeros start state for the chosen model."""
    if cfg["model"] == "rydberg":
        e = EvolutionEngine(build_rydberg(g, float(cfg["omega"]), float(cfg["v"])))
        return len(enumerate_solutions(g)), e, basis_state(e.dim, 0)
    basis, e = _engine(g, float(cfg["omega"]))
    return len(basis), e, basis_state(len(basis), 0)


def cmd_sample(args) -> int:
    cfg = resolve(args)
    out = Path(args.out)
    instances = gather_instances(args)
    t0 = time.perf_counter()
    table = io.StringIO()
    w = csv.writer(table, lineterminator="\n")
    w.writerow(["instance", "bitstring", "count", "empirical", "exact"])
    reports = []
    for name, g in instances:
        basis, engine = _engine(g, float(cfg["omega"]))
        oracle = cfg["protocol"] == "oracle"
        sc = sampler_config(cfg, g.n, protocol="fi" if oracle else None)
        rng = Streams(sc.seed)
        if oracle:
            ss = uniform_sample(basis, sc.n_samp, rng["oracle"])
            exact = np.full(len(basis), 1.0 / len(basis))
        elif sc.protocol == "fi":
            ss = run_protocol(engine, basis, sc, rng)
            times = draw_times(sc, Streams(sc.seed), engine.heisenberg_time() if sc.enforce_heisenberg_spacing else None)
            exact = effective_distribution_fi(engine, basis, times).probs
        else:
            shots = 1 if sc.protocol == "ff" else sc.shots_per_step
            ss, traj = ff_trajectory(engine, basis, sc, rng, shots=shots)
            exact = trajectory_distribution(engine, basis, traj.starts, traj.times).probs
        emp = ss.probabilities(basis)
        for k in range(len(basis)):
            b = basis.bitstring(k)
            w.writerow([name, b, ss.counts.get(b, 0), repr(float(emp[k])), repr(float(exact[k]))])
        eta_emp, eta_exact = non_uniformity(emp, basis), non_uniformity(exact, basis)
        reports.append({
            "instance": name, "n": g.n, "solutions": len(basis), "protocol": cfg["protocol"],
            "n_samp": ss.total, "eta_empirical": eta_emp, "eta_exact": eta_exact,
            "n_eta_empirical": g.n * eta_emp, "n_eta_exact": g.n * eta_exact,
            "samples": json.loads(ss.to_json(config=_sc_dict(sc), seed=sc.seed)),
        })
        if cfg["plot"]:
            from . import plots

            plots.distribution(exact, len(basis), out / f"distribution_{name}.png",
                               title=f"{name} {cfg['protocol']}")
    write_atomic(out / "distribution.csv", table.getvalue())
    write_atomic(out / "sample.json", dumps(record("sample", cfg, instances, {"reports": reports})))
    _timings(cfg, out, "sample", t0)
    for r in reports:
        print(f"{r['instance']},n={r['n']},eta={r['eta_exact']:.6f},n_eta={r['n_eta_exact']:.6f}")
    return EXIT_OK


def _sc_dict(sc: SamplerConfig) -> dict:
    from dataclasses import asdict

    return asdict(sc)


def cmd_eta(args) -> int:
    """Non-uniformity sweep: exact FI distributions and feed-forward mixtures."""
    cfg = resolve(args)
    out = Path(args.out)
    instances = gather_instances(args)
    t0 = time.perf_counter()
    rows = []
    ff_curves = {}
    ks = sorted(int(k) for k in cfg["ks"])
    for name, g in instances:
        basis, engine = _engine(g, float(cfg["omega"]))
        sc = sampler_config(cfg, g.n, protocol="fi").with_(n_samp=int(cfg["n_times"]))
        times = draw_times(sc, Streams(sc.seed))
        eta = effective_distribution_fi(engine, basis, times).eta
        rows.append([name, g.n, "fi", "", eta, g.n * eta])
        if cfg["protocol"] in ("ff", "pff"):
            shots = 1 if cfg["protocol"] == "ff" else sampler_config(cfg, g.n).shots_per_step
            traj_etas = []
            for tr in range(int(cfg["trajectories"])):
                ffc = sc.with_(protocol=cfg["protocol"], k=ks[-1], seed=sc.seed + tr)
                _, traj = ff_trajectory(engine, basis, ffc, Streams(ffc.seed), shots=shots)
                seq = trajectory_distribution(engine, basis, traj.starts, traj.times, cumulative=True)
                traj_etas.append([seq[k - 1].eta for k in ks])
            mean = np.mean(traj_etas, axis=0)
            ff_curves[name] = traj_etas
            for k, e in zip(ks, mean):
                rows.append([name, g.n, cfg["protocol"], k, float(e), g.n * float(e)])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "n", "protocol", "k", "eta", "n_eta"])
    for r in rows:
        w.writerow([r[0], r[1], r[2], r[3], repr(float(r[4])), repr(float(r[5]))])
    write_atomic(out / "eta.csv", buf.getvalue())
    write_atomic(out / "eta.json", dumps(record("eta", cfg, instances, {"rows": rows, "ff": ff_curves})))
    if cfg["plot"]:
        from . import plots

        fi = [r for r in rows if r[2] == "fi"]
        extra = {}
        for k in ks:
            sel = [r for r in rows if r[2] != "fi" and r[3] == k]
            if sel:
                extra[f"{cfg['protocol']} k={k}"] = ([r[1] for r in sel], [r[5] for r in sel])
        plots.eta_scaling([r[1] for r in fi], [r[5] for r in fi], out / "eta_scaling.png", extra=extra)
        for name, etas in ff_curves.items():
            plots.eta_vs_steps(ks, etas, out / f"eta_steps_{name}.png")
    _timings(cfg, out, "eta", t0)
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_survival(args) -> int:
    cfg = resolve(args)
    out = Path(args.out)
    instances = gather_instances(args)
    t0 = time.perf_counter()
    rng = Streams(int(cfg["seed"]))["times"]
    times = rng.uniform(float(cfg["t_min"]), float(cfg["t_max"]), int(cfg["n_times"]))
    grid = np.unique(np.concatenate([
        np.linspace(0.0, 1.0, 21),
        np.geomspace(1e-2, float(cfg["t_max"]), int(args.grid_points)),
    ]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "n", "solutions", "sp_avg", "thermal"])
    ns, sps, ths, analyses = [], [], [], {}
    for name, g in instances:
        size, engine, psi0 = _survival_engine(g, cfg)
        sp = averaged_survival(engine, psi0, times)
        ns.append(g.n), sps.append(sp), ths.append(1.0 / size)
        w.writerow([name, g.n, size, repr(sp), repr(1.0 / size)])
        curve = ramp_dip_scan(engine, psi0, grid)
        ramp = analyze_ramp_dip(curve)
        curve.meta = {"instance": name, "n": g.n, "omega": float(cfg["omega"]), "seed": int(cfg["seed"]),
                      "hamiltonian": cfg["model"], "v": float(cfg["v"]) if cfg["model"] == "rydberg" else None,
                      "initial_state": "all-zeros"}
        write_atomic(out / f"sp_{name}.csv", curve.to_csv())
        write_atomic(out / f"sp_{name}.json", curve.header_json() + "\n")
        analyses[name] = {"dip_time": ramp.dip_time, "dip_value": ramp.dip_value,
                          "settle_time": ramp.settle_time, "long_time_mean": ramp.long_time_mean}
        if cfg["plot"]:
            from . import plots

            plots.survival_curve(curve, out / f"sp_{name}.png", ramp)
    fits = {}
    if len(ns) >= 2:
        fs, ft = fit_exponential(ns, sps), fit_exponential(ns, ths)
        fits = {"survival": {"alpha": fs.alpha, "beta": fs.beta, "residual": fs.residual},
                "thermal": {"alpha": ft.alpha, "beta": ft.beta, "residual": ft.residual}}
        if cfg["plot"]:
            from . import plots

            plots.survival_scaling(ns, sps, ths, fs, ft, out / "survival_scaling.png")
    write_atomic(out / "survival.csv", buf.getvalue())
    write_atomic(out / "survival.json", dumps(record("survival", cfg, instances,
                                                    {"fits": fits, "ramp_dip": analyses})))
    _timings(cfg, out, "survival", t0)
    sys.stdout.write(buf.getvalue())
    if fits:
        print(f"fit survival alpha={fits['survival']['alpha']:.4f} beta={fits['survival']['beta']:.4f}")
        print(f"fit thermal alpha={fits['thermal']['alpha']:.4f} beta={fits['thermal']['beta']:.4f}")
    return EXIT_OK


def _timings(cfg, out: Path, command: str, t0: float) -> None:
    # wall-clock data lives in its own opt-in file so the records stay replayable
    if cfg["timings"]:
        write_atomic(out / f"{command}.timing.json", dumps({"wall_seconds": time.perf_counter() - t0}))


# -- parser -------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, protocols=("fi", "ff", "pff", "oracle")):
    p.add_argument("instances", nargs="*", help="instance files (native JSON or DIMACS)")
    p.add_argument("--chains", nargs=2, type=int, metavar=("LO", "HI"), help="add chains of length LO..HI")
    p.add_argument("--protocol", choices=protocols)
    p.add_argument("--n-samp", type=int, dest="n_samp", help="samples per step (default n^4)")
    p.add_argument("--k", type=int, help="feed-forward steps")
    p.add_argument("--shots-per-step", type=int, dest="shots_per_step", help="practical FF shots (default n)")
    p.add_argument("--t-min", type=float, dest="t_min")
    p.add_argument("--t-max", type=float, dest="t_max")
    p.add_argument("--omega", type=float)
    p.add_argument("--v", type=float, help="interaction strength (Rydberg model only)")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--format", choices=("json", "csv", "dimacs"))
    p.add_argument("--max-basis", type=int, dest="max_basis")
    p.add_argument("--config", help="JSON file of defaults (flags take precedence)")
    p.add_argument("--out", default="rydcount-out", help="output directory")
    p.add_argument("--plot", action="store_true", default=None, help="also render PNG figures")
    p.add_argument("--timings", action="store_true", default=None, help="write wall-clock sidecar")
    p.add_argument("--spacing", action="store_true", default=None,
                   help="keep sampled times at least a Heisenberg time apart")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydcount", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rydcount {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an instance file")
    p.add_argument("kind", choices=("chain", "grid", "punched"))
    p.add_argument("dims", nargs="+", type=int)
    p.add_argument("--holes", nargs="*", type=int)
    p.add_argument("--format", choices=("json", "dimacs"))
    p.add_argument("--out", help="output path (stdout if omitted)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("count", help="approximate count by self-reduction")
    _add_common(p)
    p.add_argument("--repeats", type=int, help="independent runs with seeds seed, seed+1, ...")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("sample", help="sample solutions and report non-uniformity")
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eta", help="non-uniformity sweep (FI exact, FF trajectory mixtures)")
    _add_common(p, protocols=("fi", "ff", "pff"))
    p.add_argument("--n-times", type=int, dest="n_times", help="random times for the FI average")
    p.add_argument("--trajectories", type=int)
    p.add_argument("--ks", type=int, nargs="+", help="feed-forward step counts to report")
    p.set_defaults(func=cmd_eta)

    p = sub.add_parser("survival", help="survival probability curves and scaling fits")
    _add_common(p)
    p.add_argument("--n-times", type=int, dest="n_times")
    p.add_argument("--grid-points", type=int, default=400, dest="grid_points")
    p.add_argument("--model", choices=("pxp", "rydberg"))
    p.set_defaults(func=cmd_survival)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # --max-basis is passed to the library through the environment; scope it to this call
    saved_cap = os.environ.get("RYDCOUNT_MAX_BASIS")
    try:
        return args.func(args)
    # LinAlgError subclasses ValueError, so it must be caught first
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"rydcount: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ResourceError, MemoryError) as exc:
        print(f"rydcount: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (UsageError, InstanceError, SamplerError, ValueError) as exc:
        print(f"rydcount: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        if saved_cap is None:
            os.environ.pop("RYDCOUNT_MAX_BASIS", None)
        else:
            os.environ["RYDCOUNT_MAX_BASIS"] = saved_cap


if __name__ == "__main__":
    sys.exit(main())
