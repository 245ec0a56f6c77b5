"""Command-line entry point: moran-pdmp <subcommand> [options]."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import load_config, resolve_model, validate_config
from .errors import ConfigError, ModelError

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2

NEEDS_SEED = {"simulate-moran", "simulate-pdmp", "invasion-rates", "convergence", "reproduce"}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="moran-pdmp", description="Moran process in a switching environment and its PDMP limit")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        p.add_argument("--config", help="JSON configuration file")
        if model:
            p.add_argument("--model", help="model JSON file, inline JSON, or preset name")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory (MORAN_PDMP_OUT overrides)")
        p.add_argument("--threads", type=int)
        return p

    p = common(sub.add_parser("simulate-moran", help="simulate the finite-population chain"))
    p.add_argument("--J", type=int)
    p.add_argument("--x0", type=_floats)
    p.add_argument("--env0", type=int)
    p.add_argument("--T", type=float, help="horizon in rescaled time (T * J events)")
    p.add_argument("--alpha", type=_floats)
    p.add_argument("--record-every", dest="record_every", type=int)
    p.add_argument("--stop-at-absorption", dest="stop_at_absorption", action="store_true", default=None)

    p = common(sub.add_parser("simulate-pdmp", help="simulate the piecewise-deterministic limit"))
    p.add_argument("--x0", type=_floats)
    p.add_argument("--env0", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--dt", dest="dt_sample", type=float)
    p.add_argument("--h-max", dest="h_max", type=float)

    common(sub.add_parser("analyze", help="growth rates, invasion rates and regimes"))

    p = common(sub.add_parser("density", help="invariant density of the two-species, two-environment model"))
    p.add_argument("--T", type=float, help="with --seed, also compare against a simulated occupation histogram")
    p.add_argument("--bins", type=int)
    p.add_argument("--n-traj", dest="n_traj", type=int)

    p = common(sub.add_parser("invasion-rates", help="Monte-Carlo invasion rates on the edges (three species)"))
    p.add_argument("--edge", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--n-traj", dest="n_traj", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=float)

    p = common(sub.add_parser("verdict", help="persistence verdict with certificate"))
    p.add_argument("--T", type=float, help="Monte-Carlo horizon for edge rates")
    p.add_argument("--n-traj", dest="n_traj", type=int)

    p = common(sub.add_parser("convergence", help="error between the chain and its limit across J"))
    p.add_argument("--x0", type=_floats)
    p.add_argument("--env0", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--J-list", dest="J_list", type=_ints)
    p.add_argument("--n-traj", dest="n_traj", type=int)
    p.add_argument("--observable")

    p = common(sub.add_parser("reproduce", help="run every worked example and write the report bundle"), model=False)
    p.add_argument("--quick", action="store_true", default=None, help="small ensembles for a smoke run")
    return ap


def _merge(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    for k, v in vars(args).items():
        if k in ("command", "config", "out") or v is None:
            continue
        if k == "x0" and isinstance(v, list) and len(v) == 1:
            v = v[0]
        cfg[k] = v
    return validate_config(cfg)


def _out_dir(args) -> Path:
    out = os.environ.get("MORAN_PDMP_OUT") or args.out or "out"
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _x0(cfg, S, default):
    x = cfg.get("x0", default)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size == 1 and S > 1:
        x = np.full(S, float(x[0]) / S)
    if x.size != S:
        raise ConfigError(f"x0 needs {S} coordinates", "/x0")
    return x


def _write_json(path: Path, obj) -> None:
    from .experiments import _jsonable
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def _model(cfg):
    if "model" not in cfg:
        raise ConfigError("a model is required", "/model")
    return resolve_model(cfg["model"])


def cmd_simulate_moran(cfg, out):
    from .moran import MoranConfig, counts_from_x, simulate_moran
    env = _model(cfg)
    J = cfg.get("J", 1000)
    x0 = _x0(cfg, env.S, 0.5)
    mc = MoranConfig(env, J, tuple(counts_from_x(x0, J)), cfg.get("env0", 0), int(round(cfg.get("T", 10.0) * J)),
                     cfg["seed"], cfg.get("alpha"), cfg.get("record_every"), cfg.get("stop_at_absorption", False))
    path = simulate_moran(mc)
    path.to_csv(out / "paths" / "moran.csv")
    print(f"t = {path.t[-1]:g}, x = {np.round(path.x[-1], 6).tolist()}, env = {int(path.env[-1])}")


def cmd_simulate_pdmp(cfg, out):
    from .pdmp import simulate_pdmp
    env = _model(cfg)
    p = simulate_pdmp(_x0(cfg, env.S, 0.5), cfg.get("env0", 0), env, cfg.get("T", 100.0), cfg.get("dt_sample", 0.01),
                      seed=cfg["seed"], h_max=cfg.get("h_max", 1e-3))
    p.to_csv(out / "paths" / "pdmp.csv")
    print(f"t = {p.T:g}, x = {p.x[-1].tolist()}, env = {int(p.env[-1])}, switches = {p.jump_times.size}")


def cmd_analyze(cfg, out):
    from . import persistence as P
    env = _model(cfg)
    rep = {"S": env.S, "K": env.K, "p": env.p}
    if env.S == 1:
        lam0, lam1 = P.growth_rates_2species(env)
        rep.update(Lambda0=lam0, Lambda1=lam1, regime=P.classify_2species(lam0, lam1).value)
        print(f"Lambda0 = {lam0:.10g}\nLambda1 = {lam1:.10g}\nregime  = {rep['regime']}")
    elif env.S == 2:
        rates = P.edge_growth_rates_3species(env)
        M = P.vertex_invasion_rates(env)
        big = [P.lambda_vertex(env, i) for i in (1, 2, 3)]
        rep.update(vertex_invasion_rates=M, Lambda_vertex=big, edge_Lambda0=rates.lambda0, edge_Lambda1=rates.lambda1,
                   edges_with_measure=[i for i in (1, 2, 3) if rates.exists(i)])
        if env.K == 2:
            try:
                sg = P.edge_invasion_sign_2env(env)
                rep["edge_signs"] = sg.signs
                rep["permutation"] = {"species": sg.configuration.species, "environments": sg.configuration.envs}
            except ModelError as e:
                rep["edge_signs"] = str(e)
        if env.K == 3:
            rep["full_support_determinant"] = P.full_support_determinant(env)
        for i in (1, 2, 3):
            print(f"edge {i}: Lambda0 = {rates.lambda0[i - 1]:.10g}, Lambda1 = {rates.lambda1[i - 1]:.10g}")
        print("Lambda_vertex =", [round(v, 10) for v in big])
    else:
        rep["vertex_invasion_rates"] = P.vertex_invasion_rates(env)
        print("vertex invasion rates:\n", P.vertex_invasion_rates(env))
    _write_json(out / "report.json", rep)


def cmd_density(cfg, out):
    from . import persistence as P
    from .experiments import density_comparison
    from .pdmp import write_histogram_csv
    env = _model(cfg)
    d = P.invariant_density_2species(env)
    r = P.fokker_planck_residual(d)
    bins = cfg.get("bins", 100)
    edges = np.linspace(0, 1, bins + 1)
    rep = {"alpha": d.alpha, "beta": d.beta, "exponent_0": d.a - 1, "exponent_1": d.b - 1, "C": d.C,
           "fokker_planck_residual": r}
    if "seed" in cfg and "T" in cfg:
        c = density_comparison(env, cfg["T"], bins, cfg["seed"], cfg.get("n_traj", 32), threads=cfg.get("threads"))
        c.to_csv(out / "paths" / "density_comparison.csv")
        rep["l1"] = c.l1
    write_histogram_csv(out / "paths" / "density.csv", [edges], d.bin_masses(edges))
    _write_json(out / "report.json", rep)
    print(json.dumps({k: (list(v) if isinstance(v, tuple) else v) for k, v in rep.items()}, default=float))


def _mc(cfg):
    from .persistence import MCOptions
    return MCOptions(T=cfg.get("T", 80.0), n_traj=cfg.get("n_traj", 1000), seed=cfg.get("seed", 0),
                     burn_in=cfg.get("burn_in"), threads=cfg.get("threads"))


def cmd_invasion_rates(cfg, out):
    from . import persistence as P
    env = _model(cfg)
    rates = P.edge_growth_rates_3species(env)
    edges = [cfg["edge"]] if "edge" in cfg else [i for i in (1, 2, 3) if rates.exists(i)]
    res = []
    for i in edges:
        est = P.edge_invasion_rate_mc(env, i, _mc(cfg))
        res.append(vars(est))
        print(f"lambda_{i}(nu_{i}) = {est.mean:.5f} +/- {est.std_error:.5f}")
    _write_json(out / "report.json", {"edges": res})


def cmd_verdict(cfg, out):
    from . import persistence as P
    env = _model(cfg)
    needs_mc = env.S == 2 and env.K >= 3 and any(P.edge_growth_rates_3species(env).exists(i) for i in (1, 2, 3))
    if needs_mc and "seed" not in cfg:
        raise ConfigError("this model needs Monte-Carlo edge rates; a seed is required", "/seed")
    v = P.persistence_verdict(env, _mc(cfg))
    _write_json(out / "report.json", v.to_report())
    print(v.summary())


def cmd_convergence(cfg, out):
    from .experiments import convergence_experiment, parse_observable
    from .svg import line_plot
    env = _model(cfg)
    f = parse_observable(cfg.get("observable", "x1"), env.S)
    r = convergence_experiment(env, _x0(cfg, env.S, 0.3), f, cfg.get("t", 1.0), cfg.get("J_list", [100, 200, 400, 800, 1600]),
                               cfg.get("n_traj", 10_000), cfg["seed"], cfg.get("env0", 0), threads=cfg.get("threads"))
    _write_json(out / "report.json", r.to_dict())
    line_plot(out / "plots" / "convergence.svg", [(r.J, r.errors, "error")], title="convergence in J",
              xlabel="J", ylabel="error", logx=True, logy=True)
    for J, e, s in zip(r.J, r.errors, r.std_errors):
        print(f"J = {J:5d}  error = {e:.3e}  se = {s:.1e}")
    print(f"slope = {r.slope:.3f} +/- {r.slope_halfwidth:.3f}" + ("  [flagged: ensemble too small]" if r.flagged else ""))


def cmd_reproduce(cfg, out):
    from .experiments import Sizes, reproduce_examples
    rep = reproduce_examples(cfg["seed"], out, Sizes.quick() if cfg.get("quick") else Sizes())
    for c in rep["checks"]:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['criterion']:2d} {c['name']}")
    return EXIT_OK if rep["all_passed"] else EXIT_RUNTIME


COMMANDS = {
    "simulate-moran": cmd_simulate_moran,
    "simulate-pdmp": cmd_simulate_pdmp,
    "analyze": cmd_analyze,
    "density": cmd_density,
    "invasion-rates": cmd_invasion_rates,
    "verdict": cmd_verdict,
    "convergence": cmd_convergence,
    "reproduce": cmd_reproduce,
}


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID
    try:
        cfg = _merge(args)
        if args.command in NEEDS_SEED and "seed" not in cfg:
            raise ConfigError(f"{args.command} needs a seed", "/seed")
        out = _out_dir(args)
        (out / "paths").mkdir(exist_ok=True)
        (out / "plots").mkdir(exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True))
        code = COMMANDS[args.command](cfg, out)
        return EXIT_OK if code is None else code
    except (ConfigError, ModelError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
