"""Command-line experiment runner.

Subcommands::

    dssal1 run <config.toml>       one solver run, iterations.csv + summary.json
    dssal1 compare <config.toml>   parameter sweep, compare.csv
    dssal1 gen <config.toml>       dump the generated shards as binary matrices
    dssal1 verify                  oracle and invariant checks, exit 3 on failure

The config is TOML with sections ``[data]``, ``[solver]`` and ``[sweep]``;
see the README for the schema. Unknown keys are rejected with the line they
appear on.
"""
import argparse
import csv
from dataclasses import dataclass, field, replace
import json
import math
from pathlib import Path
import re
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import attack, datagen, dssal1, manpg, matio, problem
from .network import Network
from .stiefel import random_stiefel

ITERATIONS_VERSION = "dssal1-iterations v1"
COMPARE_VERSION = "dssal1-compare v1"
ATTACK_VERSION = "dssal1-attack v1"
COMPARE_FIELDS = ("param_value", "algo", "rounds", "wall_time", "final_objective",
                  "sparsity", "bytes")
ALGOS = ("dssal1", "manpg", "manpg_ada")
SWEEP_PARAMS = ("n", "p", "mu", "d")

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER, EXIT_VERIFY_FAILED = 0, 1, 2, 3

# key -> (accepted python types, required)
_NUM = (int, float)
SCHEMA = {
    "data": {
        "n": ((int,), True), "m": ((int,), True), "d": ((int,), True),
        "p": ((int,), True), "mu": (_NUM, True), "xi": (_NUM, False),
        "seed": ((int,), False),
    },
    "solver": {
        "algo": ((str,), False), "max_iter": ((int,), False), "eps_c": (_NUM, False),
        "eps_g": (_NUM, False), "eta": (_NUM, False), "beta": ((list,), False),
        "beta_scale": (_NUM, False), "inner_max_iter": ((int,), False),
        "warmstart_iters": ((int,), False), "attack": ((bool,), False),
    },
    "sweep": {
        "param": ((str,), True), "values": ((list,), True), "algos": ((list,), False),
    },
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line."""


@dataclass
class RunConfig:
    gen: datagen.GenSpec
    algo: str = "dssal1"
    max_iter: int = 50000
    eps_c: float = 1e-6
    eps_g: float = None
    eta: float = None
    beta: list = None
    beta_scale: float = 1.0
    inner_max_iter: int = None
    warmstart_iters: int = 500
    attack: bool = False
    sweep_param: str = None
    sweep_values: list = field(default_factory=list)
    sweep_algos: tuple = ("dssal1", "manpg_ada")


def _key_line(text, section, key):
    """1-based line of ``key = ...`` inside ``[section]`` (best effort)."""
    current = None
    for no, line in enumerate(text.splitlines(), start=1):
        head = re.match(r"\s*\[\s*([^\]]+?)\s*\]", line)
        if head:
            current = head.group(1)
            continue
        if current == section and re.match(rf"\s*{re.escape(key)}\s*=", line):
            return no
    return None


def _where(path, text, section, key=None):
    line = _key_line(text, section, key) if key else None
    if line is None and text is not None:
        for no, raw in enumerate(text.splitlines(), start=1):
            if re.match(rf"\s*\[\s*{re.escape(section)}\s*\]", raw):
                line = no
                break
    return f"{path}:{line}" if line else str(path)


def parse_config(text, path="<config>"):
    """Validate TOML text against the schema and build a :class:`RunConfig`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"{_where(path, text, section)}: unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"{_where(path, text, section)}: '{section}' must be a table")
        for key, value in body.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"{_where(path, text, section, key)}: unknown key "
                                  f"'{key}' in [{section}]")
            types, _ = SCHEMA[section][key]
            if isinstance(value, bool) and bool not in types or not isinstance(value, types):
                raise ConfigError(f"{_where(path, text, section, key)}: '{key}' has type "
                                  f"{type(value).__name__}, expected "
                                  f"{' or '.join(t.__name__ for t in types)}")
    if "data" not in raw:
        raise ConfigError(f"{path}: missing required section [data]")
    for section, body in raw.items():
        for key, (_, required) in SCHEMA[section].items():
            if required and key not in body:
                raise ConfigError(f"{_where(path, text, section)}: missing required key "
                                  f"'{key}' in [{section}]")

    data, solver, sweep = raw["data"], raw.get("solver", {}), raw.get("sweep", {})
    try:
        gen = datagen.GenSpec(n=data["n"], m=data["m"], d=data["d"], p=data["p"],
                              mu=float(data["mu"]), xi=float(data.get("xi", 1.1)),
                              seed=data.get("seed", 0))
    except ValueError as exc:
        raise ConfigError(f"{_where(path, text, 'data')}: {exc}") from None
    cfg = RunConfig(gen=gen)
    for key in ("algo", "max_iter", "eps_c", "eps_g", "eta", "beta", "beta_scale",
                "inner_max_iter", "warmstart_iters", "attack"):
        if key in solver:
            setattr(cfg, key, solver[key])
    if cfg.algo not in ALGOS:
        raise ConfigError(f"{_where(path, text, 'solver', 'algo')}: algo must be one of "
                          f"{', '.join(ALGOS)}, got '{cfg.algo}'")
    if cfg.max_iter < 1 or cfg.warmstart_iters < 0:
        raise ConfigError(f"{_where(path, text, 'solver')}: max_iter must be >= 1 and "
                          f"warmstart_iters >= 0")
    if cfg.beta is not None and len(cfg.beta) != gen.d:
        raise ConfigError(f"{_where(path, text, 'solver', 'beta')}: need {gen.d} penalties, "
                          f"got {len(cfg.beta)}")
    if sweep:
        if sweep["param"] not in SWEEP_PARAMS:
            raise ConfigError(f"{_where(path, text, 'sweep', 'param')}: param must be one of "
                              f"{', '.join(SWEEP_PARAMS)}")
        cfg.sweep_param = sweep["param"]
        cfg.sweep_values = list(sweep["values"])
        if "algos" in sweep:
            bad = [a for a in sweep["algos"] if a not in ALGOS]
            if bad or not sweep["algos"]:
                raise ConfigError(f"{_where(path, text, 'sweep', 'algos')}: unknown algos {bad}")
            cfg.sweep_algos = tuple(sweep["algos"])
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, path)


# ---------------------------------------------------------------- experiment

def initial_point(prob, seed, warmstart_iters=500):
    """Random Stiefel point from ``(seed, 1)``, refined by the subgradient warm start."""
    Z0 = random_stiefel(prob.n, prob.p, np.random.default_rng([seed, 1]))
    return manpg.riemannian_subgradient_warmstart(prob, Z0, iters=warmstart_iters)


def _betas(cfg, prob, Z0):
    if cfg.beta is not None:
        return [float(b) for b in cfg.beta]
    if cfg.beta_scale == 1.0:
        return None
    return [cfg.beta_scale * a.beta for a in dssal1.init_agents(prob, Z0)]


def solve(prob, cfg, Z0, algo=None, keep_shares=False):
    """Run one algorithm; returns ``(result, network, wall_time)``."""
    algo = algo or cfg.algo
    net = Network(prob.d)
    t0 = time.perf_counter()
    if algo == "dssal1":
        dcfg = dssal1.DriverConfig(eps_c=cfg.eps_c, eps_g=cfg.eps_g, max_iter=cfg.max_iter,
                                   eta=cfg.eta, beta_overrides=_betas(cfg, prob, Z0),
                                   keep_shares=keep_shares)
        if cfg.inner_max_iter is not None:
            dcfg.inner_max_iter = cfg.inner_max_iter
        res = dssal1.run(prob, net, dcfg, Z0)
    else:
        mcfg = manpg.ManpgConfig(adapt=algo == "manpg_ada", eps_g=cfg.eps_g, eta0=cfg.eta,
                                 max_iter=cfg.max_iter, keep_shares=keep_shares)
        if cfg.inner_max_iter is not None:
            mcfg.inner_max_iter = cfg.inner_max_iter
        res = manpg.manpg_run(prob, net, mcfg, Z0)
    return res, net, time.perf_counter() - t0


def summarize(prob, res, net, wall_time):
    return {
        "final_objective": problem.objective(prob, res.Z),
        "sparsity": problem.sparsity(res.Z, problem.SPARSITY_THRESHOLD),
        "rounds": net.rounds,
        "wall_time": wall_time,
        "converged": bool(res.converged),
    }


def _fmt(x):
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else str(x))
    return str(x)


def write_iterations(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {ITERATIONS_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(dssal1.IterationRecord.FIELDS)
        for r in records:
            w.writerow([_fmt(v) for v in r.as_row()])


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def attack_table(prob, cfg, Z0, every=attack.CHECKPOINT_EVERY):
    """Attack agent 0 through ManPG-Ada and DSSAL1 shares from the same start.

    Returns rows ``(round, manpg_error, dssal1_error)``; an error is ``None``
    once that run has ended.
    """
    target = attack.true_local_covariance(prob.shards[0])
    curves = {}
    for algo in ("manpg_ada", "dssal1"):
        res, _, _ = solve(prob, cfg, Z0, algo=algo, keep_shares=True)
        curves[algo] = {k: err for k, err, _ in
                        attack.attack_curve(res.Z_history, res.share_history, target,
                                            every=every)}
    rounds = sorted(set(curves["manpg_ada"]) | set(curves["dssal1"]))
    return [(k, curves["manpg_ada"].get(k), curves["dssal1"].get(k)) for k in rounds]


def write_attack(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {ATTACK_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(("round", "manpg_error", "dssal1_error"))
        for k, a, b in rows:
            w.writerow([k, "" if a is None else _fmt(a), "" if b is None else _fmt(b)])


def _log(quiet, msg):
    if not quiet:
        print(msg, flush=True)


def cmd_run(cfg, out_dir, quiet=False):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prob = datagen.generate(cfg.gen)
    Z0 = initial_point(prob, cfg.gen.seed, cfg.warmstart_iters)
    res, net, wall = solve(prob, cfg, Z0)
    write_iterations(out_dir / "iterations.csv", res.records)
    summary = summarize(prob, res, net, wall)
    write_json(out_dir / "summary.json", summary)
    if cfg.attack:
        write_attack(out_dir / "attack.csv", attack_table(prob, cfg, Z0))
    _log(quiet, f"{cfg.algo}: {'converged' if res.converged else 'hit max_iter'} after "
                f"{summary['rounds']} rounds, objective {summary['final_objective']:.8g}, "
                f"sparsity {summary['sparsity']:.4f}")
    return EXIT_OK if res.converged else EXIT_MAX_ITER


def sweep_problems(cfg):
    """Yield ``(value, problem)`` per sweep point.

    A ``d`` sweep reshards one assembled data set so the data stays fixed.
    """
    if cfg.sweep_param == "d":
        base = datagen.generate(cfg.gen)
        for v in cfg.sweep_values:
            yield v, datagen.reshard(base, int(v))
        return
    for v in cfg.sweep_values:
        cast = float if cfg.sweep_param == "mu" else int
        yield v, datagen.generate(replace(cfg.gen, **{cfg.sweep_param: cast(v)}))


def cmd_compare(cfg, out_dir, quiet=False):
    if not cfg.sweep_param or not cfg.sweep_values:
        raise ConfigError("compare needs a [sweep] section with a non-empty 'values' list")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value, prob in sweep_problems(cfg):
        Z0 = initial_point(prob, cfg.gen.seed, cfg.warmstart_iters)
        for algo in cfg.sweep_algos:
            res, net, wall = solve(prob, cfg, Z0, algo=algo)
            s = summarize(prob, res, net, wall)
            rows.append((value, algo, s["rounds"], wall, s["final_objective"],
                         s["sparsity"], net.bytes))
            _log(quiet, f"{cfg.sweep_param}={value} {algo}: {s['rounds']} rounds, "
                        f"{wall:.1f}s, objective {s['final_objective']:.8g}")
    with open(out_dir / "compare.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {COMPARE_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(COMPARE_FIELDS)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return EXIT_OK


def cmd_gen(cfg, out_dir, quiet=False):
    prob = datagen.generate(cfg.gen)
    paths = matio.save_shards(Path(out_dir) / "shards", prob.shards)
    _log(quiet, f"wrote {len(paths)} shards to {Path(out_dir) / 'shards'}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="dssal1", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "compare", "gen"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
    sub.add_parser("verify")
    for sp in sub.choices.values():
        sp.add_argument("--seed", type=int, default=None, help="override [data].seed")
        sp.add_argument("--out-dir", default="out")
        sp.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        from .verify import run_verify
        return run_verify(seed=0 if args.seed is None else args.seed, quiet=args.quiet)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.gen = replace(cfg.gen, seed=args.seed)
        handler = {"run": cmd_run, "compare": cmd_compare, "gen": cmd_gen}[args.command]
        return handler(cfg, args.out_dir, args.quiet)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, FloatingPointError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
