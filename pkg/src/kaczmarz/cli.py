"""Command-line interface: generate, solve, bounds, analyze.

Every option can come from a JSON config file (--config); explicit flags win
over the file, the file wins over built-in defaults.  Outputs are data files
(JSON and CSV); identical configuration plus master seed give byte-identical
files.  Exit codes: 0 success, 2 configuration error, 3 missing or unwritable
path, 4 numerical failure.
"""

import argparse
import concurrent.futures
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import analysis, bounds, problems, solvers
from .errors import (AllParallel, DegenerateBlock, DegenerateWeights,
                     NotPositiveDefinite, RankDeficient, ZeroRow)
from .linalg import mgs_orthonormalize
from .samplers import split_seed


class ConfigError(Exception):
    pass


_SINGLE_ROW = ("cyclic", "uniform", "norm2", "angle")
_ALIASES = {"k": "cyclic", "kaczmarz": "cyclic", "rk": "norm2"}

_DEFAULTS = {
    "generate": {"kind": "gaussian", "m": 200, "n": 100, "grid": 10,
                 "angles": 16, "detectors": 15, "source_radius": None,
                 "noise": 0.0, "seed": 0, "out": "out"},
    "solve": {"system": None, "solvers": "cyclic,norm2,rkha", "trials": 1,
              "cycles": 10, "residual_tol": 1e-10, "block_size": 5,
              "rkos_variant": "gram_schmidt", "rkos_replacement": False,
              "timing": False, "seed": 0, "out": "out", "jobs": 1},
    "bounds": {"system": None, "q_max": 10, "block_size": 1, "seed": 0,
               "out": "out"},
    "analyze": {"system": None, "bin_width": 1.0, "out": "out"},
}


def _common(sp):
    sp.add_argument("--config", help="JSON file of option values")
    sp.add_argument("--seed", type=int, help="master seed")
    sp.add_argument("--out", help="output directory")


def _build_parser():
    p = argparse.ArgumentParser(
        prog="kaczmarz",
        description="Row-action projection solvers, bounds, and coherence analysis.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a system and write it as JSON")
    g.add_argument("--kind", choices=["gaussian", "parallel", "fan"])
    g.add_argument("--m", type=int, help="rows (gaussian)")
    g.add_argument("--n", type=int, help="columns (gaussian)")
    g.add_argument("--grid", type=int, help="grid side (beam kinds)")
    g.add_argument("--angles", type=int, help="view angles (beam kinds)")
    g.add_argument("--detectors", type=int, help="detectors per view (beam kinds)")
    g.add_argument("--source-radius", type=float, dest="source_radius",
                   help="source circle radius (fan)")
    g.add_argument("--noise", type=float, help="relative noise magnitude on b")
    _common(g)

    s = sub.add_parser("solve", help="run solvers on a stored system")
    s.add_argument("--system", help="system JSON path")
    s.add_argument("--solvers",
                   help="comma list: cyclic|uniform|norm2|angle|weights:<json>|rkha|rkha_literal|rkos|block")
    s.add_argument("--trials", type=int)
    s.add_argument("--cycles", type=int, help="row-step budget in multiples of m")
    s.add_argument("--residual-tol", type=float, dest="residual_tol")
    s.add_argument("--block-size", type=int, dest="block_size",
                   help="block size for rkos/block solvers")
    s.add_argument("--rkos-variant", dest="rkos_variant",
                   choices=["gram_schmidt", "gs", "qr"])
    s.add_argument("--rkos-replacement", dest="rkos_replacement",
                   action="store_const", const=True,
                   help="draw each block independently instead of partitioning")
    s.add_argument("--timing", action="store_const", const=True,
                   help="keep wall times in trace files (breaks byte-identical runs)")
    s.add_argument("--jobs", type=int, help="concurrent trials")
    _common(s)

    b = sub.add_parser("bounds", help="emit convergence envelopes for a system")
    b.add_argument("--system", help="system JSON path")
    b.add_argument("--q-max", type=int, dest="q_max", help="cycles to cover")
    b.add_argument("--block-size", type=int, dest="block_size")
    _common(b)

    a = sub.add_parser("analyze", help="coherence report and angle histogram")
    a.add_argument("--system", help="system JSON path")
    a.add_argument("--bin-width", type=float, dest="bin_width",
                   help="histogram bin width in degrees")
    _common(a)
    return p


def _load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _merge(args, command):
    defaults = _DEFAULTS[command]
    cfg = {}
    if getattr(args, "config", None):
        cfg = _load_config(args.config)
        unknown = set(cfg) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = {}
    for key, dflt in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in cfg:
            merged[key] = cfg[key]
        else:
            merged[key] = dflt
    return merged


def _require_positive(o, *keys):
    for key in keys:
        try:
            val = int(o[key])
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer") from None
        if val < 1:
            raise ConfigError(f"{key} must be >= 1")
        o[key] = val


def _solver_tokens(spec):
    tokens = []
    for raw in str(spec).split(","):
        tok = raw.strip()
        if not tok:
            continue
        tok = _ALIASES.get(tok, tok)
        base = tok.split(":", 1)[0]
        if base not in _SINGLE_ROW + ("weights", "rkha", "rkha_literal",
                                      "rkos", "block"):
            raise ConfigError(f"unknown solver {tok!r}")
        if base == "weights" and ":" not in tok:
            raise ConfigError("weights solver needs weights:<path-to-json-array>")
        tokens.append(tok)
    if not tokens:
        raise ConfigError("no solvers requested")
    return tokens


def _validate(o, command):
    if command == "generate":
        if o["kind"] not in ("gaussian", "parallel", "fan"):
            raise ConfigError(f"unknown kind {o['kind']!r}")
        if o["kind"] == "gaussian":
            _require_positive(o, "m", "n")
            if o["m"] < o["n"]:
                raise ConfigError("need m >= n for gaussian systems")
        else:
            _require_positive(o, "grid", "angles", "detectors")
        if float(o["noise"]) < 0:
            raise ConfigError("noise must be >= 0")
    elif command == "solve":
        _require_positive(o, "trials", "cycles", "block_size", "jobs")
        if float(o["residual_tol"]) < 0:
            raise ConfigError("residual_tol must be >= 0")
        if o["rkos_variant"] not in ("gram_schmidt", "gs", "qr"):
            raise ConfigError(f"unknown rkos variant {o['rkos_variant']!r}")
        o["solvers"] = _solver_tokens(o["solvers"])
    elif command == "bounds":
        _require_positive(o, "q_max", "block_size")
    elif command == "analyze":
        if float(o["bin_width"]) <= 0:
            raise ConfigError("bin_width must be > 0")
    if command != "generate" and not o.get("system"):
        raise ConfigError("a --system path is required")


def _out_dir(o):
    out = str(o["out"])
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(doc, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def cmd_generate(o):
    seed = int(o["seed"])
    kind = o["kind"]
    if kind == "gaussian":
        system = problems.gen_gaussian_system(o["m"], o["n"], seed)
    else:
        ph = problems.shepp_logan(o["grid"])
        if kind == "parallel":
            system = problems.gen_parallel_beam(ph, o["angles"], o["detectors"])
        else:
            radius = o["source_radius"]
            radius = float(radius) if radius is not None else float(o["grid"])
            system = problems.gen_fan_beam(ph, o["angles"], o["detectors"], radius)
        system = replace(system, seed=seed)
    noise = float(o["noise"])
    if noise > 0:
        system = problems.add_noise(system, noise, split_seed(seed, 1))
    out = _out_dir(o)
    path = os.path.join(out, "system.json")
    problems.save_system(system, path)
    rep = analysis.coherence_report(system.a)
    print(f"wrote {path}: kind={system.kind} m={system.m} n={system.n} "
          f"noisy={system.noisy}")
    print(f"coherence={rep.coherence:.6g} gram_mean={rep.gram_mean:.6g} "
          f"gram_median={rep.gram_median:.6g}")
    return 0


def _contiguous_partition(m, p):
    return [np.arange(i, min(i + p, m)) for i in range(0, m, p)]


def _run_trial(system, token, o, trial, comp):
    rng = split_seed(int(o["seed"]), comp, trial)
    stop = solvers.StopRule(max_steps=int(o["cycles"]) * system.m,
                            residual_tol=float(o["residual_tol"]))
    if token == "rkha":
        _, trace = solvers.run_rkha(system, stop=stop, rng=rng)
    elif token == "rkha_literal":
        _, trace = solvers.run_rkha(system, stop=stop, rng=rng, literal=True)
    elif token == "rkos":
        _, trace = solvers.run_rkos(system, min(int(o["block_size"]), system.m),
                                    stop=stop, rng=rng,
                                    variant=o["rkos_variant"],
                                    with_replacement=bool(o["rkos_replacement"]))
    elif token == "block":
        part = _contiguous_partition(system.m, min(int(o["block_size"]), system.m))
        _, trace = solvers.run_block_kaczmarz(system, part, stop=stop)
    elif token.startswith("weights:"):
        with open(token.split(":", 1)[1], encoding="utf-8") as fh:
            w = np.asarray(json.load(fh), dtype=float)
        _, trace = solvers.run_kaczmarz(system, w, stop=stop, rng=rng)
    else:
        _, trace = solvers.run_kaczmarz(system, token, stop=stop, rng=rng)
    return trace


def _safe_name(token):
    return token.replace(":", "_").replace("/", "_").replace("\\", "_").replace(".", "_")


def cmd_solve(o):
    system = problems.load_system(o["system"])
    out = _out_dir(o)
    tokens = o["solvers"]
    jobs = int(o["jobs"])
    trials = int(o["trials"])
    zero_timing = not bool(o["timing"])

    work = [(si, token, t) for si, token in enumerate(tokens)
            for t in range(trials)]
    traces = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {}
        for si, token, t in work:
            path = os.path.join(out, f"trace_s{si}_{_safe_name(token)}_t{t}.csv")
            fut = pool.submit(_run_trial, system, token, o, t, si)
            futures[fut] = (si, token, t, path)
        for fut in concurrent.futures.as_completed(futures):
            si, token, t, path = futures[fut]
            trace = fut.result()  # numerical errors propagate here
            trace.to_csv(path, zero_timing=zero_timing)
            traces[(si, t)] = trace

    for si, token in enumerate(tokens):
        runs = [traces[(si, t)] for t in range(trials)]
        longest = max(runs, key=lambda tr: len(tr.steps))
        grid = longest.steps
        padded = np.full((trials, len(grid)), np.nan)
        for row, tr in enumerate(runs):
            err = tr.error_array()
            padded[row, :len(err)] = err
            if len(err) < len(grid):  # stopped early: final error carries forward
                padded[row, len(err):] = err[-1]
        med = np.median(padded, axis=0)
        agg = os.path.join(out, f"aggregate_s{si}_{_safe_name(token)}.csv")
        with open(agg, "w", encoding="utf-8", newline="") as fh:
            fh.write("step,median_error\n")
            for s, v in zip(grid, med):
                fh.write(f"{s},{format(float(v), '.17g')}\n")
        final = [tr.errors[-1] for tr in runs]
        print(f"{token}: trials={trials} median_final_error="
              f"{float(np.median(final)):.6g} -> {agg}")
    return 0


def cmd_bounds(o):
    system = problems.load_system(o["system"])
    a0 = system.a
    if a0.shape[0] != a0.shape[1]:
        raise RankDeficient("bounds need a square full-rank system "
                            f"(got {a0.shape[0]}x{a0.shape[1]})")
    # Row scaling never changes the projections, so bounds and the measured
    # sweep are taken on the row-normalized system.
    system = problems.normalize_rows(system)
    a = system.a
    m = system.m
    q_max = int(o["q_max"])
    p = min(int(o["block_size"]), m)
    partition = _contiguous_partition(m, p)
    z0_sq = float(system.x_star @ system.x_star) if system.x_star is not None else 1.0

    reports = [bounds.strohmer_bound(a, z0_sq, q_max * m),
               bounds.galantai_bound(a, partition, z0_sq, q_max),
               bounds.ssw_bound([mgs_orthonormalize(a[blk]) for blk in partition],
                                z0_sq, q_max),
               bounds.rkos_expected_decay(system.n, p, q_max)]
    comparison = bounds.compare_bounds(a, q_max)

    measured = []
    if system.x_star is not None:
        stop = solvers.StopRule(max_steps=q_max * m, residual_tol=0.0)
        _, trace = solvers.run_block_kaczmarz(system, partition, stop=stop)
        k = len(partition)
        errs = trace.error_array()
        measured = [float(errs[i] ** 2) for i in range(0, len(errs), k)]

    out = _out_dir(o)
    csv_path = os.path.join(out, "bounds.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,envelope,kind\n")
        for rep in reports:
            for t, v in enumerate(rep.envelope):
                fh.write(f"{t},{format(float(v), '.17g')},{rep.kind}\n")
        for t, v in enumerate(comparison.random_envelope):
            fh.write(f"{t},{format(float(v), '.17g')},cycle_random_form\n")
        for t, v in enumerate(comparison.cyclic_envelope):
            fh.write(f"{t},{format(float(v), '.17g')},cycle_determinant_form\n")
        for t, v in enumerate(measured):
            fh.write(f"{t},{format(float(v), '.17g')},measured_sq\n")
    doc = {rep.kind: rep.to_json() for rep in reports}
    doc["comparison"] = comparison.to_json()
    doc["measured_sq"] = measured
    _write_json(doc, os.path.join(out, "bounds.json"))
    print(f"wrote {csv_path} and bounds.json (q_max={q_max}, block_size={p})")
    return 0


def cmd_analyze(o):
    system = problems.load_system(o["system"])
    rep = analysis.coherence_report(system.a)
    hist = analysis.angle_histogram(analysis.gramian(system.a),
                                    float(o["bin_width"]))
    out = _out_dir(o)
    _write_json(rep.to_json(), os.path.join(out, "coherence.json"))
    hist.to_csv(os.path.join(out, "angles.csv"))
    print(f"m={rep.m} n={rep.n} coherence={rep.coherence:.6g} "
          f"gram_mean={rep.gram_mean:.6g} gram_median={rep.gram_median:.6g}")
    print(f"wrote {out}/coherence.json and {out}/angles.csv")
    return 0


_DISPATCH = {"generate": cmd_generate, "solve": cmd_solve,
             "bounds": cmd_bounds, "analyze": cmd_analyze}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        opts = _merge(args, args.command)
        _validate(opts, args.command)
        return _DISPATCH[args.command](opts)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DegenerateBlock, NotPositiveDefinite, RankDeficient, ZeroRow,
            AllParallel, DegenerateWeights, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def entry():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
