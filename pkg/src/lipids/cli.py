"""Command-line entry point: ``lipids <subcommand> ...``.

Subcommands: render, assign, train, plan, eval, report, run.
The ``LIPIDS_SEED`` environment variable overrides any seed given on the
command line or in a config file.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io
from .exceptions import FeasibilityError, LipidsError
from .lightspace import LightBinGrid, assign_lights, bin_sample, sample_bin_lights
from .normalnet import NormalNet
from .planner import (PlanResult, compare, load_plan_results, mae_vs_m_svg, plan_exhaustive,
                      plan_kmeans, plan_orthogonal_triplet, plan_random, write_table_csv)
from .psolve import evaluate_configuration, evaluate_on_samples
from .render import SceneSpec, render_dataset
from .scenarios import make_scenes
from .selector import LearnedConfiguration
from .trainer import TrainConfig, common_bins, evolution_report, fit, write_evolution_csv

log = logging.getLogger("lipids")

METHODS = ("random", "kmeans", "ortho3", "exhaustive", "learned")


def env_seed(default):
    value = os.environ.get("LIPIDS_SEED")
    return int(value) if value not in (None, "") else default


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _int_list(text):
    return [int(v) for v in str(text).replace(",", " ").split()]


def _str_list(text):
    return [v for v in str(text).replace(",", " ").split() if v]


def _coerce(value, like):
    if isinstance(like, bool):
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def scene_from_mapping(mapping, seed=None):
    """Build a :class:`SceneSpec` from string key/values (config file section)."""
    defaults = SceneSpec()
    kw = {}
    for f in fields(SceneSpec):
        if f.name not in mapping:
            continue
        raw = mapping[f.name]
        if f.name == "albedo":
            vals = [float(v) for v in raw.replace(",", " ").split()]
            kw["albedo"] = vals[0] if len(vals) == 1 else vals
        elif f.name == "bumps":
            nums = [float(v) for v in raw.replace(",", " ").split()]
            kw["bumps"] = [nums[i:i + 4] for i in range(0, len(nums), 4)]
        else:
            kw[f.name] = _coerce(raw, getattr(defaults, f.name))
    if "size" in mapping:
        kw.setdefault("height", int(mapping["size"]))
        kw.setdefault("width", int(mapping["size"]))
    if seed is not None:
        kw["seed"] = seed
    return SceneSpec(**kw)


def _grid(args):
    return LightBinGrid(args.k_az, args.k_el)


def _binned(args):
    grid = _grid(args)
    return grid, [bin_sample(s, grid) for s in io.load_datasets(args.dataset_dir)]


# -- subcommands -----------------------------------------------------------

def cmd_render(args):
    cfg = io.read_config(args.config)
    mapping = {}
    for section in cfg.values():
        mapping.update(section)
    seed = env_seed(int(mapping.get("seed", 0)))
    spec = scene_from_mapping(mapping, seed=seed)
    if args.lights:
        lights = io.read_lights(args.lights)
    else:
        grid = LightBinGrid(args.k_az, args.k_el)
        lights = sample_bin_lights(grid, np.random.default_rng([seed, 202]), jitter=args.jitter)
    sample = render_dataset(spec, lights)
    io.save_dataset(args.out, sample)
    log.info("wrote %d images to %s", len(lights), args.out)
    return 0


def cmd_assign(args):
    grid = _grid(args)
    lights = io.read_lights(args.lights)
    result = assign_lights(grid, lights, unique=not args.literal)
    out = open(args.out, "w") if args.out not in (None, "-") else sys.stdout
    try:
        out.write("bin_index,light_index,residual_deg\n")
        for b, j, r in result.to_rows():
            out.write(f"{b},{j},{r:.6f}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _train_config(args, m):
    return TrainConfig(
        n_select=m, epochs=args.epochs, beta=args.beta, lr=args.lr,
        seed=env_seed(args.seed), batch_size=args.batch_size,
        pixels_per_item=args.pixels_per_item, steps_per_epoch=args.steps_per_epoch,
        sharpen=args.sharpen, early_stop=args.early_stop,
    )


def cmd_train(args):
    grid, samples = _binned(args)
    cfg = _train_config(args, args.m)
    bin_ids = common_bins(samples)

    def report(ck):
        log.info("epoch %d loss %.5f bins %s", ck.epoch, ck.loss,
                 [int(bin_ids[i]) for i in ck.hardened])

    result = fit(samples, cfg, callback=report)
    conf = LearnedConfiguration(grid.n_bins, args.m, args.beta, result.bin_indices,
                                grid.n_azimuth, grid.n_elevation)
    out = Path(args.out)
    conf.save(out)
    write_evolution_csv(evolution_report(result.checkpoints, result.bin_ids),
                        out.with_suffix(".evolution.csv"))
    result.net.save(_net_stem(out))
    return 0


def _net_stem(config_path):
    """Network files live next to the configuration as ``<stem>_net.bin/.json``."""
    return config_path.parent / f"{config_path.stem}_net"


def _plan(method, grid, samples, m, seed, args=None, learned=None):
    if method == "random":
        return plan_random(grid, m, min_sep_deg=getattr(args, "min_sep", 20.0), seed=seed)
    if method == "kmeans":
        ref = samples[0]
        return plan_kmeans(ref.lights, m, seed=seed, bin_ids=ref.bin_ids)
    if method == "ortho3":
        if m != 3:
            raise LipidsError("ortho3 only plans M = 3")
        return plan_orthogonal_triplet(grid)
    if method == "exhaustive":
        return plan_exhaustive(samples, m).best
    if method == "learned":
        if learned is None:
            raise LipidsError("learned plans need a trained configuration (--config)")
        return list(learned.bin_indices)
    raise LipidsError(f"unknown method {method!r}")


def cmd_plan(args):
    grid, samples = _binned(args)
    seed = env_seed(args.seed)
    learned = LearnedConfiguration.load(args.config) if args.config else None
    t0 = time.perf_counter()
    bins = _plan(args.method, grid, samples, args.m, seed, args, learned)
    res = PlanResult(args.method, bins, wall_time_ms=1e3 * (time.perf_counter() - t0))
    res.mae_deg = evaluate_on_samples(samples, res.bin_indices, "ls")
    _write_json(args.out, res.to_dict())
    return 0


def cmd_eval(args):
    conf = LearnedConfiguration.load(args.config)
    grid = LightBinGrid(conf.n_azimuth, conf.n_elevation)
    samples = [bin_sample(s, grid) for s in io.load_datasets(args.dataset_dir)]
    if args.backend == "ls":
        backend = "ls"
    else:
        stem = Path(args.net) if args.net else _net_stem(Path(args.config))
        backend = NormalNet.load(stem)
    per = [evaluate_configuration(s, conf.bin_indices, backend, details=True) for s in samples]
    report = {
        "mae_deg": float(np.mean([p["mae_deg"] for p in per])),
        "n_pixels": int(sum(p["n_pixels"] for p in per)),
        "n_degenerate": int(sum(p["n_degenerate"] for p in per)),
        "bin_indices": per[0]["bin_indices"],
        "backend": args.backend,
        "per_sample": [{"name": s.name, **p} for s, p in zip(samples, per)],
    }
    if args.backend == "ls":
        report["note"] = "plain least squares with shadow gating (not a robust estimator)"
    _write_json(args.out, report)
    return 0


def cmd_report(args):
    results = load_plan_results(args.inputs)
    rows = compare(results)
    write_table_csv(rows, args.csv)
    Path(args.svg).write_text(mae_vs_m_svg(rows))
    return 0


# -- full experiment -------------------------------------------------------

EXPERIMENT_DEFAULTS = {
    "n_azimuth": "8", "n_elevation": "6", "m": "3", "methods": "random,kmeans,learned",
    "seeds": "0", "backend": "ls", "output": "experiment_out", "n_scenes": "8",
}


def config_hash(cfg):
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def run_experiment(config_path, output=None):
    """Render, train, plan and evaluate as described by an experiment config.

    Writes ``report.json``, ``tables.csv``, ``mae_vs_m.svg`` and
    ``timings.json`` (wall clock only) to the output directory. Returns
    ``(exit_status, output_dir)``; the status is 0 iff every requested
    (seed, M, method) row made it into the report.
    """
    raw = io.read_config(config_path)
    exp = {**EXPERIMENT_DEFAULTS, **raw.get("experiment", {})}
    scene_kw = raw.get("scene", {})
    train_kw = raw.get("train", {})
    seeds = _int_list(exp["seeds"])
    if os.environ.get("LIPIDS_SEED"):
        seeds = [env_seed(0)]
    ms = _int_list(exp["m"])
    methods = _str_list(exp["methods"])
    grid = LightBinGrid(int(exp["n_azimuth"]), int(exp["n_elevation"]))
    backend = exp["backend"]
    out = Path(output or exp["output"])
    out.mkdir(parents=True, exist_ok=True)
    effective = {"experiment": {**exp, "seeds": ",".join(map(str, seeds))},
                 "scene": scene_kw, "train": train_kw}
    chash = config_hash(effective)

    for m in ms:
        if m > grid.n_bins:
            raise LipidsError(f"M = {m} exceeds the {grid.n_bins} bins of the grid")
    unknown = [x for x in methods if x not in METHODS]
    if unknown:
        raise LipidsError(f"unknown methods {unknown}")

    spec_kw = {}
    for key, like in (("size", 32), ("noise_sigma", 0.01), ("specular", 0.4),
                      ("shininess", 30.0), ("cast_shadows", True)):
        if key in scene_kw:
            spec_kw[key] = _coerce(scene_kw[key], like)
    train_defaults = TrainConfig()
    tcfg = {}
    for f in fields(TrainConfig):
        if f.name in train_kw:
            like = getattr(train_defaults, f.name)
            tcfg[f.name] = int(train_kw[f.name]) if like is None else _coerce(train_kw[f.name], like)
    jitter = float(scene_kw.get("jitter", 0.5))

    rows, failures, timings = [], [], []
    for seed in seeds:
        samples = make_scenes(grid, int(exp["n_scenes"]), seed, jitter=jitter, **spec_kw)
        for m in ms:
            for method in methods:
                t0 = time.perf_counter()
                try:
                    learned = None
                    if method == "learned":
                        cfg = TrainConfig(**{**tcfg, "n_select": m, "seed": seed})
                        res = fit(samples, cfg)
                        if len(set(res.bin_indices)) < m:
                            raise FeasibilityError(f"learned selection repeats bins: {res.bin_indices}")
                        learned = LearnedConfiguration(grid.n_bins, m, cfg.beta, res.bin_indices,
                                                       grid.n_azimuth, grid.n_elevation)
                    bins = _plan(method, grid, samples, m, seed, learned=learned)
                    mae = evaluate_on_samples(samples, bins, backend)
                    rows.append({"seed": seed, "M": m, "method": method,
                                 "bin_indices": [int(b) for b in bins], "mae_deg": mae})
                except Exception as exc:  # recorded per step; the run carries on
                    failures.append({"seed": seed, "M": m, "method": method,
                                     "error": f"{type(exc).__name__}: {exc}"})
                timings.append({"seed": seed, "M": m, "method": method,
                                "wall_time_ms": 1e3 * (time.perf_counter() - t0)})

    plan_rows = [PlanResult(r["method"], r["bin_indices"], r["mae_deg"]) for r in rows]
    for pr, r in zip(plan_rows, rows):
        pr.n_select = r["M"]
    summary = compare(plan_rows) if plan_rows else []
    report = {
        "config": effective,
        "config_hash": chash,
        "seeds": seeds,
        "rows": rows,
        "summary": summary,
        "failures": failures,
    }
    _write_json(out / "report.json", report)
    _write_json(out / "timings.json", {"config_hash": chash, "created": time.time(), "steps": timings})
    write_table_csv(summary, out / "tables.csv")
    (out / "mae_vs_m.svg").write_text(mae_vs_m_svg(summary) if summary else "<svg xmlns=\"http://www.w3.org/2000/svg\"/>\n")
    expected = len(seeds) * len(ms) * len(methods)
    return (0 if len(rows) == expected else 1), out


def cmd_run(args):
    status, out = run_experiment(args.config, args.out)
    log.info("report written to %s", out / "report.json")
    return status


# -- parser ----------------------------------------------------------------

def _add_grid(p):
    p.add_argument("--k-az", type=int, default=8, help="azimuth bins")
    p.add_argument("--k-el", type=int, default=6, help="elevation bins")


def build_parser():
    parser = argparse.ArgumentParser(prog="lipids", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a synthetic dataset directory")
    p.add_argument("--config", required=True, help="scene config (key=value lines)")
    p.add_argument("--lights", help="lights file; default: one jittered light per bin")
    p.add_argument("--jitter", type=float, default=0.5)
    p.add_argument("--out", required=True)
    _add_grid(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("assign", help="assign lights to bins, CSV output")
    p.add_argument("--lights", required=True)
    p.add_argument("--literal", action="store_true", help="allow one light to serve several bins")
    p.add_argument("--out", default="-")
    _add_grid(p)
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("train", help="learn an M-light configuration")
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--pixels-per-item", type=int, default=1024)
    p.add_argument("--steps-per-epoch", type=int, default=None)
    p.add_argument("--sharpen", type=float, default=TrainConfig.sharpen)
    p.add_argument("--early-stop", action="store_true")
    p.add_argument("--out", required=True, help="configuration JSON path")
    _add_grid(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plan", help="run one planner and score it with least squares")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-sep", type=float, default=20.0)
    p.add_argument("--config", help="learned configuration JSON (method=learned)")
    p.add_argument("--out", default="-")
    _add_grid(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("eval", help="score a learned configuration on a dataset")
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--backend", choices=("ls", "net"), default="ls")
    p.add_argument("--net", help="network file stem (default: next to --config)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="merge plan results into CSV and SVG")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--csv", default="tables.csv")
    p.add_argument("--svg", default="mae_vs_m.svg")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="full experiment from a config file")
    p.add_argument("config")
    p.add_argument("--out", help="override the output directory")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except LipidsError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
