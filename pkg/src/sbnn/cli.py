"""Command-line surface wiring the modules into reproducible runs.

Commands: gen-data, train, eval, bounds, svd-analyze, ablate-rank,
param-count. Every run is a pure function of (config, seed); JSON and CSV
artifacts land in --out together with a manifest carrying the config hash,
seed, and timestamp. Module errors surface as machine-readable error JSON
on stderr with a nonzero exit.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds, data, experiments, layers, modelio, reporting
from .errors import ConfigError, DataError
from .rng import stream

CONFIG_SCHEMA_VERSION = 1


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    version = cfg.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version: {version!r}")
    return cfg


def _apply_overrides(cfg: dict, args) -> dict:
    if getattr(args, "epochs", None) is not None:
        cfg.setdefault("train", {})["epochs"] = args.epochs
    if getattr(args, "S", None) is not None:
        cfg.setdefault("eval", {})["S"] = args.S
    if getattr(args, "rank", None) is not None:
        cfg["model"] = experiments._set_rank(cfg["model"], args.rank)
    return cfg


def _seed(cfg: dict, args) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.get("seed", 0)


def cmd_gen_data(args):
    cfg = load_config(args.config)
    seed = _seed(cfg, args)
    task = {**cfg["task"], "seed": cfg["task"].get("seed", seed)}
    splits = data.generate(task)
    out = Path(args.out)
    artifacts = []
    for split in ("train", "val", "test", "ood"):
        x = getattr(splits, f"x_{split}")
        y = getattr(splits, f"y_{split}")
        if x is None or len(x) == 0:
            continue
        flat = x.reshape(len(x), -1)
        header = [f"x{i}" for i in range(flat.shape[1])] + ["y"]
        rows = [list(map(float, row)) + [float(np.ravel(t)[0])]
                for row, t in zip(flat, y)]
        artifacts.append(reporting.write_csv(out / f"{split}.csv", header, rows))
    reporting.write_manifest(out, "gen-data", cfg, seed, artifacts)
    print(f"wrote {len(artifacts)} split files to {out}")
    return 0


def cmd_train(args):
    cfg = _apply_overrides(load_config(args.config), args)
    seed = _seed(cfg, args)
    model, history, splits = experiments.run_train(cfg, seed, out_dir=args.out)
    final = history[-1] if history else {}
    print(f"trained {cfg['model'].get('kind', 'mlp')} model: "
          f"{layers.param_count(model)['total']} params, "
          f"final total {final.get('total', float('nan')):.6g}")
    if args.eval_after:
        report, _ = experiments.evaluate_model(
            model, splits, cfg.get("eval", {}), seed, out_dir=args.out
        )
        print(json.dumps(reporting._jsonable(report), sort_keys=True, indent=1))
    return 0


def cmd_eval(args):
    cfg = _apply_overrides(load_config(args.config), args)
    seed = _seed(cfg, args)
    model = modelio.load_model(args.model)
    task = {**cfg["task"], "seed": cfg["task"].get("seed", seed)}
    splits = data.generate(task)
    report, _ = experiments.evaluate_model(
        model, splits, cfg.get("eval", {}), seed, out_dir=args.out
    )
    print(json.dumps(reporting._jsonable(report), sort_keys=True, indent=1))
    return 0


def _parse_kv(pairs):
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        out[key] = parsed
    return out


def cmd_bounds(args):
    kv = _parse_kv(args.params)
    if args.ratio:
        value = bounds.complexity_ratio(int(kv["m"]), int(kv["n"]), int(kv["r"]))
        payload = {"bound": "complexity_ratio", "inputs": kv, "value": value}
    elif args.mcallester:
        rep = bounds.mcallester_bound(
            float(kv.get("emp_risk", 0.0)), float(kv["kl"]),
            int(kv["N"]), float(kv.get("delta", 0.05)),
        )
        payload = {"bound": rep.name, "inputs": rep.inputs, "value": rep.value,
                   "vacuous": rep.vacuous, "components": rep.components}
    elif args.kl_upper:
        value = bounds.kl_upper_factorized(float(kv["c_max"]), int(kv["D"]))
        payload = {"bound": "kl_upper_factorized", "inputs": kv, "value": value}
    elif args.gaussian_complexity:
        rep = bounds.gaussian_complexity_bound(
            x_frob=float(kv["x_frob"]), n_points=int(kv["m"]),
            w1_frob=float(kv["w1_frob"]),
            widths=[float(h) for h in kv["h"]],
            spectral_bounds=[float(c) for c in kv["C"]],
            ranks=[float(r) for r in kv.get("r", [])],
            c0=float(kv.get("C0", 1.0)),
            lipschitz=kv.get("lipschitz"), delta=kv.get("delta"),
            emp_risk=kv.get("emp_risk"),
        )
        payload = {"bound": rep.name, "inputs": rep.inputs, "value": rep.value,
                   "vacuous": rep.vacuous, "components": rep.components}
    else:
        raise ConfigError(
            "pick one of --ratio, --mcallester, --kl-upper, --gaussian-complexity"
        )
    print(reporting.fmt_float(payload["value"]))
    if args.out:
        artifacts = [reporting.write_json(Path(args.out) / "bounds.json", payload)]
        reporting.write_manifest(args.out, "bounds", payload["inputs"],
                                 args.seed or 0, artifacts)
    return 0


def cmd_svd_analyze(args):
    model = modelio.load_model(args.model)
    weights = modelio.dense_weight_matrices(model)
    reports = {name: bounds.spectral_report(w) for name, w in weights.items()}
    out = Path(args.out)
    artifacts = []
    rows = []
    for name, rep in reports.items():
        for r in range(rep.full_rank + 1):
            rows.append([
                name, r,
                float(rep.singular_values[r - 1]) if r >= 1 else "",
                float(rep.tail_energy[r]),
                float(rep.energy_retention[r]),
            ])
    artifacts.append(reporting.write_csv(
        out / "spectral.csv",
        ["layer", "rank", "singular_value", "tail_energy", "energy_retention"],
        rows,
    ))
    artifacts.append(reporting.save_spectral_decay(out / "spectral_decay.png", reports))
    reporting.write_manifest(out, "svd-analyze", {"model": str(args.model)},
                             args.seed or 0, artifacts)
    for name, rep in reports.items():
        print(f"{name}: full rank {rep.full_rank}, "
              f"sigma_1 {rep.singular_values[0]:.6g}")
    return 0


def cmd_ablate_rank(args):
    cfg = _apply_overrides(load_config(args.config), args)
    seed = _seed(cfg, args)
    ranks = [int(r) for r in args.ranks.split(",")]
    budget = {}
    if args.epochs is not None:
        budget["epochs"] = args.epochs
    if args.S is not None:
        budget["S"] = args.S
    table = experiments.rank_ablation(cfg, ranks, budget, seed, out_dir=args.out)
    for row in table:
        print(json.dumps(reporting._jsonable(row), sort_keys=True))
    return 0


def cmd_param_count(args):
    cfg = load_config(args.config)
    model = modelio.build_model(cfg["model"])
    counts = layers.param_count(model)
    for name, count in counts["per_layer"]:
        print(f"{name}: {count}")
    print(counts["total"])
    if args.out:
        artifacts = [reporting.write_json(Path(args.out) / "param_count.json", {
            "per_layer": {name: c for name, c in counts["per_layer"]},
            "total": counts["total"],
        })]
        reporting.write_manifest(args.out, "param-count", cfg, _seed(cfg, args),
                                 artifacts)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sbnn",
        description="Low-rank variational Bayesian neural networks: training, "
                    "evaluation, and the bounds lab.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, out_required=False):
        if config:
            p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=out_required, default=None,
                       help="output directory for artifacts")

    p = sub.add_parser("gen-data", help="generate dataset splits as CSV")
    common(p, out_required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a model per config")
    common(p)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--S", type=int, default=None)
    p.add_argument("--eval-after", action="store_true",
                   help="also evaluate on the test split")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    common(p)
    p.add_argument("--model", required=True, help="model JSON from train")
    p.add_argument("--S", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bounds", help="closed-form bound calculators")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--ratio", action="store_true")
    group.add_argument("--mcallester", action="store_true")
    group.add_argument("--kl-upper", action="store_true")
    group.add_argument("--gaussian-complexity", action="store_true")
    p.add_argument("params", nargs="*", help="key=value inputs")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_bounds)

    p = sub.add_parser("svd-analyze", help="singular-value decay of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_svd_analyze)

    p = sub.add_parser("ablate-rank", help="train a grid of ranks at low budget")
    common(p, out_required=True)
    p.add_argument("--ranks", required=True, help="comma-separated rank grid")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--S", type=int, default=None)
    p.set_defaults(fn=cmd_ablate_rank)

    p = sub.add_parser("param-count", help="trainable parameter breakdown")
    common(p)
    p.set_defaults(fn=cmd_param_count)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DataError, FileNotFoundError, KeyError) as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 1
    except Exception as exc:  # numeric/state failures from the modules
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
