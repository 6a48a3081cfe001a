"""Experiment orchestration: config-driven train/eval runs, the toy-regression
uncertainty profile, and rank-ablation sweeps.

Every entry point is a pure function of (config, seed); artifacts written
through the reporting module are byte-identical across reruns.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import bounds, data, layers, metrics as mt, modelio, reporting, training
from .errors import ConfigError
from .initialization import apply_init_config
from .predict import mc_predict, task_of
from .rng import stream

DEFAULT_RETENTIONS = (1.0, 0.9, 0.8)


def resolve_kl_weight(train_cfg: dict, n_train: int, batch_size: int) -> float:
    """Raw weight, or one of the c/N_batches / c/N_train conventions."""
    scaling = train_cfg.get("kl_scaling")
    if scaling is None:
        return float(train_cfg.get("kl_weight", 1.0))
    mode = scaling.get("mode")
    numerator = float(scaling.get("numerator", 1.0))
    if mode == "per_batches":
        return numerator / math.ceil(n_train / batch_size)
    if mode == "per_train":
        return numerator / n_train
    raise ConfigError(f"unknown kl scaling mode: {mode!r}")


def train_config_from_dict(cfg: dict, n_train: int) -> training.TrainConfig:
    anneal_cfg = cfg.get("anneal", {})
    batch_size = cfg.get("batch_size", 64)
    return training.TrainConfig(
        learning_rate=cfg.get("learning_rate", 1e-3),
        batch_size=batch_size,
        epochs=cfg.get("epochs", 100),
        kl_weight=resolve_kl_weight(cfg, n_train, batch_size),
        anneal=training.AnnealSchedule(
            warmup_epochs=anneal_cfg.get("warmup_epochs", 0),
            zero_epochs=anneal_cfg.get("zero_epochs", 0),
        ),
        seed=cfg.get("seed", 0),
        gradient_clip=cfg.get("gradient_clip"),
    )


def build_and_init(config: dict, seed: int):
    model = modelio.build_model(config["model"])
    apply_init_config(model, config.get("init", {}), stream(seed, "init"))
    return model


def run_train(config: dict, seed: int, out_dir=None):
    """Train per config; returns (model, history, splits) and writes artifacts."""
    splits = data.generate({**config["task"], "seed": config["task"].get("seed", seed)})
    model = build_and_init(config, seed)
    tcfg = train_config_from_dict({**config.get("train", {}), "seed": seed},
                                  len(splits.x_train))
    history = training.train(model, splits, tcfg)
    if out_dir is not None:
        out = Path(out_dir)
        artifacts = []
        header = list(history[0].keys()) if history else [
            "epoch", "nll_term", "kl_term", "effective_kl_weight", "total"
        ]
        artifacts.append(reporting.write_csv(
            out / "history.csv", header,
            [[row[k] for k in header] for row in history],
        ))
        modelio.save_model(model, config["model"], out / "model.json")
        artifacts.append(out / "model.json")
        if history:
            artifacts.append(
                reporting.save_training_curve(out / "training_curve.png", history)
            )
        reporting.write_manifest(out, "train", config, seed, artifacts)
    return model, history, splits


def evaluate_model(model, splits, eval_cfg: dict, seed: int, out_dir=None):
    """Task-aware metric report plus curve CSVs and figures."""
    n_samples = eval_cfg.get("S", 200)
    rng = stream(seed, "eval")
    task = task_of(model)
    report = {"task": task, "S": n_samples}
    curves = {}
    figures = {}

    summary = mc_predict(model, splits.x_test, n_samples, rng)
    y_test = np.asarray(splits.y_test)

    if task == "regression":
        y = y_test[:, 0] if y_test.ndim == 2 else y_test
        mean = summary.mean_prediction
        resid = mean - y
        sigma_pred = np.sqrt(summary.epistemic_variance + model.sigma_y**2)
        report["rmse"] = float(np.sqrt(np.mean(resid**2)))
        report["mae"] = float(np.mean(np.abs(resid)))
        report["nll"] = float(np.mean(
            0.5 * np.log(2 * np.pi * sigma_pred**2) + resid**2 / (2 * sigma_pred**2)
        ))
        report["crps"] = mt.gaussian_crps(mean, sigma_pred, y)
        level = eval_cfg.get("interval_level", 0.95)
        intervals = mt.prediction_intervals(mean, sigma_pred, level)
        picp, mpiw = mt.picp_mpiw(intervals, y)
        report["picp"], report["mpiw"] = picp, mpiw
        report["calibration_auc"] = mt.regression_calibration_auc(mean, sigma_pred, y)
        retentions = eval_cfg.get("retention_levels", DEFAULT_RETENTIONS)
        curve = mt.selective_prediction_curve(
            np.abs(resid), np.sqrt(summary.epistemic_variance), retentions
        )
        curves["selective_prediction"] = (
            ["retention", "n_kept", "mean_error"],
            [[r["retention"], r["n_kept"], r["mean_error"]] for r in curve],
        )
    else:
        probs = summary.mean_prediction
        labels = y_test.astype(np.int64).ravel()
        report["nll"] = mt.nll(probs, labels)
        report["brier"] = mt.brier(probs, labels)
        report["accuracy"] = mt.accuracy(probs, labels)
        if task == "binary":
            confidence = np.maximum(probs, 1.0 - probs)
            correct = ((probs >= 0.5).astype(np.int64) == labels).astype(float)
            report["auroc"] = mt.auroc(probs, labels)
        else:
            confidence = probs.max(axis=1)
            correct = (probs.argmax(axis=1) == labels).astype(float)
        ece, bins = mt.ece_best_config(confidence, correct)
        report["ece"] = ece
        report["ece_binning"] = bins.binning
        report["ece_n_bins"] = bins.n_bins
        curves["reliability"] = (
            ["bin_confidence", "bin_accuracy", "bin_count"],
            [[c, a, int(n)] for c, a, n in zip(bins.confidence, bins.accuracy,
                                               bins.count)],
        )
        figures["reliability_diagram"] = bins

        if splits.x_ood is not None:
            ood = mc_predict(model, splits.x_ood, n_samples, stream(seed, "eval_ood"))
            mi_in = summary.mutual_information
            mi_ood = ood.mutual_information
            scores = np.concatenate([mi_in, mi_ood])
            is_ood = np.concatenate([np.zeros(len(mi_in)), np.ones(len(mi_ood))])
            report["auroc_ood"] = mt.auroc(scores, is_ood)
            report["aupr_ood"] = mt.aupr(scores, is_ood)
            report["aupr_in"] = mt.aupr(-scores, 1.0 - is_ood)
            mean_in = float(mi_in.mean())
            report["mi_ratio"] = float(mi_ood.mean() / mean_in) if mean_in > 0 else float("inf")

    if out_dir is not None:
        out = Path(out_dir)
        artifacts = [reporting.write_json(out / "metrics.json", report)]
        for name, (header, rows) in curves.items():
            artifacts.append(reporting.write_csv(out / f"{name}.csv", header, rows))
        if "reliability_diagram" in figures:
            artifacts.append(reporting.save_reliability_diagram(
                out / "reliability_diagram.png", figures["reliability_diagram"]
            ))
        reporting.write_manifest(out, "eval", eval_cfg, seed, artifacts)
    return report, curves


# ----------------------------------------------------------------------
# toy-regression uncertainty profile
# ----------------------------------------------------------------------

def epistemic_band_widths(model, grid_x, n_samples: int, rng,
                          lo_pct=5.0, hi_pct=95.0):
    """Per-grid-point width of the (lo, hi) percentile band of the S mean
    predictions (epistemic only: no observation noise added)."""
    summary = mc_predict(model, grid_x, n_samples, rng)
    lo, hi = np.percentile(summary.per_sample_outputs, [lo_pct, hi_pct], axis=0)
    return hi - lo, summary


def toy_uncertainty_profile(model, splits, n_samples=100, seed=0,
                            in_domain=(0.0, 0.5), out_domain=(0.5, 1.5)):
    """Median epistemic band width inside and outside the training support."""
    grid = splits.x_grid
    widths, summary = epistemic_band_widths(
        model, grid, n_samples, stream(seed, "toy_profile")
    )
    x = grid[:, 0]
    in_mask = (x >= in_domain[0]) & (x <= in_domain[1])
    out_mask = (x > out_domain[0]) & (x <= out_domain[1])
    in_iqr = float(np.median(widths[in_mask]))
    out_iqr = float(np.median(widths[out_mask]))
    return {
        "in_domain_iqr": in_iqr,
        "out_domain_iqr": out_iqr,
        "ratio": out_iqr / in_iqr if in_iqr > 0 else float("inf"),
        "widths": widths,
        "summary": summary,
    }


# ----------------------------------------------------------------------
# rank ablation
# ----------------------------------------------------------------------

def _set_rank(model_cfg: dict, rank: int) -> dict:
    cfg = {**model_cfg}
    if cfg.get("kind", "mlp") == "mlp":
        cfg["layers"] = [
            {**spec, "rank": rank} if spec.get("family") == "low_rank" else spec
            for spec in cfg["layers"]
        ]
    else:
        cfg["cells"] = [
            {**spec, "rank": rank} if spec.get("family") == "low_rank" else spec
            for spec in cfg.get("cells", [])
        ]
    return cfg


def rank_ablation(config: dict, rank_grid, budget: dict | None = None,
                  seed: int = 0, out_dir=None):
    """Train each rank at a reduced budget; emit a Pareto table.

    budget overrides epochs / eval sample count; bound columns carry the
    per-layer complexity ratio and an empirical PAC-Bayes value computed
    from the trained model's own max per-entry KL.
    """
    if not rank_grid:
        raise ConfigError("rank grid must be nonempty")
    budget = budget or {}
    table = []
    for rank in rank_grid:
        run_cfg = {
            **config,
            "model": _set_rank(config["model"], rank),
            "train": {**config.get("train", {})},
        }
        if "epochs" in budget:
            run_cfg["train"]["epochs"] = budget["epochs"]
        model, _, splits = run_train(run_cfg, seed)
        eval_cfg = {**config.get("eval", {})}
        if "S" in budget:
            eval_cfg["S"] = budget["S"]
        x_eval = splits.x_val if splits.x_val is not None and len(splits.x_val) else splits.x_test
        y_eval = splits.y_val if splits.x_val is not None and len(splits.x_val) else splits.y_test
        eval_splits = data.DatasetSplits(
            x_train=splits.x_train, y_train=splits.y_train,
            x_test=x_eval, y_test=y_eval,
            x_ood=splits.x_ood, y_ood=splits.y_ood,
        )
        report, _ = evaluate_model(model, eval_splits, eval_cfg, seed)
        row = {"rank": rank, "params": layers.param_count(model)["total"]}
        for key in ("nll", "ece", "rmse", "auroc", "auroc_ood", "aupr_ood",
                    "mi_ratio", "accuracy"):
            if key in report:
                row["val_" + key] = report[key]
        ratios = [
            bounds.complexity_ratio(l.m, l.n, l.rank)
            for l in bounds._stochastic_layers(model) if l.family == "low_rank"
        ]
        if ratios:
            row["complexity_ratio_mean"] = float(np.mean(ratios))
        c_max = bounds.empirical_cmax(model, n_samples=budget.get("cmax_samples", 10_000),
                                      rng=stream(seed, f"cmax:{rank}"))
        n_train = len(splits.x_train)
        kl_bound = bounds.kl_upper_factorized(c_max, row["params"])
        emp = report.get("nll")
        emp01 = min(max(1.0 - report["accuracy"], 0.0), 1.0) if "accuracy" in report \
            else min(report.get("rmse", 1.0), 1.0)
        pac = bounds.mcallester_bound(emp01, kl_bound, n_train, 0.05)
        row["empirical_cmax"] = c_max
        row["mcallester_value"] = pac.value
        row["mcallester_vacuous"] = pac.vacuous
        table.append(row)

    if out_dir is not None:
        out = Path(out_dir)
        all_keys = sorted({k for row in table for k in row})
        ordered = ["rank", "params"] + [k for k in all_keys if k not in ("rank", "params")]
        artifacts = [reporting.write_csv(
            out / "rank_ablation.csv", ordered,
            [[row.get(k, "") for k in ordered] for row in table],
        )]
        y_key = "val_auroc_ood" if any("val_auroc_ood" in r for r in table) else "val_rmse"
        x_key = "val_nll" if any("val_nll" in r for r in table) else "params"
        artifacts.append(reporting.save_rank_pareto(
            out / "rank_pareto.png",
            [{**r, x_key: r.get(x_key), y_key: r.get(y_key)} for r in table],
            x_key=x_key, y_key=y_key,
        ))
        reporting.write_manifest(out, "ablate-rank", config, seed, artifacts)
    return table
