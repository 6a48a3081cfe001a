"""Canonical experiment configurations for the desk-scale reproductions."""

from __future__ import annotations

import math

TOY_PRIOR = {"pi": 0.5, "sigma1": 2.0, "sigma2": math.exp(-6.0)}
DEFAULT_PRIOR = {"pi": 0.5, "sigma1": 1.0, "sigma2": math.exp(-6.0)}

# 1 -> 100 -> 100 -> 1 tanh regression; 800 epochs, Adam 5e-4, batch 128,
# fixed observation noise 0.02, KL tempered by 1e-4 / N_train and annealed
# over 760 epochs.
TOY_TRAIN = {
    "learning_rate": 5e-4,
    "batch_size": 128,
    "epochs": 800,
    "kl_scaling": {"mode": "per_train", "numerator": 1e-4},
    "anneal": {"warmup_epochs": 760, "zero_epochs": 0},
}


def toy_regression_config(low_rank: bool, rank: int = 16, seed: int = 42) -> dict:
    """Full-rank (20,802 params) or low-rank hidden block (7,202 at r=16)."""
    if low_rank:
        layer_specs = [
            {"family": "full_rank"},
            {"family": "low_rank", "rank": rank},
            {"family": "full_rank"},
        ]
        init = {"kind": "principled", "scheme": "glorot", "family": "gaussian",
                "eta": 0.1}
    else:
        layer_specs = [{"family": "full_rank"}] * 3
        init = {"kind": "uniform_range", "mu_limit": 0.2,
                "rho_low": -5.0, "rho_high": -4.0}
    return {
        "schema_version": 1,
        "seed": seed,
        "task": {"name": "toy_regression", "seed": 0,
                 "n_train": 1024, "n_test": 2048},
        "model": {
            "kind": "mlp",
            "arch": [1, 100, 100, 1],
            "layers": layer_specs,
            "activations": ["tanh", "tanh", "linear"],
            "loss": "gaussian_nll",
            "sigma_y": 0.02,
            "prior": TOY_PRIOR,
        },
        "init": init,
        "train": dict(TOY_TRAIN),
        "eval": {"S": 200},
    }


def mimic_mlp_config(family: str) -> dict:
    """44 -> 128 -> 128 -> 1 sigmoid classifier, three parameter budgets.

    dense: 22,401. full_rank: 44,802. low_rank (r=15 on the hidden matmuls,
    full-rank variational head, variational biases): 13,610.
    """
    layer_specs = {
        "dense": [{"family": "dense"}] * 3,
        "full_rank": [{"family": "full_rank"}] * 3,
        "low_rank": [
            {"family": "low_rank", "rank": 15},
            {"family": "low_rank", "rank": 15},
            {"family": "full_rank"},
        ],
    }[family]
    return {
        "schema_version": 1,
        "task": {"name": "synthetic_classification", "seed": 0, "n": 2000,
                 "d": 44, "separation": 6.0},
        "model": {
            "kind": "mlp",
            "arch": [44, 128, 128, 1],
            "layers": layer_specs,
            "activations": ["relu", "relu", "sigmoid"],
            "loss": "binary_ce",
            "prior": DEFAULT_PRIOR,
        },
        "init": {"kind": "principled", "scheme": "he", "eta": 0.1,
                 "damping": 0.55},
        "train": {
            "learning_rate": 1e-3,
            "batch_size": 64,
            "epochs": 64,
            "kl_scaling": {"mode": "per_batches", "numerator": 0.5},
        },
        "eval": {"S": 128},
    }


def sequence_lstm_config(rank: int = 8, hidden: int = 16) -> dict:
    """Small variational LSTM on the synthetic sine-forecasting task."""
    return {
        "schema_version": 1,
        "task": {"name": "synthetic_sequence", "seed": 0, "n": 600, "T": 24},
        "model": {
            "kind": "lstm",
            "features": 1,
            "hidden": [hidden],
            "cells": [{"family": "low_rank", "rank": rank}],
            "head": {"family": "full_rank"},
            "outputs": 1,
            "loss": "gaussian_nll",
            "sigma_y": 0.1,
            "prior": DEFAULT_PRIOR,
        },
        "init": {"kind": "principled", "scheme": "glorot", "eta": 0.1},
        "train": {
            "learning_rate": 3e-3,
            "batch_size": 64,
            "epochs": 40,
            "kl_scaling": {"mode": "per_train", "numerator": 0.09},
            "anneal": {"warmup_epochs": 10, "zero_epochs": 2},
        },
        "eval": {"S": 64},
    }
