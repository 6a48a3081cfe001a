"""Model construction from config dicts and bit-exact JSON serialization.

The on-disk format stores layer topology, family, rank, and flat parameter
arrays as base64 of little-endian float64 bytes, so a save/load round-trip
reproduces every parameter exactly.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from .errors import ConfigError
from .layers import (
    DenseLayer,
    FullRankVariationalLayer,
    LowRankVariationalLayer,
    LSTMVariationalCell,
    LSTMModel,
    MLPModel,
    Rank1MultiplicativeLayer,
)
from .variational import ScaleMixturePrior

SCHEMA_VERSION = 1


def make_layer(family, m, n, rank=None, prior=None, bias="variational",
               posterior="gaussian", name="layer"):
    if family == "dense":
        mode = "deterministic" if bias != "none" else "none"
        return DenseLayer(m, n, bias=mode, name=name)
    if family == "full_rank":
        return FullRankVariationalLayer(
            m, n, prior=prior, bias=bias, posterior_family=posterior, name=name
        )
    if family == "low_rank":
        if rank is None:
            raise ConfigError(f"layer {name}: low_rank needs a rank")
        return LowRankVariationalLayer(
            m, n, rank, prior=prior, bias=bias, posterior_family=posterior, name=name
        )
    if family == "rank1":
        return Rank1MultiplicativeLayer(
            m, n, prior=prior, bias=bias, posterior_family=posterior, name=name
        )
    raise ConfigError(f"unknown layer family: {family!r}")


def prior_from_config(cfg: dict | None) -> ScaleMixturePrior:
    cfg = cfg or {}
    return ScaleMixturePrior(
        pi=cfg.get("pi", 0.5),
        sigma1=cfg.get("sigma1", 1.0),
        sigma2=cfg.get("sigma2", float(np.exp(-6.0))),
    )


def build_mlp(cfg: dict) -> MLPModel:
    """MLP from a config dict.

    cfg keys: arch (unit counts), layers (list of {family, rank?, bias?,
    posterior?}), activations, loss, sigma_y, prior.
    """
    arch = cfg["arch"]
    layer_specs = cfg["layers"]
    if len(layer_specs) != len(arch) - 1:
        raise ConfigError(f"{len(arch) - 1} layers required, got {len(layer_specs)}")
    prior = prior_from_config(cfg.get("prior"))
    layers = []
    for i, spec in enumerate(layer_specs):
        layers.append(
            make_layer(
                spec["family"], arch[i], arch[i + 1],
                rank=spec.get("rank"),
                prior=prior,
                bias=spec.get("bias", "variational"),
                posterior=spec.get("posterior", "gaussian"),
                name=f"L{i}",
            )
        )
    activations = cfg.get("activations")
    if activations is None:
        raise ConfigError("mlp config needs an activations list")
    return MLPModel(
        layers, activations,
        loss_kind=cfg.get("loss", "gaussian_nll"),
        sigma_y=cfg.get("sigma_y", 0.02),
    )


def build_lstm(cfg: dict) -> LSTMModel:
    """Stacked LSTM from a config dict.

    cfg keys: features, hidden (list of sizes), cells (list of {family,
    rank?, bias?, posterior?}), head ({family, rank?}), loss, sigma_y.
    """
    features = cfg["features"]
    hidden = cfg["hidden"]
    cell_specs = cfg.get("cells") or [{"family": "low_rank", "rank": 8}] * len(hidden)
    prior = prior_from_config(cfg.get("prior"))
    cells = []
    d_in = features
    for i, (h, spec) in enumerate(zip(hidden, cell_specs)):
        x_layer = make_layer(
            spec["family"], d_in, 4 * h, rank=spec.get("rank"), prior=prior,
            bias=spec.get("bias", "variational"),
            posterior=spec.get("posterior", "gaussian"), name=f"cell{i}.x",
        )
        h_layer = make_layer(
            spec["family"], h, 4 * h, rank=spec.get("rank"), prior=prior,
            bias="none", posterior=spec.get("posterior", "gaussian"),
            name=f"cell{i}.h",
        )
        cells.append(LSTMVariationalCell(x_layer, h_layer, h, name=f"cell{i}"))
        d_in = h
    head_spec = cfg.get("head", {"family": "full_rank"})
    head = make_layer(
        head_spec["family"], d_in, cfg.get("outputs", 1),
        rank=head_spec.get("rank"), prior=prior,
        bias=head_spec.get("bias", "variational"),
        posterior=head_spec.get("posterior", "gaussian"), name="head",
    )
    return LSTMModel(
        cells, head,
        loss_kind=cfg.get("loss", "gaussian_nll"),
        sigma_y=cfg.get("sigma_y", 1.0),
        head_activation=cfg.get("head_activation", "linear"),
    )


def build_model(cfg: dict):
    kind = cfg.get("kind", "mlp")
    if kind == "mlp":
        model = build_mlp(cfg)
    elif kind == "lstm":
        model = build_lstm(cfg)
    else:
        raise ConfigError(f"unknown model kind: {kind!r}")
    model._config = cfg  # kept for serialization and thread-local cloning
    return model


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------

def _encode(arr: np.ndarray) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode()}


def _decode(entry: dict) -> np.ndarray:
    raw = base64.b64decode(entry["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).astype(np.float64)


def model_to_dict(model, config: dict) -> dict:
    """Serializable snapshot: the build config plus every parameter array."""
    params = {name: _encode(t.value) for name, t in model.named_parameters()}
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "params": params,
    }


def load_model_dict(doc: dict):
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported model schema: {doc.get('schema_version')}")
    model = build_model(doc["config"])
    have = dict(model.named_parameters())
    for name, entry in doc["params"].items():
        if name not in have:
            raise ConfigError(f"serialized parameter {name!r} not in rebuilt model")
        have[name].value[...] = _decode(entry)
    return model


def save_model(model, config: dict, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, config), fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        return load_model_dict(json.load(fh))


def dense_weight_matrices(model) -> dict[str, np.ndarray]:
    """Posterior-mean (or deterministic) weight per layer, for SVD analysis."""
    out = {}
    if hasattr(model, "layers"):
        for layer in model.layers:
            out[layer.name] = layer.mean_weight()
    else:
        for cell in model.cells:
            out[cell.x_layer.name] = cell.x_layer.mean_weight()
            out[cell.h_layer.name] = cell.h_layer.mean_weight()
        out[model.head.name] = model.head.mean_weight()
    return out
