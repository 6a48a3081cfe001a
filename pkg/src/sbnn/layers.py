"""Layer families and models.

Four linear-layer families (deterministic, full-rank mean-field, low-rank
factorized W = A B^T, rank-1 multiplicative) plus an LSTM cell that samples
its packed-gate weights once per sequence and caches them across time steps.
Every stochastic forward pass returns both the activations and the layer's
one-sample KL contribution on the same tape.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError, StateError
from .variational import (
    GaussianPosterior,
    LaplacePosterior,
    ScaleMixturePrior,
    log_prior_density,
)

GATE_ORDER = ("input", "forget", "cell", "output")  # fixed packed-gate layout


def make_posterior(family: str, mu, rho, name: str):
    if family == "gaussian":
        return GaussianPosterior(mu, rho, name)
    if family == "laplace":
        return LaplacePosterior(mu, rho, name)
    raise ConfigError(f"unknown posterior family: {family!r}")


def _kl_of_sample(post, w: ad.Tensor, prior: ScaleMixturePrior) -> ad.Tensor:
    return ad.sub(post.log_q(w), log_prior_density(w, prior))


class _BiasMixin:
    """Shared bias handling: 'variational' posterior, 'deterministic', or 'none'."""

    def _init_bias(self, n, bias_mode, posterior_family, name):
        self.bias_mode = bias_mode
        if bias_mode == "variational":
            self.bias_post = make_posterior(
                posterior_family, np.zeros(n), np.full(n, -5.0), f"{name}.bias"
            )
            self.bias = None
        elif bias_mode == "deterministic":
            self.bias_post = None
            self.bias = ad.parameter(np.zeros(n), f"{name}.bias")
        elif bias_mode == "none":
            self.bias_post = None
            self.bias = None
        else:
            raise ConfigError(f"unknown bias mode: {bias_mode!r}")

    def _bias_params(self):
        if self.bias_mode == "variational":
            return [("bias.mu", self.bias_post.mu), ("bias.rho", self.bias_post.rho)]
        if self.bias_mode == "deterministic":
            return [("bias", self.bias)]
        return []

    def _bias_count(self):
        if self.bias_mode == "variational":
            return 2 * self.bias_post.mu.size
        if self.bias_mode == "deterministic":
            return self.bias.size
        return 0


class DenseLayer(_BiasMixin):
    """Deterministic affine layer; KL contribution is identically zero."""

    family = "dense"

    def __init__(self, m, n, bias="deterministic", name="dense", weight=None):
        self.m, self.n = m, n
        self.name = name
        if bias == "variational":
            raise ConfigError("dense layer takes a deterministic bias or none")
        w0 = np.zeros((m, n)) if weight is None else np.asarray(weight, dtype=np.float64)
        if w0.shape != (m, n):
            raise ShapeError(f"dense weight shape {w0.shape} != ({m}, {n})")
        self.weight = ad.parameter(w0, f"{name}.W")
        self._init_bias(n, bias, "gaussian", name)

    def forward_sample(self, x: ad.Tensor, rng, use_cached=False):
        out = ad.matmul(x, self.weight)
        if self.bias is not None:
            out = ad.add(out, self.bias)
        return out, ad.Tensor(0.0)

    def mean_forward(self, x: np.ndarray) -> np.ndarray:
        out = x @ self.weight.value
        if self.bias is not None:
            out = out + self.bias.value
        return out

    def mean_weight(self) -> np.ndarray:
        return self.weight.value.copy()

    def named_parameters(self):
        return [(f"{self.name}.W", self.weight)] + [
            (f"{self.name}.{k}", t) for k, t in self._bias_params()
        ]

    def param_count(self):
        return self.weight.size + self._bias_count()

    def clear_cache(self):
        pass


class _StochasticLayer(_BiasMixin):
    """Common sampling/caching machinery for the variational families."""

    def __init__(self):
        self._cache = None

    def clear_cache(self):
        self._cache = None

    @property
    def cache_valid(self):
        return self._cache is not None

    def forward_sample(self, x: ad.Tensor, rng, use_cached=False):
        """Activations x W + bias with W sampled (or reused from the cache).

        Consuming a cached sample contributes zero KL: the divergence for
        that draw was already emitted when the sample was created.
        """
        if x.shape[-1] != self.m:
            raise ShapeError(f"input width {x.shape} incompatible with ({self.m}, {self.n})")
        if use_cached and self._cache is not None:
            w, bias = self._cache
            kl = ad.Tensor(0.0)
        else:
            w, bias, kl = self._sample(rng)
            self._cache = (w, bias)
        out = ad.matmul(x, w)
        if bias is not None:
            out = ad.add(out, bias)
        return out, kl

    def named_parameters(self):
        out = []
        for tag, post in self._posteriors():
            out.append((f"{self.name}.{tag}.mu", post.mu))
            out.append((f"{self.name}.{tag}.rho", post.rho))
        for k, t in self._bias_params():
            out.append((f"{self.name}.{k}", t))
        for k, t in self._extra_params():
            out.append((f"{self.name}.{k}", t))
        return out

    def param_count(self):
        n = sum(2 * post.mu.size for _, post in self._posteriors())
        n += self._bias_count()
        n += sum(t.size for _, t in self._extra_params())
        return n

    def _extra_params(self):
        return []

    def _sample_bias(self, rng):
        """(bias tensor or None, list of (post, sample) for KL)."""
        if self.bias_mode == "variational":
            b = self.bias_post.sample(self.bias_post.draw_eps(rng))
            return b, [(self.bias_post, b)]
        return self.bias, []

    def _kl_total(self, pairs):
        kl = ad.Tensor(0.0)
        for post, w in pairs:
            kl = ad.add(kl, _kl_of_sample(post, w, self.prior))
        return kl


class FullRankVariationalLayer(_StochasticLayer):
    """Independent posterior on every weight entry (mean-field baseline)."""

    family = "full_rank"

    def __init__(self, m, n, prior=None, bias="variational",
                 posterior_family="gaussian", name="full"):
        super().__init__()
        self.m, self.n = m, n
        self.name = name
        self.prior = prior or ScaleMixturePrior()
        self.posterior_family = posterior_family
        self.weight_post = make_posterior(
            posterior_family, np.zeros((m, n)), np.full((m, n), -5.0), f"{name}.W"
        )
        self._init_bias(n, bias, posterior_family, name)

    def _posteriors(self):
        return [("W", self.weight_post)]

    def _sample(self, rng):
        w = self.weight_post.sample(self.weight_post.draw_eps(rng))
        bias, bias_pairs = self._sample_bias(rng)
        kl = self._kl_total([(self.weight_post, w)] + bias_pairs)
        return w, bias, kl

    def mean_weight(self) -> np.ndarray:
        return self.weight_post.mu.value.copy()

    def mean_forward(self, x):
        out = x @ self.weight_post.mu.value
        if self.bias_mode == "variational":
            out = out + self.bias_post.mu.value
        elif self.bias_mode == "deterministic":
            out = out + self.bias.value
        return out


class LowRankVariationalLayer(_StochasticLayer):
    """Posterior over factors A (m x r) and B (n x r); W = A B^T.

    Every sampled W lies on the rank-r manifold, which is the testable
    consequence of parameterizing the posterior on the factors.
    """

    family = "low_rank"

    def __init__(self, m, n, rank, prior=None, bias="variational",
                 posterior_family="gaussian", name="lowrank"):
        super().__init__()
        if rank < 1 or rank > min(m, n):
            raise ConfigError(f"rank {rank} out of range for ({m}, {n})")
        self.m, self.n, self.rank = m, n, rank
        self.name = name
        self.prior = prior or ScaleMixturePrior()
        self.posterior_family = posterior_family
        self.a_post = make_posterior(
            posterior_family, np.zeros((m, rank)), np.full((m, rank), -5.0), f"{name}.A"
        )
        self.b_post = make_posterior(
            posterior_family, np.zeros((n, rank)), np.full((n, rank), -5.0), f"{name}.B"
        )
        self._init_bias(n, bias, posterior_family, name)

    def _posteriors(self):
        return [("A", self.a_post), ("B", self.b_post)]

    def _sample(self, rng):
        a = self.a_post.sample(self.a_post.draw_eps(rng))
        b = self.b_post.sample(self.b_post.draw_eps(rng))
        w = ad.matmul(a, ad.transpose(b))
        bias, bias_pairs = self._sample_bias(rng)
        kl = self._kl_total([(self.a_post, a), (self.b_post, b)] + bias_pairs)
        return w, bias, kl

    def mean_weight(self) -> np.ndarray:
        return self.a_post.mu.value @ self.b_post.mu.value.T

    def mean_forward(self, x):
        out = x @ self.mean_weight()
        if self.bias_mode == "variational":
            out = out + self.bias_post.mu.value
        elif self.bias_mode == "deterministic":
            out = out + self.bias.value
        return out


class Rank1MultiplicativeLayer(_StochasticLayer):
    """Deterministic W0 scaled elementwise by (1 + r s^T).

    Zero perturbation vectors recover W0 exactly, which pins down the
    parameterization among the variants floating around.
    """

    family = "rank1"

    def __init__(self, m, n, prior=None, bias="variational",
                 posterior_family="gaussian", name="rank1", w0=None):
        super().__init__()
        self.m, self.n = m, n
        self.name = name
        self.prior = prior or ScaleMixturePrior()
        self.posterior_family = posterior_family
        base = np.zeros((m, n)) if w0 is None else np.asarray(w0, dtype=np.float64)
        if base.shape != (m, n):
            raise ShapeError(f"w0 shape {base.shape} != ({m}, {n})")
        self.w0 = ad.parameter(base, f"{name}.W0")
        self.r_post = make_posterior(
            posterior_family, np.zeros(m), np.full(m, -5.0), f"{name}.r"
        )
        self.s_post = make_posterior(
            posterior_family, np.zeros(n), np.full(n, -5.0), f"{name}.s"
        )
        self._init_bias(n, bias, posterior_family, name)

    def _posteriors(self):
        return [("r", self.r_post), ("s", self.s_post)]

    def _extra_params(self):
        return [("W0", self.w0)]

    def _sample(self, rng):
        r = self.r_post.sample(self.r_post.draw_eps(rng))
        s = self.s_post.sample(self.s_post.draw_eps(rng))
        scale = ad.add(ad.Tensor(np.ones((self.m, self.n))), ad.outer(r, s))
        w = ad.mul(scale, self.w0)
        bias, bias_pairs = self._sample_bias(rng)
        kl = self._kl_total([(self.r_post, r), (self.s_post, s)] + bias_pairs)
        return w, bias, kl

    def mean_weight(self) -> np.ndarray:
        scale = 1.0 + np.outer(self.r_post.mu.value, self.s_post.mu.value)
        return scale * self.w0.value

    def mean_forward(self, x):
        out = x @ self.mean_weight()
        if self.bias_mode == "variational":
            out = out + self.bias_post.mu.value
        elif self.bias_mode == "deterministic":
            out = out + self.bias.value
        return out


class LSTMVariationalCell:
    """LSTM cell over packed-gate projections with per-sequence weight caching.

    x_to_gates maps d_in -> 4H (with bias), h_to_gates maps H -> 4H (no
    bias); each may be any layer family. Weights are sampled at t = 0 and
    reused for the rest of the sequence, so the KL is emitted exactly once
    per sequence. Gate order is (input, forget, cell-candidate, output) and
    the forget-gate bias starts at 1.0.
    """

    family = "lstm_cell"

    def __init__(self, x_layer, h_layer, hidden_size, name="cell"):
        if x_layer.n != 4 * hidden_size or h_layer.n != 4 * hidden_size:
            raise ShapeError(
                f"gate projections must be width {4 * hidden_size}, got "
                f"{x_layer.n} and {h_layer.n}"
            )
        if h_layer.m != hidden_size:
            raise ShapeError(f"h_to_gates input {h_layer.m} != hidden {hidden_size}")
        self.x_layer = x_layer
        self.h_layer = h_layer
        self.hidden_size = hidden_size
        self.name = name
        self._sampled_this_sequence = False
        self._set_forget_bias(1.0)

    def _set_forget_bias(self, value):
        h = self.hidden_size
        if self.x_layer.bias_mode == "variational":
            self.x_layer.bias_post.mu.value[h:2 * h] = value
        elif self.x_layer.bias_mode == "deterministic":
            self.x_layer.bias.value[h:2 * h] = value

    def clear_cache(self):
        self.x_layer.clear_cache()
        self.h_layer.clear_cache()
        self._sampled_this_sequence = False

    def step(self, x_t: ad.Tensor, h_prev: ad.Tensor, c_prev: ad.Tensor, rng,
             use_cached: bool):
        """One LSTM step; KL is nonzero only on the sampling step."""
        if use_cached and not self._sampled_this_sequence:
            raise StateError(
                f"{self.name}: use_cached=True but no weight sample is cached"
            )
        gx, kl_x = self.x_layer.forward_sample(x_t, rng, use_cached=use_cached)
        gh, kl_h = self.h_layer.forward_sample(h_prev, rng, use_cached=use_cached)
        if not use_cached:
            self._sampled_this_sequence = True
        gates = ad.add(gx, gh)
        gi, gf, gc, go = ad.split_cols(gates, 4)
        c = ad.add(
            ad.mul(ad.sigmoid(gf), c_prev),
            ad.mul(ad.sigmoid(gi), ad.tanh(gc)),
        )
        h = ad.mul(ad.sigmoid(go), ad.tanh(c))
        return h, c, ad.add(kl_x, kl_h)

    def named_parameters(self):
        return [
            (f"{self.name}.x.{k.split('.', 1)[1]}", t)
            for k, t in self.x_layer.named_parameters()
        ] + [
            (f"{self.name}.h.{k.split('.', 1)[1]}", t)
            for k, t in self.h_layer.named_parameters()
        ]

    def param_count(self):
        return self.x_layer.param_count() + self.h_layer.param_count()


def lstm_step(cell, x_t, h_prev, c_prev, rng, use_cached):
    return cell.step(x_t, h_prev, c_prev, rng, use_cached)


def clear_cache(cell_or_layer):
    cell_or_layer.clear_cache()


class MLPModel:
    """Feed-forward stack: layer -> activation, repeated; loss picks the head."""

    kind = "mlp"

    def __init__(self, layers, activations, loss_kind="gaussian_nll", sigma_y=0.02):
        if len(layers) != len(activations):
            raise ConfigError("need one activation per layer")
        if loss_kind not in ad.LOSS_KINDS:
            raise ConfigError(f"unknown loss kind: {loss_kind!r}")
        self.layers = list(layers)
        self.activations = list(activations)
        self.loss_kind = loss_kind
        self.sigma_y = sigma_y

    def forward_sample(self, x, rng):
        """(prediction tensor, summed KL tensor) for a fresh weight sample."""
        h = ad.Tensor(np.asarray(x, dtype=np.float64))
        kl = ad.Tensor(0.0)
        for layer, act in zip(self.layers, self.activations):
            h, layer_kl = layer.forward_sample(h, rng)
            h = ad.activation(h, act)
            kl = ad.add(kl, layer_kl)
        return h, kl

    def mean_forward(self, x):
        h = np.asarray(x, dtype=np.float64)
        for layer, act in zip(self.layers, self.activations):
            h = layer.mean_forward(h)
            h = _np_activation(h, act)
        return h

    def clear_caches(self):
        for layer in self.layers:
            layer.clear_cache()

    def named_parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer.named_parameters())
        return out

    def param_count_breakdown(self):
        rows = [(layer.name, layer.param_count()) for layer in self.layers]
        return rows, sum(c for _, c in rows)


class LSTMModel:
    """Stacked LSTM cells unrolled over time, linear head on the last h."""

    kind = "lstm"

    def __init__(self, cells, head, loss_kind="gaussian_nll", sigma_y=1.0,
                 head_activation="linear"):
        self.cells = list(cells)
        self.head = head
        self.loss_kind = loss_kind
        self.sigma_y = sigma_y
        self.head_activation = head_activation

    def forward_sample(self, x, rng):
        """x has shape (batch, T, features); weights sampled once per sequence."""
        x = np.asarray(x, dtype=np.float64)
        batch, T, _ = x.shape
        self.clear_caches()
        h = [ad.Tensor(np.zeros((batch, c.hidden_size))) for c in self.cells]
        c = [ad.Tensor(np.zeros((batch, cc.hidden_size))) for cc in self.cells]
        kl = ad.Tensor(0.0)
        for t in range(T):
            inp = ad.Tensor(x[:, t, :])
            for i, cell in enumerate(self.cells):
                h[i], c[i], step_kl = cell.step(inp, h[i], c[i], rng, use_cached=t > 0)
                inp = h[i]
                if t == 0:
                    kl = ad.add(kl, step_kl)
        out, head_kl = self.head.forward_sample(h[-1], rng)
        out = ad.activation(out, self.head_activation)
        return out, ad.add(kl, head_kl)

    def mean_forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        batch, T, _ = x.shape
        h = [np.zeros((batch, c.hidden_size)) for c in self.cells]
        c = [np.zeros((batch, cc.hidden_size)) for cc in self.cells]
        for t in range(T):
            inp = x[:, t, :]
            for i, cell in enumerate(self.cells):
                gates = cell.x_layer.mean_forward(inp) + cell.h_layer.mean_forward(h[i])
                gi, gf, gc, go = np.split(gates, 4, axis=1)
                c[i] = _np_sigmoid(gf) * c[i] + _np_sigmoid(gi) * np.tanh(gc)
                h[i] = _np_sigmoid(go) * np.tanh(c[i])
                inp = h[i]
        out = self.head.mean_forward(h[-1])
        return _np_activation(out, self.head_activation)

    def clear_caches(self):
        for cell in self.cells:
            cell.clear_cache()
        self.head.clear_cache()

    def named_parameters(self):
        out = []
        for cell in self.cells:
            out.extend(cell.named_parameters())
        out.extend(self.head.named_parameters())
        return out

    def param_count_breakdown(self):
        rows = [(c.name, c.param_count()) for c in self.cells]
        rows.append((self.head.name, self.head.param_count()))
        return rows, sum(cnt for _, cnt in rows)


def param_count(model) -> dict:
    """Per-layer and total trainable-scalar counts (mu and rho each count)."""
    rows, total = model.param_count_breakdown()
    return {"per_layer": rows, "total": total}


def _np_sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _np_activation(x, kind):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        return _np_sigmoid(x)
    if kind == "linear":
        return x
    raise ConfigError(f"unknown activation kind: {kind!r}")
