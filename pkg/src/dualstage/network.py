"""The forecasting network: a seasonal LSTM branch, a patched Conv-LSTM
trend branch, an attention encoder-decoder over selected covariates, and a
weighted-summation fusion head producing one value per window.

Two printed-formula quirks are kept deliberately: the plain LSTM adds the
gate bias outside the sigmoid (``bias_inside_gate`` restores the textbook
form), and the covariate attention scales its bias vector by the target
value, which conditions the scores on the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ConfigurationError, ShapeMismatchError


@dataclass
class ModelConfig:
    window: int = 96
    horizon: int = 3
    hidden: int = 64
    patch_len: int = 24
    conv_kernel: int = 3
    feature_dim: int = 64
    n_covariates: int = 1
    use_ssa: bool = True
    use_pconv: bool = True
    use_spearman: bool = True
    decomposer: str = "ssa"
    bias_inside_gate: bool = False

    def validate(self):
        if self.conv_kernel % 2 == 0:
            raise ConfigurationError(f"conv kernel must be odd, got {self.conv_kernel}")
        if self.patch_len > self.window:
            raise ConfigurationError(
                f"patch length {self.patch_len} exceeds window {self.window}")
        if self.n_covariates < 1:
            raise ConfigurationError(
                "no covariates selected for the extraneous-variable branch; "
                "relax the correlation threshold or provide correlated inputs")


def patch(series: np.ndarray, patch_len: int) -> np.ndarray:
    """Non-overlapping subsequences; the trailing remainder is dropped."""
    series = np.asarray(series, dtype=np.float64)
    t = series.shape[-1]
    if patch_len < 1 or patch_len > t:
        raise ConfigurationError(
            f"patch length {patch_len} invalid for series of length {t}")
    n = t // patch_len
    return series[..., :n * patch_len].reshape(*series.shape[:-1], n, patch_len)


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return ad.parameter(rng.uniform(-bound, bound, size=shape))


GATES = ("f", "i", "o", "c")


def lstm_init(params: dict, rng, prefix: str, input_dim: int, hidden: int):
    fan_in = input_dim + hidden
    for gate in GATES:
        params[f"{prefix}.W_{gate}"] = _uniform(rng, (fan_in, hidden), fan_in)
        params[f"{prefix}.b_{gate}"] = _uniform(rng, (hidden,), fan_in)


def lstm_forward(params: dict, prefix: str, inputs: list[Tensor],
                 bias_inside_gate: bool = False,
                 h0: Tensor | None = None, c0: Tensor | None = None):
    """Run the gated recurrence over a step list of (batch, input_dim) tensors.

    Returns (all hidden states, final hidden, final cell). Gate biases sit
    outside the sigmoid unless ``bias_inside_gate``; the candidate bias is
    always inside its tanh.
    """
    if not inputs:
        raise ShapeMismatchError("lstm_forward requires a non-empty sequence")
    batch = inputs[0].data.shape[0]
    hidden = params[f"{prefix}.b_f"].data.shape[0]
    h = h0 if h0 is not None else ad.constant(np.zeros((batch, hidden)))
    c = c0 if c0 is not None else ad.constant(np.zeros((batch, hidden)))
    states = []
    for x_t in inputs:
        z = ad.concat([h, x_t], axis=1)
        gates = {}
        for gate in ("f", "i", "o"):
            pre = ad.matmul(z, params[f"{prefix}.W_{gate}"])
            if bias_inside_gate:
                gates[gate] = ad.sigmoid(ad.add_rowvec(pre, params[f"{prefix}.b_{gate}"]))
            else:
                gates[gate] = ad.add_rowvec(ad.sigmoid(pre), params[f"{prefix}.b_{gate}"])
        candidate = ad.tanh(ad.add_rowvec(ad.matmul(z, params[f"{prefix}.W_c"]),
                                          params[f"{prefix}.b_c"]))
        c = ad.add(ad.mul(gates["f"], c), ad.mul(gates["i"], candidate))
        h = ad.mul(gates["o"], ad.tanh(c))
        states.append(h)
    return states, h, c


def conv_lstm_init(params: dict, rng, prefix: str, kernel: int, patch_len: int):
    for gate in GATES:
        params[f"{prefix}.Wp_{gate}"] = _uniform(rng, (kernel,), kernel)
        params[f"{prefix}.Wh_{gate}"] = _uniform(rng, (kernel,), kernel)
        params[f"{prefix}.b_{gate}"] = _uniform(rng, (patch_len,), kernel)
    for gate in ("f", "i", "o"):
        params[f"{prefix}.Wc_{gate}"] = _uniform(rng, (patch_len,), patch_len)


def conv_lstm_forward(params: dict, prefix: str, patches: list[Tensor]):
    """Conv-LSTM over patch steps; states have the patch length.

    Input and hidden transforms are same-padded 1-D convolutions; the cell
    couplings are Hadamard peepholes. The output gate peepholes on the newly
    formed cell.
    """
    if not patches:
        raise ShapeMismatchError("conv_lstm_forward requires at least one patch")
    batch, patch_len = patches[0].data.shape
    h = ad.constant(np.zeros((batch, patch_len)))
    c = ad.constant(np.zeros((batch, patch_len)))
    states = []
    for p_e in patches:
        i_gate = ad.sigmoid(ad.add_rowvec(
            ad.add(ad.add(ad.conv1d(p_e, params[f"{prefix}.Wp_i"]),
                          ad.conv1d(h, params[f"{prefix}.Wh_i"])),
                   ad.mul_rowvec(c, params[f"{prefix}.Wc_i"])),
            params[f"{prefix}.b_i"]))
        f_gate = ad.sigmoid(ad.add_rowvec(
            ad.add(ad.add(ad.conv1d(p_e, params[f"{prefix}.Wp_f"]),
                          ad.conv1d(h, params[f"{prefix}.Wh_f"])),
                   ad.mul_rowvec(c, params[f"{prefix}.Wc_f"])),
            params[f"{prefix}.b_f"]))
        candidate = ad.tanh(ad.add_rowvec(
            ad.add(ad.conv1d(p_e, params[f"{prefix}.Wp_c"]),
                   ad.conv1d(h, params[f"{prefix}.Wh_c"])),
            params[f"{prefix}.b_c"]))
        c = ad.add(ad.mul(f_gate, c), ad.mul(i_gate, candidate))
        o_gate = ad.sigmoid(ad.add_rowvec(
            ad.add(ad.add(ad.conv1d(p_e, params[f"{prefix}.Wp_o"]),
                          ad.conv1d(h, params[f"{prefix}.Wh_o"])),
                   ad.mul_rowvec(c, params[f"{prefix}.Wc_o"])),
            params[f"{prefix}.b_o"]))
        h = ad.mul(o_gate, ad.tanh(c))
        states.append(h)
    return states, h, c


def input_attention(params: dict, prefix: str,
                    covariate_values: np.ndarray, target_values: np.ndarray):
    """Per-step attention weights over the selected covariates.

    Scores: v . tanh(w * x_z + b * x_g) per covariate z, where the bias is
    scaled by the target value. Returns (alpha, weighted inputs), both
    (batch, Q).
    """
    covariate_values = np.atleast_2d(np.asarray(covariate_values, dtype=np.float64))
    target_values = np.atleast_1d(np.asarray(target_values, dtype=np.float64))
    q = covariate_values.shape[1]
    if q < 1:
        raise ConfigurationError(
            "covariate attention needs at least one variable; disable the "
            "extraneous-variable branch if none are selected")
    target_term = ad.outer(ad.constant(target_values), params[f"{prefix}.b"])
    scores = []
    for z in range(q):
        feat = ad.tanh(ad.add(
            ad.outer(ad.constant(covariate_values[:, z]), params[f"{prefix}.w"]),
            target_term))
        scores.append(ad.matvec(feat, params[f"{prefix}.v"]))
    alpha = ad.softmax(ad.stack_cols(scores), axis=1)
    weighted = ad.mul(alpha, ad.constant(covariate_values))
    return alpha, weighted


def attention_init(params: dict, rng, prefix: str, n_covariates: int):
    params[f"{prefix}.w"] = _uniform(rng, (n_covariates,), n_covariates)
    params[f"{prefix}.b"] = _uniform(rng, (n_covariates,), n_covariates)
    params[f"{prefix}.v"] = _uniform(rng, (n_covariates,), n_covariates)


def l_attention_init(params: dict, rng, prefix: str, n_covariates: int,
                     hidden: int, feature_dim: int):
    attention_init(params, rng, f"{prefix}.input_attn", n_covariates)
    lstm_init(params, rng, f"{prefix}.encoder", n_covariates, hidden)
    lstm_init(params, rng, f"{prefix}.decoder", 1, hidden)
    params[f"{prefix}.attn.W_enc"] = _uniform(rng, (hidden, hidden), hidden)
    params[f"{prefix}.attn.W_dec"] = _uniform(rng, (hidden, hidden), hidden)
    params[f"{prefix}.attn.v"] = _uniform(rng, (hidden,), hidden)
    params[f"{prefix}.W_out"] = _uniform(rng, (hidden, feature_dim), hidden)
    params[f"{prefix}.b_out"] = _uniform(rng, (feature_dim,), hidden)


def l_attention_forward(params: dict, prefix: str, covariates: np.ndarray,
                        target: np.ndarray, horizon: int,
                        bias_inside_gate: bool = False) -> Tensor:
    """Covariate branch: input attention, encoder, decoder, temporal attention.

    covariates: (batch, steps, Q); target: (batch, steps). The decoder is
    seeded from the encoder's final (cell, hidden) and unrolled ``horizon``
    steps on zero inputs, then its last state queries the encoder states.
    """
    covariates = np.asarray(covariates, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    batch, steps, _ = covariates.shape
    if horizon < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {horizon}")
    weighted_steps = []
    for t in range(steps):
        _, weighted = input_attention(params, f"{prefix}.input_attn",
                                      covariates[:, t, :], target[:, t])
        weighted_steps.append(weighted)
    encoder_states, h_enc, c_enc = lstm_forward(
        params, f"{prefix}.encoder", weighted_steps,
        bias_inside_gate=bias_inside_gate)
    zero_input = ad.constant(np.zeros((batch, 1)))
    _, h_query, _ = lstm_forward(
        params, f"{prefix}.decoder", [zero_input] * horizon,
        bias_inside_gate=bias_inside_gate, h0=h_enc, c0=c_enc)
    query_term = ad.matmul(h_query, params[f"{prefix}.attn.W_dec"])
    scores = [
        ad.matvec(ad.tanh(ad.add(ad.matmul(h_j, params[f"{prefix}.attn.W_enc"]),
                                 query_term)),
                  params[f"{prefix}.attn.v"])
        for h_j in encoder_states
    ]
    beta = ad.softmax(ad.stack_cols(scores), axis=1)
    context = None
    for j, h_j in enumerate(encoder_states):
        term = ad.scale_rows(h_j, ad.col(beta, j))
        context = term if context is None else ad.add(context, term)
    return ad.add_rowvec(ad.matmul(context, params[f"{prefix}.W_out"]),
                         params[f"{prefix}.b_out"])


class DualStageModel:
    """Full parameter set plus the fused forward pass."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        params: dict[str, Tensor] = {}
        lstm_init(params, rng, "seasonal", 1, config.hidden)
        if config.use_pconv:
            conv_lstm_init(params, rng, "trend", config.conv_kernel, config.patch_len)
            trend_feat = config.patch_len
        else:
            lstm_init(params, rng, "trend_lstm", 1, config.hidden)
            trend_feat = config.hidden
        l_attention_init(params, rng, "evps", config.n_covariates,
                         config.hidden, config.feature_dim)
        tvps_in = config.hidden + trend_feat
        params["tvps.W"] = _uniform(rng, (tvps_in, config.feature_dim), tvps_in)
        params["tvps.b"] = _uniform(rng, (config.feature_dim,), tvps_in)
        params["fusion.w_tvps"] = ad.parameter(1.0)
        params["fusion.w_evps"] = ad.parameter(1.0)
        params["fusion.W"] = _uniform(rng, (config.feature_dim,), config.feature_dim)
        params["fusion.b"] = ad.parameter(0.0)
        self.params = params

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grads(self):
        for p in self.params.values():
            p.grad = None

    def fill_missing_grads(self):
        for p in self.params.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)

    def forward(self, seasonal: np.ndarray, trend: np.ndarray,
                target: np.ndarray, covariates: np.ndarray,
                horizon: int | None = None) -> Tensor:
        """Predict one value per window.

        seasonal/trend/target: (batch, window); covariates: (batch, window, Q).
        Under use_ssa=False the callers pass the raw window as both the
        seasonal and trend inputs.
        """
        cfg = self.config
        horizon = cfg.horizon if horizon is None else horizon
        seasonal = np.atleast_2d(np.asarray(seasonal, dtype=np.float64))
        trend = np.atleast_2d(np.asarray(trend, dtype=np.float64))
        batch, steps = seasonal.shape
        seasonal_steps = [ad.constant(seasonal[:, t:t + 1]) for t in range(steps)]
        _, h_seasonal, _ = lstm_forward(self.params, "seasonal", seasonal_steps,
                                        bias_inside_gate=cfg.bias_inside_gate)
        if cfg.use_pconv:
            patches = patch(trend, cfg.patch_len)
            patch_steps = [ad.constant(patches[:, e, :]) for e in range(patches.shape[1])]
            _, h_trend, _ = conv_lstm_forward(self.params, "trend", patch_steps)
        else:
            trend_steps = [ad.constant(trend[:, t:t + 1]) for t in range(steps)]
            _, h_trend, _ = lstm_forward(self.params, "trend_lstm", trend_steps,
                                         bias_inside_gate=cfg.bias_inside_gate)
        tvps = ad.add_rowvec(
            ad.matmul(ad.concat([h_seasonal, h_trend], axis=1), self.params["tvps.W"]),
            self.params["tvps.b"])
        evps = l_attention_forward(self.params, "evps", covariates, target,
                                   horizon, bias_inside_gate=cfg.bias_inside_gate)
        fused = ad.add(ad.mul(self.params["fusion.w_tvps"], tvps),
                       ad.mul(self.params["fusion.w_evps"], evps))
        return ad.add(ad.matvec(fused, self.params["fusion.W"]),
                      self.params["fusion.b"])

    # ------------------------------------------------------------------
    # checkpoint state

    def state_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "params": {
                name: {"shape": list(p.data.shape), "values": p.data.reshape(-1).tolist()}
                for name, p in self.params.items()
            },
        }

    def load_state_dict(self, state: dict):
        for name, p in self.params.items():
            if name not in state["params"]:
                raise ConfigurationError(f"checkpoint is missing parameter {name!r}")
            entry = state["params"][name]
            if tuple(entry["shape"]) != p.data.shape:
                raise ShapeMismatchError(
                    f"checkpoint parameter {name!r} has shape {entry['shape']}, "
                    f"expected {list(p.data.shape)}")
            p.data = np.asarray(entry["values"], dtype=np.float64).reshape(p.data.shape)
            p.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def restore(self, snapshot: dict[str, np.ndarray]):
        for name, values in snapshot.items():
            self.params[name].data = values.copy()


def build_model(config: ModelConfig, seed: int = 0) -> DualStageModel:
    return DualStageModel(config, np.random.default_rng(seed))
