"""Training loop: windowed feature preparation, MAE loss, Adam with a
stepped learning-rate decay, gradient clipping, and best-validation
checkpointing. Also hosts the ablation variants used for comparison runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .correlation import DEFAULT_THRESHOLD, CorrelationReport, filter_variables
from .dataio import SeriesDataset, make_windows
from .exceptions import ConfigurationError, ContractError
from .metrics import MetricSet, compute_metrics
from .network import DualStageModel, ModelConfig, build_model
from .ssa import ssa_pipeline, stl_decompose

DEFAULT_HORIZONS = (3, 6, 12, 24)
EVAL_BATCH = 256


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 0.001
    lr_decay: float = 0.9
    lr_step: int = 20
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float | None = 5.0
    seed: int = 0
    spearman_threshold: float = DEFAULT_THRESHOLD
    ssa_scope: str = "window"          # "window" or "series"

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch size must be positive")
        if self.lr <= 0 or not (0 < self.lr_decay <= 1) or self.lr_step < 1:
            raise ConfigurationError("invalid learning-rate schedule settings")
        if self.ssa_scope not in ("window", "series"):
            raise ConfigurationError(
                f"ssa_scope must be 'window' or 'series', got {self.ssa_scope!r}")


def lr_schedule(epoch: int, lr0: float, decay: float = 0.9, step: int = 20) -> float:
    """Stepped decay: the rate drops by ``decay`` every ``step`` epochs.

    Epochs are 1-based; epochs 1..step-1 run at lr0, and the first drop
    lands on epoch ``step`` itself.
    """
    if epoch < 1:
        raise ConfigurationError(f"epochs are 1-based, got {epoch}")
    return lr0 * decay ** (epoch // step)


class AdamState:
    """First/second moment accumulators, one pair per parameter."""

    def __init__(self, params: dict[str, Tensor]):
        self.step = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(np.asarray(p.grad) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm > 0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = np.asarray(p.grad) * scale
    return norm


def adam_step(params: dict[str, Tensor], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    state.step += 1
    t = state.step
    for name, p in params.items():
        if p.grad is None:
            continue
        g = np.asarray(p.grad, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise ContractError(f"non-finite gradient for parameter {name!r}")
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = state.m[name] / (1 - beta1 ** t)
        v_hat = state.v[name] / (1 - beta2 ** t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def mae_loss(pred: Tensor, labels: np.ndarray) -> Tensor:
    return ad.mean_(ad.abs_(ad.sub(pred, ad.constant(labels))))


# ----------------------------------------------------------------------
# feature preparation


@dataclass
class FeatureSet:
    """Per-window model inputs for one split."""

    seasonal: np.ndarray    # batch x window
    trend: np.ndarray       # batch x window
    target: np.ndarray      # batch x window
    covariates: np.ndarray  # batch x window x Q
    labels: np.ndarray      # batch
    starts: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def select_covariates(ds: SeriesDataset, use_spearman: bool = True,
                      threshold: float = DEFAULT_THRESHOLD
                      ) -> tuple[list[int], CorrelationReport | None]:
    """Pick covariate column indices, by rank correlation or all-in."""
    if use_spearman:
        report = filter_variables(ds, threshold=threshold)
        indices = [ds.variable_names.index(name) for name in report.selected]
        return indices, report
    indices = [i for i in range(ds.n_variables) if i != ds.target_index]
    return indices, None


def _decompose(window: np.ndarray, decomposer: str) -> tuple[np.ndarray, np.ndarray]:
    if decomposer == "stl":
        return stl_decompose(window)
    out = ssa_pipeline(window)
    return out.trend, out.seasonal


def prepare_features(ds: SeriesDataset, split: str, covariate_indices: list[int],
                     model_cfg: ModelConfig, ssa_scope: str = "window",
                     cache: dict | None = None) -> FeatureSet:
    """Window a split and decompose each target window into trend/seasonal.

    ``ssa_scope='series'`` decomposes the whole split once and slices the
    component series instead; under ``use_ssa=False`` the raw target window
    feeds both branches. ``cache`` memoizes per-window decompositions by
    absolute start row across calls.
    """
    if not covariate_indices:
        raise ConfigurationError(
            "no covariates available for the extraneous-variable branch; "
            "relax the correlation threshold or provide correlated inputs")
    batch = make_windows(ds, split, window=model_cfg.window, horizon=model_cfg.horizon)
    target = batch.inputs[:, :, ds.target_index]
    covariates = batch.inputs[:, :, covariate_indices]
    if not model_cfg.use_ssa:
        seasonal, trend = target, target
    elif ssa_scope == "series":
        lo, hi = ds.split_range(split)
        full_trend, full_seasonal = _decompose(
            ds.values[lo:hi, ds.target_index], model_cfg.decomposer)
        offsets = batch.starts - lo
        trend = np.stack([full_trend[o:o + model_cfg.window] for o in offsets])
        seasonal = np.stack([full_seasonal[o:o + model_cfg.window] for o in offsets])
    else:
        trend = np.empty_like(target)
        seasonal = np.empty_like(target)
        for row, start in enumerate(batch.starts):
            key = (model_cfg.decomposer, int(start), model_cfg.window)
            if cache is not None and key in cache:
                trend[row], seasonal[row] = cache[key]
            else:
                trend[row], seasonal[row] = _decompose(target[row], model_cfg.decomposer)
                if cache is not None:
                    cache[key] = (trend[row].copy(), seasonal[row].copy())
    return FeatureSet(seasonal=seasonal, trend=trend, target=target,
                      covariates=covariates, labels=batch.labels,
                      starts=batch.starts)


def _forward_batch(model: DualStageModel, feats: FeatureSet, rows) -> Tensor:
    return model.forward(seasonal=feats.seasonal[rows], trend=feats.trend[rows],
                         target=feats.target[rows], covariates=feats.covariates[rows])


def predict_features(model: DualStageModel, feats: FeatureSet) -> np.ndarray:
    """Tape-free forward over a prepared split, in fixed-size chunks."""
    out = np.empty(len(feats))
    for lo in range(0, len(feats), EVAL_BATCH):
        rows = slice(lo, min(lo + EVAL_BATCH, len(feats)))
        out[rows] = _forward_batch(model, feats, rows).data
    return out


# ----------------------------------------------------------------------
# the training loop


@dataclass
class TrainResult:
    model: DualStageModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_mae: float = float("inf")
    covariate_indices: list[int] = field(default_factory=list)
    covariate_names: list[str] = field(default_factory=list)
    correlation_report: CorrelationReport | None = None


def write_history_csv(history: list[dict], path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "lr", "train_mae", "valid_mae"])
        writer.writeheader()
        writer.writerows(history)


def train(ds: SeriesDataset, model_cfg: ModelConfig, train_cfg: TrainConfig,
          log_path=None, decomposition_cache: dict | None = None) -> TrainResult:
    """Fit the model on the train split, checkpointing on validation MAE.

    The returned model carries the best-validation parameters. Runs are
    bit-for-bit reproducible for a fixed seed and dataset.
    """
    train_cfg.validate()
    indices, report = select_covariates(
        ds, use_spearman=model_cfg.use_spearman,
        threshold=train_cfg.spearman_threshold)
    if not indices:
        raise ConfigurationError(
            "the correlation filter selected no covariates; relax the "
            "threshold or disable the filter")
    model_cfg = replace(model_cfg, n_covariates=len(indices))
    model = build_model(model_cfg, seed=train_cfg.seed)

    cache = decomposition_cache if decomposition_cache is not None else {}
    train_feats = prepare_features(ds, "train", indices, model_cfg,
                                   ssa_scope=train_cfg.ssa_scope, cache=cache)
    valid_feats = prepare_features(ds, "valid", indices, model_cfg,
                                   ssa_scope=train_cfg.ssa_scope, cache=cache)

    rng = np.random.default_rng(train_cfg.seed)
    adam = AdamState(model.params)
    result = TrainResult(model=model, covariate_indices=indices,
                         covariate_names=[ds.variable_names[i] for i in indices],
                         correlation_report=report)
    best_snapshot = model.snapshot()

    n = len(train_feats)
    for epoch in range(1, train_cfg.epochs + 1):
        lr = lr_schedule(epoch, train_cfg.lr, train_cfg.lr_decay, train_cfg.lr_step)
        order = rng.permutation(n)
        total_abs = 0.0
        for lo in range(0, n, train_cfg.batch_size):
            rows = order[lo:lo + train_cfg.batch_size]
            model.zero_grads()
            with ad.Tape() as tape:
                loss = mae_loss(_forward_batch(model, train_feats, rows),
                                train_feats.labels[rows])
                value = float(loss.data)
                if not np.isfinite(value):
                    raise ContractError(
                        f"training loss became non-finite at epoch {epoch}")
                tape.backward(loss)
            model.fill_missing_grads()
            if train_cfg.clip_norm is not None:
                clip_gradients(model.params, train_cfg.clip_norm)
            adam_step(model.params, adam, lr, train_cfg.adam_beta1,
                      train_cfg.adam_beta2, train_cfg.adam_eps)
            total_abs += value * len(rows)
        train_mae = total_abs / n
        valid_mae = float(np.abs(
            predict_features(model, valid_feats) - valid_feats.labels).mean())
        result.history.append({"epoch": epoch, "lr": lr,
                               "train_mae": train_mae, "valid_mae": valid_mae})
        if valid_mae < result.best_valid_mae:
            result.best_valid_mae = valid_mae
            result.best_epoch = epoch
            best_snapshot = model.snapshot()

    model.restore(best_snapshot)
    if log_path is not None:
        write_history_csv(result.history, log_path)
    return result


@dataclass
class PredictionTable:
    """Per-window forecasts for one split, aligned to absolute label rows."""

    rows: np.ndarray               # absolute row index of each label
    truth: np.ndarray              # normalized
    pred: np.ndarray               # normalized
    truth_denorm: np.ndarray
    pred_denorm: np.ndarray


def predict(result: TrainResult, ds: SeriesDataset, split: str,
            ssa_scope: str = "window", horizon: int | None = None,
            cache: dict | None = None) -> PredictionTable:
    cfg = result.model.config
    if horizon is not None and horizon != cfg.horizon:
        raise ConfigurationError(
            f"model was trained for horizon {cfg.horizon}, requested {horizon}")
    feats = prepare_features(ds, split, result.covariate_indices, cfg,
                             ssa_scope=ssa_scope, cache=cache)
    pred = predict_features(result.model, feats)
    label_rows = feats.starts + cfg.window + cfg.horizon - 1
    return PredictionTable(rows=label_rows, truth=feats.labels, pred=pred,
                           truth_denorm=ds.denormalize_target(feats.labels),
                           pred_denorm=ds.denormalize_target(pred))


def evaluate(result: TrainResult, ds: SeriesDataset, split: str,
             ssa_scope: str = "window", corr_standard: bool = False,
             cache: dict | None = None) -> MetricSet:
    """Metrics on the normalized scale, matching the training objective."""
    table = predict(result, ds, split, ssa_scope=ssa_scope, cache=cache)
    return compute_metrics(table.truth, table.pred, corr_standard=corr_standard)


# ----------------------------------------------------------------------
# ablation variants

ABLATION_VARIANTS: dict[str, dict] = {
    "full": {},
    "no_ssa": {"use_ssa": False},
    "no_pconv": {"use_pconv": False},
    "no_spearman": {"use_spearman": False},
    "stl": {"decomposer": "stl"},
}


def run_ablation(ds: SeriesDataset, model_cfg: ModelConfig, train_cfg: TrainConfig,
                 variants=None, split: str = "test",
                 corr_standard: bool = False) -> list[dict]:
    """Train each variant under identical settings; one metrics row apiece."""
    cache: dict = {}
    rows = []
    for name in (variants or ABLATION_VARIANTS):
        overrides = ABLATION_VARIANTS[name]
        result = train(ds, replace(model_cfg, **overrides), train_cfg,
                       decomposition_cache=cache)
        metrics = evaluate(result, ds, split, ssa_scope=train_cfg.ssa_scope,
                           corr_standard=corr_standard, cache=cache)
        rows.append({"variant": name, **metrics.to_dict(),
                     "best_epoch": result.best_epoch,
                     "best_valid_mae": result.best_valid_mae,
                     "covariates": list(result.covariate_names)})
    return rows
