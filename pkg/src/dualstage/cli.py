"""Command-line entry point.

Subcommands: decompose, correlate, train, predict, evaluate. Each writes
delimited/JSON outputs plus rendered PNG figures into --out-dir. A flat
key=value --config file can supply any option; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import plots
from .correlation import DEFAULT_THRESHOLD, filter_variables
from .dataio import DEFAULT_WINDOW, load_csv, normalize, split
from .exceptions import ConfigurationError, DualstageError
from .metrics import compute_metrics, persistence_baseline
from .network import ModelConfig, build_model
from .ssa import ssa_pipeline, stl_decompose
from .training import (TrainConfig, TrainResult, predict as run_predict,
                       run_ablation, train)


def read_config_file(path) -> dict[str, str]:
    """Flat key=value lines; blank lines and # comments are ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _coerce(value: str, like):
    if isinstance(like, bool):
        lowered = value.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"expected a boolean, got {value!r}")
    if like is None:
        return value
    return type(like)(value)


def apply_config(args: argparse.Namespace, parser_defaults: dict):
    """Fold --config values under explicit flags: a flag set on the command
    line keeps its value; otherwise the file value replaces the default."""
    if not getattr(args, "config", None):
        return
    file_values = read_config_file(args.config)
    for key, raw in file_values.items():
        if not hasattr(args, key):
            raise ConfigurationError(f"unknown config key {key!r}")
        current = getattr(args, key)
        default = parser_defaults.get(key)
        if current == default:  # not overridden on the command line
            setattr(args, key, _coerce(raw, default))


def load_dataset(args):
    ds = load_csv(args.input, args.target)
    ds = split(ds, window=args.window, horizon=getattr(args, "horizon", 1))
    return normalize(ds, scope=args.norm_scope)


def model_config_from(args, n_covariates: int = 1) -> ModelConfig:
    return ModelConfig(
        window=args.window, horizon=args.horizon, hidden=args.hidden,
        patch_len=args.patch_len, conv_kernel=args.conv_kernel,
        feature_dim=args.feature_dim, n_covariates=n_covariates,
        use_ssa=not args.no_ssa, use_pconv=not args.no_pconv,
        use_spearman=not args.no_spearman, decomposer=args.decomposer,
        bias_inside_gate=args.bias_inside_gate)


def train_config_from(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        lr_decay=args.lr_decay, lr_step=args.lr_step,
        clip_norm=None if args.no_clip else args.clip_norm,
        seed=args.seed, spearman_threshold=args.threshold,
        ssa_scope=args.ssa_scope)


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


# ----------------------------------------------------------------------
# subcommands


def cmd_decompose(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(args)
    lo, hi = (0, ds.n_steps) if args.split == "all" else ds.split_range(args.split)
    series = ds.values[lo:hi, ds.target_index]
    if args.decomposer == "stl":
        trend, seasonal = stl_decompose(series)
        noise = series - trend - seasonal
        sidecar = {"method": "stl"}
    else:
        out = ssa_pipeline(series)
        trend, seasonal, noise = out.trend, out.seasonal, out.noise
        sidecar = {"method": "ssa",
                   "eigenvalues": out.eigenvalues.tolist(),
                   "groups": out.groups}
    rows = [{"row": lo + i, "series": series[i], "trend": trend[i],
             "seasonal": seasonal[i], "noise": noise[i]}
            for i in range(len(series))]
    write_csv(out_dir / "components.csv",
              ["row", "series", "trend", "seasonal", "noise"], rows)
    write_json(out_dir / "decomposition.json", sidecar)
    plots.save_components(series, trend, seasonal, noise,
                          out_dir / "components.png",
                          title=f"{ds.target_name} ({args.decomposer})")
    print(f"wrote components for {len(series)} rows to {out_dir}")
    return 0


def cmd_correlate(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(args)
    report = filter_variables(ds, threshold=args.threshold)
    rows = report.to_rows()
    write_csv(out_dir / "correlations.csv",
              ["variable", "rho", "degenerate", "selected"], rows)
    write_json(out_dir / "correlations.json",
               {"threshold": report.threshold, "selected": report.selected,
                "coefficients": {name: res.rho
                                 for name, res in report.coefficients.items()}})
    plots.save_correlations(rows, report.threshold, out_dir / "correlations.png")
    print(f"selected {len(report.selected)} of {len(rows)} variables: "
          f"{', '.join(report.selected) or '(none)'}")
    return 0


def cmd_train(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(args)
    model_cfg = model_config_from(args)
    train_cfg = train_config_from(args)
    result = train(ds, model_cfg, train_cfg, log_path=out_dir / "history.csv")
    plots.save_history(result.history, out_dir / "history.png")

    checkpoint = result.model.state_dict()
    checkpoint["covariates"] = result.covariate_names
    checkpoint["target"] = ds.target_name
    checkpoint["train_config"] = asdict(train_cfg)
    checkpoint["norm_scope"] = args.norm_scope
    write_json(out_dir / "checkpoint.json", checkpoint)

    manifest = {
        "command": "train",
        "dataset": str(args.input),
        "target": ds.target_name,
        "model_config": asdict(result.model.config),
        "train_config": asdict(train_cfg),
        "covariates": result.covariate_names,
        "best_epoch": result.best_epoch,
        "best_valid_mae": result.best_valid_mae,
        "outputs": ["checkpoint.json", "history.csv", "history.png"],
    }
    write_json(out_dir / "manifest.json", manifest)

    if args.ablation:
        rows = run_ablation(ds, model_cfg, train_cfg)
        write_csv(out_dir / "ablation.csv",
                  ["variant", "mae", "rmse", "rse", "corr", "n", "flags",
                   "best_epoch", "best_valid_mae", "covariates"], rows)
        manifest["outputs"].append("ablation.csv")
        write_json(out_dir / "manifest.json", manifest)

    print(f"best epoch {result.best_epoch}, valid MAE {result.best_valid_mae:.6f}")
    return 0


def _restore(args):
    with open(args.checkpoint) as fh:
        checkpoint = json.load(fh)
    saved_cfg = ModelConfig(**checkpoint["config"])
    saved_train = TrainConfig(**checkpoint["train_config"])
    args.window = saved_cfg.window
    args.norm_scope = checkpoint.get("norm_scope", "train")
    if not args.target:
        args.target = checkpoint["target"]
    ds = load_csv(args.input, args.target)
    ds = split(ds, window=saved_cfg.window, horizon=saved_cfg.horizon)
    ds = normalize(ds, scope=args.norm_scope)
    model = build_model(saved_cfg, seed=saved_train.seed)
    model.load_state_dict(checkpoint)
    missing = [n for n in checkpoint["covariates"] if n not in ds.variable_names]
    if missing:
        raise ConfigurationError(
            f"dataset lacks covariates used in training: {missing}")
    indices = [ds.variable_names.index(n) for n in checkpoint["covariates"]]
    result = TrainResult(model=model, covariate_indices=indices,
                         covariate_names=list(checkpoint["covariates"]))
    return ds, result, saved_train


def cmd_predict(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds, result, saved_train = _restore(args)
    table = run_predict(result, ds, args.split, ssa_scope=saved_train.ssa_scope)
    rows = [{"row": int(r), "truth": t, "pred": p,
             "truth_denorm": td, "pred_denorm": pd}
            for r, t, p, td, pd in zip(table.rows, table.truth, table.pred,
                                       table.truth_denorm, table.pred_denorm)]
    write_csv(out_dir / "predictions.csv",
              ["row", "truth", "pred", "truth_denorm", "pred_denorm"], rows)
    plots.save_forecast(table.rows, table.truth_denorm, table.pred_denorm,
                        out_dir / "forecast.png",
                        title=f"{ds.target_name} · {args.split} split")
    print(f"wrote {len(rows)} predictions to {out_dir}")
    return 0


def cmd_evaluate(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds, result, saved_train = _restore(args)
    table = run_predict(result, ds, args.split, ssa_scope=saved_train.ssa_scope)
    model_metrics = compute_metrics(table.truth, table.pred,
                                    corr_standard=args.corr_standard)
    baseline = persistence_baseline(
        ds, args.split, horizon=result.model.config.horizon,
        window=result.model.config.window, corr_standard=args.corr_standard)
    payload = {"split": args.split, "model": model_metrics.to_dict(),
               "persistence": baseline.to_dict()}
    write_json(out_dir / "metrics.json", payload)
    plots.save_forecast(table.rows, table.truth, table.pred,
                        out_dir / "forecast.png",
                        title=f"{ds.target_name} · {args.split} split (normalized)")
    print(f"{args.split} MAE {model_metrics.mae:.6f} "
          f"(persistence {baseline.mae:.6f})")
    return 0


# ----------------------------------------------------------------------
# parser


def _add_common(sub):
    sub.add_argument("--config", default=None, help="flat key=value config file")
    sub.add_argument("--out-dir", default="out", help="output directory")
    sub.add_argument("--seed", type=int, default=0)


def _add_data(sub, target_required=True):
    sub.add_argument("--input", required=True, help="CSV with a header row")
    sub.add_argument("--target", required=target_required, default=None,
                     help="target column name")
    sub.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    sub.add_argument("--norm-scope", choices=("train", "global"), default="train")


def _add_model(sub):
    sub.add_argument("--horizon", type=int, default=3)
    sub.add_argument("--hidden", type=int, default=64)
    sub.add_argument("--patch-len", type=int, default=24)
    sub.add_argument("--conv-kernel", type=int, default=3)
    sub.add_argument("--feature-dim", type=int, default=64)
    sub.add_argument("--decomposer", choices=("ssa", "stl"), default="ssa")
    sub.add_argument("--no-ssa", action="store_true",
                     help="feed raw windows to both branches")
    sub.add_argument("--no-pconv", action="store_true",
                     help="replace the patched conv branch with a plain recurrence")
    sub.add_argument("--no-spearman", action="store_true",
                     help="use every extraneous variable as a covariate")
    sub.add_argument("--bias-inside-gate", action="store_true",
                     help="textbook gate biases instead of the published form")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualstage",
        description="Dual-stage decomposition forecaster for multivariate series")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("decompose", help="split the target into components")
    _add_common(p)
    _add_data(p)
    p.add_argument("--decomposer", choices=("ssa", "stl"), default="ssa")
    p.add_argument("--split", choices=("all", "train", "valid", "test"),
                   default="all")
    _finalize(p, cmd_decompose)

    p = commands.add_parser("correlate", help="rank-correlation variable filter")
    _add_common(p)
    _add_data(p)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    _finalize(p, cmd_correlate)

    p = commands.add_parser("train", help="fit the forecaster")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--lr-decay", type=float, default=0.9)
    p.add_argument("--lr-step", type=int, default=20)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--no-clip", action="store_true")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--ssa-scope", choices=("window", "series"), default="window")
    p.add_argument("--ablation", action="store_true",
                   help="also train the comparison variants")
    _finalize(p, cmd_train)

    for name, func in (("predict", cmd_predict), ("evaluate", cmd_evaluate)):
        p = commands.add_parser(name, help=f"{name} from a saved checkpoint")
        _add_common(p)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--target", default=None)
        p.add_argument("--split", choices=("train", "valid", "test"),
                       default="test")
        if name == "evaluate":
            p.add_argument("--corr-standard", action="store_true",
                           help="conventional correlation instead of the "
                                "published form")
        _finalize(p, func)
    return parser


def _finalize(sub: argparse.ArgumentParser, func):
    """Attach the handler and a snapshot of this subcommand's defaults, used
    to tell apart flag values set on the command line from untouched ones."""
    defaults = {action.dest: action.default for action in sub._actions}
    sub.set_defaults(func=func, defaults_map=defaults)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_config(args, args.defaults_map)
        return args.func(args)
    except DualstageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
