"""Command-line interface: train, nas, fit, calibrate, bench.

Configuration precedence is flags > --config JSON file > defaults. Every
command honors --seed (env CRF_ATLAS_SEED as fallback) and produces
byte-identical outputs for identical invocations when --no-timestamp is
set. Exit codes: 0 success, 2 usage error, 3 runtime/numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, autoencoder as ae, bench, calibration as cal, datasets, nas
from .classic import build_emor_basis
from .curves import invert, parse_dorf, resample

USAGE_EXIT = 2
RUNTIME_EXIT = 3
DEFAULT_SEED = 0


class CliError(RuntimeError):
    """Runtime failure reported with exit code 3."""


class UsageError(ValueError):
    """Bad flag or flag value, reported with exit code 2."""


def _seed_default() -> int:
    env = os.environ.get("CRF_ATLAS_SEED")
    return int(env) if env else DEFAULT_SEED


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return doc


def _resolve(args, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _load_curves(path: str | None):
    curves = datasets.load_curves(path)
    if len(curves) < 2:
        raise CliError("curve database holds fewer than 2 curves")
    return curves


def _parse_arch(text: str) -> tuple[int, ...]:
    try:
        hidden = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise UsageError(f"bad architecture spec {text!r} (expected h1[,h2[,h3]])") from None
    if not 1 <= len(hidden) <= 3:
        raise UsageError("architecture needs 1..3 hidden widths")
    return hidden


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in str(text).split(",") if tok.strip())


def _parse_seed_list(text: str) -> tuple[int, ...]:
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return _parse_int_list(text)


def _model_metadata(config: ae.TrainConfig, arch: ae.ArchSpec, no_timestamp: bool) -> dict:
    meta = {
        "seed": config.seed,
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "constraint": config.constraint,
        "lambda_smooth": config.lambda_smooth,
        "lambda_latent": config.lambda_latent,
        "dropout_keep": arch.dropout_keep,
        "tool_version": __version__,
    }
    if not no_timestamp:
        import datetime

        meta["created"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return meta


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args, config: dict) -> int:
    curves = _load_curves(_resolve(args, config, "dorf", None))
    hidden = _parse_arch(_resolve(args, config, "arch", "50"))
    input_size = curves[0].n
    arch = ae.ArchSpec(
        encoder_hidden=hidden,
        input_size=input_size,
        latent_dim=int(_resolve(args, config, "latent_dim", 1)),
        dropout_keep=float(_resolve(args, config, "dropout_keep", 0.9)),
    )
    train_config = ae.TrainConfig(
        epochs=int(_resolve(args, config, "epochs", 4000)),
        learning_rate=float(_resolve(args, config, "lr", 1e-3)),
        seed=int(_resolve(args, config, "seed", _seed_default())),
        lambda_smooth=float(_resolve(args, config, "lambda_smooth", 1e-3)),
        lambda_latent=float(_resolve(args, config, "lambda_latent", 1e-2)),
        constraint=_resolve(args, config, "constraint", "ldl"),
    )
    try:
        weights, report = ae.train(curves, arch, train_config)
    except ae.TrainingDiverged as exc:
        raise CliError(str(exc)) from exc
    out = Path(_resolve(args, config, "out", "slr_model.json"))
    ae.save_model(weights, out, metadata=_model_metadata(train_config, arch, args.no_timestamp))
    report_path = Path(_resolve(args, config, "report", str(out.with_suffix(".report.json"))))
    loss_columns = sorted(report.loss_history[0].keys()) if report.loss_history else []
    doc = {
        "constraint": report.constraint,
        "seed": report.seed,
        "epochs": len(report.loss_history),
        "loss_columns": loss_columns,
        "loss_history": [[h[c] for c in loss_columns] for h in report.loss_history],
        "final_rmse": [float(v) for v in report.final_rmse],
        "mean_rmse": report.mean_rmse,
    }
    report_path.write_text(json.dumps(doc, indent=2) + "\n")
    print(f"trained {hidden} for {train_config.epochs} epochs: "
          f"mean reconstruction RMSE {report.mean_rmse:.3e}")
    print(f"model -> {out}\nreport -> {report_path}")
    return 0


def _space_from_tokens(tokens, base: nas.SearchSpace) -> nas.SearchSpace:
    options = {"h1": base.h1_options, "h2": base.h2_options, "h3": base.h3_options}
    for token in tokens or []:
        if "=" not in token:
            raise UsageError(f"bad space token {token!r} (expected h1=10,20)")
        key, values = token.split("=", 1)
        if key not in options:
            raise UsageError(f"unknown space axis {key!r}")
        options[key] = _parse_int_list(values)
    return nas.SearchSpace(
        h1_options=options["h1"],
        h2_options=options["h2"],
        h3_options=options["h3"],
        input_size=base.input_size,
        latent_dim=base.latent_dim,
        dropout_keep=base.dropout_keep,
    )


SMOKE_SPACE = ("h1=10,20,50", "h2=0,10", "h3=0")
SMOKE_INPUT = 64
SMOKE_EPOCHS = 200


def cmd_nas(args, config: dict) -> int:
    curves = _load_curves(_resolve(args, config, "dorf", None))
    seed = int(_resolve(args, config, "seed", _seed_default()))
    workers = int(_resolve(args, config, "workers", 1))
    top_m = int(_resolve(args, config, "top_m", 10))
    folds = int(_resolve(args, config, "folds", 3))
    dropout_keep = float(_resolve(args, config, "dropout_keep", 0.9))
    cv_epochs = int(_resolve(args, config, "cv_epochs", 400))
    lr = float(_resolve(args, config, "lr", 1e-3))
    space_tokens = args.space
    input_size = curves[0].n
    if args.smoke:
        space_tokens = space_tokens or list(SMOKE_SPACE)
        input_size = SMOKE_INPUT
        cv_epochs = min(cv_epochs, SMOKE_EPOCHS)
        curves = [resample(c, SMOKE_INPUT) for c in curves]
    base = nas.SearchSpace(input_size=input_size, dropout_keep=dropout_keep)
    space = _space_from_tokens(space_tokens, base)
    train_config = ae.TrainConfig(
        epochs=cv_epochs, learning_rate=lr, seed=seed, constraint="none",
    )
    result = nas.naive_nas(space, top_m, curves, train_config, folds=folds, workers=workers)
    rows = nas.report_rows(result)
    report_path = Path(_resolve(args, config, "out_report", "nas_report.csv"))
    bench.emit_report(rows, "csv", report_path,
                      columns=["arch_h1", "arch_h2", "arch_h3", "latent_dim",
                               "accuracy_mse", "complexity", "rank"])
    selected_path = Path(_resolve(args, config, "out_selected", "nas_selected.json"))
    selected_doc = {
        "encoder_hidden": list(result.selected.encoder_hidden),
        "input_size": result.selected.input_size,
        "latent_dim": result.selected.latent_dim,
        "candidates": len(result.table),
        "top_m": top_m,
        "seed": seed,
    }
    selected_path.write_text(json.dumps(selected_doc, indent=2) + "\n")
    print(f"evaluated {len(result.table)} candidates; "
          f"selected {result.selected.encoder_hidden}")
    print(f"report -> {report_path}\nselected -> {selected_path}")
    return 0


def _parse_model_tags(text: str) -> dict[str, list[int]]:
    families = {}
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if ":" in token:
            name, dims = token.split(":", 1)
            if ".." in dims:
                lo, hi = dims.split("..", 1)
                dim_list = list(range(int(lo), int(hi) + 1))
            else:
                dim_list = [int(dims)]
        else:
            name, dim_list = token, [1]
        name = {"poly": "polynomial"}.get(name, name)
        if name not in ("gamma", "polynomial", "ggcm", "emor", "slr"):
            raise UsageError(f"unknown model tag {token!r}")
        families.setdefault(name, []).extend(dim_list)
    if not families:
        raise UsageError("no model tags given")
    return families


def cmd_fit(args, config: dict) -> int:
    curves = _load_curves(_resolve(args, config, "dorf", None))
    families = _parse_model_tags(_resolve(args, config, "models", "gamma"))
    weights = None
    if "slr" in families:
        model_path = _resolve(args, config, "model", None)
        if model_path is None:
            bundled = datasets.asset_path(datasets.BUNDLED_MODEL_LDL)
            if not bundled.exists():
                raise UsageError("slr fitting requires --model (no bundled weights found)")
            model_path = bundled
        weights, _ = ae.load_model(model_path)
        if weights.arch.input_size != curves[0].n:
            raise CliError(
                f"model input size {weights.arch.input_size} != curve length {curves[0].n}"
            )
    rows = bench.run_fitting_bench(curves, families, slr_weights=weights)
    fmt = _resolve(args, config, "format", "csv")
    out = Path(_resolve(args, config, "out", f"fitting_report.{fmt}"))
    bench.emit_report(rows, fmt, out,
                      columns=["family", "n_params", "mean_rmse", "curves", "failures", "time_s"],
                      strip_times=args.no_timestamp)
    for row in rows:
        print(f"{row['family']}:{row['n_params']} mean RMSE {row['mean_rmse']:.3e} "
              f"({row['curves']} curves, {row['failures']} failures)")
    print(f"report -> {out}")
    return 0


def cmd_calibrate(args, config: dict) -> int:
    obs_path = _resolve(args, config, "observations", None)
    if obs_path is None:
        raise UsageError("--observations is required")
    text = Path(obs_path).read_text()
    try:
        obs_sets = cal.parse_observations_csv(text)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    family_tag = _resolve(args, config, "family", "slr")
    try:
        family, variant, default_n = bench.parse_method(family_tag)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    n_params = int(_resolve(args, config, "n_params", default_n))
    weights = None
    basis = None
    if family == "slr":
        model_path = _resolve(args, config, "model", None)
        if model_path is None:
            name = {"ldl": datasets.BUNDLED_MODEL_LDL, "none": datasets.BUNDLED_MODEL_NONE}.get(
                variant or "ldl", datasets.BUNDLED_MODEL_LDL)
            bundled = datasets.asset_path(name)
            if not bundled.exists():
                raise UsageError("slr calibration requires --model (no bundled weights found)")
            model_path = bundled
        weights, _ = ae.load_model(model_path)
    if family == "emor":
        basis = build_emor_basis(_load_curves(_resolve(args, config, "dorf", None)), K=n_params)
    truth = None
    truth_path = _resolve(args, config, "truth_dorf", None)
    if truth_path is not None:
        truth_curves = parse_dorf(Path(truth_path).read_text())
        truth = invert(truth_curves[int(_resolve(args, config, "truth_index", 0))])
    results = []
    for obs in obs_sets:
        result = cal.calibrate(obs, family, weights=weights, basis=basis, n_params=n_params)
        doc = {
            "camera_id": obs.camera_id,
            "channel": obs.channel,
            "family": family_tag,
            "parameters": [float(v) for v in result.parameters],
            "objective": result.objective_value,
            "evaluations": result.evaluations,
            "wall_time_ms": 0.0 if args.no_timestamp else result.wall_time_s * 1e3,
            "ill_posed": result.ill_posed,
            "inverse_curve": [float(v) for v in result.inverse_curve.samples],
        }
        if truth is not None:
            doc["rmse_vs_truth"] = cal.rmse_vs_truth(result, truth)
        results.append(doc)
        print(f"{obs.camera_id}/{obs.channel}: objective {result.objective_value:.3e} "
              f"({result.evaluations} evaluations)"
              + (" [ill-posed]" if result.ill_posed else ""))
    out = Path(_resolve(args, config, "out", "calibration_result.json"))
    out.write_text(json.dumps(results, indent=2) + "\n")
    plot_path = _resolve(args, config, "plot", None)
    if plot_path:
        named = []
        if truth is not None:
            named.append(("truth", truth))
        named.extend(
            (f"{doc['camera_id']} calibrated", np.array(doc["inverse_curve"])) for doc in results
        )
        bench.emit_plot_data(named, plot_path, title="calibrated inverse response")
        print(f"plot -> {plot_path}")
    print(f"result -> {out}")
    return 0


def cmd_bench(args, config: dict) -> int:
    curves = _load_curves(_resolve(args, config, "dorf", None))
    n_cameras = int(_resolve(args, config, "cameras", 14))
    _, holdout = datasets.split_train_holdout(curves)
    if n_cameras <= len(holdout):
        suite_curves = holdout[:n_cameras]
    else:
        suite_curves = holdout + curves[: n_cameras - len(holdout)]
    suite = [(c.id, c) for c in suite_curves]
    methods = [m.strip() for m in _resolve(args, config, "methods", "slr-ldl,slr-none,poly:3").split(",")]
    slr_models = {}
    for variant, flag, asset in (
        ("ldl", "model_ldl", datasets.BUNDLED_MODEL_LDL),
        ("none", "model_none", datasets.BUNDLED_MODEL_NONE),
        ("auc", "model_auc", None),
    ):
        if any(m == f"slr-{variant}" or (variant == "ldl" and m == "slr") for m in methods):
            path = _resolve(args, config, flag, None)
            if path is None:
                if asset is None or not datasets.asset_path(asset).exists():
                    raise UsageError(f"method slr-{variant} requires --{flag.replace('_', '-')}")
                path = datasets.asset_path(asset)
            slr_models[variant], _ = ae.load_model(path)
    basis = None
    if any(m.startswith("emor") for m in methods):
        basis = build_emor_basis(curves, K=max(bench.parse_method(m)[2]
                                               for m in methods if m.startswith("emor")))
    bench_config = bench.CalibrationBenchConfig(
        noccps=_parse_int_list(_resolve(args, config, "noccp", "3,6,12,24")),
        exposures=tuple(float(t) for t in str(_resolve(args, config, "exposures", "0.25,0.5,1,2")).split(",")),
        noise_sigma=float(_resolve(args, config, "noise", 0.01)),
        seeds=_parse_seed_list(_resolve(args, config, "seeds", "0")),
    )
    tables = bench.run_calibration_bench(suite, methods, bench_config,
                                         slr_models=slr_models, basis=basis)
    out = Path(_resolve(args, config, "out", "calibration_bench.csv"))
    bench.emit_report(tables["methods"], "csv", out,
                      columns=["method", "mean", "median", "sd", "max", "p95", "stability",
                               "mean_evaluations", "cameras", "failures", "time_s"],
                      strip_times=args.no_timestamp)
    details_path = _resolve(args, config, "details", None)
    if details_path:
        bench.emit_report(tables["details"], "csv", details_path,
                          columns=["method", "camera", "seed", "noccp", "rmse",
                                   "evaluations", "ill_posed"])
    for row in tables["methods"]:
        print(f"{row['method']}: mean {row['mean']:.3f} median {row['median']:.3f} "
              f"stability {row['stability']:.3f} evals {row['mean_evaluations']:.0f}")
    print(f"report -> {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crf-atlas",
        description="Camera response curve modelling, architecture search, and calibration.",
    )
    parser.add_argument("--version", action="version", version=f"crf-atlas {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="global seed (env CRF_ATLAS_SEED)")
        p.add_argument("--config", default=None, help="JSON config file (flags win)")
        p.add_argument("--no-timestamp", action="store_true",
                       help="omit timestamps/wall times for byte-stable outputs")
        p.add_argument("--dorf", default=None, help="curve database file (default: bundled)")

    p_train = sub.add_parser("train", help="train the latent autoencoder")
    common(p_train)
    p_train.add_argument("--arch", default=None, help="hidden widths h1[,h2[,h3]]")
    p_train.add_argument("--latent-dim", dest="latent_dim", type=int, default=None)
    p_train.add_argument("--constraint", choices=("ldl", "auc", "none"), default=None)
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--lr", type=float, default=None)
    p_train.add_argument("--dropout-keep", dest="dropout_keep", type=float, default=None)
    p_train.add_argument("--lambda-smooth", dest="lambda_smooth", type=float, default=None)
    p_train.add_argument("--lambda-latent", dest="lambda_latent", type=float, default=None)
    p_train.add_argument("--out", default=None, help="model JSON path")
    p_train.add_argument("--report", default=None, help="train report JSON path")
    p_train.set_defaults(func=cmd_train)

    p_nas = sub.add_parser("nas", help="search autoencoder architectures")
    common(p_nas)
    p_nas.add_argument("--top-m", dest="top_m", type=int, default=None)
    p_nas.add_argument("--folds", type=int, default=None)
    p_nas.add_argument("--workers", type=int, default=None)
    p_nas.add_argument("--cv-epochs", dest="cv_epochs", type=int, default=None)
    p_nas.add_argument("--lr", type=float, default=None)
    p_nas.add_argument("--dropout-keep", dest="dropout_keep", type=float, default=None)
    p_nas.add_argument("--space", nargs="+", default=None,
                       help="axis overrides, e.g. h1=10,20 h2=0 h3=0")
    p_nas.add_argument("--smoke", action="store_true",
                       help="reduced space/epochs/input for CI")
    p_nas.add_argument("--out-report", dest="out_report", default=None)
    p_nas.add_argument("--out-selected", dest="out_selected", default=None)
    p_nas.set_defaults(func=cmd_nas)

    p_fit = sub.add_parser("fit", help="curve-fitting benchmark")
    common(p_fit)
    p_fit.add_argument("--models", default=None,
                       help="e.g. gamma,poly:1..4,ggcm:1..4,emor:1..4,slr")
    p_fit.add_argument("--model", default=None, help="slr weights JSON")
    p_fit.add_argument("--format", choices=("csv", "json"), default=None)
    p_fit.add_argument("--out", default=None)
    p_fit.set_defaults(func=cmd_fit)

    p_cal = sub.add_parser("calibrate", help="inverse-curve calibration from observations")
    common(p_cal)
    p_cal.add_argument("--observations", default=None, help="observation CSV path")
    p_cal.add_argument("--family", default=None,
                       help="slr | slr-none | gamma | poly | ggcm | emor")
    p_cal.add_argument("--n-params", dest="n_params", type=int, default=None)
    p_cal.add_argument("--model", default=None, help="slr weights JSON")
    p_cal.add_argument("--truth-dorf", dest="truth_dorf", default=None)
    p_cal.add_argument("--truth-index", dest="truth_index", type=int, default=None)
    p_cal.add_argument("--plot", default=None, help="SVG output path")
    p_cal.add_argument("--out", default=None)
    p_cal.set_defaults(func=cmd_calibrate)

    p_bench = sub.add_parser("bench", help="calibration benchmark on a synthetic camera suite")
    common(p_bench)
    p_bench.add_argument("--cameras", type=int, default=None)
    p_bench.add_argument("--methods", default=None)
    p_bench.add_argument("--noccp", default=None, help="comma list, default 3,6,12,24")
    p_bench.add_argument("--noise", type=float, default=None)
    p_bench.add_argument("--seeds", default=None, help="comma list or lo..hi range")
    p_bench.add_argument("--exposures", default=None)
    p_bench.add_argument("--model-ldl", dest="model_ldl", default=None)
    p_bench.add_argument("--model-none", dest="model_none", default=None)
    p_bench.add_argument("--model-auc", dest="model_auc", default=None)
    p_bench.add_argument("--out", default=None)
    p_bench.add_argument("--details", default=None, help="per-calibration CSV path")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (CliError, OSError, ValueError, ae.ModelFormatError, ae.TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
