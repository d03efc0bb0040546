#!/usr/bin/env python3
"""Regenerate the package data assets.

Stages:
  dorf    -- synthesize the bundled curve database (deterministic)
  nas     -- full-grid architecture search on the training split
  models  -- staged-rate training of the shipped ldl/none models
  all     -- everything, in order

Usage: python tools/build_assets.py [stage] [--workers N]
"""

from __future__ import annotations

import argparse
import json
import sys
import time

sys.path.insert(0, "src")

import numpy as np

from crf_atlas import autoencoder as ae
from crf_atlas import bench, datasets, nas
from crf_atlas.curves import write_dorf

NAS_SEED = 31337
NAS_CV_EPOCHS = 400
NAS_CV_LR = 3e-3
NAS_TOP_M = 10


def stage_dorf():
    curves = datasets.generate_synthetic_curves()
    path = datasets.asset_path(datasets.BUNDLED_DORF)
    path.write_text(write_dorf(curves))
    print(f"dorf: wrote {len(curves)} curves -> {path}")


def stage_nas(workers: int):
    curves = datasets.load_bundled_dorf()
    train_curves, _ = datasets.split_train_holdout(curves)
    space = nas.SearchSpace(input_size=train_curves[0].n,
                            dropout_keep=datasets.RELEASE_DROPOUT_KEEP)
    config = ae.TrainConfig(epochs=NAS_CV_EPOCHS, learning_rate=NAS_CV_LR,
                            seed=NAS_SEED, constraint="none")
    started = time.time()
    result = nas.naive_nas(space, NAS_TOP_M, train_curves, config, folds=3, workers=workers)
    elapsed = time.time() - started
    rows = nas.report_rows(result)
    report_path = datasets.asset_path(datasets.BUNDLED_NAS_REPORT)
    bench.emit_report(rows, "csv", report_path,
                      columns=["arch_h1", "arch_h2", "arch_h3", "latent_dim",
                               "accuracy_mse", "complexity", "rank"])
    selected_path = datasets.asset_path(datasets.BUNDLED_NAS_SELECTED)
    selected_path.write_text(json.dumps({
        "encoder_hidden": list(result.selected.encoder_hidden),
        "input_size": result.selected.input_size,
        "latent_dim": result.selected.latent_dim,
        "candidates": len(result.table),
        "top_m": NAS_TOP_M,
        "cv_epochs": NAS_CV_EPOCHS,
        "cv_learning_rate": NAS_CV_LR,
        "seed": NAS_SEED,
    }, indent=2) + "\n")
    print(f"nas: {len(result.table)} candidates in {elapsed / 60:.1f} min; "
          f"selected {result.selected.encoder_hidden} -> {selected_path}")
    for cand in result.top_m:
        print(f"  top: hidden={cand.arch.encoder_hidden} "
              f"mse={cand.accuracy:.3e} complexity={cand.complexity}")


def stage_models():
    curves = datasets.load_bundled_dorf()
    train_curves, _ = datasets.split_train_holdout(curves)
    selected = json.loads(datasets.asset_path(datasets.BUNDLED_NAS_SELECTED).read_text())
    hidden = tuple(selected["encoder_hidden"])
    for constraint, asset in (("ldl", datasets.BUNDLED_MODEL_LDL),
                              ("none", datasets.BUNDLED_MODEL_NONE)):
        started = time.time()
        weights, reports, metadata = datasets.train_release_model(train_curves, constraint, hidden)
        elapsed = time.time() - started
        all_rmse = ae.reconstruction_rmse(weights, curves)
        train_rmse = float(np.mean(reports[-1].final_rmse))
        metadata.update({
            "nas_selected": list(hidden),
            "train_mean_rmse": train_rmse,
            "full_set_mean_rmse": float(np.mean(all_rmse)),
        })
        path = datasets.asset_path(asset)
        ae.save_model(weights, path, metadata=metadata)
        print(f"models[{constraint}]: {elapsed / 60:.1f} min, "
              f"train RMSE {train_rmse:.3e}, full-set RMSE {np.mean(all_rmse):.3e} -> {path}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("stage", choices=("dorf", "nas", "models", "all"), nargs="?",
                        default="all")
    parser.add_argument("--workers", type=int, default=2)
    args = parser.parse_args()
    if args.stage in ("dorf", "all"):
        stage_dorf()
    if args.stage in ("nas", "all"):
        stage_nas(args.workers)
    if args.stage in ("models", "all"):
        stage_models()


if __name__ == "__main__":
    main()
