"""Exhaustive architecture search with a top-accuracy / least-complexity rule.

Every candidate in a small discrete grid is scored by three-fold
cross-validated reconstruction MSE; the M most accurate candidates are
kept and the least complex of those wins.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .autoencoder import ArchSpec, TrainConfig, forward, train
from .curves import ResponseCurve

DEFAULT_H1 = (10, 20, 50, 100, 200, 500)
DEFAULT_H2 = (0, 10, 20, 50, 100, 200)
DEFAULT_H3 = (0, 10, 20, 50, 100)


@dataclass(frozen=True)
class SearchSpace:
    """Hidden-width options per layer; 0 means the layer is absent (h2=0 forces h3=0)."""

    h1_options: tuple[int, ...] = DEFAULT_H1
    h2_options: tuple[int, ...] = DEFAULT_H2
    h3_options: tuple[int, ...] = DEFAULT_H3
    input_size: int = 1024
    latent_dim: int = 1
    dropout_keep: float = 0.9

    def __post_init__(self):
        for name in ("h1_options", "h2_options", "h3_options"):
            opts = tuple(int(v) for v in getattr(self, name))
            if not opts:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, opts)
        if any(h <= 0 for h in self.h1_options):
            raise ValueError("first hidden layer cannot be absent")


@dataclass(frozen=True)
class CandidateResult:
    arch: ArchSpec
    accuracy: float  # cross-validated reconstruction MSE; lower is better
    complexity: int

    def key(self) -> tuple:
        # lexicographic arch order used for deterministic tie-breaks
        return self.arch.encoder_hidden


@dataclass
class NasResult:
    selected: ArchSpec
    table: list[CandidateResult]
    top_m: list[CandidateResult]


def enumerate_space(space: SearchSpace) -> list[ArchSpec]:
    """All valid candidates, lexicographic in (h1, h2, h3)."""
    archs = []
    for h1 in space.h1_options:
        for h2 in space.h2_options:
            h3_choices = space.h3_options if h2 > 0 else (0,)
            for h3 in h3_choices:
                if h2 == 0 and h3 > 0:
                    continue
                hidden = tuple(h for h in (h1, h2, h3) if h > 0)
                archs.append(
                    ArchSpec(
                        encoder_hidden=hidden,
                        input_size=space.input_size,
                        latent_dim=space.latent_dim,
                        dropout_keep=space.dropout_keep,
                    )
                )
    return archs


def complexity(arch: ArchSpec) -> int:
    """Weight count of one half plus latent terms.

    (sum over hidden layers of C_{l-1} C_l + C_l) + C_L C_z + C_z with
    C_0 the input width.
    """
    sizes = (arch.input_size, *arch.encoder_hidden)
    total = 0
    for c_prev, c_cur in zip(sizes[:-1], sizes[1:]):
        total += c_prev * c_cur + c_cur
    total += arch.encoder_hidden[-1] * arch.latent_dim + arch.latent_dim
    return total


def fold_indices(count: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seed-shuffled split into folds of as-equal-as-possible size."""
    if count < folds:
        raise ValueError(f"{count} curves cannot fill {folds} folds")
    perm = np.random.default_rng(seed).permutation(count)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cv_accuracy(arch: ArchSpec, curves, config: TrainConfig, folds: int = 3,
                split_seed: int | None = None) -> float:
    """Mean held-out reconstruction MSE over a k-fold split.

    The MSE is computed on the raw eval-mode reconstruction (the training
    loss quantity), not the endpoint-normalized decode output. The fold
    assignment is shuffled with split_seed (defaults to the config seed),
    so a search can hold the folds fixed while varying training seeds.
    """
    splits = fold_indices(len(curves), folds, config.seed if split_seed is None else split_seed)
    scores = []
    for k, held in enumerate(splits):
        held_set = set(held.tolist())
        train_curves = [c for i, c in enumerate(curves) if i not in held_set]
        weights, _ = train(train_curves, arch, replace(config, seed=config.seed + k))
        x_val = np.stack([curves[i].samples for i in held])
        recon = forward(weights, x_val, mode="eval").recon
        scores.append(float(np.mean((recon - x_val) ** 2)))
    return float(np.mean(scores))


def evaluate_candidate(arch: ArchSpec, curves, config: TrainConfig, folds: int = 3,
                       split_seed: int | None = None) -> CandidateResult:
    try:
        accuracy = cv_accuracy(arch, curves, config, folds=folds, split_seed=split_seed)
    except Exception as exc:
        raise RuntimeError(f"candidate {arch.encoder_hidden} failed: {exc}") from exc
    return CandidateResult(arch=arch, accuracy=accuracy, complexity=complexity(arch))


def select_from_results(results, m: int) -> tuple[CandidateResult, list[CandidateResult]]:
    """Top-M by accuracy, then the least complex of those.

    Accuracy is an error (lower is better). Ties on complexity fall back to
    better accuracy, then lexicographic architecture order.
    """
    if not 1 <= m <= len(results):
        raise ValueError(f"M={m} outside 1..{len(results)}")
    if any(not np.isfinite(r.accuracy) for r in results):
        raise ValueError("non-finite accuracy in results")
    by_accuracy = sorted(results, key=lambda r: (r.accuracy, r.complexity, r.key()))
    top = by_accuracy[:m]
    winner = min(top, key=lambda r: (r.complexity, r.accuracy, r.key()))
    return winner, top


def _evaluate_indexed(args):
    index, arch, curves, config, folds = args
    result = evaluate_candidate(
        arch, curves, replace(config, seed=config.seed + index), folds,
        split_seed=config.seed,
    )
    return index, result


def naive_nas(space: SearchSpace, m: int, curves, config: TrainConfig,
              folds: int = 3, workers: int = 1) -> NasResult:
    """Grid-evaluate every candidate and apply the top-M/least-complex rule.

    Fold assignment uses the global config seed; each candidate trains with
    seed = config.seed + candidate index, so the outcome is identical for
    serial and parallel execution.
    """
    candidates = enumerate_space(space)
    if not 1 <= m <= len(candidates):
        raise ValueError(f"M={m} outside 1..{len(candidates)}")
    jobs = [(i, arch, curves, config, folds) for i, arch in enumerate(candidates)]
    results: list[CandidateResult | None] = [None] * len(candidates)
    if workers <= 1:
        for job in jobs:
            index, result = _evaluate_indexed(job)
            results[index] = result
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for index, result in pool.map(_evaluate_indexed, jobs, chunksize=1):
                results[index] = result
    table = list(results)
    winner, top = select_from_results(table, m)
    return NasResult(selected=winner.arch, table=table, top_m=top)


def report_rows(result: NasResult) -> list[dict]:
    """Flat report rows, ranked by accuracy (rank 1 = most accurate)."""
    order = sorted(result.table, key=lambda r: (r.accuracy, r.complexity, r.key()))
    rank_of = {id(r): i + 1 for i, r in enumerate(order)}
    rows = []
    for r in result.table:
        hidden = r.arch.encoder_hidden
        padded = hidden + (0,) * (3 - len(hidden))
        rows.append(
            {
                "arch_h1": padded[0],
                "arch_h2": padded[1],
                "arch_h3": padded[2],
                "latent_dim": r.arch.latent_dim,
                "accuracy_mse": r.accuracy,
                "complexity": r.complexity,
                "rank": rank_of[id(r)],
            }
        )
    return rows
