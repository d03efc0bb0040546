"""Single-latent fully connected autoencoder for response curves.

Mirror-symmetric encoder/decoder with tanh hidden layers, linear latent and
output layers, per-unit dropout on hidden outputs during training (weights
scaled by the keep probability at inference), trained full-batch with
adaptive-moment gradient descent on a reconstruction + smoothness +
optional latent-constraint loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .curves import ResponseCurve, auc_label, normalize

SIGMA_FLOOR = 1e-6
CONSTRAINTS = ("ldl", "auc", "none")


class NumericError(ArithmeticError):
    """Non-finite value produced during a forward/backward pass."""


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, message="training loss became non-finite"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


class ModelFormatError(ValueError):
    """Model file is unreadable or inconsistent with its declared layout."""


@dataclass(frozen=True)
class ArchSpec:
    """Autoencoder topology: encoder hidden widths, latent size, dropout keep."""

    encoder_hidden: tuple[int, ...]
    input_size: int = 1024
    latent_dim: int = 1
    dropout_keep: float = 0.9
    activation: str = "tanh"

    def __post_init__(self):
        hidden = tuple(int(h) for h in self.encoder_hidden)
        object.__setattr__(self, "encoder_hidden", hidden)
        if not 1 <= len(hidden) <= 3:
            raise ValueError(f"need 1..3 hidden layers, got {len(hidden)}")
        if any(h <= 0 for h in hidden) or self.input_size <= 0 or self.latent_dim <= 0:
            raise ValueError("layer sizes must be positive")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError(f"dropout keep probability {self.dropout_keep} outside (0, 1]")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def decoder_hidden(self) -> tuple[int, ...]:
        return tuple(reversed(self.encoder_hidden))

    @property
    def encoder_sizes(self) -> tuple[int, ...]:
        return (self.input_size, *self.encoder_hidden, self.latent_dim)

    @property
    def decoder_sizes(self) -> tuple[int, ...]:
        return (self.latent_dim, *self.decoder_hidden, self.input_size)


@dataclass
class MLPWeights:
    """Per-layer weight matrices (in x out) and bias vectors for both halves."""

    arch: ArchSpec
    encoder: list[tuple[np.ndarray, np.ndarray]]
    decoder: list[tuple[np.ndarray, np.ndarray]]

    def validate(self):
        for name, layers, sizes in (
            ("encoder", self.encoder, self.arch.encoder_sizes),
            ("decoder", self.decoder, self.arch.decoder_sizes),
        ):
            if len(layers) != len(sizes) - 1:
                raise ModelFormatError(f"{name}: expected {len(sizes) - 1} layers")
            for i, (w, b) in enumerate(layers):
                if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                    raise ModelFormatError(
                        f"{name} layer {i}: shape {w.shape}/{b.shape} does not match "
                        f"architecture ({sizes[i]}, {sizes[i + 1]})"
                    )
                if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                    raise ModelFormatError(f"{name} layer {i}: non-finite parameter")
        return self

    def copy(self) -> "MLPWeights":
        return MLPWeights(
            arch=self.arch,
            encoder=[(w.copy(), b.copy()) for w, b in self.encoder],
            decoder=[(w.copy(), b.copy()) for w, b in self.decoder],
        )

    def parameters(self):
        """Flat list of parameter arrays, encoder first."""
        out = []
        for w, b in self.encoder:
            out.extend((w, b))
        for w, b in self.decoder:
            out.extend((w, b))
        return out


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 4000
    learning_rate: float = 1e-3
    seed: int = 0
    lambda_smooth: float = 1e-3
    lambda_latent: float = 1e-2
    constraint: str = "ldl"
    auc_scale: float | None = None  # default 1/input_size, resolved at use
    normalized_latent_variance: bool = False
    train_on_inverse: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.learning_rate <= 0:
            raise ValueError("epochs and learning rate must be positive")
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"constraint must be one of {CONSTRAINTS}")

    def resolved_auc_scale(self, input_size: int) -> float:
        return self.auc_scale if self.auc_scale is not None else 1.0 / input_size


@dataclass(frozen=True)
class LatentStats:
    """Normal MLE of a latent sample batch, sigma^2 = sum (z_i - mu)^2."""

    mu: float
    sigma: float

    @classmethod
    def from_samples(cls, z) -> "LatentStats":
        z = np.asarray(z, dtype=np.float64).ravel()
        if z.size < 1:
            raise ValueError("need at least one latent sample")
        mu = float(np.mean(z))
        sigma = float(np.sqrt(np.sum((z - mu) ** 2)))
        return cls(mu=mu, sigma=max(sigma, SIGMA_FLOOR))


def init_weights(arch: ArchSpec, seed: int) -> MLPWeights:
    """Uniform initialization in +/- sqrt(6 / (fan_in + fan_out))."""
    rng = np.random.default_rng(seed)

    def make(sizes):
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = np.zeros(fan_out)
            layers.append((w, b))
        return layers

    return MLPWeights(arch=arch, encoder=make(arch.encoder_sizes), decoder=make(arch.decoder_sizes))


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardPass:
    """All layer activations for one pass; caches what backprop needs."""

    mode: str
    x: np.ndarray
    z: np.ndarray
    recon: np.ndarray
    # per hidden layer: (input, pre-activation, activation, mask or None)
    encoder_cache: list[tuple]
    decoder_cache: list[tuple]


def _check_finite(array, half, layer_index):
    if not np.all(np.isfinite(array)):
        raise NumericError(f"non-finite activation in {half} layer {layer_index}")


def _half_forward(layers, arch, x, half, mode, rng):
    """Run one half (encoder or decoder); final layer is linear, hiddens tanh."""
    p = arch.dropout_keep
    h = x
    cache = []
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        # at inference, layers that consume dropped-out activations use p-scaled weights
        if mode == "eval" and i > 0:
            v = h @ (p * w) + b
        else:
            v = h @ w + b
        _check_finite(v, half, i)
        if i == last:
            cache.append((h, v, None, None))
            h = v
        else:
            u = np.tanh(v)
            if mode == "train" and p < 1.0:
                mask = (rng.random(u.shape) < p).astype(np.float64)
                out = u * mask
            else:
                mask = None
                out = u
            cache.append((h, v, u, mask))
            h = out
    return h, cache


def forward(weights: MLPWeights, x: np.ndarray, mode: str = "eval",
            rng: np.random.Generator | None = None) -> ForwardPass:
    """Full autoencoder pass on a (batch, input_size) matrix.

    Train mode masks each hidden layer's activation with Bernoulli(keep)
    draws from rng before the next affine map; eval mode instead scales the
    consuming layers' weights by the keep probability.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "train" and rng is None:
        raise ValueError("train mode requires an rng for the dropout draws")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != weights.arch.input_size:
        raise ValueError(f"input width {x.shape[1]} != architecture input {weights.arch.input_size}")
    z, enc_cache = _half_forward(weights.encoder, weights.arch, x, "encoder", mode, rng)
    recon, dec_cache = _half_forward(weights.decoder, weights.arch, z, "decoder", mode, rng)
    return ForwardPass(mode=mode, x=x, z=z, recon=recon,
                       encoder_cache=enc_cache, decoder_cache=dec_cache)


def _half_backward(layers, cache, grad_out, mode, p):
    """Backprop one half; returns (per-layer grads, gradient w.r.t. half input).

    In eval mode the forward used p-scaled weights on layers past the first,
    so both the parameter gradient and the pass-through gradient carry p.
    """
    grads = [None] * len(layers)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        h_in, _, u, mask = cache[i]
        if u is None:  # final linear layer
            d_v = g
        else:
            d_out = g if mask is None else g * mask
            d_v = d_out * (1.0 - u * u)
        scale = p if (mode == "eval" and i > 0) else 1.0
        grads[i] = (scale * (h_in.T @ d_v), d_v.sum(axis=0))
        g = d_v @ (scale * w).T if scale != 1.0 else d_v @ w.T
    return grads, g


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def loss_recon(x, x_rec) -> float:
    """Mean squared difference over sample positions (and over the batch)."""
    x = np.asarray(x, dtype=np.float64)
    x_rec = np.asarray(x_rec, dtype=np.float64)
    if x.shape != x_rec.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_rec.shape}")
    return float(np.mean((x - x_rec) ** 2))


def _smoothness_batch(recon: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.diff(recon, axis=1), axis=1)


def loss_kl_ldl(z_batch, normalized: bool = False) -> float:
    """KL divergence of the batch-fitted normal from the standard normal.

    The fitted scale uses sigma^2 = sum (z_i - mu)^2 (set normalized=True
    for the 1/M variant); sigma is floored at 1e-6. Closed form:
    0.5 * (mu^2 + sigma^2 - 2 log sigma - 1).
    """
    z = np.asarray(z_batch, dtype=np.float64).ravel()
    if z.size < 2:
        raise ValueError("latent batch must hold at least 2 samples")
    mu = np.mean(z)
    s2 = np.sum((z - mu) ** 2)
    if normalized:
        s2 = s2 / z.size
    sigma = max(np.sqrt(s2), SIGMA_FLOOR)
    return float(0.5 * (mu**2 + sigma**2 - 2.0 * np.log(sigma) - 1.0))


def loss_auc(z_batch, labels) -> float:
    """Mean squared difference between latents and their area-based targets."""
    z = np.asarray(z_batch, dtype=np.float64).ravel()
    t = np.asarray(labels, dtype=np.float64).ravel()
    if z.size != t.size:
        raise ValueError(f"{z.size} latents vs {t.size} labels")
    return float(np.mean((z - t) ** 2))


def auc_targets(curves, scale: float) -> np.ndarray:
    return np.array([auc_label(c) * scale for c in curves])


def _loss_terms(x, fwd: ForwardPass, config: TrainConfig, labels):
    batch = x.shape[0]
    recon = loss_recon(x, fwd.recon)
    smooth_each = _smoothness_batch(fwd.recon)
    smooth = float(np.mean(smooth_each))
    if config.constraint == "ldl":
        constraint = loss_kl_ldl(fwd.z, normalized=config.normalized_latent_variance)
    elif config.constraint == "auc":
        constraint = loss_auc(fwd.z, labels)
    else:
        constraint = 0.0
    total = recon + config.lambda_smooth * smooth + config.lambda_latent * constraint
    return {
        "recon": recon,
        "smooth": smooth,
        "constraint": constraint,
        "total": float(total),
        "_smooth_each": smooth_each,
        "_batch": batch,
    }


def total_loss(weights: MLPWeights, curves_or_x, config: TrainConfig,
               rng: np.random.Generator | None = None, mode: str = "eval") -> dict:
    """Composite loss on a batch; returns the component breakdown.

    Eval mode is deterministic; train mode draws dropout masks from rng.
    """
    x = _as_matrix(curves_or_x)
    labels = None
    if config.constraint == "auc":
        labels = _auc_labels_for(curves_or_x, x, config)
    fwd = forward(weights, x, mode=mode, rng=rng)
    terms = _loss_terms(x, fwd, config, labels)
    return {k: v for k, v in terms.items() if not k.startswith("_")}


def _as_matrix(curves_or_x) -> np.ndarray:
    if isinstance(curves_or_x, np.ndarray):
        return np.atleast_2d(np.asarray(curves_or_x, dtype=np.float64))
    return np.stack([c.samples for c in curves_or_x])


def _auc_labels_for(curves_or_x, x, config: TrainConfig) -> np.ndarray:
    scale = config.resolved_auc_scale(x.shape[1])
    if isinstance(curves_or_x, np.ndarray):
        grid = np.linspace(0.0, 1.0, x.shape[1])
        return np.sum(x - grid, axis=1) * scale
    return auc_targets(curves_or_x, scale)


def _constraint_z_grad(z: np.ndarray, config: TrainConfig, labels) -> np.ndarray:
    """d(constraint)/dz for the batch, before the lambda_latent weight."""
    batch = z.shape[0]
    if config.constraint == "none":
        return np.zeros_like(z)
    if config.constraint == "auc":
        return 2.0 * (z - labels.reshape(z.shape)) / batch
    flat = z.ravel()
    mu = np.mean(flat)
    s2 = np.sum((flat - mu) ** 2)
    if config.normalized_latent_variance:
        s2_eff = s2 / batch
        ds2_dz = 2.0 * (flat - mu) / batch
    else:
        s2_eff = s2
        ds2_dz = 2.0 * (flat - mu)
    g = np.full_like(flat, mu / batch)
    if np.sqrt(s2_eff) >= SIGMA_FLOOR:
        # d/dz of 0.5 * (s2 - log s2): 0.5 * (1 - 1/s2) * ds2
        g = g + 0.5 * (1.0 - 1.0 / s2_eff) * ds2_dz
    return g.reshape(z.shape)


@dataclass
class GradientRecord:
    encoder: list[tuple[np.ndarray, np.ndarray]]
    decoder: list[tuple[np.ndarray, np.ndarray]]
    loss: dict

    def parameters(self):
        out = []
        for w, b in self.encoder:
            out.extend((w, b))
        for w, b in self.decoder:
            out.extend((w, b))
        return out


def gradients(weights: MLPWeights, curves_or_x, config: TrainConfig,
              rng: np.random.Generator | None = None,
              fwd: ForwardPass | None = None) -> GradientRecord:
    """Exact reverse-mode gradient of the composite loss for one batch.

    The dropout masks drawn in the forward pass are reused on the way back;
    pass fwd to reuse an existing pass (its mode decides train vs eval).
    """
    x = _as_matrix(curves_or_x)
    labels = _auc_labels_for(curves_or_x, x, config) if config.constraint == "auc" else None
    if fwd is None:
        mode = "train" if rng is not None else "eval"
        fwd = forward(weights, x, mode=mode, rng=rng)
    terms = _loss_terms(x, fwd, config, labels)
    batch, n = x.shape

    # d total / d recon: reconstruction + smoothness parts
    g_recon = 2.0 * (fwd.recon - x) / (batch * n)
    diffs = np.diff(fwd.recon, axis=1)
    norms = terms["_smooth_each"]
    safe = norms > 0
    unit = np.zeros_like(diffs)
    unit[safe] = diffs[safe] / norms[safe, None]
    g_smooth = np.zeros_like(fwd.recon)
    g_smooth[:, :-1] -= unit
    g_smooth[:, 1:] += unit
    g_out = g_recon + (config.lambda_smooth / batch) * g_smooth

    p = weights.arch.dropout_keep
    dec_grads, g_z = _half_backward(weights.decoder, fwd.decoder_cache, g_out, fwd.mode, p)
    g_z = g_z + config.lambda_latent * _constraint_z_grad(fwd.z, config, labels)
    enc_grads, _ = _half_backward(weights.encoder, fwd.encoder_cache, g_z, fwd.mode, p)

    for layer in enc_grads + dec_grads:
        for part in layer:
            if not np.all(np.isfinite(part)):
                raise NumericError("non-finite gradient")
    loss = {k: v for k, v in terms.items() if not k.startswith("_")}
    return GradientRecord(encoder=enc_grads, decoder=dec_grads, loss=loss)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainReport:
    loss_history: list[dict]
    final_rmse: np.ndarray
    seed: int
    constraint: str

    @property
    def mean_rmse(self) -> float:
        return float(np.mean(self.final_rmse))


def train(curves, arch: ArchSpec, config: TrainConfig,
          initial_weights: MLPWeights | None = None) -> tuple[MLPWeights, TrainReport]:
    """Full-batch adaptive-moment training; deterministic for a given seed.

    initial_weights resumes from an existing model (fresh optimizer state)
    instead of seeding new parameters; used for staged-learning-rate runs.
    """
    if len(curves) < 2:
        raise ValueError("need at least 2 training curves")
    from .curves import invert as invert_curve  # local import to avoid cycle at module load

    if config.train_on_inverse:
        curves = [invert_curve(c) for c in curves]
    x = _as_matrix(curves)
    if x.shape[1] != arch.input_size:
        raise ValueError(f"curves have {x.shape[1]} samples, architecture expects {arch.input_size}")
    if config.constraint != "none" and arch.latent_dim != 1:
        raise ValueError("latent constraints are defined for a single latent variable")
    labels = _auc_labels_for(curves, x, config) if config.constraint == "auc" else None

    if initial_weights is not None:
        if initial_weights.arch != arch:
            raise ValueError("initial weights belong to a different architecture")
        weights = initial_weights.copy()
    else:
        weights = init_weights(arch, config.seed)
    rng = np.random.default_rng(config.seed + 1)
    params = weights.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = config.learning_rate
    history = []

    for epoch in range(config.epochs):
        try:
            fwd = forward(weights, x, mode="train", rng=rng)
            terms = _loss_terms(x, fwd, config, labels)
        except NumericError as exc:
            raise TrainingDiverged(epoch, str(exc)) from exc
        if not np.isfinite(terms["total"]):
            raise TrainingDiverged(epoch)
        record = gradients(weights, x, config, fwd=fwd)
        grads = record.parameters()
        t = epoch + 1
        bias1 = 1.0 - beta1**t
        bias2 = 1.0 - beta2**t
        for p, g, mi, vi in zip(params, grads, m, v):
            mi *= beta1
            mi += (1.0 - beta1) * g
            vi *= beta2
            vi += (1.0 - beta2) * g * g
            p -= lr * (mi / bias1) / (np.sqrt(vi / bias2) + eps)
        history.append({k: terms[k] for k in ("total", "recon", "smooth", "constraint")})

    weights.validate()
    per_curve = reconstruction_rmse(weights, curves)
    return weights, TrainReport(
        loss_history=history,
        final_rmse=per_curve,
        seed=config.seed,
        constraint=config.constraint,
    )


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


def encode(weights: MLPWeights, curve_or_samples) -> np.ndarray:
    """Latent vector for one curve (eval mode)."""
    samples = curve_or_samples.samples if isinstance(curve_or_samples, ResponseCurve) \
        else np.asarray(curve_or_samples, dtype=np.float64)
    fwd = forward(weights, samples.reshape(1, -1), mode="eval")
    return fwd.z[0]


def encode_batch(weights: MLPWeights, curves) -> np.ndarray:
    fwd = forward(weights, _as_matrix(curves), mode="eval")
    return fwd.z


def decode_raw(weights: MLPWeights, z) -> np.ndarray:
    """Raw decoder output for latent row(s), no normalization."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    out, _ = _half_forward(weights.decoder, weights.arch, z, "decoder", "eval", None)
    return out


def decode(weights: MLPWeights, z, curve_id: str = "decoded") -> ResponseCurve:
    """Decoded curve, endpoint-normalized onto the standard grid."""
    raw = decode_raw(weights, z)[0]
    return normalize(raw, curve_id=curve_id)


def reconstruction_rmse(weights: MLPWeights, curves) -> np.ndarray:
    """Per-curve RMSE between each curve and its normalized reconstruction."""
    x = _as_matrix(curves)
    z = forward(weights, x, mode="eval").z
    raw = decode_raw(weights, z)
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        rec = normalize(raw[i], curve_id="rec").samples
        out[i] = np.sqrt(np.mean((rec - x[i]) ** 2))
    return out


@dataclass(frozen=True)
class LatentHistogram:
    counts: np.ndarray
    edges: np.ndarray
    stats: LatentStats
    n_below: int
    n_above: int


def latent_histogram(weights: MLPWeights, curves, bins: int = 40,
                     value_range: tuple[float, float] = (-4.0, 4.0)) -> LatentHistogram:
    """Histogram of the latent values of a curve collection over [-4, 4]."""
    if len(curves) == 0:
        raise ValueError("need at least one curve")
    z = encode_batch(weights, curves).ravel()
    counts, edges = np.histogram(z, bins=bins, range=value_range)
    return LatentHistogram(
        counts=counts,
        edges=edges,
        stats=LatentStats.from_samples(z),
        n_below=int(np.sum(z < value_range[0])),
        n_above=int(np.sum(z > value_range[1])),
    )


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

FORMAT_VERSION = 1


def _layers_to_json(layers):
    return [{"w": w.tolist(), "b": b.tolist()} for w, b in layers]


def _layers_from_json(items):
    return [(np.asarray(d["w"], dtype=np.float64), np.asarray(d["b"], dtype=np.float64))
            for d in items]


def save_model(weights: MLPWeights, path, metadata: dict | None = None) -> None:
    """Write the model as a single JSON document (exact float round-trip)."""
    arch = weights.arch
    doc = {
        "format_version": FORMAT_VERSION,
        "arch": {
            "input_size": arch.input_size,
            "encoder_hidden": list(arch.encoder_hidden),
            "latent_dim": arch.latent_dim,
            "activation": arch.activation,
            "dropout_keep": arch.dropout_keep,
        },
        "encoder": _layers_to_json(weights.encoder),
        "decoder": _layers_to_json(weights.decoder),
        "metadata": metadata or {},
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path) -> tuple[MLPWeights, dict]:
    """Read a model JSON document; returns (weights, metadata)."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version!r} (expected {FORMAT_VERSION})")
    try:
        arch = ArchSpec(
            encoder_hidden=tuple(doc["arch"]["encoder_hidden"]),
            input_size=doc["arch"]["input_size"],
            latent_dim=doc["arch"]["latent_dim"],
            activation=doc["arch"]["activation"],
            dropout_keep=doc["arch"]["dropout_keep"],
        )
        weights = MLPWeights(
            arch=arch,
            encoder=_layers_from_json(doc["encoder"]),
            decoder=_layers_from_json(doc["decoder"]),
        )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"model file {path} is missing fields: {exc}") from exc
    weights.validate()
    return weights, doc.get("metadata", {})
