"""Class-balancing augmentation: SMOTE interpolation and autoencoder sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .datakit import Dataset, feature_bounds, normalize, _scale
from .tensornet import Network, TrainConfig, TrainReport, build_network, forward, train

__all__ = [
    "SmoteConfig",
    "AutoencoderConfig",
    "Autoencoder",
    "AugmentError",
    "smote",
    "train_autoencoder",
    "autoencoder_sample",
    "balance_with_autoencoder",
]

log = logging.getLogger(__name__)


class AugmentError(ValueError):
    pass


def _minority_majority(data: Dataset):
    counts = data.class_counts()
    if len(counts) != 2:
        raise AugmentError(f"need exactly two classes, found {sorted(counts)}")
    (minority, n_min), (majority, n_maj) = sorted(counts.items(), key=lambda kv: (kv[1], kv[0]))
    return minority, n_min, majority, n_maj


# --------------------------------------------------------------------------
# SMOTE
# --------------------------------------------------------------------------


@dataclass
class SmoteConfig:
    k_neighbors: int = 5
    target: str | float = "equalize"  # "equalize" or a minority/majority ratio
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise AugmentError("k_neighbors must be >= 1")
        if not (self.target == "equalize" or (isinstance(self.target, (int, float)) and self.target > 0)):
            raise AugmentError("target must be 'equalize' or a positive ratio")


def smote(data: Dataset, config: SmoteConfig | None = None) -> Dataset:
    """Append interpolated minority rows until the class target is met.

    Each synthetic point is x_i + lambda * (x_nn - x_i) with lambda uniform in
    [0, 1] and x_nn one of x_i's k nearest minority neighbors (Euclidean on
    min-max-scaled features). Original rows come first, unchanged; synthetic
    rows carry the minority label and origin tag "smote".
    """
    config = config or SmoteConfig()
    minority, n_min, majority, n_maj = _minority_majority(data)
    if config.target == "equalize":
        n_new = n_maj - n_min
    else:
        n_new = max(0, int(round(float(config.target) * n_maj)) - n_min)
    if n_new == 0:
        log.warning("smote: classes already satisfy the target; returning input unchanged")
        return data
    if n_min < 2:
        raise AugmentError(f"minority class {minority!r} needs at least 2 samples")
    if config.k_neighbors >= n_min:
        raise AugmentError(
            f"k_neighbors={config.k_neighbors} must be below the minority count {n_min}"
        )

    minority_rows = data.rows[data.labels == minority]
    scaled = _scale(minority_rows, feature_bounds(data))
    d2 = ((scaled[:, None, :] - scaled[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    neighbor_ids = np.argsort(d2, axis=1, kind="stable")[:, : config.k_neighbors]

    rng = np.random.default_rng(config.seed)
    synthetic = np.empty((n_new, data.n_features))
    for s in range(n_new):
        i = int(rng.integers(n_min))
        nn = int(neighbor_ids[i, int(rng.integers(config.k_neighbors))])
        lam = rng.uniform()
        synthetic[s] = minority_rows[i] + lam * (minority_rows[nn] - minority_rows[i])

    origin = data.origin if data.origin is not None else np.array(["real"] * data.n_rows, dtype=object)
    return replace(
        data,
        rows=np.vstack([data.rows, synthetic]),
        labels=np.concatenate([data.labels, np.array([minority] * n_new, dtype=object)]),
        origin=np.concatenate([origin, np.array(["smote"] * n_new, dtype=object)]),
    )


# --------------------------------------------------------------------------
# Autoencoder
# --------------------------------------------------------------------------


@dataclass
class AutoencoderConfig:
    encoder_widths: tuple[int, ...] = (8, 4, 2)
    decoder_widths: tuple[int, ...] = (4, 8)
    output_width: int | None = None  # defaults to the feature count
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(loss="mean_squared_error")
    )
    noise_scale: float = 1.0

    def __post_init__(self):
        if any(w < 1 for w in tuple(self.encoder_widths) + tuple(self.decoder_widths)):
            raise AugmentError("all layer widths must be >= 1")
        if self.noise_scale < 0:
            raise AugmentError("noise_scale must be >= 0")


@dataclass
class Autoencoder:
    network: Network
    bottleneck_layer: int  # layer index whose output is the latent code
    report: TrainReport
    noise_scale: float


def train_autoencoder(data: Dataset, config: AutoencoderConfig | None = None) -> Autoencoder:
    """Train encoder+decoder end-to-end on the feature rows (labels ignored)."""
    config = config or AutoencoderConfig()
    if data.n_rows < 2:
        raise AugmentError("need at least 2 samples to train an autoencoder")
    out_width = config.output_width or data.n_features
    specs = (
        [(w, "relu") for w in config.encoder_widths]
        + [(w, "relu") for w in config.decoder_widths]
        + [(out_width, "linear")]
    )
    net = build_network(
        data.n_features,
        specs,
        seed=config.train.seed,
        input_names=list(data.feature_names),
        output_names=list(data.feature_names)[:out_width]
        if out_width <= data.n_features
        else [f"out{i}" for i in range(out_width)],
    )
    train_cfg = replace(config.train, loss="mean_squared_error")
    trained, report = train(net, (data.rows, data.rows[:, :out_width]), train_cfg)
    return Autoencoder(
        network=trained,
        bottleneck_layer=len(config.encoder_widths) - 1,
        report=report,
        noise_scale=config.noise_scale,
    )


def _encode(ae: Autoencoder, rows: np.ndarray) -> np.ndarray:
    return forward(ae.network, rows)[ae.bottleneck_layer]


def _decode(ae: Autoencoder, latents: np.ndarray) -> np.ndarray:
    a = latents
    for layer in ae.network.layers[ae.bottleneck_layer + 1 :]:
        z = a @ layer.weights.T + layer.biases
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return a


def autoencoder_sample(ae: Autoencoder, data: Dataset, class_label: str, n: int, seed: int = 0) -> np.ndarray:
    """Draw n synthetic feature vectors for one class.

    The class's rows are encoded, a per-dimension Gaussian is fitted to the
    latent codes, n latents are drawn at noise_scale * std around the means,
    decoded, and clipped to the observed per-feature min/max of `data`.
    """
    if n < 1:
        raise AugmentError("n must be >= 1")
    member_rows = data.rows[data.labels == class_label]
    if member_rows.shape[0] == 0:
        raise AugmentError(f"class {class_label!r} absent from data")
    codes = _encode(ae, member_rows)
    means = codes.mean(axis=0)
    stds = codes.std(axis=0)
    rng = np.random.default_rng(seed)
    latents = means + ae.noise_scale * stds * rng.standard_normal((n, codes.shape[1]))
    decoded = _decode(ae, latents)
    lo = data.rows.min(axis=0)
    hi = data.rows.max(axis=0)
    return np.clip(decoded, lo, hi)


def balance_with_autoencoder(
    data: Dataset, config: AutoencoderConfig | None = None, seed: int = 0
) -> Dataset:
    """Equalize classes by appending autoencoder-sampled minority rows.

    The autoencoder is trained on min-max-scaled features (raw telemetry
    scales condition training poorly); samples are mapped back to raw units
    before clipping and appending. Synthetic rows get origin "autoencoder".
    """
    config = config or AutoencoderConfig()
    minority, n_min, majority, n_maj = _minority_majority(data)
    n_new = n_maj - n_min
    if n_new == 0:
        log.warning("autoencoder balance: classes already equal; returning input unchanged")
        return data

    scaled = normalize(data)
    ae = train_autoencoder(scaled, config)
    sampled = autoencoder_sample(ae, scaled, minority, n_new, seed=seed)
    lo = np.array([b[0] for b in scaled.normalization])
    hi = np.array([b[1] for b in scaled.normalization])
    raw = sampled * (hi - lo) + lo

    origin = data.origin if data.origin is not None else np.array(["real"] * data.n_rows, dtype=object)
    return replace(
        data,
        rows=np.vstack([data.rows, raw]),
        labels=np.concatenate([data.labels, np.array([minority] * n_new, dtype=object)]),
        origin=np.concatenate([origin, np.array(["autoencoder"] * n_new, dtype=object)]),
    )
