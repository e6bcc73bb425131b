"""Sparse logistic regression: prediction, likelihood, Adam training.

The training loop delegates its inner epoch to `kernels.adam_epoch`
(compiled extension when available, numpy fallback otherwise); everything
else here is plain numpy/scipy.
"""

import base64
import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import SchemaError, TrainingError
from .features.schema import FeatureSchema, SparseVector

PROB_EPS = 1e-12  # keeps predictions in the open interval (0, 1)

Pairs = Sequence[Tuple[SparseVector, int]]


@dataclass(frozen=True)
class WeightVector:
    """Trained weights bound to a schema layout via its fingerprint."""

    dim: int
    values: np.ndarray
    schema_fingerprint: str

    def __post_init__(self):
        if self.values.shape != (self.dim,):
            raise SchemaError(f"weights shape {self.values.shape} != ({self.dim},)")


@dataclass(frozen=True)
class PriorSpec:
    """Gaussian prior N(center, 1) with penalty weight lam (Eq.-style L2 pull)."""

    center: WeightVector
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"penalty must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("epochs >= 1, learning_rate > 0, batch_size >= 1 required")


def sigmoid(z):
    """Numerically stable logistic function (scalar or array)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def predict_proba(w: WeightVector, x: SparseVector) -> float:
    """sigma(w.x), clipped into the open interval (0, 1)."""
    if x.dim != w.dim:
        raise SchemaError(f"vector dim {x.dim} != weight dim {w.dim}")
    p = sigmoid(x.dot(w.values))
    return float(min(max(p, PROB_EPS), 1.0 - PROB_EPS))


def predict_matrix(values: np.ndarray, X: sp.csr_matrix) -> np.ndarray:
    """Vectorized predictions for a whole design matrix."""
    p = sigmoid(X @ values)
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def pairs_to_matrix(pairs: Pairs, dim: int) -> Tuple[sp.csr_matrix, np.ndarray]:
    """Stack SparseVector pairs into a CSR design matrix and a label array."""
    indptr = np.zeros(len(pairs) + 1, dtype=np.int64)
    idx_parts: List[np.ndarray] = []
    val_parts: List[np.ndarray] = []
    y = np.zeros(len(pairs), dtype=np.float64)
    for i, (x, label) in enumerate(pairs):
        if x.dim != dim:
            raise SchemaError(f"pair {i} has dim {x.dim}, expected {dim}")
        idx_parts.append(x.indices)
        val_parts.append(x.values)
        indptr[i + 1] = indptr[i] + x.nnz
        y[i] = label
    idx = np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=np.int32)
    val = np.concatenate(val_parts) if val_parts else np.zeros(0, dtype=np.float64)
    return sp.csr_matrix((val, idx, indptr), shape=(len(pairs), dim)), y


def _penalty(values: np.ndarray, prior: Optional[PriorSpec]) -> float:
    if prior is None:
        return 0.0
    diff = values - prior.center.values
    return 0.5 * prior.lam * float(np.dot(diff, diff))


def loss_matrix(
    values: np.ndarray,
    X: sp.csr_matrix,
    y: np.ndarray,
    prior: Optional[PriorSpec] = None,
) -> float:
    """Summed negative log likelihood plus the optional prior penalty."""
    z = X @ values
    # -log p(y | z) = softplus(z) - y z, stable on both tails
    nll = float(np.sum(np.logaddexp(0.0, z) - y * z))
    return nll + _penalty(values, prior)


def loss(w: WeightVector, pairs: Pairs, prior: Optional[PriorSpec] = None) -> float:
    """Training objective over explicit pairs (Eq.-1 style, Eq.-5 when prior set)."""
    if not pairs:
        if prior is None:
            warnings.warn("loss of an empty pair list without prior is undefined; returning 0")
            return 0.0
        return _penalty(w.values, prior)
    X, y = pairs_to_matrix(pairs, w.dim)
    return loss_matrix(w.values, X, y, prior)


def gradient(w: WeightVector, batch: Pairs, prior: Optional[PriorSpec] = None) -> np.ndarray:
    """Dense gradient: sum over batch of (sigma(w.x) - y) x, plus lam (w - center)."""
    g = np.zeros(w.dim)
    if batch:
        X, y = pairs_to_matrix(batch, w.dim)
        resid = sigmoid(X @ w.values) - y
        g += X.T @ resid
    if prior is not None:
        g += prior.lam * (w.values - prior.center.values)
    return g


def train_matrix(
    X: sp.csr_matrix,
    y: np.ndarray,
    config: TrainConfig,
    prior: Optional[PriorSpec] = None,
    init: Optional[np.ndarray] = None,
    fingerprint: str = "",
) -> WeightVector:
    """Adam training on a prebuilt design matrix; deterministic given the seed."""
    n, dim = X.shape
    w = np.zeros(dim) if init is None else np.array(init, dtype=np.float64)
    if w.shape != (dim,):
        raise SchemaError(f"init shape {w.shape} != ({dim},)")
    if prior is not None and prior.center.dim != dim:
        raise SchemaError(f"prior center dim {prior.center.dim} != {dim}")

    if n == 0:
        return WeightVector(dim, w, fingerprint)

    data = np.ascontiguousarray(X.data, dtype=np.float64)
    indices = np.ascontiguousarray(X.indices, dtype=np.int32)
    indptr = np.ascontiguousarray(X.indptr, dtype=np.int64)
    yf = np.ascontiguousarray(y, dtype=np.float64)
    center = prior.center.values if prior is not None else np.zeros(dim)
    center = np.ascontiguousarray(center, dtype=np.float64)
    lam = prior.lam if prior is not None else 0.0

    m = np.zeros(dim)
    v = np.zeros(dim)
    rng = np.random.default_rng(config.seed)
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n).astype(np.int64)
        step = kernels.adam_epoch(
            data, indices, indptr, yf, order, w, m, v, step,
            config.learning_rate, config.beta1, config.beta2, config.epsilon,
            lam, center, config.batch_size,
        )
        if not np.all(np.isfinite(w)):
            raise TrainingError(
                f"non-finite weights after epoch {epoch + 1} "
                f"(lr={config.learning_rate}, lam={lam})"
            )
    return WeightVector(dim, w, fingerprint)


def train(
    pairs: Pairs,
    schema: FeatureSchema,
    config: TrainConfig,
    prior: Optional[PriorSpec] = None,
    init: Optional[np.ndarray] = None,
) -> WeightVector:
    """Train on extracted pairs under the given schema.

    Weights start at zero unless `init` is given (inductive tuning starts at
    the prior center), so unseen one-hot ids predict through shared features.
    """
    X, y = pairs_to_matrix(pairs, schema.dim)
    return train_matrix(X, y, config, prior=prior, init=init,
                        fingerprint=schema.fingerprint())


# ---------------------------------------------------------------------------
# Model container file
# ---------------------------------------------------------------------------
# A model file is UTF-8 JSON with keys:
#   format: "ktransfer-model"; version: 1
#   dimension: int; schema_fingerprint: str
#   train_config: echo of TrainConfig fields
#   manifest: caller-provided dict describing how to rebuild the extraction
#             pipeline (feature families, labels, hyper constants, id orders)
#   weights_b64: base64 of the little-endian float64 weight array
# Weights survive a round trip bit for bit.


def encode_weights(values: np.ndarray) -> str:
    return base64.b64encode(values.astype("<f8").tobytes()).decode("ascii")


def decode_weights(blob: str, dim: int) -> np.ndarray:
    values = np.frombuffer(base64.b64decode(blob), dtype="<f8").copy()
    if values.shape != (dim,):
        raise SchemaError(f"decoded {values.shape[0]} weights, expected {dim}")
    return values


def save_model(path, weights: WeightVector, manifest: dict,
               config: Optional[TrainConfig] = None) -> None:
    doc = {
        "format": "ktransfer-model",
        "version": 1,
        "dimension": weights.dim,
        "schema_fingerprint": weights.schema_fingerprint,
        "train_config": asdict(config) if config is not None else None,
        "manifest": manifest,
        "weights_b64": encode_weights(weights.values),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> Tuple[WeightVector, dict, Optional[TrainConfig]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "ktransfer-model" or doc.get("version") != 1:
        raise SchemaError(f"not a ktransfer model file: {path}")
    weights = WeightVector(
        dim=doc["dimension"],
        values=decode_weights(doc["weights_b64"], doc["dimension"]),
        schema_fingerprint=doc["schema_fingerprint"],
    )
    cfg = TrainConfig(**doc["train_config"]) if doc.get("train_config") else None
    return weights, doc["manifest"], cfg
