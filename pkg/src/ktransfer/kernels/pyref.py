"""Pure-numpy reference implementation of the training kernel.

Semantically identical to the compiled `_ckernels` extension: same batch
boundaries, same Adam update, same per-batch share of the prior penalty.
Used automatically when the extension is unavailable or when
KTRANSFER_PURE_PYTHON=1 is set.
"""

import numpy as np
import scipy.sparse as sp


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def adam_epoch(
    data: np.ndarray,
    indices: np.ndarray,
    indptr: np.ndarray,
    y: np.ndarray,
    order: np.ndarray,
    w: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    lam: float,
    center: np.ndarray,
    batch_size: int,
) -> int:
    """One shuffled epoch of mini-batch Adam on the logistic loss (in place).

    The prior penalty gradient lam * (w - center) is split across the epoch's
    batches in proportion to batch size, so a full epoch applies exactly one
    penalty gradient. Returns the updated Adam step counter.
    """
    n = y.shape[0]
    X = sp.csr_matrix((data, indices, indptr), shape=(n, w.shape[0]))
    for start in range(0, n, batch_size):
        rows = order[start:start + batch_size]
        Xb = X[rows]
        z = Xb @ w
        resid = _sigmoid(z) - y[rows]
        g = Xb.T @ resid
        lam_eff = lam * (rows.shape[0] / n)
        g += lam_eff * (w - center)

        step += 1
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1 ** step)
        vhat = v / (1.0 - beta2 ** step)
        w -= lr * mhat / (np.sqrt(vhat) + eps)
    return step
