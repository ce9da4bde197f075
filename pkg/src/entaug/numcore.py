"""Softmax, entropy, magnitude, and loss math with analytic gradients.

All functions here are pure, operate on 64-bit floats, and use the
convention 0*log(0) = 0 (probabilities below ``EPS_LOG`` contribute
nothing to entropy sums).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# Probabilities below this floor are treated as exact zeros inside logs.
EPS_LOG = 1e-12

# Sign conventions for the entropy regularizer.  "entropy_min" adds the
# normalized entropy itself (>= 0), so gradient descent sharpens the
# softmax output.  "neg_entropy" adds the negated normalized entropy
# (<= 0); minimizing it spreads the output instead.  Kept selectable so
# both behaviors can be compared experimentally.
SIGN_ENTROPY_MIN = "entropy_min"
SIGN_NEG_ENTROPY = "neg_entropy"
SIGN_MODES = (SIGN_ENTROPY_MIN, SIGN_NEG_ENTROPY)


@dataclass(frozen=True)
class LossConfig:
    """Cross-entropy loss with an optional entropy regularizer.

    ent_weight is the non-negative coefficient of the entropy term.
    """

    use_ent_loss: bool = False
    ent_weight: float = 1.0
    sign_mode: str = SIGN_ENTROPY_MIN

    def __post_init__(self):
        if self.ent_weight < 0:
            raise InvalidInputError(f"ent_weight must be >= 0, got {self.ent_weight}")
        if self.sign_mode not in SIGN_MODES:
            raise InvalidInputError(f"unknown sign_mode {self.sign_mode!r}")


def as_logit_vector(logits) -> np.ndarray:
    """Validate and return a 1-D float64 logit vector (k >= 2, all finite)."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise InvalidInputError(f"logits must be a vector of k >= 2 entries, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits contain NaN or Inf")
    return z


def as_prob_vector(probs) -> np.ndarray:
    """Validate and return a 1-D float64 probability vector.

    Entries must be non-negative and sum to 1 within 1e-9.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise InvalidInputError(f"probabilities must be a vector of k >= 2 entries, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("probabilities contain NaN or Inf")
    if np.any(p < 0):
        raise InvalidInputError("probabilities contain negative entries")
    total = float(p.sum())
    if abs(total - 1.0) > 1e-9:
        raise InvalidInputError(f"probabilities sum to {total}, not 1")
    return p


def softmax(logits) -> np.ndarray:
    """Max-subtracted softmax of a logit vector."""
    z = as_logit_vector(logits)
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax of a (batch, k) logit matrix."""
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _plogp(p: np.ndarray) -> np.ndarray:
    """Elementwise p*log(p) with the 0*log(0) = 0 convention."""
    out = np.zeros_like(p)
    mask = p >= EPS_LOG
    out[mask] = p[mask] * np.log(p[mask])
    return out


def normalized_entropy(probs) -> float:
    """Shannon entropy of a k-class distribution divided by log k, in [0, 1]."""
    p = as_prob_vector(probs)
    return float(-_plogp(p).sum() / np.log(p.size))


def magnitude(probs) -> float:
    """One minus the normalized entropy, clamped to [0, 1].

    High-confidence (low-entropy) outputs map near 1, maximally uncertain
    outputs map to 0.
    """
    p = as_prob_vector(probs)
    m = 1.0 + _plogp(p).sum() / np.log(p.size)
    return float(min(1.0, max(0.0, m)))


def ent_loss(probs, cfg: LossConfig) -> float:
    """Entropy regularization term for one probability vector.

    entropy_min mode returns +normalized_entropy (minimizing it raises
    confidence); neg_entropy mode returns the negated value.
    """
    h = normalized_entropy(probs)
    return h if cfg.sign_mode == SIGN_ENTROPY_MIN else -h


def cross_entropy(logits, label: int) -> float:
    """-log softmax(logits)[label], computed in log space."""
    z = as_logit_vector(logits)
    if not 0 <= label < z.size:
        raise InvalidInputError(f"label {label} out of range for k={z.size}")
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    return float(lse - z[label])


def _entropy_term_and_grad(p: np.ndarray) -> tuple[float, np.ndarray]:
    """Normalized entropy of p and its gradient w.r.t. the logits.

    With s = sum_i p_i log p_i, d s / d z_j = p_j (log p_j - s), hence the
    normalized-entropy gradient is -(1/log k) * p_j (log p_j - s).
    """
    logp = np.log(np.maximum(p, EPS_LOG))
    plogp = np.where(p >= EPS_LOG, p * logp, 0.0)
    s = plogp.sum()
    logk = np.log(p.size)
    grad = -(p * (logp - s)) / logk
    return float(-s / logk), grad


def total_loss_and_grad(logits, label: int, cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Total loss (CE plus optional entropy term) and its logit gradient.

    The CE gradient is softmax(logits) - onehot(label); the entropy-term
    gradient uses the closed form in ``_entropy_term_and_grad``.
    """
    z = as_logit_vector(logits)
    if not 0 <= label < z.size:
        raise InvalidInputError(f"label {label} out of range for k={z.size}")
    p = softmax(z)
    m = z.max()
    loss = float(m + np.log(np.exp(z - m).sum()) - z[label])
    grad = p.copy()
    grad[label] -= 1.0
    if cfg.use_ent_loss and cfg.ent_weight != 0.0:
        h, gh = _entropy_term_and_grad(p)
        sign = 1.0 if cfg.sign_mode == SIGN_ENTROPY_MIN else -1.0
        loss += cfg.ent_weight * sign * h
        grad += cfg.ent_weight * sign * gh
    return loss, grad


def batch_loss_and_grad(
    logits: np.ndarray, labels: np.ndarray, cfg: LossConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized per-sample losses and logit gradients for a batch.

    Returns (total_losses, ce_losses, grads) with shapes (B,), (B,), (B, k).
    Results match ``total_loss_and_grad`` applied row by row.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    if z.ndim != 2 or z.shape[0] != y.shape[0]:
        raise InvalidInputError(f"logits {z.shape} and labels {y.shape} do not align")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise InvalidInputError("labels out of range")
    b = np.arange(z.shape[0])
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    ce = lse - z[b, y]
    p = softmax_rows(z)
    grads = p.copy()
    grads[b, y] -= 1.0
    total = ce.copy()
    if cfg.use_ent_loss and cfg.ent_weight != 0.0:
        logp = np.log(np.maximum(p, EPS_LOG))
        plogp = np.where(p >= EPS_LOG, p * logp, 0.0)
        s = plogp.sum(axis=1, keepdims=True)
        logk = np.log(z.shape[1])
        sign = 1.0 if cfg.sign_mode == SIGN_ENTROPY_MIN else -1.0
        total += cfg.ent_weight * sign * (-s[:, 0] / logk)
        grads += cfg.ent_weight * sign * (-(p * (logp - s)) / logk)
    return total, ce, grads
