"""Pure-numpy MLP kernel: fused forward pass and backward pass.

Reference implementation for the compiled kernel in _core.pyx; also the
fallback when the extension is not built.
"""

from __future__ import annotations

import numpy as np


def mlp_forward(w1, b1, w2, b2, x) -> np.ndarray:
    """Class probabilities of the two-layer rectifier network, row-wise softmax."""
    hidden = np.maximum(x @ w1.T + b1, 0.0)
    logits = hidden @ w2.T + b2
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p


def mlp_loss_and_grads(w1, b1, w2, b2, x, y):
    """Mean cross-entropy and exact gradients for all four parameter blocks.

    Returns (loss, gw1, gb1, gw2, gb2).  The rectifier subgradient at zero is
    taken as zero, matching the compiled kernel.
    """
    n = x.shape[0]
    pre = x @ w1.T + b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ w2.T + b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(logsumexp - shifted[np.arange(n), y]))

    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    dlogits = p
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    gw2 = dlogits.T @ hidden
    gb2 = dlogits.sum(axis=0)
    dhidden = dlogits @ w2
    dhidden[pre <= 0.0] = 0.0
    gw1 = dhidden.T @ x
    gb1 = dhidden.sum(axis=0)
    return loss, gw1, gb1, gw2, gb2
