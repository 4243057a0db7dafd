"""Angular prototypical loss.

For every class the last utterance is the query and the mean of the others is
the prototype. Similarities are ``w * cos(query_j, prototype_k) + b`` and the
loss is softmax cross-entropy with the matching prototype as the target.
"""

from __future__ import annotations

import numpy as np

UNIT_TOL = 1e-4


def _check(E):
    E = np.asarray(E)
    if E.dtype.kind != "f":
        E = E.astype(np.float64)
    if E.ndim != 3:
        raise ValueError(f"embeddings must be [N x M x d], got shape {E.shape}")
    n, m, _ = E.shape
    if n < 2 or m < 2:
        raise ValueError(f"need N >= 2 classes and M >= 2 utterances, got N={n}, M={m}")
    norms = np.linalg.norm(E, axis=2)
    if np.max(np.abs(norms - 1.0)) > UNIT_TOL:
        raise ValueError("embedding rows must be unit norm")
    return E


def _similarity(E, w, b):
    q = E[:, -1]
    c = E[:, :-1].mean(axis=1)
    qn = np.linalg.norm(q, axis=1)
    cn = np.linalg.norm(c, axis=1)
    q_hat, c_hat = q / qn[:, None], c / cn[:, None]
    cos = q_hat @ c_hat.T
    return w * cos, cos, q_hat, c_hat, qn, cn


def _xent(S):
    shifted = S - S.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - log_z[:, None]
    return -np.mean(np.diag(log_p)), np.exp(log_p)


def angular_proto_loss(E, w: float, b: float):
    """Return (loss, S) for embeddings E of shape [N x M x d]."""
    E = _check(E)
    logits = _similarity(E, w, b)[0]
    return _xent(logits)[0], logits + b


def angular_proto_loss_grad(E, w: float, b: float):
    """Return (loss, S, dE, dw, db)."""
    E = _check(E)
    n, m, _ = E.shape
    logits, cos, q_hat, c_hat, qn, cn = _similarity(E, w, b)
    # the bias is constant along each softmax row, so it is left out of the
    # cross-entropy to keep its exact invariance in floating point
    loss, prob = _xent(logits)
    loss = float(loss)
    dS = (prob - np.eye(n)) / n
    dw = float(np.sum(dS * cos))
    db = float(np.sum(dS))
    dcos = w * dS
    dq_hat = dcos @ c_hat
    dc_hat = dcos.T @ q_hat
    dq = (dq_hat - q_hat * np.sum(q_hat * dq_hat, axis=1, keepdims=True)) / qn[:, None]
    dc = (dc_hat - c_hat * np.sum(c_hat * dc_hat, axis=1, keepdims=True)) / cn[:, None]
    dE = np.empty_like(E)
    dE[:, -1] = dq
    dE[:, :-1] = (dc / (m - 1))[:, None, :]
    return loss, logits + b, dE, dw, db
