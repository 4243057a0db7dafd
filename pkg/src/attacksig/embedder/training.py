"""Episodic SGD training of the embedder."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..corpus import DatasetManifest
from .mel import MelConfig, log_mel
from .network import SCALE_MIN, EmbedderDims, EmbedderParams, loss_and_grad

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    n_classes: int = 4
    n_utterances: int = 3
    learning_rate: float = 0.05
    steps: int = 300
    clip_norm: float = 3.0
    seed: int = 0
    hidden: int = 32
    d_e: int = 16

    def validate(self) -> None:
        if self.n_classes < 2 or self.n_utterances < 2:
            raise ValueError("need at least 2 classes and 2 utterances per class per batch")
        if self.learning_rate <= 0 or self.steps < 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be > 0, steps >= 0")


def clip_global_norm(grads: dict, max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))
    if norm > max_norm:
        s = max_norm / norm
        for g in grads.values():
            g *= s
    return norm


def sgd_step(params: EmbedderParams, grads: dict, lr: float) -> None:
    """In-place update ``p -= lr * g``, then clamp the loss scale at SCALE_MIN."""
    for name, g in grads.items():
        params.tensors[name] -= lr * g
    params.tensors["loss.scale"] = np.array(max(float(params["loss.scale"]), SCALE_MIN))


def featurize(manifest: DatasetManifest, mc: MelConfig) -> list:
    return [log_mel(r.load(), mc) for r in manifest.records]


def train(manifest: DatasetManifest, tc: TrainingConfig = TrainingConfig(), mc: MelConfig = MelConfig(),
          frames=None, init: EmbedderParams | None = None):
    """Train on ``manifest``; returns (params, log) with log rows (step, loss, grad_norm).

    ``frames`` may carry precomputed log-mel matrices in manifest order.
    """
    tc.validate()
    groups: dict = {}
    for i, r in enumerate(manifest.records):
        if r.label is None:
            raise ValueError(f"{r.utterance_id}: training requires labelled records")
        groups.setdefault(r.label, []).append(i)
    eligible = sorted(label for label, idx in groups.items() if len(idx) >= tc.n_utterances)
    if len(eligible) < tc.n_classes:
        raise ValueError(
            f"need {tc.n_classes} labels with >= {tc.n_utterances} utterances, found {len(eligible)}"
        )
    if frames is None:
        frames = featurize(manifest, mc)

    dims = EmbedderDims(n_mels=mc.n_mels, hidden=tc.hidden, d_e=tc.d_e)
    params = init.copy() if init is not None else EmbedderParams.init(dims, seed=tc.seed)
    rng = np.random.default_rng(np.random.SeedSequence([tc.seed, 1]))
    log = []
    for step in range(tc.steps):
        classes = rng.choice(len(eligible), tc.n_classes, replace=False)
        batch = []
        for ci in classes:
            idx = groups[eligible[ci]]
            pick = rng.choice(len(idx), tc.n_utterances, replace=False)
            batch.append([frames[idx[j]] for j in pick])
        loss, grads = loss_and_grad(params, batch)
        norm = clip_global_norm(grads, tc.clip_norm)
        sgd_step(params, grads, tc.learning_rate)
        log.append((step, loss, norm))
        if step % 50 == 0:
            logger.info("step %d loss %.4f grad-norm %.3f", step, loss, norm)
    return params, log
