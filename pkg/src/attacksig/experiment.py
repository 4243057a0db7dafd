"""End-to-end desk-scale experiment on the synthetic attacker corpus.

Protocol: the held-out attackers are removed first; the remaining attackers
(including bonafide) are split 90/10 per label. The embedder and both
classifiers only see the in-domain train part. Cluster variances are measured
on the in-domain test part and on every held-out utterance.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassifierConfig, evaluate, train_classifier
from .corpus import DEFAULT_HELD_OUT, default_synth_config, split_in_domain, split_out_of_domain, synth_corpus
from .embedder import MelConfig, TrainingConfig, embed_many, log_mel, train
from .features import FrameConfig, extract_signature
from .metrics import avg_class_conditional_variance

logger = logging.getLogger(__name__)

DESK_TRAINING = TrainingConfig(n_classes=4, n_utterances=3, learning_rate=0.05, steps=300, hidden=32, d_e=16)


@dataclass
class DeskResult:
    var_in_embedding: float
    var_in_lowlevel: float
    var_ood_embedding: float
    var_ood_lowlevel: float
    acc_embedding: float
    acc_lowlevel: float
    n_classes_in: int
    train_seconds: float
    train_labels: tuple
    loss_log: list = field(repr=False, default_factory=list)


def run_desk_experiment(utterances_per_attacker: int = 100, seed: int = 0, held_out=DEFAULT_HELD_OUT,
                        training: TrainingConfig = DESK_TRAINING, mel: MelConfig = MelConfig(),
                        frame: FrameConfig = FrameConfig(), classifier: ClassifierConfig = ClassifierConfig(),
                        return_params: bool = False):
    m = synth_corpus(default_synth_config(utterances_per_attacker, seed))
    in_dom, ood = split_out_of_domain(m, held_out)
    tr, te = split_in_domain(in_dom, 0.9, seed)

    mels = {r.utterance_id: log_mel(r.load(), mel) for r in m.records}
    low = {r.utterance_id: extract_signature(r, frame).as_array() for r in m.records}
    frames = lambda man: [mels[r.utterance_id] for r in man.records]
    lowlevel = lambda man: np.array([low[r.utterance_id] for r in man.records])

    t0 = time.perf_counter()
    params, log = train(tr, TrainingConfig(**{**training.__dict__, "seed": seed}), mel, frames=frames(tr))
    elapsed = time.perf_counter() - t0
    logger.info("embedder trained in %.1fs", elapsed)

    E_tr, E_te, E_ood = (embed_many(params, frames(x)) for x in (tr, te, ood))
    var = lambda X, man: avg_class_conditional_variance(X, man.labels).average

    cc = ClassifierConfig(**{**classifier.__dict__, "seed": seed})
    acc_e = evaluate(train_classifier(E_tr, tr.labels, cc), E_te, te.labels).accuracy
    acc_l = evaluate(train_classifier(lowlevel(tr), tr.labels, cc), lowlevel(te), te.labels).accuracy

    res = DeskResult(
        var_in_embedding=var(E_te, te), var_in_lowlevel=var(lowlevel(te), te),
        var_ood_embedding=var(E_ood, ood), var_ood_lowlevel=var(lowlevel(ood), ood),
        acc_embedding=acc_e, acc_lowlevel=acc_l, n_classes_in=len(tr.label_names()),
        train_seconds=elapsed, train_labels=tuple(tr.label_names()), loss_log=log,
    )
    return (res, params) if return_params else res
