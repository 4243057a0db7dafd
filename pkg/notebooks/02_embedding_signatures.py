"""
Learned embedding signatures
============================

A three-layer LSTM over log-mel frames, trained so utterances of the same
attacker land close together on the unit sphere.
"""

# %%
import numpy as np

from attacksig.corpus import DEFAULT_HELD_OUT, default_synth_config, split_in_domain, split_out_of_domain, synth_corpus
from attacksig.embedder import (EmbedderDims, EmbedderParams, MelConfig, TrainingConfig, embed_many, grad_check,
                                log_mel, tiny_batch, train)
from attacksig.features import extract_signature
from attacksig.metrics import avg_class_conditional_variance, pca_2d, scatter_export, standard_normalize

# %%
# Before training anything: the hand-written backward pass agrees with
# central finite differences on a tiny network.
res = grad_check(EmbedderParams.init(EmbedderDims(n_mels=5, hidden=8, d_e=4)), tiny_batch())
print(f"max relative error {res.max_rel_error:.1e} over {res.n_checked} parameters")

# %%
# Hold out two attackers completely, then split the rest 90/10.
corpus = synth_corpus(default_synth_config(utterances_per_attacker=60, seed=0))
in_domain, held_out = split_out_of_domain(corpus, DEFAULT_HELD_OUT)
train_m, test_m = split_in_domain(in_domain, 0.9, seed=0)
print("train labels:", train_m.label_names(), " held out:", held_out.label_names())

mel = MelConfig()
frames = {r.utterance_id: log_mel(r.load(), mel) for r in corpus}
get = lambda m: [frames[r.utterance_id] for r in m]

# %%
# Episodic training: each step draws 4 attackers x 3 utterances.
tc = TrainingConfig(n_classes=4, n_utterances=3, steps=300, hidden=32, d_e=16)
params, log = train(train_m, tc, mel, frames=get(train_m))
losses = np.array([loss for _, loss, _ in log])
print("loss by 50-step block:", np.round(losses.reshape(-1, 50).mean(axis=1), 3))

# %%
# Cluster tightness, embeddings vs the 16 low-level features, on utterances
# the network never saw.
low = lambda m: np.array([extract_signature(r).as_array() for r in m])
var = lambda X, m: avg_class_conditional_variance(X, m.labels).average
for name, m in (("in-domain", test_m), ("out-of-domain", held_out)):
    print(f"{name:14s} embedding {var(embed_many(params, get(m)), m):.3f}   low-level {var(low(m), m):.3f}")

# %%
# 2-D picture of the in-domain train embeddings (CSV + SVG next to this script).
E = embed_many(params, get(train_m))
proj = pca_2d(standard_normalize(E)[0])
print(scatter_export(proj, train_m.labels, "embedding_scatter"))
