"""Node classification, feature-noise attacks, transfer, embedding stability and sweeps."""

import numpy as np

from ftm import FTM, ModelConfig, SynthSpec, TrainConfig, chronological_split, fit, synth_generate
from ftm.evaluation import (
    AttackSweep,
    attack_eval,
    case_study_sweep,
    embedding_stability,
    finetune_node_classifier,
    format_table,
    transfer_eval,
)

g = synth_generate(SynthSpec(links=1000, feature_dim=4, seed=0))
split = chronological_split(g, seed=0)
mcfg = ModelConfig(layers=1, heads=2, frame_length=4, timeline_length=2, hidden_dim=8, time_dim=4, link_dim=4, seed=0)
tcfg = TrainConfig(epochs=5, learning_rate=1e-3, batch_size=100, seed=0)
model = FTM(mcfg)
fit(model, g, split, tcfg)

# node classification: a logistic probe on frozen embeddings
print("node AUC:", round(finetune_node_classifier(model, g, seed=0).value, 4))

# noise of growing relative norm on every link feature
sweep = attack_eval(model, g, AttackSweep([0.0, 0.2, 0.5], repetitions=3), seed=0)
rows = sweep.rows()
print(format_table(["AUC (%)"], list(rows), [[100 * v for v in rows.values()]]))

# transfer to a different synthetic stream without retraining
other = synth_generate(SynthSpec(links=1000, feature_dim=6, seed=7))
rep = transfer_eval(model, other, chronological_split(other, seed=7))
print("transfer AP:", round(rep.value, 4), "(features adapted from width", rep.extra["source_feature_dim"], ")")

# cosine between a node's embeddings at consecutive interaction times
busy = np.argsort(-np.bincount(g.src, minlength=g.node_count))[:5]
res = embedding_stability(model, g, busy, max_times=10)
print(f"stability {res.mean:.3f} over {res.pairs} pairs ({res.skipped} zero-norm pairs skipped)")

# a two-point neighborhood sweep
reports = case_study_sweep(g, split, "neighborhood", mcfg, tcfg, grid={"S": (1, 4), "L": (2, 4)}, setting="transductive")
print(format_table([r.extra["grid_point"] for r in reports], ["AP (%)"], [[100 * r.value] for r in reports]))
