"""Train on a synthetic user/item stream and score held-out links.

Takes about a minute on one core.
"""

from ftm import FTM, ModelConfig, SynthSpec, TrainConfig, chronological_split, fit, synth_generate
from ftm.evaluation import eval_link_prediction

g = synth_generate(SynthSpec(users=20, items=5, links=2000, feature_dim=8, p=0.9, seed=0))
split = chronological_split(g, seed=0)
print(g)
print("train/val/test links:", len(split.train), len(split.validation), len(split.test))
print("masked new nodes:", [g.node_ids[v] for v in split.new_nodes])

cfg = ModelConfig(layers=2, heads=2, frame_length=20, timeline_length=3, hidden_dim=16, time_dim=16, link_dim=8, seed=0)
model = FTM(cfg)
print("untrained test AP:", round(eval_link_prediction(model, g, split, "transductive", seed=0).value, 4))

res = fit(model, g, split, TrainConfig(learning_rate=1e-4, epochs=30, batch_size=200, seed=0, patience=5))
for row in res.history[::5]:
    print(f"epoch {row['epoch']:3d}  loss {row['train_loss']:.4f}  val AP {row['val_ap']:.4f}")
print("best epoch", res.best_epoch)

for setting in ("transductive", "inductive"):
    rep = eval_link_prediction(model, g, split, setting, seed=0)
    print(f"{setting} test AP {rep.value:.4f} over {rep.extra['links']} links")

# scores are inner products of embeddings at the query time
u, i = g.node_ids.index("u0"), g.metadata["preferred"][g.node_ids.index("u0")]
t = float(g.timestamps[-1]) + 1
print("score u0 -> preferred item:", round(model.link_score(g, u, i, t), 3))
