#!/usr/bin/env python3
# Predicting the next timepoint of a simulated longitudinal connectome.

import numpy as np

from rgcnet.autodiff import Adam, backward
from rgcnet.data import SimulatorParams, simulate_longitudinal, transition_pairs
from rgcnet.generate import GeneratorModel, batched_composite_loss, identity_baseline
from rgcnet.metrics import evaluate, mean_report

d = simulate_longitudinal(SimulatorParams(n_subjects=40, n_nodes=20, seed=0))
pairs = transition_pairs(d)
train, test = pairs[:60], pairs[60:]
print(f"{len(d.subjects())} subjects, {len(train)} training and {len(test)} test transitions")

model = GeneratorModel(variant="rgc", n_nodes=20, seed=0)
opt = Adam(model.parameters(), lr=0.005)
graphs = [g for g, _ in train]
target = np.vstack([a for _, a in train])
for epoch in range(1, 31):
    model.train()
    loss = batched_composite_loss(target, model.predict_batch(graphs), 20)
    backward(loss)
    opt.step()
    if epoch % 10 == 0:
        print(f"epoch {epoch:3d}  composite loss {loss.item():.4f}")

model.eval()
pred = model.predict_batch([g for g, _ in test]).value
ours = mean_report(evaluate(a, pred[20 * i:20 * i + 20]) for i, (_, a) in enumerate(test))
ident = mean_report(evaluate(a, identity_baseline(g)) for g, a in test)
for name, r in (("RGC-Net-Transformer", ours), ("Identity Function", ident)):
    print(f"{name:20s} " + "  ".join(f"{k}={v:.4f}" for k, v in zip(r.METRICS, r.values())))
