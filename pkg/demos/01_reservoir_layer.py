#!/usr/bin/env python3
# A single reservoir graph convolution layer, step by step.

import numpy as np

from rgcnet.graph import Graph, Permutation, normalize_adjacency, permute
from rgcnet.linalg import spectral_radius
from rgcnet.reservoir import ReservoirLayer, stack_forward

rng = np.random.default_rng(0)

# a ring of 8 nodes with two chords
n = 8
a = np.zeros((n, n))
for i in range(n):
    a[i, (i + 1) % n] = a[(i + 1) % n, i] = 1
a[0, 4] = a[4, 0] = a[2, 6] = a[6, 2] = 1
x = rng.standard_normal((n, 3))
g = Graph(a, x)

# The reservoir matrix is drawn once and shrunk if its spectral radius exceeds 1.
layer = ReservoirLayer(n_res=16, n_out=4, n_in=3, alpha=0.8, k=2, seed=1)
print("spectral radius of W_res:", round(spectral_radius(layer.w_res.value), 6))
print("trainable parameters:", layer.count_trainable(), "(only the output map)")

h = stack_forward([layer], g)
print("node embeddings:", h.shape)

# Relabelling the nodes relabels the rows of the output, nothing else.
p = Permutation.random(n, rng)
h_perm = stack_forward([layer], permute(g, p))
print("max |P f(X, A) - f(PX, PAP^T)|:", np.abs(p.apply_rows(h.value) - h_perm.value).max())

# With alpha = 1 and k = 1 the update is a plain graph convolution with a frozen weight.
plain = ReservoirLayer(n_res=16, n_out=4, n_in=3, alpha=1.0, k=1, seed=1)
h0 = x @ plain.w_in.value
by_hand = np.maximum(normalize_adjacency(a) @ h0 @ plain.w_res.value, 0) @ plain.w_out.value
print("alpha=1 matches ReLU(A H W_res) W_out:", np.allclose(stack_forward([plain], g).value, by_hand))
