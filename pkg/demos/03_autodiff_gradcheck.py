"""A tour of the autodiff engine and its finite-difference verification.

Shows the Tensor graph on a toy expression, the chunk segmentation round
trip used by the dual-path extractor, and the gradient-check report over
every operator (a few seeds here; the acceptance suite runs 20).
"""

import numpy as np

from usev import autodiff as ad
from usev.gradcheck import format_report, run_gradcheck

# A scalar loss through a few ops; backward fills .grad on the leaves.
x = ad.Tensor(np.array([[1.0, -2.0], [0.5, 3.0]]), requires_grad=True)
w = ad.Tensor(np.array([[0.2, 0.1], [-0.3, 0.4]]), requires_grad=True)
loss = (ad.tanh(x @ w) * ad.relu(x)).sum()
loss.backward()
print("toy loss:", loss.item())
print("dloss/dx:\n", x.grad)
print("dloss/dw:\n", w.grad)

# Chunk segmentation: split [B, T] into half-overlapping chunks and invert
# exactly (count-normalized overlap-add).
sig = ad.Tensor(np.arange(22.0).reshape(2, 11))
chunks = ad.segment_chunks(sig, 6)
back = ad.aggregate_chunks(chunks, 11)
print("\nchunks shape:", chunks.shape,
      "(P = 2*ceil(T/hop)/2 + 1 on the padded grid)")
print("round-trip max error:", np.max(np.abs(back.data - sig.data)))

# The LSTM step is a fused primitive; one step on a batch of 3:
rng = np.random.default_rng(0)
h, c = ad.lstm_cell(ad.Tensor(rng.standard_normal((3, 4))),
                    ad.Tensor(np.zeros((3, 5))), ad.Tensor(np.zeros((3, 5))),
                    ad.Tensor(rng.standard_normal((4, 20)) * 0.3),
                    ad.Tensor(rng.standard_normal((5, 20)) * 0.3),
                    ad.Tensor(np.zeros(20)))
print("\nlstm cell output:", h.shape, "cell state:", c.shape)

print("\nfinite-difference check of every operator (3 seeds):")
print(format_report(run_gradcheck(scope="ops", seeds=3)))
