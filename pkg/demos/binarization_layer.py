"""
The binarization layer
======================

A code bit is the sigmoid of a real activation rounded to {0, 1}. The
rounding has zero gradient almost everywhere, so the backward pass
pretends it never happened and propagates through the sigmoid alone.
This script shows both halves, then trains a single document vector
through the layer to show that the surrogate gradient actually learns.
"""

import numpy as np

from bpv.models import binarize_forward, binarize_backward, full_candidates, _restricted_softmax

# Forward: sigmoid then round half-up. An activation of exactly 0 sits at
# sigmoid 0.5 and rounds to 1.
x = np.array([-3.0, -0.2, 0.0, 0.2, 3.0])
bits, s = binarize_forward(x)
print("inputs:         ", x)
print("sigmoids:       ", np.round(s, 3))
print("bits:           ", bits)

# Backward: for a loss gradient g at the bits, the input gradient is
# g * s * (1 - s), exactly as if the output had been the raw sigmoid.
g = np.ones_like(x)
print("input gradients:", np.round(binarize_backward(g, s), 4))

# The saturation story is visible above: far from zero the sigmoid is
# flat and the gradient vanishes, near zero the bit is undecided and the
# gradient is largest.

# Now a miniature learning problem: one document vector, a 12-word
# vocabulary, and a full softmax predicting word 7 from the binarized
# vector. Plain gradient descent through the surrogate.
rng = np.random.default_rng(0)
V, d = 12, 8
W = rng.standard_normal((V, d)) * 0.3
b = np.zeros(V)
v = rng.uniform(-0.5 / d, 0.5 / d, size=d)
target = 7
ids, corrections = full_candidates(V, target)

print("\nstep  loss    bits")
for step in range(60):
    code, s = binarize_forward(v)
    loss, grad_entries, grad_code = _restricted_softmax(
        code.astype(np.float64), ids, corrections, W, b
    )
    v -= 0.5 * binarize_backward(grad_code, s)
    W[ids] -= 0.5 * grad_entries[:, None] * code[None, :]
    b[ids] -= 0.5 * grad_entries
    if step % 10 == 0 or step == 59:
        print(f"{step:4d}  {loss:.4f}  {''.join(map(str, code))}")

print("\nthe loss falls even though every forward pass saw only 0/1 bits")
