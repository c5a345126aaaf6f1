"""Sensitivity to the learning rate of a generalised posterior.

When only the weight on the loss moves within eps of its reference value,
the worst-case divergence is eps^2 times the mean squared loss-gradient norm.
The general box machinery gives the same number.
"""

import numpy as np

import fdsense as fs

rng = np.random.default_rng(2)
theta = rng.normal(size=(1000, 3))
grad_l = theta * np.array([1.0, 2.0, 0.5]) + 0.3  # gradient of a quadratic loss at each draw
loss = fs.LinearLoss.from_values([grad_l], [1.0])
q = fs.build_loss_only(fs.SampleSet(theta), loss, [1.0])
norms = np.sum(grad_l * grad_l, axis=1)
for eps in (0.01, 0.05, 0.1, 0.2):
    box = fs.sensitivity_box(q, fs.BoxNeighborhood([1 - eps], [1 + eps])).sensitivity
    print(f"eps={eps:<5} formula={fs.learning_rate_sensitivity(norms, eps):.6f}  box={box:.6f}")
