"""Directional derivative of the divergence in hyperparameter space.

At the reference prior the divergence is zero and so is its slope. Away from
it the slope along a unit direction matches the gradient of the quadratic
form and a finite-difference check.
"""

import numpy as np

import fdsense as fs

rng = np.random.default_rng(5)
X = rng.normal(1.0, 0.5, size=(1000, 1))
prior = fs.gaussian_family([0.0], [[4.0]])
ref = fs.PrecomputedScores(prior.score_many(X))
samples = fs.SampleSet(X)
jac = fs.ScoreJacobianField.from_expfam(prior)
q = fs.build_prior_only(samples, prior, ref)
v = np.array([0.6, -0.8])

for t in (0.0, 0.1, 0.3):
    lam = prior.lambda_pi + t * v
    cand = fs.PrecomputedScores(prior.score_many(X, lam=lam))
    d = fs.directional_derivative(samples, ref, cand, jac, v)
    print(f"t={t:.1f}  FD={fs.evaluate(q, lam):.6f}  slope={d:+.6f}  v.grad q={v @ q.gradient(lam):+.6f}")
