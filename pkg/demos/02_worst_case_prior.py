"""Worst-case Gaussian prior for a Gaussian location model.

Data come from N(3, 2^2) with n = 100 and the reference prior is N(2, 4^2).
Candidate priors form a polytope in natural-parameter space given by four
vertices. The empirical divergence is a convex quadratic there, so its
maximum sits at a vertex and a handful of evaluations suffice.
"""

import numpy as np

import fdsense as fs

rng = np.random.default_rng(1)
n, sigma_l = 100, 2.0
x = rng.normal(3.0, sigma_l, size=n)
prior = fs.gaussian_family([2.0], [[16.0]])
post = fs.conjugate_posterior_from_natural(prior.lambda_pi, [[sigma_l ** 2]], [x.mean()], n)
samples = fs.SampleSet(post.sample(2000, rng))
ref_prior = fs.PrecomputedScores(prior.score_many(samples.draws))

q = fs.build_prior_only(samples, prior, ref_prior)
gamma = fs.PolytopeNeighborhood([[-2.5, -0.125], [-0.4, -0.02], [2.5, -0.125], [0.4, 0.02]])
res = fs.sensitivity_polytope(q, gamma)
print(f"vertex values: {np.round(fs.evaluate_many(q, gamma.vertices), 4).tolist()}")
mu, cov = fs.gaussian_moment_from_natural(res.sup_arg[:1], res.sup_arg[1:].reshape(1, 1))
print(f"worst case lambda = {res.sup_arg.tolist()}  ->  prior N({mu[0]:g}, {np.sqrt(cov[0, 0]):g}^2)")
print(f"sup = {res.sup_value:.4f}, inf = {res.inf_value:.2e}, sensitivity = {res.sensitivity:.4f}")

worst = fs.conjugate_posterior_from_natural(res.sup_arg, [[sigma_l ** 2]], [x.mean()], n)
print(f"closed form at the worst prior: FD={fs.fd_gaussian(post, worst):.4f}, "
      f"KL={fs.kl_gaussian(post, worst):.4f}, W2={fs.w2_gaussian(post, worst):.4f}")
