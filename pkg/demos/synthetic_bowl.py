"""Certify h(x) = |x|^2 - 1 for the linear maps x -> 0.5x and x -> 1.05x.

Runs in a few seconds. The contraction certifies; the expansion fails and
the reported counterexamples are re-checked by hand.
"""
import math

import numpy as np

from cbfcert.dynamics import Box
from cbfcert.probabilistic import certify_probabilistic
from cbfcert.verifier import ScalarField, VerifyConfig, certify, check_condition

h = ScalarField(lambda X: np.sum(X**2, axis=1) - 1.0, lambda X: 2 * X)
box = Box.cube(1.5, 2)
L_h = 2 * 1.5 * math.sqrt(2)  # max |grad h| on the box
cfg = VerifyConfig(alpha=0.5, alpha_bar=0.8, delta=0.01, threads=1)

for k in (0.5, 1.05):
    rep = certify(lambda X: k * X, h, box, cfg, L_h, k, prune_lip=L_h)
    print(f"f(x) = {k}x: {rep.verdict}, q = {len(rep.schedule) - 1}, N_tot = {rep.n_tot}, N_base = {rep.n_base}")
    if rep.counterexamples:
        C = np.array([c["state"] for c in rep.counterexamples])
        r = check_condition(lambda X: k * X, h, C, cfg.alpha, cfg.delta)
        print(f"  {len(C)} counterexamples, all violate the sampled condition: {bool(np.all(r > 0))}")

# same instance, sampled certificate with confidence (1 - theta)^q
ucfg = VerifyConfig(alpha=0.5, alpha_bar=0.8, delta=0.01, schedule="uniform", q=4)
prob = certify_probabilistic(lambda X: 0.5 * X, h, box, ucfg, 0.05, L_h, 0.5, prune_lip=L_h)
print(f"probabilistic: {prob.verdict} with confidence {prob.confidence:.4f}, samples per slab {prob.required_n}")
