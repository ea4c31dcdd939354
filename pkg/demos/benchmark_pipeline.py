"""Train, verify and simulate on the annular benchmark.

Takes a few minutes on one core: training on 5000 samples, a count-only
pass over three alpha_bar values, then a full check at alpha_bar = 0.8 and
100 closed-loop rollouts from S(gamma_hat).
"""
import numpy as np

from cbfcert.cli import sample_sublevel, simulate_summary
from cbfcert.dynamics import benchmark_system
from cbfcert.synthesis import SynthConfig, train
from cbfcert.verifier import VerifyConfig, verify

sys_ = benchmark_system()
res = train(sys_, SynthConfig(n_samples=5000, seed=0))
model = res.model
print("last training row:", {k: res.log[-1][k] for k in ("loss", "decay_violations", "safe_positive", "unsafe_nonpositive")})

for ab in (0.4, 0.6, 0.8):
    rep = verify(sys_, model.controller, model.h_net, VerifyConfig(alpha_bar=ab, count_only=True))
    print(f"alpha_bar={ab}: q={len(rep.schedule) - 1} gamma_hat={rep.gamma_hat:.5f} N_tot={rep.n_tot} N_base={rep.n_base}")

rep = verify(sys_, model.controller, model.h_net, VerifyConfig(alpha_bar=0.8))
print(f"full check: {rep.verdict}, {rep.n_violations} violating grid points, box clipped: {rep.box_clipped}")
for note in rep.notes:
    print(" note:", note)

X0 = sample_sublevel(model.h, sys_.verify_box, rep.gamma_hat, 100, np.random.default_rng(0))
print("rollouts:", simulate_summary(sys_, model, X0, 300))
