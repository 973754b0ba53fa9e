"""Adaptive control with maximum-likelihood updates.

The noiseless loop locks on immediately; the noisy single run below uses
fewer shots than the full study to keep the demo short (a few minutes).
Run: python3 demos/05_feedback_loop.py
"""
# %%
import math

import numpy as np

from purimetro import channels as chn
from purimetro import engine as eng
from purimetro import harness as hn
from purimetro import tasks as tk

truth = (math.pi / 4, math.pi / 6, math.pi / 6)
spec = tk.TaskSpec("multiparam-feedback", truth, 150, 1 / 300, "rotated-Bell")

for r in tk.run_feedback_loop(spec, None, eng.PurificationConfig(), 3, None, np.random.default_rng(0)):
    print(f"noiseless iteration {r.extra['iteration']}: gap {r.gap:.2e}")

# %%
noise = chn.NoiseModel.uniform("depolarizing", 0.005, 0.01, 0.025)
for method in ("none", "pvcp"):
    mode = "exact-branch-sum" if method == "pvcp" else "off"
    exp = hn.ExperimentSpec(spec, noise, eng.PurificationConfig(method, pec_mode=mode),
                            shots=10**4, trials=1, master_seed=5)
    recs = hn.run_feedback(exp, 5)
    print(method, " ".join(f"{r.gap:.3f}" for r in recs),
          "| prob gap", " ".join(f"{r.extra['prob_gap']:.3f}" for r in recs))
