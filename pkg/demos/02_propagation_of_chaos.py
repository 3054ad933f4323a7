"""
Propagation of chaos, measured
==============================

As the particle count grows, the empirical measure of an interacting system
approaches a deterministic law.  We estimate this by simulating independent
systems of increasing size from one fixed initial law and measuring the
terminal W2 distance to a large reference run.
"""

from meanfield.config import ExperimentConfig
from meanfield import pipeline

cfg = ExperimentConfig.from_dict({
    "system": {"order": 1, "d": 1, "drift_form": "motsch_tadmor",
               "kernel": {"kind": "gaussian", "length": 0.5}, "sigma": 0.0},
    "init": {"position": [{"kind": "gaussian_mixture"}]},
    "N": 512, "L": 100, "dt": 0.01,
    "eval": {"chaos": {"ladder": [32, 128, 512, 2048], "n_rep": 10}},
    "seed": 5,
})

# %%
# Ground truth first.  The reference row is zero by construction.
for row in pipeline.chaos(cfg):
    print(f"N={row['N']:5d}  mean terminal W2 {row['mean_w2']:.4f}")

# %%
# The same diagnostic accepts a learned model; see ``01_motsch_tadmor.py`` for
# training one, then call ``pipeline.chaos(cfg, model)``.
