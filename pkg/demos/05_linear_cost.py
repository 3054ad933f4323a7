"""
Why a measure-valued network scales linearly
============================================

An MVNN reads the population through one averaged embedding, so a drift
evaluation for all N particles costs O(N).  An explicit pairwise kernel
sum costs O(N^2).
"""

import time

import numpy as np

from meanfield.dynamics import GaussianKernel, ParticleState, pairwise_drift
from meanfield.mvnn import MvnnModel, mvnn_drift_all


def best_time(fn, repeats=3):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


model = MvnnModel.create(1, k=16, emb_hidden=(32, 32), int_hidden=(64, 64), seed=0)
kernel = GaussianKernel(0.5)
rng = np.random.default_rng(0)
print("     N    MVNN [ms]  pairwise [ms]")
for N in (512, 1024, 2048, 4096, 8192):
    state = ParticleState(rng.normal(size=(N, 1)))
    t_mvnn = best_time(lambda: mvnn_drift_all(model, state))
    t_pair = best_time(lambda: pairwise_drift(state, kernel))
    print(f"{N:6d}  {1e3 * t_mvnn:10.2f}  {1e3 * t_pair:13.2f}")
