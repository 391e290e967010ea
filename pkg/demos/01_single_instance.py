"""Draw one multilook instance and recover the signal by projected ascent.

Run: python3 demos/01_single_instance.py
"""
import numpy as np

from speckle_minimax import (
    generate_instance,
    log_likelihood,
    make_signal,
    mle_projected_ascent,
    mse,
)

n, m, L, sigma_z, k = 32, 8, 64, 0.1, 3
x_min, x_max = 0.25, 2.0

# a three-piece scene: dark, bright, medium
x_o = make_signal(np.repeat([0.5, 1.8, 1.0], [10, 12, 10]), x_min, x_max, k_budget=k)

# every look gets its own Gaussian operator and its own speckle draw
inst, obs = generate_instance(seed=7, m=m, n=n, L=L, sigma_z=sigma_z, x_o=x_o)
print(f"{L} looks, each y_l in R^{m}; signal length {n}")

x_hat, info = mle_projected_ascent(inst, obs, k, x_min, x_max, full_output=True)
print("estimate  :", np.round(x_hat.values, 2))
print("truth     :", np.round(x_o.values, 2))
print(f"mse       : {mse(x_hat, x_o):.4g}")
print(f"loglik    : estimate {info.loglik:.2f}, truth {log_likelihood(x_o, inst, obs):.2f}")

