"""Risk versus the number of looks: the empirical slope should sit near -1.

A small version of the full-scale check (n=64, m=16, k=4, 200 trials/cell).
Run: python3 demos/02_rate_in_looks.py
"""
from speckle_minimax import SweepConfig, fit_loglog_slope, run_sweep
from speckle_minimax.harness import OptimizerConfig

cfg = SweepConfig(
    m=[8], n=[32], L=[8, 16, 32, 64], k=[2], sigma_z=[0.1], trials=30, seed=3,
    optimizer=OptimizerConfig(restarts=2),
)
records = run_sweep(cfg)
print(f"{'L':>4} {'mean mse':>10} {'95% ci':>10} {'predicted':>10}")
for r in records:
    print(f"{r.L:>4} {r.mean_mse:>10.5f} {r.ci_half_width:>10.5f} {r.predicted_rate:>10.5f}")

slope, _, se = fit_loglog_slope([(r.L, r.mean_mse) for r in records])
print(f"log-log slope {slope:.2f} +- {se:.2f} (rate theory: -1)")
# predicted_rate carries no constant, so only its slope is comparable
