"""Fresh operators per look versus one operator reused for every look.

With a shared operator extra looks only average speckle; the error settles on
a floor set by the single operator. Run: python3 demos/04_varying_vs_shared.py
"""
from speckle_minimax import SweepConfig, compare_varying_unvarying
from speckle_minimax.harness import OptimizerConfig

cfg = SweepConfig(
    m=[8], n=[32], L=[4, 16, 64, 256], k=[2], sigma_z=[0.05], trials=20, seed=5,
    optimizer=OptimizerConfig(restarts=2),
)
rep = compare_varying_unvarying(cfg)
print(f"{'L':>4} {'fresh':>10} {'shared':>10}")
for L, a, b in zip(rep.L, rep.varying, rep.unvarying):
    print(f"{L:>4} {a.mean_mse:>10.5f} {b.mean_mse:>10.5f}")
print("shared-operator curve stalls at L =", rep.plateau_L)
