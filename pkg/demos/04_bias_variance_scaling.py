"""Analytic bias and variance of the estimator as the encoding count grows.

Run: python3 demos/04_bias_variance_scaling.py
"""
# %%
from purimetro import analysis as an

grid = [1, 10, 30, 100, 300, 1000, 3000, 10000]
pts = an.scaling_scan(gate_p=0.001, cswap_p=0.05, N_grid=grid)
series = {}
for p in pts:
    series.setdefault((p.method, p.m, p.L), {})[p.N] = p

header = "     N " + "".join(f"{f'{k[0]} m{k[1]} L{k[2]}':>18}" for k in sorted(series))
print("bias^2 + variance")
print(header)
for N in grid:
    row = "".join(
        f"{series[k][N].bias_sq + series[k][N].variance:18.3e}" if N in series[k] else f"{'-':>18}"
        for k in sorted(series))
    print(f"{N:6d} {row}")
