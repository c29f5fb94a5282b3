"""Rank and linear correlation tests used for the robustness trends."""
import numpy as np

from ringdeph import kendall_tau, kendall_test, pearson_r, pearson_test

rng = np.random.default_rng(0)
e = np.logspace(-6, -1, 100)
s = 0.4 / e * np.exp(rng.normal(scale=0.5, size=100))

tau = kendall_tau(s, s * (1 + 0.01 * rng.normal(size=100)))
k = kendall_test(tau, 100, "right")
print(f"Kendall tau={tau:.4f} Z={k.statistic:.3f} p={k.p:.3g}")

r = pearson_r(np.log10(s), np.log10(e))
p = pearson_test(r, 100, "left")
print(f"Pearson r={r:.4f} t={p.statistic:.3f} p={p.p:.3g}")

print("reference points: Z(tau=1, n=100) =", round(kendall_test(1.0, 100).statistic, 4),
      " t(r=-0.9723, n=100) =", round(pearson_test(-0.9723, 100).statistic, 3))
