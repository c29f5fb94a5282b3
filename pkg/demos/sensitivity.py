"""Log-sensitivity of controllers to structured dephasing.

For a handful of synthesized controllers, compares the analytic
log-sensitivity s_a with the smoothed mean-error estimate s_k and checks
one analytic value against a finite difference of the perturbed error.
"""
from ringdeph import (Budget, ObjectiveSpec, SamplerConfig, analytic_log_sensitivity,
                      analyze_population, delta_grid, generate_pool, perturbed_error,
                      synthesize_top)

pool = generate_pool(SamplerConfig(5, pool_target=300, batch_size=2048))
ctrls = synthesize_top((5, 1, 2), ObjectiveSpec("fidelity"), 8, Budget(restarts=40), seed=4)
records, skipped = analyze_population(ctrls, pool, delta_grid(1001))

print(f"{'e(T)':>10} {'s_a':>10} {'|s_k|':>10}")
for r in records:
    print(f"{r.nominal_error:10.3e} {r.s_a:10.4g} {abs(r.s_k):10.4g}")

c, op, h = ctrls[0], pool.operators[0], 1e-5
f0, f1, f2 = (perturbed_error(c, op, d) for d in (0.0, h, 2 * h))
fd = (-3 * f0 + 4 * f1 - f2) / (2 * h) / c.nominal_error
print(f"analytic {analytic_log_sensitivity(c, op, signed=True):.8g} vs finite difference {fd:.8g}")
