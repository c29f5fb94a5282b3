"""Energy-landscape controllers for the 1 -> 2 transfer on a 5-ring.

Optimizes static biases and readout time for the fidelity and the
overlap objectives, then classifies the overlap controllers by whether
their input and output states form an orthogonal eigenvector pair.
"""
from ringdeph import Budget, ObjectiveSpec, classify_orthogonal_pair, synthesize, synthesize_top

best = synthesize((5, 1, 2), ObjectiveSpec("fidelity"), Budget(restarts=30), seed=1)
print(f"fidelity: e(T)={best.nominal_error:.3e} T={best.spec.T:.4f} D={[round(d, 3) for d in best.spec.D]}")

pop = synthesize_top((5, 1, 2), ObjectiveSpec("overlap", alpha=0.5), 20, Budget(restarts=40), seed=2)
flags = [classify_orthogonal_pair(c).is_orthogonal_pair for c in pop]
print(f"overlap: {len(pop)} controllers, best objective {max(c.achieved_objective for c in pop):.6f} "
      f"(cap 0.75), orthogonal pairs {sum(flags)}/{len(flags)}")
