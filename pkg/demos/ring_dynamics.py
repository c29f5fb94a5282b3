"""Excitation transfer on a biased 5-ring, coherent and dephased.

Prints the fidelity at the output node on a time grid for three routes:
direct unitary propagation, the spectral projector solution and the
Gell-Mann LTI exponential.  Under dephasing the last two still agree and
the purity decays monotonically.
"""
import numpy as np
import scipy.linalg

from ringdeph import (basis_state, build_lti_rates, density_matrix, evolve_lti, evolve_projector,
                      fidelity, rates_from_dephasing_operator, ring_hamiltonian,
                      spectral_decompose)

D = np.array([0.0, 3.1, 7.4, 1.2, 5.0])
H = ring_hamiltonian(D)
model = spectral_decompose(H)
print("energies:", np.round(model.energies, 4))

rho_in = density_matrix(basis_state(5, 1))
rho_out = density_matrix(basis_state(5, 3))
gamma = rates_from_dephasing_operator(model, [0.0, 0.3, 0.1, 0.5, 0.2])
sys = build_lti_rates(model, gamma, rho_out)
r0 = sys.vectorize(rho_in)

print(f"{'t':>6} {'F unitary':>10} {'F proj':>10} {'F deph':>10} {'F lti':>10} {'purity':>8}")
for t in np.linspace(0, 20, 11):
    U = scipy.linalg.expm(-1j * H * t)
    F_u = fidelity(U @ rho_in @ U.conj().T, rho_out)
    F_p = fidelity(evolve_projector(model, rho_in, None, t), rho_out)
    rho = evolve_projector(model, rho_in, gamma, t)
    F_d = fidelity(rho, rho_out)
    F_l = sys.c_out @ evolve_lti(sys, r0, t)
    print(f"{t:6.1f} {F_u:10.6f} {F_p:10.6f} {F_d:10.6f} {F_l:10.6f} {np.trace(rho @ rho).real:8.5f}")
