"""Unitary and dephasing dynamics.

Two independent propagators live here.  The projector solution writes the
state as a sum of eigenspace blocks ``Π_k ρ0 Π_l`` each rotating at
``ω_kl`` and decaying at ``γ_kl``.  The LTI form expands the density matrix
(in the Hamiltonian eigenbasis) in an orthonormal generalized Gell-Mann
basis and propagates the real coefficient vector with a matrix exponential.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .ring import SpectralModel


def _check_rates(gamma: np.ndarray, size: int) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (size, size):
        raise ValueError(f"rate matrix must be {size}x{size}, got {gamma.shape}")
    if not np.allclose(gamma, gamma.T, atol=1e-14):
        raise ValueError("rate matrix is not symmetric")
    if np.any(np.diag(gamma) != 0):
        raise ValueError("rate matrix must have a zero diagonal")
    if np.any(gamma < 0):
        raise ValueError("rates must be nonnegative")
    return gamma


def rates_from_dephasing_operator(model: SpectralModel, c: Sequence[float]) -> np.ndarray:
    """Dephasing rates ``(c_k - c_l)**2 / 2`` for ``V = Σ c_k Π_k``."""
    c = np.asarray(c, dtype=float)
    if c.shape != (model.n_levels,):
        raise ValueError(f"need one eigenvalue per projector ({model.n_levels}), got {c.size}")
    return 0.5 * (c[:, None] - c[None, :]) ** 2


def _blocks(model: SpectralModel, rho0: np.ndarray) -> np.ndarray:
    # B[k, l] = Π_k ρ0 Π_l
    left = np.einsum("kab,bc->kac", model.projectors, rho0)
    return np.einsum("kac,lcd->klad", left, model.projectors)


def evolve_projector(model: SpectralModel, rho0: np.ndarray, gamma: np.ndarray | None,
                     t: float) -> np.ndarray:
    """Closed-form state at time ``t`` under dephasing in the Hamiltonian basis."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    G = model.n_levels
    gamma = np.zeros((G, G)) if gamma is None else _check_rates(gamma, G)
    factor = np.exp(-t * (1j * model.frequencies + gamma))
    return np.einsum("kl,klad->ad", factor, _blocks(model, np.asarray(rho0, dtype=complex)))


def steady_state(model: SpectralModel, rho0: np.ndarray) -> np.ndarray:
    """Decoherent limit ``Σ_k Π_k ρ0 Π_k`` (all off-diagonal rates positive)."""
    rho0 = np.asarray(rho0, dtype=complex)
    return np.einsum("kab,bc,kcd->ad", model.projectors, rho0, model.projectors)


def transfer_weights(model: SpectralModel, psi_in: np.ndarray, psi_out: np.ndarray) -> np.ndarray:
    """``M[k, l] = Tr(ρ_out Π_k ρ_in Π_l)`` for pure input and output states.

    Any fidelity in the projector picture is ``Re Σ_kl exp(-t(jω_kl + γ_kl)) M[k, l]``.
    """
    a = np.einsum("i,kij,j->k", psi_out.conj(), model.projectors, psi_in)
    return a[:, None] * a.conj()[None, :]


def transfer_fidelity(model: SpectralModel, psi_in: np.ndarray, psi_out: np.ndarray,
                      t: float, gamma: np.ndarray | None = None) -> float:
    M = transfer_weights(model, psi_in, psi_out)
    expo = 1j * model.frequencies
    if gamma is not None:
        expo = expo + _check_rates(gamma, model.n_levels)
    return float(np.sum(np.exp(-t * expo) * M).real)


def pair_terms(model: SpectralModel, psi_in: np.ndarray, psi_out: np.ndarray,
               t: float) -> tuple[float, np.ndarray]:
    """Split the transfer fidelity into a static part and per-pair weights.

    With ``w = pair_terms(...)[1]`` the fidelity under rates ``γ`` is
    ``static + Σ_p w[p] * exp(-t γ_p)``, where ``p`` runs over the strict
    lower triangle ``(k > l)`` in row-major order.  ``static`` is the
    steady-state overlap.
    """
    M = transfer_weights(model, psi_in, psi_out)
    rows, cols = np.tril_indices(model.n_levels, -1)
    phase = np.exp(-1j * t * model.frequencies[rows, cols])
    w = 2.0 * (phase * M[rows, cols]).real
    return float(np.trace(M).real), w


def fidelity(rho: np.ndarray, rho_out: np.ndarray) -> float:
    """Overlap ``Tr(ρ_out ρ)``; the fidelity error is ``1 - fidelity``."""
    return float(np.einsum("ij,ji->", rho_out, rho).real)


def gellmann_basis(N: int) -> np.ndarray:
    """Orthonormal Hermitian basis of ``N x N`` matrices, shape ``(N**2, N, N)``.

    Ordering: symmetric pairs ``(j, k)`` with ``j < k`` in lexicographic order,
    then antisymmetric pairs in the same order, then the ``N - 1`` diagonal
    matrices, and finally ``I / sqrt(N)``.
    """
    pairs = [(j, k) for j in range(N) for k in range(j + 1, N)]
    out = []
    for j, k in pairs:
        m = np.zeros((N, N), dtype=complex)
        m[j, k] = m[k, j] = 1 / np.sqrt(2)
        out.append(m)
    for j, k in pairs:
        m = np.zeros((N, N), dtype=complex)
        m[j, k] = -1j / np.sqrt(2)
        m[k, j] = 1j / np.sqrt(2)
        out.append(m)
    for l in range(1, N):
        d = np.zeros(N)
        d[:l] = 1
        d[l] = -l
        out.append(np.diag(d / np.sqrt(l * (l + 1))).astype(complex))
    out.append(np.eye(N, dtype=complex) / np.sqrt(N))
    return np.stack(out)


def vectorize(rho: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.einsum("ab,kba->k", rho, basis).real


def devectorize(r: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.einsum("k,kab->ab", r, basis)


def dephasing_superoperator(gamma: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> -γ ∘ X`` (entrywise damping) in ``basis``."""
    S = -np.einsum("mab,nba,ba->mn", basis, basis, gamma)
    return S.real


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """Vectorized dynamics ``dr/dt = (A + L) r`` in the Hamiltonian eigenbasis.

    ``frame`` holds the eigenvectors used to rotate density matrices into the
    eigenbasis before expansion in ``basis``.
    """

    A: np.ndarray
    L: np.ndarray
    basis: np.ndarray
    frame: np.ndarray
    c_out: np.ndarray | None = None

    @property
    def generator(self) -> np.ndarray:
        return self.A + self.L

    def vectorize(self, rho: np.ndarray) -> np.ndarray:
        U = self.frame
        return vectorize(U.conj().T @ rho @ U, self.basis)

    def devectorize(self, r: np.ndarray) -> np.ndarray:
        U = self.frame
        return U @ devectorize(r, self.basis) @ U.conj().T

    def with_dephasing(self, L: np.ndarray) -> "LtiSystem":
        return LtiSystem(self.A, L, self.basis, self.frame, self.c_out)


def _liouville_matrix(energies: np.ndarray, basis: np.ndarray) -> np.ndarray:
    # A_kl = Tr(j Λ [σ_k, σ_l])
    Ls = np.einsum("a,kab->kab", energies, basis)
    t1 = np.einsum("kab,lba->kl", Ls, basis)  # Tr(Λ σ_k σ_l)
    return (1j * (t1 - t1.T)).real


def build_lti(model: SpectralModel, c: Sequence[float] | None = None,
              rho_out: np.ndarray | None = None) -> LtiSystem:
    """LTI system for Hamiltonian dynamics plus dephasing ``V = Σ c_k Π_k``.

    ``c`` holds one value per projector group (``None`` means no dephasing).
    """
    N = model.dim
    basis = gellmann_basis(N)
    A = _liouville_matrix(model.energies, basis)
    if c is None:
        L = np.zeros_like(A)
    else:
        c = np.asarray(c, dtype=float)
        if c.shape != (model.n_levels,):
            raise ValueError(f"need one eigenvalue per projector ({model.n_levels}), got {c.size}")
        cd = c[model.membership]
        CsC = np.einsum("a,kab,b,lba->kl", cd, basis, cd, basis)
        C2s = np.einsum("a,kab,lba->kl", cd ** 2, basis, basis)
        L = (CsC - 0.5 * (C2s + C2s.T)).real
    sys = LtiSystem(A, L, basis, model.eigenvectors)
    if rho_out is not None:
        sys = LtiSystem(A, L, basis, model.eigenvectors, sys.vectorize(rho_out))
    return sys


def build_lti_rates(model: SpectralModel, gamma: np.ndarray | None,
                    rho_out: np.ndarray | None = None) -> LtiSystem:
    """LTI system whose dephasing part is an explicit N x N rate table.

    Rates are indexed against individual eigenvectors (``model.eigenvectors``
    columns), which is how sampled dephasing operators are applied.
    """
    sys = build_lti(model, None, rho_out)
    if gamma is None:
        return sys
    gamma = _check_rates(gamma, model.dim)
    return sys.with_dephasing(dephasing_superoperator(gamma, sys.basis))


def propagator(M: np.ndarray, t: float) -> np.ndarray:
    """``exp(t M)`` for a real generator.

    Normal generators (the usual case, since the Liouville and dephasing parts
    commute) go through a unitary complex Schur form; anything else falls back
    to scaling-and-squaring.
    """
    if t == 0:
        return np.eye(M.shape[0])
    Tm, Z = scipy.linalg.schur(M, output="complex")
    off = np.abs(np.triu(Tm, 1)).max() if M.shape[0] > 1 else 0.0
    scale = max(np.abs(M).max(), 1.0)
    if off <= 1e-12 * scale:
        E = (Z * np.exp(t * np.diag(Tm))) @ Z.conj().T
        return E.real
    E = scipy.linalg.expm(t * M)
    if not np.all(np.isfinite(E)):
        raise FloatingPointError("matrix exponential did not converge")
    return E


def evolve_lti(sys: LtiSystem, r0: np.ndarray, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be nonnegative")
    r0 = np.asarray(r0, dtype=float)
    if t == 0:
        return r0.copy()
    return propagator(sys.generator, t) @ r0


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, N, N)
    rho_out: np.ndarray | None = None

    @property
    def purity(self) -> np.ndarray:
        return np.einsum("tab,tba->t", self.states, self.states).real

    @property
    def fidelity(self) -> np.ndarray:
        if self.rho_out is None:
            raise ValueError("trajectory has no target state")
        return np.einsum("ab,tba->t", self.rho_out, self.states).real

    def to_csv(self, path) -> None:
        F = self.fidelity
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "F", "e", "purity"])
            for row in zip(self.times, F, 1 - F, self.purity):
                w.writerow([repr(float(v)) for v in row])


def trajectory(model: SpectralModel, rho0: np.ndarray, gamma: np.ndarray | None,
               times: Sequence[float], rho_out: np.ndarray | None = None) -> Trajectory:
    """Sample the projector solution on a caller-provided time grid."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    G = model.n_levels
    gamma = np.zeros((G, G)) if gamma is None else _check_rates(gamma, G)
    B = _blocks(model, np.asarray(rho0, dtype=complex))
    factors = np.exp(-times[:, None, None] * (1j * model.frequencies + gamma)[None])
    states = np.einsum("tkl,klad->tad", factors, B)
    return Trajectory(times, states, rho_out)
