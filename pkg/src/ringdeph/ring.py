"""Spin-ring Hamiltonians in the single-excitation subspace.

The ring Hamiltonian has the control biases ``D`` on its diagonal and a
uniform coupling ``J`` between neighbouring sites, including the wrap-around
pair ``(1, N)``.  Nodes are numbered from 1 to match the usual physics
convention; arrays are indexed from 0 internally.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RingSpec:
    """A controlled ring: size, coupling, biases, readout time and transfer.

    ``J`` is stored as a scalar; every ring considered here is uniformly
    coupled.
    """

    N: int
    D: tuple[float, ...]
    T: float
    in_node: int = 1
    out_node: int = 2
    J: float = 1.0
    allow_self_transfer: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "D", tuple(float(d) for d in self.D))
        if int(self.N) != self.N or self.N < 3:
            raise ValueError(f"ring size must be an integer >= 3, got {self.N}")
        if len(self.D) != self.N:
            raise ValueError(f"expected {self.N} biases, got {len(self.D)}")
        bad = [k + 1 for k, d in enumerate(self.D) if not np.isfinite(d)]
        if bad:
            raise ValueError(f"non-finite control bias at node(s) {bad}")
        if not np.isfinite(self.J):
            raise ValueError("coupling J must be finite")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"readout time must be positive, got {self.T}")
        for name, node in (("in_node", self.in_node), ("out_node", self.out_node)):
            if not 1 <= node <= self.N:
                raise ValueError(f"{name}={node} outside [1, {self.N}]")
        if self.in_node == self.out_node and not self.allow_self_transfer:
            raise ValueError("in_node and out_node coincide")

    def to_dict(self) -> dict:
        return {"N": self.N, "J": self.J, "D": list(self.D), "T": self.T,
                "in": self.in_node, "out": self.out_node}

    @classmethod
    def from_dict(cls, d: dict) -> "RingSpec":
        return cls(N=int(d["N"]), J=float(d.get("J", 1.0)), D=d["D"],
                   T=float(d["T"]), in_node=int(d["in"]), out_node=int(d["out"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RingSpec":
        return cls.from_dict(json.loads(text))


def ring_hamiltonian(D: Sequence[float], J: float = 1.0) -> np.ndarray:
    """Ring Hamiltonian for biases ``D`` and uniform coupling ``J``."""
    D = np.asarray(D, dtype=float)
    N = D.size
    if not np.all(np.isfinite(D)):
        raise ValueError("non-finite control bias")
    H = np.diag(D)
    k = np.arange(N)
    H[k, (k + 1) % N] = J
    H[(k + 1) % N, k] = J
    return H


def build_hamiltonian(spec: RingSpec) -> np.ndarray:
    return ring_hamiltonian(spec.D, spec.J)


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Eigenstructure of a Hermitian Hamiltonian.

    Attributes
    ----------
    levels : (G,) array
        Distinct eigenvalues, ascending.
    projectors : (G, N, N) array
        Orthogonal projector onto each eigenspace, in ``levels`` order.
    energies : (N,) array
        All eigenvalues with multiplicity, ascending.
    eigenvectors : (N, N) array
        Columns are orthonormal eigenvectors matching ``energies``.
    membership : (N,) int array
        Index into ``levels`` of the eigenspace holding each eigenvector.
    """

    levels: np.ndarray
    projectors: np.ndarray
    energies: np.ndarray
    eigenvectors: np.ndarray
    membership: np.ndarray

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def n_levels(self) -> int:
        return self.levels.size

    @property
    def frequencies(self) -> np.ndarray:
        """Transition frequencies ``levels[k] - levels[l]`` (hbar = 1)."""
        return self.levels[:, None] - self.levels[None, :]

    @property
    def ranks(self) -> np.ndarray:
        return np.rint(np.einsum("kii->k", self.projectors).real).astype(int)

    def hamiltonian(self) -> np.ndarray:
        return np.einsum("k,kij->ij", self.levels, self.projectors)

    def resolved(self) -> "SpectralModel":
        """Same spectrum with one rank-1 projector per eigenvector.

        Sampled dephasing rate matrices are N x N and are indexed against
        individual eigenvectors, so they need this view even when the
        spectrum is degenerate.
        """
        V = self.eigenvectors
        P = np.einsum("ik,jk->kij", V, V.conj())
        return SpectralModel(self.energies.copy(), P, self.energies, V,
                             np.arange(self.dim))


def spectral_decompose(H: np.ndarray, degeneracy_tol: float | None = None,
                       merge: bool = True) -> SpectralModel:
    """Eigen-decompose ``H`` and group degenerate eigenvalues into projectors.

    Eigenvalues closer than ``degeneracy_tol`` (default ``1e-10 * max|λ|``)
    to their predecessor share one projector.  With ``merge=False`` every
    eigenvector keeps its own rank-1 projector.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if not np.allclose(H, H.conj().T, atol=1e-12, rtol=0):
        raise ValueError("Hamiltonian is not Hermitian")
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigensolver failed: {exc}") from exc
    if degeneracy_tol is None:
        degeneracy_tol = 1e-10 * max(np.abs(w).max(), 1.0)

    if merge:
        groups = [[0]]
        for k in range(1, w.size):
            if w[k] - w[groups[-1][-1]] <= degeneracy_tol:
                groups[-1].append(k)
            else:
                groups.append([k])
    else:
        groups = [[k] for k in range(w.size)]

    levels = np.array([w[g].mean() for g in groups])
    P = np.stack([V[:, g] @ V[:, g].conj().T for g in groups])
    if np.isrealobj(H):
        P = P.real
    membership = np.concatenate([[i] * len(g) for i, g in enumerate(groups)])
    return SpectralModel(levels, P, w, V, membership)


def basis_state(N: int, node: int) -> np.ndarray:
    """Excitation localised on ``node`` (1-based)."""
    if not 1 <= node <= N:
        raise ValueError(f"node {node} outside [1, {N}]")
    psi = np.zeros(N, dtype=complex)
    psi[node - 1] = 1.0
    return psi


def density_matrix(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    norm = np.vdot(psi, psi).real
    if not np.isclose(norm, 1.0, atol=1e-10):
        raise ValueError(f"state is not normalised (norm^2 = {norm})")
    return np.outer(psi, psi.conj())


def is_density_matrix(rho: np.ndarray, atol: float = 1e-10) -> bool:
    rho = np.asarray(rho)
    if not np.allclose(rho, rho.conj().T, atol=atol):
        return False
    if abs(np.trace(rho) - 1) > atol:
        return False
    return np.linalg.eigvalsh(rho).min() >= -atol
