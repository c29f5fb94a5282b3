"""Energy-landscape controller synthesis.

A controller is a bias vector ``D`` plus a readout time ``T``.  Three
objectives are supported:

``fidelity``
    transfer fidelity under unitary dynamics;
``overlap``
    ``α F(T) + (1 - α) Tr(ρ_∞ ρ_out)``, mixing coherent and steady-state transfer;
``dephasing``
    transfer fidelity averaged over a draw of sampled dephasing processes.

Search runs L-BFGS-B from many starting points with central-difference
gradients over ``(D, log T)``.
"""
from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .dynamics import pair_terms
from .ring import RingSpec, SpectralModel, basis_state, ring_hamiltonian, spectral_decompose
from .sampler import DephasingPool

log = logging.getLogger(__name__)

OBJECTIVES = ("fidelity", "dephasing", "overlap")


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str = "fidelity"
    alpha: float = 0.5
    count: int = 1000

    def __post_init__(self):
        if self.kind not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.kind!r}; expected one of {OBJECTIVES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.count < 1:
            raise ValueError("count must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SearchBounds:
    d_min: float = 0.0
    d_max: float = 10.0
    t_min: float = 1e-2
    t_max: float = 70.0

    def __post_init__(self):
        if not (self.d_min < self.d_max and 0 < self.t_min < self.t_max):
            raise ValueError(f"invalid search bounds {self}")

    def as_list(self, N: int) -> list[tuple[float, float]]:
        return [(self.d_min, self.d_max)] * N + [(np.log(self.t_min), np.log(self.t_max))]


@dataclass(frozen=True)
class Budget:
    restarts: int = 200
    maxiter: int = 500
    ftol: float = 1e-15
    gtol: float = 1e-12
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.restarts < 1 or self.maxiter < 1:
            raise ValueError("budget must be positive")


@dataclass(frozen=True, eq=False)
class Controller:
    spec: RingSpec
    objective: ObjectiveSpec
    nominal_error: float
    achieved_objective: float
    restart: int = 0
    restarts_used: int = 1
    converged: bool = True
    provenance: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, Controller):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    @property
    def psi_in(self) -> np.ndarray:
        return basis_state(self.spec.N, self.spec.in_node)

    @property
    def psi_out(self) -> np.ndarray:
        return basis_state(self.spec.N, self.spec.out_node)

    def model(self, merge: bool = True) -> SpectralModel:
        return spec_model(self.spec, merge)

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "objective": self.objective.to_dict(),
                "nominal_error": self.nominal_error,
                "achieved_objective": self.achieved_objective,
                "restart": self.restart, "restarts_used": self.restarts_used,
                "converged": self.converged, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> "Controller":
        return cls(RingSpec.from_dict(d["spec"]), ObjectiveSpec(**d["objective"]),
                   float(d["nominal_error"]), float(d["achieved_objective"]),
                   int(d.get("restart", 0)), int(d.get("restarts_used", 1)),
                   bool(d.get("converged", True)), d.get("provenance", {}))


def save_controllers(controllers: Sequence[Controller], path) -> None:
    with Path(path).open("w") as fh:
        for c in controllers:
            fh.write(json.dumps(c.to_dict(), sort_keys=True) + "\n")


def load_controllers(path) -> list[Controller]:
    lines = Path(path).read_text().splitlines()
    return [Controller.from_dict(json.loads(line)) for line in lines if line.strip()]


def transfer_objective(model: SpectralModel, psi_in: np.ndarray, psi_out: np.ndarray,
                       T: float, obj: ObjectiveSpec, rates_lower: np.ndarray | None = None) -> float:
    """Objective value for an arbitrary Hamiltonian and pure input/output pair.

    ``rates_lower`` holds one row of strict-lower-triangle rates per sampled
    dephasing process (required for ``obj.kind == "dephasing"``); they are
    applied against the individual eigenvectors of ``model``.
    """
    if obj.kind == "dephasing":
        if rates_lower is None:
            raise ValueError("the dephasing objective needs a dephasing pool")
        static, w = pair_terms(model.resolved(), psi_in, psi_out, T)
        return float(np.mean(static + np.exp(-T * rates_lower) @ w))
    static, w = pair_terms(model, psi_in, psi_out, T)
    coherent = static + w.sum()
    if obj.kind == "fidelity":
        return float(coherent)
    return float(obj.alpha * coherent + (1 - obj.alpha) * static)


def _pool_rates(obj: ObjectiveSpec, pool: DephasingPool | None) -> np.ndarray | None:
    if obj.kind != "dephasing":
        if pool is not None:
            raise ValueError(f"a dephasing pool was supplied for the {obj.kind!r} objective")
        return None
    if pool is None:
        raise ValueError("the dephasing objective needs a dephasing pool")
    if len(pool) < obj.count:
        raise ValueError(f"pool holds {len(pool)} operators, objective needs {obj.count}")
    return pool.lower_matrix()[: obj.count]


def spec_model(spec: RingSpec, merge: bool = True) -> SpectralModel:
    return spectral_decompose(ring_hamiltonian(spec.D, spec.J), merge=merge)


def objective_value(spec: RingSpec, obj: ObjectiveSpec, pool: DephasingPool | None = None) -> float:
    """Value (to maximise) of ``obj`` for the controller described by ``spec``."""
    rates = _pool_rates(obj, pool)
    return transfer_objective(spec_model(spec), basis_state(spec.N, spec.in_node),
                              basis_state(spec.N, spec.out_node), spec.T, obj, rates)


def nominal_error(spec: RingSpec) -> float:
    """Fidelity error ``1 - Tr(ρ_out ρ(T))`` under unitary dynamics."""
    return 1.0 - objective_value(spec, ObjectiveSpec("fidelity"))


class _Problem:
    """Negated objective over ``x = (D_1..D_N, log T)`` (picklable for worker processes).

    Works directly on eigenvectors of the real ring Hamiltonian, which is
    exact away from degenerate spectra; final controllers are re-scored with
    grouped projectors.
    """

    def __init__(self, N, in_node, out_node, J, obj, rates, fd_step):
        self.N, self.J, self.obj, self.rates, self.fd_step = N, J, obj, rates, fd_step
        self.i, self.o = in_node - 1, out_node - 1
        self.rows, self.cols = np.tril_indices(N, -1)
        k = np.arange(N)
        self.H = np.zeros((N, N))
        self.H[k, (k + 1) % N] = self.H[(k + 1) % N, k] = J

    def value(self, x):
        H = self.H.copy()
        H[np.diag_indices(self.N)] = x[: self.N]
        T = np.exp(x[self.N])
        lam, V = np.linalg.eigh(H)
        a = V[self.o] * V[self.i]
        static = a @ a
        if self.obj.kind == "dephasing":
            r, c = self.rows, self.cols
            w = 2 * a[r] * a[c] * np.cos(T * (lam[r] - lam[c]))
            return -float(np.mean(static + np.exp(-T * self.rates) @ w))
        amp = a @ np.exp(-1j * lam * T)
        coherent = amp.real ** 2 + amp.imag ** 2
        if self.obj.kind == "fidelity":
            return -coherent
        return -(self.obj.alpha * coherent + (1 - self.obj.alpha) * static)

    def grad(self, x):
        g = np.empty_like(x)
        for i in range(x.size):
            h = self.fd_step * max(abs(x[i]), 1.0)
            e = np.zeros_like(x)
            e[i] = h
            g[i] = (self.value(x + e) - self.value(x - e)) / (2 * h)
        return g


def _run_restart(problem: _Problem, x0, bounds, budget: Budget):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(problem.value, x0, jac=problem.grad, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": budget.maxiter, "ftol": budget.ftol,
                                "gtol": budget.gtol})
    x = np.clip(res.x, [b[0] for b in bounds], [b[1] for b in bounds])
    return x, problem.value(x), bool(res.success), int(res.nit)


def start_points(n_dim: int, restarts: int, bounds, seed) -> np.ndarray:
    """Stratified starting points from a scrambled Sobol design.

    The first ``k`` points do not depend on ``restarts``, so adding restarts
    never changes the earlier ones.
    """
    eng = qmc.Sobol(n_dim, scramble=True, seed=np.random.default_rng(seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = eng.random(restarts)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return lo + u * (hi - lo)


def synthesize_population(transfer: tuple[int, int, int], obj: ObjectiveSpec,
                          budget: Budget = Budget(), bounds: SearchBounds = SearchBounds(),
                          seed: int | np.random.SeedSequence = 0,
                          pool: DephasingPool | None = None, J: float = 1.0,
                          jobs: int = 1, first: int = 0) -> list[Controller]:
    """One locally optimal controller per restart, in restart order.

    Restarts ``first .. budget.restarts - 1`` of the seeded sequence are run.
    """
    N, in_node, out_node = transfer
    rates = _pool_rates(obj, pool)
    problem = _Problem(N, in_node, out_node, J, obj, rates, budget.fd_step)
    blist = bounds.as_list(N)
    x0s = start_points(N + 1, budget.restarts, blist, seed)[first:]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_restart, [problem] * len(x0s), x0s,
                                  [blist] * len(x0s), [budget] * len(x0s)))
    else:
        results = [_run_restart(problem, x0, blist, budget) for x0 in x0s]

    seed_repr = seed if isinstance(seed, int) else repr(seed.entropy)
    provenance = {"bounds": asdict(bounds), "budget": asdict(budget), "seed": seed_repr,
                  "pool_hash": pool.digest if rates is not None else None}
    out = []
    for r, (x, fval, ok, nit) in enumerate(results, start=first):
        if not np.isfinite(fval):
            ok = False
        spec = RingSpec(N=N, J=J, D=x[:N], T=float(np.exp(x[N])),
                        in_node=in_node, out_node=out_node)
        achieved = transfer_objective(spec_model(spec), basis_state(N, in_node),
                                      basis_state(N, out_node), spec.T, obj, rates)
        out.append(Controller(spec, obj, nominal_error(spec), achieved, restart=r,
                              restarts_used=1, converged=ok,
                              provenance=dict(provenance, iterations=nit)))
    return out


def synthesize(transfer: tuple[int, int, int], obj: ObjectiveSpec,
               budget: Budget = Budget(), bounds: SearchBounds = SearchBounds(),
               seed: int | np.random.SeedSequence = 0, pool: DephasingPool | None = None,
               J: float = 1.0, jobs: int = 1) -> Controller:
    """Best-of-restarts controller for ``transfer = (N, in_node, out_node)``.

    If no restart reports convergence the best point found is still returned,
    with ``converged=False``.
    """
    pop = synthesize_population(transfer, obj, budget, bounds, seed, pool, J, jobs)
    finite = [c for c in pop if np.isfinite(c.achieved_objective)]
    if not finite:
        raise FloatingPointError("every restart produced a non-finite objective")
    best = max(finite, key=lambda c: (c.achieved_objective, -c.restart))
    if not any(c.converged for c in pop):
        log.warning("no restart converged for transfer %s; returning best point found", transfer)
    return Controller(best.spec, obj, best.nominal_error, best.achieved_objective,
                      best.restart, len(pop), any(c.converged for c in pop), best.provenance)


def _reflection(N: int, i: int, o: int) -> np.ndarray:
    """Index map of the ring reflection that exchanges nodes ``i`` and ``o``."""
    return (i + o - 2 - np.arange(N)) % N


def controller_key(c: Controller) -> tuple[np.ndarray, np.ndarray]:
    """Canonical coordinates of a controller and of its mirror image.

    A uniform bias offset only adds a global phase, so ``D`` is centred.
    The reflection exchanging input and output nodes leaves every
    objective and every sensitivity unchanged (the Hamiltonian is real, so
    transfer amplitudes are symmetric), hence a controller and its mirror
    image are the same point of the population.
    """
    D = np.asarray(c.spec.D, float)
    D = D - D.mean()
    logT = np.log(c.spec.T)
    mirror = D[_reflection(c.spec.N, c.spec.in_node, c.spec.out_node)]
    return np.append(D, logT), np.append(mirror, logT)


def gate_population(controllers: Sequence[Controller], quality: float = 0.98,
                    distinct: bool = True, rtol: float = 1e-6) -> list[Controller]:
    """Drop failed restarts before ranking.

    Keeps controllers whose achieved objective is at least ``quality`` times
    the best one in the list.  With ``distinct=True`` only the first of
    several restarts that landed on the same point is kept, comparing
    ``(D - mean D, log T)`` up to the in/out reflection (see
    :func:`controller_key`) to ``rtol`` relative to the largest coordinate.
    """
    if not controllers:
        return []
    best = max(c.achieved_objective for c in controllers)
    kept: list[Controller] = []
    kept_x: list[np.ndarray] = []
    for c in controllers:
        if c.achieved_objective < quality * best:
            continue
        x, xm = controller_key(c)
        if distinct and any(min(np.max(np.abs(x - k)), np.max(np.abs(xm - k)))
                            <= rtol * max(1.0, np.max(np.abs(k))) for k in kept_x):
            continue
        kept.append(c)
        kept_x.append(x)
    return kept


def synthesize_top(transfer: tuple[int, int, int], obj: ObjectiveSpec, k: int,
                   budget: Budget = Budget(), bounds: SearchBounds = SearchBounds(),
                   seed: int | np.random.SeedSequence = 0, pool: DephasingPool | None = None,
                   J: float = 1.0, jobs: int = 1, quality: float = 0.98,
                   distinct: bool = True, max_restarts: int | None = None) -> list[Controller]:
    """Population of ``k`` controllers for the robustness pipeline.

    Restarts are run in batches of ``budget.restarts`` until ``k`` gated
    controllers exist (see :func:`gate_population`), then the ``k`` with the
    smallest nominal error are returned.  Starting points form one fixed
    sequence, so the outcome does not depend on how the batches are split.
    """
    max_restarts = max_restarts or 20 * budget.restarts
    total = budget.restarts
    while True:
        b = Budget(total, budget.maxiter, budget.ftol, budget.gtol, budget.fd_step)
        if total == budget.restarts:
            pop = synthesize_population(transfer, obj, b, bounds, seed, pool, J, jobs)
        else:
            extra = synthesize_population(transfer, obj, b, bounds, seed, pool, J, jobs,
                                          first=len(pop))
            pop = pop + extra
        gated = gate_population(pop, quality, distinct)
        if len(gated) >= k:
            break
        if total >= max_restarts:
            raise RuntimeError(f"only {len(gated)} of {k} controllers passed the quality gate "
                               f"after {total} restarts for transfer {transfer}")
        total = min(total + budget.restarts, max_restarts)
    top = select_top(gated, k)
    log.info("transfer %s / %s: %d restarts, %d gated, kept %d", transfer, obj.kind,
             len(pop), len(gated), k)
    return [Controller(c.spec, c.objective, c.nominal_error, c.achieved_objective, c.restart,
                       len(pop), c.converged, dict(c.provenance, quality=quality,
                                                   restarts_total=len(pop)))
            for c in top]


def select_top(controllers: Sequence[Controller], k: int) -> list[Controller]:
    """The ``k`` controllers with the smallest nominal error.

    Ties keep the input order, which is synthesis order.
    """
    if k > len(controllers):
        raise ValueError(f"asked for {k} controllers, only {len(controllers)} available")
    order = sorted(range(len(controllers)), key=lambda i: controllers[i].nominal_error)
    return [controllers[i] for i in order[:k]]
