"""Log-sensitivity of the fidelity error to dephasing.

The nominal system is the closed (unitary) ring.  A sampled dephasing
process with rates ``γ`` switched on at strength ``δ`` perturbs the error to
``ẽ(T; δ)``; the log-sensitivity is ``(1 / e(T)) dẽ/dδ`` at ``δ = 0``.

Two estimates are provided:

* ``analytic_log_sensitivity`` differentiates the LTI solution in closed
  form (the Liouville and dephasing generators commute);
* ``kde_log_sensitivity`` works from a sampled error surface over a ``δ``
  grid: the mean error curve is fitted with a smoothing spline and
  differentiated at the boundary.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import make_smoothing_spline

from .dynamics import (build_lti_rates, dephasing_superoperator, pair_terms, propagator,
                       transfer_fidelity)
from .ring import density_matrix
from .sampler import DephasingOperator, DephasingPool, lower_to_matrix, n_pairs
from .synthesis import Controller

log = logging.getLogger(__name__)


# 1 - F is only accurate to a few ulps; errors below this are treated as zero
ZERO_ERROR = 1e-12


class UndefinedSensitivity(ValueError):
    """The nominal error is zero, so the log-sensitivity is undefined."""


def _check_error(e: float) -> None:
    if e <= ZERO_ERROR:
        raise UndefinedSensitivity(f"nominal error {e!r} is zero to working precision")


def delta_grid(points: int = 1001) -> np.ndarray:
    if points < 2:
        raise ValueError("a perturbation grid needs at least two points")
    return np.linspace(0.0, 1.0, points)


def perturbed_error(controller: Controller, op: DephasingOperator, delta: float) -> float:
    """Fidelity error at readout with dephasing ``op`` at strength ``delta``.

    Evaluated with the projector solution on the individual eigenvectors of
    the controlled Hamiltonian.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    model = controller.model().resolved()
    F = transfer_fidelity(model, controller.psi_in, controller.psi_out, controller.spec.T,
                          delta * op.gamma)
    return 1.0 - F


def perturbed_error_lti(controller: Controller, op: DephasingOperator, delta: float) -> float:
    """Same quantity as :func:`perturbed_error`, via ``1 - c exp((A + δS)T) r0``."""
    model = controller.model().resolved()
    sys = build_lti_rates(model, delta * op.gamma, density_matrix(controller.psi_out))
    r0 = sys.vectorize(density_matrix(controller.psi_in))
    return 1.0 - float(sys.c_out @ propagator(sys.generator, controller.spec.T) @ r0)


def _analytic_slopes(controller: Controller, rates_lower: np.ndarray) -> np.ndarray:
    """``dẽ/dδ`` at ``δ = 0`` for each row of strict-lower-triangle rates.

    ``ẽ(δ) = 1 - c exp(AT) exp(δ S T) r0``, so the slope is ``-T c exp(AT) S r0``.
    ``S`` is linear in the rates; its action is assembled per unit pair.
    """
    N = controller.spec.N
    T = controller.spec.T
    model = controller.model().resolved()
    sys = build_lti_rates(model, None, density_matrix(controller.psi_out))
    r0 = sys.vectorize(density_matrix(controller.psi_in))
    v = sys.c_out @ propagator(sys.A, T)
    unit = lower_to_matrix(np.eye(n_pairs(N)), N)
    per_pair = np.array([v @ dephasing_superoperator(g, sys.basis) @ r0 for g in unit])
    return -T * (np.atleast_2d(rates_lower) @ per_pair)


def analytic_log_sensitivity(controller: Controller, op: DephasingOperator,
                             signed: bool = False) -> float:
    """Closed-form log-sensitivity ``|(1/e) dẽ/dδ|`` at ``δ = 0``.

    Raises
    ------
    UndefinedSensitivity
        If the controller's nominal error is zero.
    """
    e = controller.nominal_error
    _check_error(e)
    s = float(_analytic_slopes(controller, op.gamma_lower)[0]) / e
    return s if signed else abs(s)


def analytic_log_sensitivities(controller: Controller, pool: DephasingPool) -> np.ndarray:
    """Per-operator analytic log-sensitivities (absolute values) for a whole pool."""
    e = controller.nominal_error
    _check_error(e)
    return np.abs(_analytic_slopes(controller, pool.lower_matrix())) / e


@dataclass(frozen=True, eq=False)
class ErrorSurface:
    """Perturbed errors, one row per dephasing operator and one column per ``δ``."""

    deltas: np.ndarray
    errors: np.ndarray
    nominal_error: float

    @property
    def mean(self) -> np.ndarray:
        return self.errors.mean(axis=0)

    @property
    def variance(self) -> np.ndarray:
        return self.errors.var(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.errors.std(axis=0)


def build_error_surface(controller: Controller, pool: DephasingPool,
                        deltas: np.ndarray | None = None, chunk: int = 128) -> ErrorSurface:
    """Evaluate ``ẽ(T; S_μ, δ)`` for every operator in ``pool`` and every ``δ``."""
    deltas = delta_grid() if deltas is None else np.asarray(deltas, dtype=float)
    if deltas[0] != 0 or np.any(np.diff(deltas) <= 0):
        raise ValueError("the perturbation grid must start at 0 and increase strictly")
    T = controller.spec.T
    _, w = pair_terms(controller.model().resolved(), controller.psi_in, controller.psi_out, T)
    rates = pool.lower_matrix()
    e0 = controller.nominal_error
    errors = np.empty((len(rates), deltas.size))
    # ẽ(δ) = e(T) + Σ_p w_p (1 - exp(-Tδγ_p)), which is exact at δ = 0 and
    # free of cancellation for small δ
    for s in range(0, len(rates), chunk):
        g = rates[s:s + chunk]
        errors[s:s + chunk] = e0 + (-np.expm1(-T * deltas[None, :, None] * g[:, None, :])) @ w
    return ErrorSurface(deltas, errors, e0)


def scott_bandwidth(samples: np.ndarray) -> float:
    """``3.5 σ n^(-1/3)``."""
    samples = np.asarray(samples, dtype=float)
    return 3.5 * samples.std() * samples.size ** (-1.0 / 3.0)


def gaussian_kde(samples: np.ndarray, points: np.ndarray, bandwidth: float | None = None) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    h = scott_bandwidth(samples) if bandwidth is None else bandwidth
    if h <= 0:
        raise ValueError("bandwidth must be positive (samples have zero spread)")
    z = (np.asarray(points)[:, None] - samples[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (samples.size * h * np.sqrt(2 * np.pi))


def error_density(surface: ErrorSurface, bins: int = 200,
                  error_range: tuple[float, float] | None = None,
                  columns: Sequence[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Kernel density of the error distribution in each ``δ`` column.

    Returns ``(error_grid, density)`` with ``density`` of shape
    ``(len(columns), bins)``.  Columns with zero spread get a unit spike in
    the bin nearest their common value.
    """
    E = surface.errors
    lo, hi = error_range if error_range is not None else (E.min(), E.max())
    if hi <= lo:
        hi = lo + 1e-12
    grid = np.linspace(lo, hi, bins)
    cols = range(E.shape[1]) if columns is None else columns
    out = np.zeros((len(cols), bins))
    for row, j in enumerate(cols):
        x = E[:, j]
        if np.ptp(x) == 0:
            k = int(np.argmin(np.abs(grid - x[0])))
            out[row, k] = 1.0 / max(grid[1] - grid[0], 1e-300)
        else:
            out[row] = gaussian_kde(x, grid)
    return grid, out


@dataclass(frozen=True)
class KdeSensitivity:
    signed: float
    slope: float
    smoothing: float | None
    method: str

    @property
    def magnitude(self) -> float:
        return abs(self.signed)


def default_smoothing(deltas: np.ndarray) -> float:
    """Roughness penalty ``h**3 / 6`` for mean knot spacing ``h``.

    This is the usual default of cubic smoothing-spline fitting (weight
    ``p = 1 / (1 + h**3 / 6)`` on the residuals).  It barely smooths a
    noise-free curve, so the boundary slope is not biased by the fit.
    """
    h = float(np.mean(np.diff(deltas)))
    return h ** 3 / 6.0


def kde_log_sensitivity(surface: ErrorSurface, e_nominal: float | None = None,
                        lam: float | str | None = None) -> KdeSensitivity:
    """Log-sensitivity from the mean error curve of ``surface``.

    The per-``δ`` means are fitted with a cubic smoothing spline and the
    fit's derivative at ``δ = 0`` is divided by the nominal error.  ``lam``
    is the roughness penalty: ``None`` uses :func:`default_smoothing`,
    ``"gcv"`` lets generalized cross-validation choose it.  A surface with no
    spread at all is differentiated directly from the raw means.
    """
    e = surface.nominal_error if e_nominal is None else e_nominal
    _check_error(e)
    x, y = surface.deltas, surface.mean
    if np.all(np.ptp(surface.errors, axis=0) == 0):
        # every column is constant: difference the common values directly
        y = surface.errors[0]
        h = x[1] - x[0]
        d = y - y[0]
        slope = (4 * d[1] - d[2]) / (2 * h) if y.size > 2 else d[1] / h
        return KdeSensitivity(float(slope / e), float(slope), None, "raw-mean")
    if lam == "gcv":
        spl = make_smoothing_spline(x, y)
        lam_used, method = None, "smoothing-spline-gcv"
    else:
        lam_used = default_smoothing(x) if lam is None else float(lam)
        spl = make_smoothing_spline(x, y, lam=lam_used)
        method = "smoothing-spline"
    slope = float(spl.derivative()(x[0]))
    return KdeSensitivity(slope / e, slope, lam_used, method)


@dataclass(eq=False)
class SensitivityRecord:
    controller_id: str
    objective: str
    transfer: tuple[int, int, int]
    nominal_error: float
    s_a: float
    s_k: float
    per_mu: np.ndarray
    orthogonal_pair: bool | None = None
    extra: dict = field(default_factory=dict)

    @property
    def s_k_abs(self) -> float:
        return abs(self.s_k)

    def __eq__(self, other):
        if not isinstance(other, SensitivityRecord):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {"controller_id": self.controller_id, "objective": self.objective,
                "transfer": list(self.transfer), "nominal_error": self.nominal_error,
                "s_a": self.s_a, "s_k": self.s_k, "s_k_abs": self.s_k_abs,
                "per_mu": self.per_mu.tolist(), "orthogonal_pair": self.orthogonal_pair,
                "extra": self.extra}

    @classmethod
    def from_dict(cls, d: dict) -> "SensitivityRecord":
        return cls(d["controller_id"], d["objective"], tuple(d["transfer"]),
                   float(d["nominal_error"]), float(d["s_a"]), float(d["s_k"]),
                   np.asarray(d["per_mu"], dtype=float), d.get("orthogonal_pair"),
                   d.get("extra", {}))


def save_records(records: Sequence[SensitivityRecord], path) -> None:
    with Path(path).open("w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def load_records(path) -> list[SensitivityRecord]:
    lines = Path(path).read_text().splitlines()
    return [SensitivityRecord.from_dict(json.loads(line)) for line in lines if line.strip()]


def analyze_controller(controller: Controller, pool: DephasingPool,
                       deltas: np.ndarray | None = None,
                       controller_id: str = "") -> tuple[SensitivityRecord, ErrorSurface]:
    """Both log-sensitivity estimates for one controller against one operator draw."""
    per_mu = analytic_log_sensitivities(controller, pool)
    surface = build_error_surface(controller, pool, deltas)
    kde = kde_log_sensitivity(surface, controller.nominal_error)
    spec = controller.spec
    rec = SensitivityRecord(controller_id, controller.objective.kind,
                            (spec.N, spec.in_node, spec.out_node), controller.nominal_error,
                            float(per_mu.mean()), kde.signed, per_mu,
                            extra={"kde_method": kde.method, "kde_slope": kde.slope,
                                   "kde_lambda": kde.smoothing})
    return rec, surface


def analyze_population(controllers: Sequence[Controller], pool: DephasingPool,
                       deltas: np.ndarray | None = None,
                       ids: Sequence[str] | None = None) -> tuple[list[SensitivityRecord], int]:
    """Records for every controller with a positive nominal error.

    Returns the records and the number of controllers skipped because their
    log-sensitivity is undefined.
    """
    ids = [f"c{i:04d}" for i in range(len(controllers))] if ids is None else ids
    records, skipped = [], 0
    for cid, c in zip(ids, controllers):
        try:
            rec, _ = analyze_controller(c, pool, deltas, cid)
        except UndefinedSensitivity:
            log.warning("controller %s has zero nominal error; excluded", cid)
            skipped += 1
            continue
        records.append(rec)
    return records, skipped
