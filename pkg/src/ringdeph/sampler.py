"""Low-discrepancy sampling of admissible dephasing-rate matrices.

Candidates are points of an unscrambled Sobol sequence mapped onto the strict
lower triangle of an N x N matrix.  A candidate is kept when the pure-dephasing
map it generates is completely positive, and is then normalised so that its
lower-triangle entries sum to one.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import qmc

log = logging.getLogger(__name__)

DEFAULT_PROBE_TIMES = tuple(float(t) for t in np.logspace(-2, 2, 9))


def n_pairs(N: int) -> int:
    return N * (N - 1) // 2


def lower_to_matrix(values, N: int) -> np.ndarray:
    """Symmetric zero-diagonal matrix from strict-lower-triangle entries.

    Entries are taken in row-major order: (2,1), (3,1), (3,2), (4,1), ...
    ``values`` may carry leading batch dimensions.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != n_pairs(N):
        raise ValueError(f"expected {n_pairs(N)} entries for N={N}, got {values.shape[-1]}")
    rows, cols = np.tril_indices(N, -1)
    out = np.zeros(values.shape[:-1] + (N, N))
    out[..., rows, cols] = values
    out[..., cols, rows] = values
    return out


def sobol_block(dim: int, start: int, count: int) -> np.ndarray:
    """Points ``start .. start+count-1`` of the unscrambled Sobol sequence.

    Index 0 is the first point after the origin, i.e. the all-1/2 point.
    """
    if start < 0 or count < 0:
        raise ValueError("start and count must be nonnegative")
    if dim < 1 or dim > qmc.Sobol.MAXDIM:
        raise ValueError(f"Sobol dimension {dim} outside [1, {qmc.Sobol.MAXDIM}]")
    eng = qmc.Sobol(dim, scramble=False)
    eng.fast_forward(start + 1)
    return eng.random(count)


def sobol_triangular(N: int, index: int) -> np.ndarray:
    """Lower-triangular matrix filled from Sobol point ``index``."""
    x = sobol_block(n_pairs(N), index, 1)[0]
    return np.tril(lower_to_matrix(x, N), -1)


def cp_violation(gammas: np.ndarray, probe_times=DEFAULT_PROBE_TIMES,
                 schoenberg: bool = True) -> np.ndarray:
    """Worst admissibility defect for a batch of symmetric rate matrices.

    Returns, per matrix, the largest of ``-min eig exp(-t γ)`` over the probe
    times and (optionally) the largest eigenvalue of ``P γ P`` with ``P`` the
    projector orthogonal to the all-ones vector.  The latter is the
    Schoenberg condition: ``exp(-t γ)`` is PSD for every ``t >= 0`` exactly
    when ``γ`` is conditionally negative definite, which is the small-``t``
    limit of the probe test.
    """
    gammas = np.asarray(gammas, dtype=float)
    single = gammas.ndim == 2
    if single:
        gammas = gammas[None]
    worst = np.full(len(gammas), -np.inf)
    for t in probe_times:
        w = np.linalg.eigvalsh(np.exp(-t * gammas))[:, 0]
        worst = np.maximum(worst, -w)
    if schoenberg:
        N = gammas.shape[-1]
        P = np.eye(N) - 1.0 / N
        w = np.linalg.eigvalsh(P @ gammas @ P)[:, -1]
        scale = np.maximum(np.abs(gammas).max(axis=(1, 2)), 1.0)
        worst = np.maximum(worst, w / scale)
    return worst[0] if single else worst


def cp_admissible(gamma: np.ndarray, probe_times=DEFAULT_PROBE_TIMES,
                  tol: float = 1e-10, schoenberg: bool = True) -> bool:
    """True when the dephasing map with rates ``gamma`` is completely positive.

    For dephasing in a fixed basis the channel at time ``t`` multiplies the
    density matrix entrywise by ``exp(-t γ)``; it is completely positive iff
    that matrix is positive semidefinite.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
        raise ValueError("rate matrix must be square")
    return bool(cp_violation(gamma, probe_times, schoenberg) <= tol)


@dataclass(frozen=True)
class SamplerConfig:
    N: int
    pool_target: int = 10_000
    batch_size: int = 4096
    offset: int = 0
    probe_times: tuple[float, ...] = DEFAULT_PROBE_TIMES
    tol: float = 1e-10
    schoenberg: bool = True
    min_acceptance: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "probe_times", tuple(float(t) for t in self.probe_times))
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if self.pool_target < 1 or self.batch_size < 1 or self.offset < 0:
            raise ValueError("pool_target and batch_size must be positive, offset nonnegative")
        if not 0 < self.min_acceptance <= 1:
            raise ValueError("min_acceptance must lie in (0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["probe_times"] = list(self.probe_times)
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class DephasingOperator:
    """One normalised dephasing process.

    ``mu`` is the index of the Sobol point that produced it, so operators
    can be regenerated from the sequence alone.
    """

    mu: int
    N: int
    gamma_lower: np.ndarray

    @property
    def gamma(self) -> np.ndarray:
        return lower_to_matrix(self.gamma_lower, self.N)

    def __eq__(self, other):
        if not isinstance(other, DephasingOperator):
            return NotImplemented
        return (self.mu == other.mu and self.N == other.N
                and np.array_equal(self.gamma_lower, other.gamma_lower))

    def to_dict(self) -> dict:
        return {"mu": self.mu, "N": self.N, "gamma_lower": self.gamma_lower.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DephasingOperator":
        return cls(int(d["mu"]), int(d["N"]), np.asarray(d["gamma_lower"], dtype=float))


@dataclass(eq=False)
class DephasingPool:
    config: SamplerConfig
    operators: list[DephasingOperator]
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.operators)

    @property
    def N(self) -> int:
        return self.config.N

    def lower_matrix(self) -> np.ndarray:
        """Stacked ``gamma_lower`` vectors, shape ``(len(pool), N(N-1)/2)``."""
        if not self.operators:
            return np.zeros((0, n_pairs(self.N)))
        return np.stack([op.gamma_lower for op in self.operators])

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for op in self.operators:
            h.update(np.int64(op.mu).tobytes())
            h.update(np.ascontiguousarray(op.gamma_lower).tobytes())
        return h.hexdigest()[:16]

    def draw(self, count: int, seed: int | np.random.SeedSequence) -> "DephasingPool":
        """Random subset of ``count`` operators, kept in pool order."""
        if count > len(self):
            raise ValueError(f"cannot draw {count} operators from a pool of {len(self)}")
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(self), size=count, replace=False))
        return DephasingPool(self.config, [self.operators[i] for i in idx],
                             {"drawn_from": self.digest, "count": count})

    def save(self, path) -> None:
        path = Path(path)
        with path.open("w") as fh:
            header = {"kind": "header", "config": self.config.to_dict(),
                      "config_hash": self.config.config_hash, "stats": self.stats}
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for op in self.operators:
                fh.write(json.dumps(op.to_dict()) + "\n")

    @classmethod
    def load(cls, path, verify: bool = True) -> "DephasingPool":
        lines = Path(path).read_text().splitlines()
        header = json.loads(lines[0])
        if header.get("kind") != "header":
            raise ValueError(f"{path}: missing pool header")
        cfg = SamplerConfig(**header["config"])
        ops = [DephasingOperator.from_dict(json.loads(line)) for line in lines[1:] if line]
        pool = cls(cfg, ops, header.get("stats", {}))
        if verify:
            bad = [op.mu for op in ops
                   if not cp_admissible(op.gamma, cfg.probe_times, cfg.tol, cfg.schoenberg)]
            if bad:
                raise ValueError(f"{path}: operators {bad[:5]} fail the CP check")
            sums = pool.lower_matrix().sum(axis=1)
            if ops and np.abs(sums - 1).max() > 1e-12:
                raise ValueError(f"{path}: operators are not normalised")
        return pool


def generate_pool(cfg: SamplerConfig) -> DephasingPool:
    """Scan the Sobol sequence until ``cfg.pool_target`` candidates pass the CP filter.

    Raises
    ------
    RuntimeError
        If the acceptance rate falls below ``cfg.min_acceptance``.
    """
    dim = n_pairs(cfg.N)
    ops: list[DephasingOperator] = []
    seen = zero = rejected = 0
    start = cfg.offset
    eng = qmc.Sobol(dim, scramble=False)
    eng.fast_forward(start + 1)
    while len(ops) < cfg.pool_target:
        x = eng.random(cfg.batch_size)
        totals = np.abs(x).sum(axis=1)
        nonzero = totals > 0
        gam = lower_to_matrix(x, cfg.N)
        ok = np.zeros(len(x), dtype=bool)
        if nonzero.any():
            ok[nonzero] = cp_violation(gam[nonzero], cfg.probe_times, cfg.schoenberg) <= cfg.tol
        keep = np.flatnonzero(ok)[: cfg.pool_target - len(ops)]
        # the final batch is only consumed up to the last accepted candidate
        used = len(x) if len(ops) + len(keep) < cfg.pool_target else int(keep[-1]) + 1
        for i in keep:
            ops.append(DephasingOperator(start + int(i), cfg.N, x[i] / totals[i]))
        zero += int((~nonzero[:used]).sum())
        rejected += int((nonzero[:used] & ~ok[:used]).sum())
        seen += used
        start += len(x)
        rate = len(ops) / seen
        if rate < cfg.min_acceptance:
            raise RuntimeError(
                f"acceptance rate {rate:.2e} below floor {cfg.min_acceptance:.0e} "
                f"after {seen} candidates (N={cfg.N})")
    stats = {"candidates": seen, "accepted": len(ops), "rejected_cp": rejected,
             "rejected_zero": zero, "acceptance_rate": len(ops) / seen}
    log.info("dephasing pool N=%d: %d accepted of %d candidates", cfg.N, len(ops), seen)
    return DephasingPool(cfg, ops, stats)
