"""Correlation tests and orthogonal-pair classification.

Significance follows the usual large-sample recipes: Kendall's τ is turned
into a normal score ``Z = τ / sqrt(2(2n+5) / (9n(n-1)))`` and Pearson's r
into a Student-t statistic with ``n - 2`` degrees of freedom.  Tests are
one-tailed: concordance between the two sensitivity estimates is tested on
the right tail, the sensitivity/error trade-off on the left tail.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import betainc, erfc

from .ring import SpectralModel

log = logging.getLogger(__name__)

RIGHT, LEFT = "right", "left"


def norm_cdf(z):
    """Standard normal CDF via the complementary error function."""
    return 0.5 * erfc(-np.asarray(z, dtype=float) / np.sqrt(2.0))


def norm_sf(z):
    return 0.5 * erfc(np.asarray(z, dtype=float) / np.sqrt(2.0))


def _t_tail(t: float, df: float) -> float:
    # P(T > |t|) = I_{df/(df+t^2)}(df/2, 1/2) / 2
    if np.isinf(t):
        return 0.0
    return 0.5 * float(betainc(0.5 * df, 0.5, df / (df + t * t)))


def student_t_cdf(t: float, df: float) -> float:
    tail = _t_tail(t, df)
    return tail if t < 0 else 1.0 - tail


def student_t_sf(t: float, df: float) -> float:
    tail = _t_tail(t, df)
    return tail if t > 0 else 1.0 - tail


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall's τ-b (tie-corrected rank concordance)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    n = x.size
    if n < 2:
        raise ValueError("need at least two observations")
    S = untied_x = untied_y = 0
    for i in range(n - 1):
        sx = np.sign(x[i + 1:] - x[i])
        sy = np.sign(y[i + 1:] - y[i])
        S += int(np.sum(sx * sy))
        untied_x += int(np.count_nonzero(sx))
        untied_y += int(np.count_nonzero(sy))
    if untied_x == 0 or untied_y == 0:
        raise ValueError("Kendall's tau is undefined when a sample is entirely tied")
    return S / np.sqrt(float(untied_x) * float(untied_y))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p: float
    small_sample: bool = False


def _tail_p(tail: str, cdf: float, sf: float) -> float:
    if tail == RIGHT:
        return sf
    if tail == LEFT:
        return cdf
    raise ValueError(f"tail must be 'right' or 'left', got {tail!r}")


def kendall_test(tau: float, n: int, tail: str = RIGHT) -> TestResult:
    """Normal-approximation significance of Kendall's τ.

    The approximation is poor below ``n = 10``; such results carry
    ``small_sample=True``.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    z = tau / np.sqrt(2.0 * (2 * n + 5) / (9.0 * n * (n - 1)))
    p = _tail_p(tail, float(norm_cdf(z)), float(norm_sf(z)))
    return TestResult(float(z), p, n < 10)


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ValueError("need two 1-D samples of equal length >= 3")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise ValueError("Pearson's r is undefined for a zero-variance sample")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def pearson_test(r: float, n: int, tail: str = RIGHT) -> TestResult:
    """Student-t significance of Pearson's r with ``n - 2`` degrees of freedom."""
    if n < 3:
        raise ValueError("need n >= 3")
    df = n - 2
    if abs(r) >= 1:
        t = np.copysign(np.inf, r)
    else:
        t = r / np.sqrt((1 - r * r) / df)
    p = _tail_p(tail, student_t_cdf(t, df), student_t_sf(t, df))
    return TestResult(float(t), p, False)


@dataclass(frozen=True)
class CorrelationTest:
    """Kendall and Pearson one-tailed tests for one pair of variables."""

    pair: str
    label: str
    n: int
    tail: str
    tau: float
    z_tau: float
    p_tau: float
    r: float
    t_r: float
    p_r: float
    alpha: float = 0.02
    excluded: int = 0

    @property
    def decision_tau(self) -> str:
        return "reject_H0" if self.p_tau < self.alpha else "accept_H0"

    @property
    def decision_r(self) -> str:
        return "reject_H0" if self.p_r < self.alpha else "accept_H0"

    @property
    def decision(self) -> str:
        """Kendall decision for the concordance test, Pearson decision for trends."""
        return self.decision_tau if self.pair == "sa_vs_sk" else self.decision_r

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(decision=self.decision, decision_tau=self.decision_tau,
                 decision_r=self.decision_r)
        return d


def correlation_test(x, y, pair: str, tail: str, alpha: float = 0.02,
                     label: str = "", excluded: int = 0) -> CorrelationTest:
    n = len(x)
    tau = kendall_tau(x, y)
    kt = kendall_test(tau, n, tail)
    r = pearson_r(x, y)
    pt = pearson_test(r, n, tail)
    if kt.small_sample:
        log.warning("%s: only %d samples; normal approximation for Kendall's tau is rough", label, n)
    return CorrelationTest(pair, label, n, tail, tau, kt.statistic, kt.p, r, pt.statistic,
                           pt.p, alpha, excluded)


def run_trend_suite(records, alpha: float = 0.02, label: str = "") -> list[CorrelationTest]:
    """Concordance test (s_a vs |s_k|, right tail) and trade-off trends.

    The trend tests correlate ``log10 s`` with ``log10 e(T)`` on the left
    tail, for both estimates.  Records with ``e(T) <= 0`` are dropped; for
    each log test, records with a zero sensitivity are dropped too.  Drop
    counts are reported in ``excluded``.
    """
    records = list(records)
    good = [r for r in records if r.nominal_error > 0]
    dropped = len(records) - len(good)
    if len(good) < 10:
        raise ValueError(f"need at least 10 records with positive error, got {len(good)}")
    e = np.array([r.nominal_error for r in good])
    sa = np.array([r.s_a for r in good])
    sk = np.array([abs(r.s_k) for r in good])
    tests = [correlation_test(sa, sk, "sa_vs_sk", RIGHT, alpha, label, dropped)]
    for name, s in (("log_sa_vs_log_e", sa), ("log_sk_vs_log_e", sk)):
        keep = s > 0
        tests.append(correlation_test(np.log10(s[keep]), np.log10(e[keep]), name, LEFT, alpha,
                                      label, dropped + int((~keep).sum())))
    return tests


def write_tests_csv(tests: Iterable[CorrelationTest], path) -> None:
    cols = ["label", "pair", "n", "tail", "tau", "z_tau", "p_tau", "decision_tau",
            "r", "t_r", "p_r", "decision_r", "alpha", "excluded"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for t in tests:
            w.writerow(t.to_dict())


@dataclass(frozen=True, eq=False)
class OrthogonalPairVerdict:
    is_orthogonal_pair: bool
    in_overlaps: np.ndarray
    out_overlaps: np.ndarray
    support: tuple[int, int] | None
    tol: float
    controller_id: str = ""

    def to_dict(self) -> dict:
        return {"controller_id": self.controller_id, "is_orthogonal_pair": self.is_orthogonal_pair,
                "in_overlaps": self.in_overlaps.tolist(), "out_overlaps": self.out_overlaps.tolist(),
                "support": list(self.support) if self.support else None, "tol": self.tol}


def classify_states(model: SpectralModel, psi_in: np.ndarray, psi_out: np.ndarray,
                    tol: float = 0.05, controller_id: str = "") -> OrthogonalPairVerdict:
    """Do ``psi_in`` and ``psi_out`` form an orthogonal pair in the eigenbasis?

    Overlaps are taken against eigenspace projectors, so the answer does not
    depend on how eigenvectors inside a degenerate eigenspace are chosen.
    Two eigenspaces must carry at least ``1 - tol`` of both states' weight,
    with each state split evenly (to within ``tol``) between them, and the
    two states must be orthogonal (to within ``tol``) inside that subspace.
    """
    P = model.projectors
    in_proj = np.einsum("kij,j->ki", P, psi_in)
    out_proj = np.einsum("kij,j->ki", P, psi_out)
    m_in = np.einsum("ki,ki->k", in_proj.conj(), in_proj).real
    m_out = np.einsum("ki,ki->k", out_proj.conj(), out_proj).real
    support = None
    G = model.n_levels
    for k in range(G):
        for l in range(k + 1, G):
            if m_in[k] + m_in[l] < 1 - tol or m_out[k] + m_out[l] < 1 - tol:
                continue
            if max(abs(m_in[k] - 0.5), abs(m_in[l] - 0.5),
                   abs(m_out[k] - 0.5), abs(m_out[l] - 0.5)) > tol:
                continue
            inner = np.vdot(psi_in, out_proj[k] + out_proj[l])
            if abs(inner) <= tol:
                support = (k, l)
                break
        if support:
            break
    return OrthogonalPairVerdict(support is not None, m_in, m_out, support, tol, controller_id)


def classify_orthogonal_pair(controller, tol: float = 0.05,
                             controller_id: str = "") -> OrthogonalPairVerdict:
    return classify_states(controller.model(), controller.psi_in, controller.psi_out, tol,
                           controller_id)


@dataclass
class OrthogonalTally:
    objective: str
    transfer: tuple[int, int, int]
    n: int = 0
    orthogonal: int = 0
    verdicts: list = field(default_factory=list, repr=False)

    @property
    def percent_orthogonal(self) -> float:
        return 100.0 * self.orthogonal / self.n if self.n else float("nan")


def tally_orthogonal(controllers, tol: float = 0.05) -> OrthogonalTally:
    controllers = list(controllers)
    if not controllers:
        raise ValueError("no controllers to classify")
    spec = controllers[0].spec
    tally = OrthogonalTally(controllers[0].objective.kind, (spec.N, spec.in_node, spec.out_node))
    for c in controllers:
        v = classify_orthogonal_pair(c, tol)
        tally.n += 1
        tally.orthogonal += int(v.is_orthogonal_pair)
        tally.verdicts.append(v)
    return tally


def write_orthogonal_csv(tallies: Iterable[OrthogonalTally], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["controller_type", "transfer", "n", "percent_orthogonal",
                    "percent_non_orthogonal"])
        for t in tallies:
            N, i, o = t.transfer
            pct = t.percent_orthogonal
            w.writerow([t.objective, f"N={N} in={i} out={o}", t.n, f"{pct:.1f}",
                        f"{100 - pct:.1f}"])
