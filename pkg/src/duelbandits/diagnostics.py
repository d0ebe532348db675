"""Runtime checks of the statistical guarantees backing the estimator.

These turn the supporting lemmas into measured quantities: does the recorded
confidence radius actually cover the truth, does the self-normalized potential
stay under its closed-form ceiling, does the curvature matrix dominate the
scatter matrix, and does the per-iteration cost stay flat.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np

from .linalg import sherman_morrison

if TYPE_CHECKING:  # pragma: no cover
    from .scenarios import RunRecord

__all__ = [
    "coverage_check",
    "elliptic_potential_check",
    "norm_domination_check",
    "timing_profile",
    "DiagnosticsReport",
    "diagnostics_report",
]


@dataclass
class DiagnosticsReport:
    coverage_ok: bool
    first_violation: Optional[int]
    potential_lhs: float
    potential_rhs: float
    domination_min_eig: float
    timing_early_ns: float
    timing_late_ns: float
    timing_ratio: float

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def diagnostics_report(env, record: "RunRecord",
                       potential_lambda: float = 1.0) -> DiagnosticsReport:
    """Bundle every lemma-level check for one finished run.

    The domination eigenvalue comes from the audits the run itself recorded
    (NaN when the estimator exposes no curvature matrix); the timing windows
    are the first and last tenth of the run.
    """
    cov_ok, first = coverage_check(record)
    lhs, rhs, _ = elliptic_potential_check(record.z_rows(env), potential_lambda,
                                           2 * env.truth.L)
    audits = record.summary.get("domination_audits", [])
    dom = min((a["min_eig"] for a in audits), default=float("nan"))
    n = len(record)
    if n >= 10:
        tenth = n // 10
        early, late, ratio = timing_profile(record, (1, tenth), (n - tenth + 1, n))
    else:
        early = late = float(record.wall_nanos.mean()) if n else 0.0
        ratio = 1.0
    return DiagnosticsReport(
        coverage_ok=cov_ok, first_violation=first,
        potential_lhs=lhs, potential_rhs=rhs,
        domination_min_eig=dom,
        timing_early_ns=early, timing_late_ns=late, timing_ratio=ratio,
    )


def coverage_check(record: "RunRecord",
                   beta: Optional[np.ndarray] = None) -> Tuple[bool, Optional[int]]:
    """Was the truth inside the confidence set at every logged iteration?

    Compares the recorded local-norm estimation error against the recorded
    radius (or a caller-supplied replacement radius sequence). Returns
    (ok, first violating t or None).
    """
    radii = record.beta if beta is None else np.asarray(beta, dtype=float)
    if radii.shape != record.est_err_local.shape:
        raise ValueError("radius sequence must match the record length")
    bad = record.est_err_local > radii
    if not bad.any():
        return True, None
    return False, int(record.t[int(np.argmax(bad))])


def elliptic_potential_check(zs: np.ndarray, lambda_v: float,
                             L: float) -> Tuple[float, float, bool]:
    """Sum of squared self-normalized norms against its closed-form ceiling.

    Computes lhs = sum_s ||z_s||^2 in the inverse of V_s = lambda*I + sum_{i<s}
    z_i z_i^T via incremental rank-one inverse updates, and
    rhs = 2 d log(1 + t L^2 / (lambda d)). ``L`` must bound the supplied rows
    (callers pass 2L for preference differences).
    """
    if lambda_v <= 0:
        raise ValueError(f"lambda_v must be positive, got {lambda_v}")
    zs = np.asarray(zs, dtype=float)
    if zs.size == 0:
        return 0.0, 0.0, True
    n, d = zs.shape
    norms = np.linalg.norm(zs, axis=1)
    if np.any(norms > L * (1 + 1e-9)):
        raise ValueError("a row exceeds the stated norm bound L")
    inv = np.eye(d) / lambda_v
    lhs = 0.0
    for z in zs:
        lhs += float(z @ inv @ z)
        inv = sherman_morrison(inv, z, 1.0)
    rhs = 2.0 * d * np.log(1.0 + n * L**2 / (lambda_v * d))
    return lhs, float(rhs), lhs <= rhs + 1e-9


def norm_domination_check(H: np.ndarray, V: np.ndarray, kappa: float) -> float:
    """Smallest eigenvalue of H - V/kappa; nonnegative when H dominates V/kappa.

    Evaluated as (kappa*H - V)/kappa so the definitional t=0 case
    H = lam*I, V = kappa*lam*I cancels exactly instead of to rounding noise.
    """
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    diff = (kappa * np.asarray(H, dtype=float) - np.asarray(V, dtype=float)) / kappa
    return float(np.linalg.eigvalsh((diff + diff.T) / 2.0)[0])


def timing_profile(record: RunRecord, early: Tuple[int, int],
                   late: Tuple[int, int]) -> Tuple[float, float, float]:
    """Mean update wall time over two inclusive iteration windows, and their ratio.

    No pass/fail judgment is made here; callers compare the ratio against
    whatever constancy or growth they expect.
    """
    means = []
    for lo, hi in (early, late):
        mask = (record.t >= lo) & (record.t <= hi)
        if not mask.any():
            raise ValueError(f"window [{lo}, {hi}] selects no iterations")
        means.append(float(record.wall_nanos[mask].mean()))
    early_mean, late_mean = means
    return early_mean, late_mean, late_mean / early_mean
