"""One-pass mirror-descent reward estimator and its matrix-free variant.

The update keeps a running curvature matrix built from per-sample logistic
Hessians evaluated at the *next* iterate (a lookahead), takes a single
Newton-like step against that geometry, and projects back onto the parameter
ball in the same norm. Per-iteration cost and memory are O(d^2) regardless of
how many samples have been seen; no sample is ever stored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .base import BaseRewardEstimator, check_vector
from .exceptions import NumericFailure
from .linalg import LocalNormMatrix, cg_solve, sherman_morrison
from .linkmath import log_loss, sigmoid_pair

__all__ = [
    "OnePassConfig",
    "default_step_size",
    "default_regularization",
    "confidence_radius",
    "loss_derivatives",
    "project_localnorm_ball",
    "OnePassRewardEstimator",
    "HvpCgRewardEstimator",
]

RADIUS_MODES = ("practical", "theory")


def default_step_size(B: float, L: float) -> float:
    """Step size (1/2) log 2 + (B*L + 1) that the confidence guarantee assumes."""
    return 0.5 * math.log(2.0) + (B * L + 1.0)


def default_regularization(eta: float, dim: int, B: float, L: float) -> float:
    """Regularization 84*sqrt(2)*eta*(d*L^2 + B*L^3) paired with the default step size."""
    return 84.0 * math.sqrt(2.0) * eta * (dim * L**2 + B * L**3)


@dataclass(frozen=True)
class OnePassConfig:
    """Resolved hyperparameters of the one-pass estimator."""

    dim: int
    B: float
    L: float
    eta: float
    lam: float
    radius_mode: str = "practical"
    c_beta: float = 1.0
    delta: float = 0.1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        for name in ("B", "L", "eta", "lam"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.radius_mode not in RADIUS_MODES:
            raise ValueError(f"radius_mode must be one of {RADIUS_MODES}, got {self.radius_mode!r}")
        if self.c_beta < 0:
            raise ValueError(f"c_beta must be nonnegative, got {self.c_beta}")
        if not (0 < self.delta <= 1):
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")

    @classmethod
    def resolve(
        cls,
        dim: int,
        B: float,
        L: float,
        eta: Optional[float] = None,
        lam: Optional[float] = None,
        radius_mode: str = "practical",
        c_beta: float = 1.0,
        delta: float = 0.1,
    ) -> "OnePassConfig":
        """Fill eta/lam from their closed-form defaults when not overridden."""
        if eta is None:
            eta = default_step_size(B, L)
        if lam is None:
            lam = default_regularization(eta, dim, B, L)
        return cls(dim=dim, B=B, L=L, eta=eta, lam=lam,
                   radius_mode=radius_mode, c_beta=c_beta, delta=delta)


def confidence_radius(t: int, config: OnePassConfig) -> float:
    """Confidence-set radius at iteration t.

    Practical mode scales sqrt(d log((t+1)/delta)) by c_beta. Theory mode
    evaluates the full constant from the guarantee's proof, which is loose by
    design and only sensible for coverage checks.
    """
    if t < 1:
        raise ValueError(f"iteration counter must be >= 1, got {t}")
    if config.radius_mode == "practical":
        return config.c_beta * math.sqrt(config.dim * math.log((t + 1) / config.delta))
    eta, lam, B, L, d = config.eta, config.lam, config.B, config.L, config.dim
    c = 7.0 * eta / 6.0
    big_c = (
        22.0 * eta * (3.0 * math.log(1.0 + 2.0 * t) + 2.0 + L * B)
        * math.log(2.0 * math.sqrt(1.0 + 2.0 * t) / config.delta)
        + 4.0 * eta
        + 2.0 * eta * math.sqrt(6.0) * c * d * math.log(1.0 + 2.0 * t * L**2 / (d * lam))
        + 4.0 * lam * B**2
    )
    return math.sqrt(big_c)


def loss_derivatives(theta: np.ndarray, z: np.ndarray, y: int) -> Tuple[float, np.ndarray, float]:
    """Loss, gradient, and Hessian weight of the logistic preference loss at theta.

    The gradient is (sigma(z.theta) - y) z; the Hessian is hess_weight * z z^T
    with hess_weight = sigma'(z.theta), returned as the scalar so callers choose
    whether to materialize it.
    """
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y!r}")
    s = float(np.dot(z, theta))
    sig, ds = sigmoid_pair(s)
    return log_loss(s, y), (sig - y) * z, ds


def project_localnorm_ball(theta_prime: np.ndarray, norm_mat: np.ndarray, B: float) -> np.ndarray:
    """Project theta_prime onto the Euclidean ball of radius B in the norm of norm_mat.

    Interior points pass through. Otherwise the KKT system gives
    theta(nu) = (M + nu I)^-1 M theta_prime with ||theta(nu)|| strictly
    decreasing in nu, so the multiplier is bracketed by geometric growth and
    pinned by bisection to |norm - B| <= 1e-10 * B.
    """
    if B <= 0:
        raise ValueError(f"B must be positive, got {B}")
    theta_prime = np.asarray(theta_prime, dtype=float)
    if float(np.linalg.norm(theta_prime)) <= B:
        return theta_prime.copy()
    rhs = norm_mat @ theta_prime
    eye = np.eye(theta_prime.shape[0])

    def candidate(nu: float) -> np.ndarray:
        return np.linalg.solve(norm_mat + nu * eye, rhs)

    hi = 1.0
    for _ in range(201):
        if float(np.linalg.norm(candidate(hi))) < B:
            break
        hi *= 2.0
    else:
        raise NumericFailure("projection multiplier bracket exceeded 200 doublings")

    lo = 0.0
    tol = 1e-10 * B
    theta = None
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        theta = candidate(mid)
        nrm = float(np.linalg.norm(theta))
        if abs(nrm - B) <= tol:
            break
        if nrm > B:
            lo = mid
        else:
            hi = mid
    else:
        raise NumericFailure("projection bisection did not reach tolerance")
    nrm = float(np.linalg.norm(theta))
    if nrm > B:
        theta = theta * (B / nrm)
    return theta


class OnePassRewardEstimator(BaseRewardEstimator):
    """Online preference reward estimator with constant per-iteration cost.

    Parameters
    ----------
    dim : feature dimension d.
    B : radius of the parameter ball the iterates live in.
    L : bound on feature norms (feature differences are bounded by 2L).
    eta, lam : step size and regularization; default to the closed-form
        settings the confidence guarantee assumes.
    radius_mode, c_beta, delta : confidence-radius configuration.

    Attributes (after reset/fit)
    ----------
    theta_ : current parameter iterate, always inside the B-ball.
    hess_ : running lookahead curvature matrix and its maintained inverse.
    theta_sum_ : running sum of all iterates, for averaged-parameter policies.
    t_ : iteration counter, starting at 1.
    """

    def __init__(self, dim: int, B: float = 1.0, L: float = 1.0,
                 eta: Optional[float] = None, lam: Optional[float] = None,
                 radius_mode: str = "practical", c_beta: float = 1.0,
                 delta: float = 0.1):
        self.dim = dim
        self.B = B
        self.L = L
        self.eta = eta
        self.lam = lam
        self.radius_mode = radius_mode
        self.c_beta = c_beta
        self.delta = delta

    def reset(self) -> "OnePassRewardEstimator":
        self.config_ = OnePassConfig.resolve(
            self.dim, self.B, self.L, self.eta, self.lam,
            self.radius_mode, self.c_beta, self.delta,
        )
        self.theta_ = np.zeros(self.dim)
        self.hess_ = LocalNormMatrix.scaled_identity(self.dim, self.config_.lam)
        self.theta_sum_ = np.zeros(self.dim)
        self.t_ = 1
        return self

    def update(self, z: np.ndarray, y: int) -> None:
        z = check_vector(z, self.dim)
        cfg = self.config_
        _, grad, hw = loss_derivatives(self.theta_, z, y)
        step_weight = cfg.eta * hw
        # Scratch inverse of the step geometry H + eta*hw*zz^T; the canonical
        # matrix is left untouched so the lookahead accumulation below does not
        # require a downdate.
        tilde_inv = sherman_morrison(self.hess_.inv, z, step_weight)
        theta_prime = self.theta_ - cfg.eta * (tilde_inv @ grad)
        if float(np.linalg.norm(theta_prime)) <= cfg.B:
            theta_next = theta_prime
        else:
            tilde_mat = self.hess_.mat + step_weight * np.outer(z, z)
            theta_next = project_localnorm_ball(theta_prime, tilde_mat, cfg.B)
        _, _, hw_next = loss_derivatives(theta_next, z, y)
        self.hess_.rank_one_update(z, hw_next)
        self.theta_ = theta_next
        self.theta_sum_ = self.theta_sum_ + theta_next
        self.t_ += 1

    # --- scenario hooks ---------------------------------------------------

    def local_norm(self, v: np.ndarray) -> float:
        return self.hess_.norm(v)

    def inv_norm(self, v: np.ndarray) -> float:
        return self.hess_.inv_norm(v)

    def inv_norm_matrix(self) -> np.ndarray:
        return self.hess_.inv

    def local_norm_matrix(self) -> Optional[np.ndarray]:
        return self.hess_.mat

    def radius(self, t: Optional[int] = None) -> float:
        return confidence_radius(self.t_ if t is None else t, self.config_)

    # --- snapshotting ------------------------------------------------------

    def save(self, path) -> None:
        """Write a text snapshot: params, counter, iterates, curvature row-major."""
        payload = {
            "kind": "onepass",
            "params": self.get_params(),
            "t": self.t_,
            "theta": self.theta_.tolist(),
            "theta_sum": self.theta_sum_.tolist(),
            "hess": self.hess_.mat.reshape(-1).tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "OnePassRewardEstimator":
        """Rebuild from a snapshot; the inverse is recomputed, never trusted."""
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        est = cls(**payload["params"]).reset()
        est.t_ = int(payload["t"])
        est.theta_ = np.asarray(payload["theta"], dtype=float)
        est.theta_sum_ = np.asarray(payload["theta_sum"], dtype=float)
        mat = np.asarray(payload["hess"], dtype=float).reshape(est.dim, est.dim)
        est.hess_ = LocalNormMatrix(mat=mat, inv=np.linalg.inv(mat), dim=est.dim)
        return est


def damping_value(t: int, horizon: int, lambda0: float, damping: str) -> float:
    """Damping schedule lambda0 * min(1, f(t/horizon)) absorbing past curvature."""
    u = t / horizon
    if damping == "linear":
        f = u
    elif damping == "log":
        f = math.log1p(u) / math.log(2.0)
    else:
        raise ValueError(f"damping must be 'linear' or 'log', got {damping!r}")
    return lambda0 * min(1.0, f)


class HvpCgRewardEstimator(BaseRewardEstimator):
    """Matrix-free variant: conjugate gradient against Hessian-vector products.

    Past curvature is absorbed into a growing damping term instead of a stored
    matrix, so the state is O(d): no d x d array exists anywhere in the update.
    The projection is plain Euclidean rescaling since no curvature norm is
    available. ``horizon`` anchors the damping schedule and must be set before
    the first update.
    """

    def __init__(self, dim: int, B: float = 1.0, L: float = 1.0,
                 eta: Optional[float] = None, cg_iters: int = 3,
                 cg_tol: float = 1e-10, lambda0: float = 0.8,
                 damping: str = "linear", horizon: Optional[int] = None,
                 c_beta: float = 1.0, delta: float = 0.1):
        self.dim = dim
        self.B = B
        self.L = L
        self.eta = eta
        self.cg_iters = cg_iters
        self.cg_tol = cg_tol
        self.lambda0 = lambda0
        self.damping = damping
        self.horizon = horizon
        self.c_beta = c_beta
        self.delta = delta

    def reset(self) -> "HvpCgRewardEstimator":
        if self.horizon is None or self.horizon < 1:
            raise ValueError("horizon must be a positive iteration budget")
        if self.cg_iters < 1:
            raise ValueError(f"cg_iters must be >= 1, got {self.cg_iters}")
        if self.lambda0 <= 0:
            raise ValueError(f"lambda0 must be positive, got {self.lambda0}")
        self.eta_ = default_step_size(self.B, self.L) if self.eta is None else self.eta
        self.theta_ = np.zeros(self.dim)
        self.theta_sum_ = np.zeros(self.dim)
        self.t_ = 1
        return self

    def _damping(self, t: Optional[int] = None) -> float:
        return damping_value(self.t_ if t is None else t, self.horizon,
                             self.lambda0, self.damping)

    def update(self, z: np.ndarray, y: int) -> None:
        z = check_vector(z, self.dim)
        _, grad, hw = loss_derivatives(self.theta_, z, y)
        lam_t = self._damping()
        scale = self.eta_ * hw

        def apply(p: np.ndarray) -> np.ndarray:
            return lam_t * p + scale * float(z @ p) * z

        v, _ = cg_solve(apply, grad, self.cg_iters, self.cg_tol)
        theta_next = self.theta_ - self.eta_ * v
        nrm = float(np.linalg.norm(theta_next))
        if nrm > self.B:
            theta_next = theta_next * (self.B / nrm)
        self.theta_ = theta_next
        self.theta_sum_ = self.theta_sum_ + theta_next
        self.t_ += 1

    # --- scenario hooks ----------------------------------------------------
    # The damping term is this estimator's whole model of accumulated
    # curvature, so its norms are isotropic.

    def local_norm(self, v: np.ndarray) -> float:
        return math.sqrt(self._damping()) * float(np.linalg.norm(v))

    def inv_norm(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(v)) / math.sqrt(self._damping())

    def inv_norm_matrix(self) -> np.ndarray:
        return np.eye(self.dim) / self._damping()

    def radius(self, t: Optional[int] = None) -> float:
        t = self.t_ if t is None else t
        return self.c_beta * math.sqrt(self.dim * math.log((t + 1) / self.delta))
