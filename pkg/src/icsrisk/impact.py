"""Degradation and mean-time-to-failure arithmetic, plus the attacker's estimator."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .model import RCOND, DegradationModel


class RankDeficiencyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MttfProxyParams:
    lam: float
    kappa: float
    gamma: np.ndarray
    sigma_s: float
    T: int

    @classmethod
    def from_model(cls, model: DegradationModel, T: int) -> "MttfProxyParams":
        if model.lam is None:
            raise ValueError("degradation model has no failure threshold")
        return cls(model.lam, model.kappa, model.gamma, model.sigma_s, int(T))


def pinv(X: np.ndarray, rcond: float = RCOND) -> np.ndarray:
    """SVD pseudo-inverse, singular values below rcond * s_max discarded."""
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = s > rcond * s[0] if s.size else s.astype(bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def estimator_matrix(A, B, C, rcond: float = RCOND) -> np.ndarray:
    """Control-action estimate ``u = E z`` with ``E = -B^+ A C^+``."""
    A, B, C = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C))
    for name, M in (("B", B), ("C", C)):
        s = np.linalg.svd(M, compute_uv=False)
        if M.shape[0] < M.shape[1] or int(np.sum(s > rcond * s[0])) < M.shape[1]:
            raise RankDeficiencyError(f"{name} does not have full column rank")
    Bp, Cp = pinv(B, rcond), pinv(C, rcond)
    for M, Mp in ((B, Bp), (C, Cp)):
        assert np.allclose(M @ Mp @ M, M, atol=1e-9 * max(1.0, np.abs(M).max()))
    return -Bp @ A @ Cp


def degradation_rate(x, model: DegradationModel) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != model.gamma.shape:
        raise ValueError(f"state has shape {x.shape}, expected {model.gamma.shape}")
    return float(model.kappa + model.gamma @ x)


def normal_cdf(z):
    # erfc keeps full relative accuracy in the lower tail
    return 0.5 * erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))


def z_values(states, params: MttfProxyParams, upto: int | None = None) -> np.ndarray:
    """Standardized margins z_1..z_upto of a trajectory whose row t is x_t."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    n = params.T if upto is None else upto
    if n < 1 or X.shape[0] - 1 < n:
        raise ValueError(f"trajectory with {X.shape[0]} rows cannot supply tau up to {n}")
    tau = np.arange(1, n + 1)
    drift = np.cumsum(X[1:n + 1] @ params.gamma)
    return (params.lam - params.kappa * tau - drift) / (params.sigma_s * np.sqrt(tau))


def z_tau(states, tau: int, params: MttfProxyParams) -> float:
    """z_tau = (lam - kappa*tau - gamma' sum_{t=1..tau} x_t) / (sigma_s sqrt(tau)).

    Row 0 of ``states`` is x_0, which never enters the sum.
    """
    X = np.atleast_2d(np.asarray(states, dtype=float))
    if not 1 <= tau <= X.shape[0] - 1:
        raise ValueError(f"tau={tau} outside [1, {X.shape[0] - 1}]")
    return float(z_values(X, params, upto=tau)[-1])


def mttf_proxy(states, params: MttfProxyParams) -> float:
    """Attacker's MTTF, sum_{tau=1..T} Phi(z_tau)."""
    return float(np.sum(normal_cdf(z_values(states, params))))


def mttf_surrogate(states, params: MttfProxyParams) -> float:
    """Linear stand-in sum_{tau=1..T} z_tau that the MILP minimizes."""
    return float(np.sum(z_values(states, params)))


def degradation_moments(states, t: int, model: DegradationModel) -> tuple[float, float]:
    """Mean and variance of S_t given the state path x_1..x_t."""
    if t < 1:
        raise ValueError("t must be >= 1")
    X = np.atleast_2d(np.asarray(states, dtype=float))
    if X.shape[0] < t + 1:
        raise ValueError(f"trajectory with {X.shape[0]} rows cannot supply x_1..x_{t}")
    mean = model.kappa * t + float(np.sum(X[1:t + 1] @ model.gamma))
    return mean, model.sigma_s ** 2 * t
