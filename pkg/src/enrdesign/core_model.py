"""Domain types and closed-form variance algebra for the ENR design.

The design randomizes index participants to treatment with probability p while
their n network members are never directly treated. Outcomes follow a mixed
model with a shared network effect, so the generalized least squares estimator
of (control mean, individual effect, spillover effect) has a 3x3 information
matrix with an exchangeable within-network weight structure. This module holds
that matrix, the asymptotic variances and covariance of the individual- and
spillover-effect estimators derived from it, and the corresponding quantities
for the alternative two-model estimator (index-only regression plus
member-only mixed model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class DesignParams:
    """An ENR design point.

    n may be any positive real for analytic work (network-size solving treats
    it continuously); the simulator additionally requires it to be a whole
    number. sigma2_y1 optionally carries a separate index-outcome variance for
    the alternative two-model estimator; when omitted the common outcome
    variance is used.
    """

    n: float
    p: float
    rho_y: float
    sigma2_y: float = 1.0
    sigma2_y1: float | None = None

    def __post_init__(self) -> None:
        if not self.n > 0:
            raise DomainError(f"network size n must be > 0, got {self.n!r}")
        if not 0.0 < self.p < 1.0:
            raise DomainError(f"allocation probability p must be in (0,1), got {self.p!r}")
        if not 0.0 <= self.rho_y < 1.0:
            raise DomainError(f"outcome ICC must be in [0,1), got {self.rho_y!r}")
        if not self.sigma2_y > 0:
            raise DomainError(f"outcome variance must be > 0, got {self.sigma2_y!r}")
        if self.sigma2_y1 is not None and not self.sigma2_y1 > 0:
            raise DomainError(f"index outcome variance must be > 0, got {self.sigma2_y1!r}")

    @property
    def sigma2_u(self) -> float:
        """Between-network variance component."""
        return self.rho_y * self.sigma2_y

    @property
    def sigma2_e(self) -> float:
        """Residual variance component."""
        return (1.0 - self.rho_y) * self.sigma2_y

    @property
    def sigma2_z(self) -> float:
        """Bernoulli treatment variance p(1-p)."""
        return self.p * (1.0 - self.p)

    def index_variance(self) -> float:
        """Index-outcome variance for the alternative estimator."""
        return self.sigma2_y if self.sigma2_y1 is None else self.sigma2_y1


@dataclass(frozen=True)
class EffectSizes:
    """Hypothesized individual (delta_tau) and spillover (delta_delta) effects."""

    delta_tau: float
    delta_delta: float

    def overall(self, n: float) -> float:
        """Network-average effect (delta_tau + n * delta_delta) / (n + 1)."""
        return (self.delta_tau + n * self.delta_delta) / (n + 1.0)

    def ratio_tau_delta(self) -> float:
        if self.delta_delta == 0.0:
            raise DomainError("effect ratio undefined when the spillover effect is 0")
        return self.delta_tau / self.delta_delta


@dataclass(frozen=True)
class ModelCoefficients:
    """Coefficients of the outcome model, ordered (gamma, tau, delta)."""

    gamma: float
    tau: float
    delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma, self.tau, self.delta], dtype=float)


@dataclass(frozen=True)
class VarianceComponents:
    """Asymptotic (single-network scale) variances of the GLS effect estimators.

    All entries are K-scaled: the sampling variance of tau_hat with K networks
    is var_tau / K, and likewise for the others.
    """

    var_tau: float
    var_delta: float
    cov_tau_delta: float
    var_overall: float
    corr: float

    def matrix(self) -> np.ndarray:
        """2x2 covariance of (tau_hat, delta_hat), K-scaled."""
        return np.array(
            [[self.var_tau, self.cov_tau_delta], [self.cov_tau_delta, self.var_delta]]
        )


@dataclass(frozen=True)
class AltVarianceComponents:
    """K-scaled variances for the alternative two-model estimator."""

    var_tau_alt: float
    var_delta_alt: float
    sigma2_y1: float


def _exchangeable_inverse_weights(n: float, rho_y: float) -> tuple[float, float]:
    """Coefficients (c, d) with V^{-1} = c*I + d*J for V = (1-rho)I + rho*J
    of dimension n+1."""
    c = 1.0 / (1.0 - rho_y)
    d = -rho_y / ((1.0 - rho_y) * (1.0 + n * rho_y))
    return c, d


def information_matrix(design: DesignParams) -> np.ndarray:
    """Per-network expected information for (gamma, tau, delta) under GLS.

    Rows/columns are ordered like ModelCoefficients. The matrix is symmetric
    positive definite on the valid parameter domain; the inverse scaled by
    sigma2_y is the asymptotic covariance of the coefficient estimates.
    """
    n, p = design.n, design.p
    c, d = _exchangeable_inverse_weights(n, design.rho_y)
    e = c + (n + 1.0) * d
    return np.array(
        [
            [e * (n + 1.0), e * p, e * n * p],
            [e * p, (c + d) * p, n * p * d],
            [e * n * p, n * p * d, (c + n * d) * n * p],
        ]
    )


def variance_components(design: DesignParams) -> VarianceComponents:
    """Closed-form asymptotic variances of the GLS effect estimators.

    Equals the lower-right 2x2 block of sigma2_y * information_matrix^{-1};
    the overall-effect variance is the variance of the network-average
    contrast (tau_hat + n delta_hat) / (n + 1).
    """
    n, p, rho, s2y = design.n, design.p, design.rho_y, design.sigma2_y
    s2z = design.sigma2_z
    scale = s2y / ((n + 1.0) * s2z)
    var_tau = scale * (n * (1.0 - p) * (1.0 - rho) + (1.0 + n * rho))
    var_delta = scale * ((1.0 - p) * (1.0 - rho) + n * (1.0 + n * rho)) / n
    cov = scale * (p * (1.0 + n * rho) + (1.0 - p) * (n + 1.0) * rho)
    var_overall = scale * (1.0 + n * rho)
    corr = cov / math.sqrt(var_tau * var_delta)
    return VarianceComponents(
        var_tau=var_tau,
        var_delta=var_delta,
        cov_tau_delta=cov,
        var_overall=var_overall,
        corr=corr,
    )


def alt_variance_components(design: DesignParams, sigma2_y1: float) -> AltVarianceComponents:
    """K-scaled variances for the two-model estimator.

    The individual effect comes from an index-only regression with outcome
    variance sigma2_y1; the spillover effect comes from a member-only mixed
    model whose n-member exchangeable correlation contributes the familiar
    design-effect factor 1 + (n-1) * rho.
    """
    if not sigma2_y1 > 0:
        raise DomainError(f"index outcome variance must be > 0, got {sigma2_y1!r}")
    n, rho, s2z = design.n, design.rho_y, design.sigma2_z
    var_tau_alt = sigma2_y1 / s2z
    var_delta_alt = design.sigma2_y * (1.0 + (n - 1.0) * rho) / (n * s2z)
    return AltVarianceComponents(
        var_tau_alt=var_tau_alt, var_delta_alt=var_delta_alt, sigma2_y1=sigma2_y1
    )
