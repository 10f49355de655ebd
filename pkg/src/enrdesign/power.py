"""Analytic power and design solvers for the five ENR hypothesis tests.

Covers power at a given number of networks K, the required K for a target
power, minimum detectable effect sizes, the network size n needed at a fixed
K, the allocation probability p minimizing K, and the closed-form ratios
between the required-K formulas. The test kinds:

* individual effect (two-sided Z),
* spillover effect (two-sided Z),
* joint individual+spillover (2-df Wald, noncentral chi-squared power),
* conjunctive individual+spillover (both Z tests significant, bivariate
  normal orthant power),
* overall network-average effect (two-sided Z),

plus the two-model alternatives for the individual and spillover tests.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np

from .core_model import (
    DesignParams,
    EffectSizes,
    VarianceComponents,
    alt_variance_components,
    variance_components,
)
from .errors import DomainError, Infeasible, NoSolution, ZeroEffect
from .numerics import (
    RootBracket,
    brent_root,
    bvn_upper,
    chisq_quantile,
    check_probability,
    noncentral_chisq_cdf,
    normal_cdf,
    normal_quantile,
    required_ncp,
    solve_monotone_min_integer,
)


class TestKind(str, enum.Enum):
    """The hypothesis tests the design can be powered for."""

    HIE = "hie"          # individual effect
    HSPE = "hspe"        # spillover effect
    HISPJ = "hispj"      # joint 2-df Wald test of both effects
    HISPC = "hispc"      # conjunctive test: both effects individually significant
    HOE = "hoe"          # overall network-average effect
    HIE_ALT = "hie-alt"  # individual effect, index-only regression
    HSPE_ALT = "hspe-alt"  # spillover effect, member-only mixed model

    @classmethod
    def parse(cls, name: str) -> "TestKind":
        try:
            return cls(name.strip().lower().replace("_", "-"))
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise DomainError(f"unknown test kind {name!r}; expected one of: {valid}") from None


TestKind.__test__ = False  # keep pytest from collecting these as test classes
#: Kinds whose required K has a closed form (everything but the conjunctive test).
CLOSED_FORM_KINDS = frozenset(
    {TestKind.HIE, TestKind.HSPE, TestKind.HISPJ, TestKind.HOE, TestKind.HIE_ALT, TestKind.HSPE_ALT}
)


@functools.lru_cache(maxsize=64)
def _chisq_crit(alpha: float) -> float:
    return chisq_quantile(1.0 - alpha, 2)


@functools.lru_cache(maxsize=64)
def _joint_ncp(alpha: float, power_target: float) -> float:
    return required_ncp(_chisq_crit(alpha), power_target, 2)


@dataclass(frozen=True)
class TestSpec:
    """Two-sided Type I error rate and target power."""

    alpha: float = 0.05
    power_target: float = 0.8

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must be in (0,1), got {self.alpha!r}")
        if not 0.0 < self.power_target < 1.0:
            raise DomainError(f"power target must be in (0,1), got {self.power_target!r}")

    @property
    def z_crit(self) -> float:
        return normal_quantile(1.0 - self.alpha / 2.0)

    @property
    def z_power(self) -> float:
        return normal_quantile(self.power_target)

    @property
    def chisq_crit(self) -> float:
        """Critical value of the 2-df Wald statistic."""
        return _chisq_crit(self.alpha)

    @property
    def joint_ncp(self) -> float:
        """Noncentrality putting the target power above the Wald critical value."""
        return _joint_ncp(self.alpha, self.power_target)


TestSpec.__test__ = False


@dataclass(frozen=True)
class SampleSizeResult:
    """Required egonetwork count with its pre-ceiling value and achieved power."""

    k_required: int
    k_continuous: float
    achieved_power: float


@dataclass(frozen=True)
class KRatios:
    """Closed-form ratios between required-K values of the test pairs."""

    delta_vs_tau: float
    joint_vs_tau: float
    joint_vs_delta: float
    tau_vs_overall: float
    delta_vs_overall: float
    joint_vs_overall: float


def _two_sided_power(shift: float, z_crit: float) -> float:
    """Power of a two-sided Z test whose statistic is N(shift, 1).

    Keeps the far-tail term, so the value can slightly exceed the target at
    the closed-form K (the closed forms drop that term when solving for K).
    """
    return check_probability(
        1.0 - normal_cdf(z_crit - shift) + normal_cdf(-z_crit - shift)
    )


def _z_shift(kind: TestKind, design: DesignParams, effects: EffectSizes, k: float) -> float:
    """Mean of the Z statistic, sqrt(K) * effect / asymptotic sd."""
    comps = variance_components(design)
    if kind is TestKind.HIE:
        return math.sqrt(k) * effects.delta_tau / math.sqrt(comps.var_tau)
    if kind is TestKind.HSPE:
        return math.sqrt(k) * effects.delta_delta / math.sqrt(comps.var_delta)
    if kind is TestKind.HOE:
        return math.sqrt(k) * effects.overall(design.n) / math.sqrt(comps.var_overall)
    if kind is TestKind.HIE_ALT:
        alt = alt_variance_components(design, design.index_variance())
        return math.sqrt(k) * effects.delta_tau / math.sqrt(alt.var_tau_alt)
    if kind is TestKind.HSPE_ALT:
        alt = alt_variance_components(design, design.index_variance())
        return math.sqrt(k) * effects.delta_delta / math.sqrt(alt.var_delta_alt)
    raise DomainError(f"no Z statistic for kind {kind!r}")


def _joint_noncentrality(design: DesignParams, effects: EffectSizes, k: float) -> float:
    """Noncentrality K * effect' Sigma^{-1} effect of the 2-df Wald statistic."""
    comps = variance_components(design)
    det = comps.var_tau * comps.var_delta - comps.cov_tau_delta**2
    dt, dd = effects.delta_tau, effects.delta_delta
    quad = (
        dt * dt * comps.var_delta
        - 2.0 * dt * dd * comps.cov_tau_delta
        + dd * dd * comps.var_tau
    ) / det
    return k * quad


def _conjunctive_power(
    design: DesignParams, effects: EffectSizes, spec: TestSpec, k: float
) -> float:
    """Both-tests-significant probability from the bivariate normal of
    (T_tau, T_delta), summed over the four rejection quadrants so effects of
    either sign are handled."""
    comps = variance_components(design)
    mt = math.sqrt(k) * effects.delta_tau / math.sqrt(comps.var_tau)
    md = math.sqrt(k) * effects.delta_delta / math.sqrt(comps.var_delta)
    r = comps.corr
    z = spec.z_crit
    return check_probability(
        bvn_upper(z - mt, z - md, r)
        + bvn_upper(z - mt, z + md, -r)
        + bvn_upper(z + mt, z - md, -r)
        + bvn_upper(z + mt, z + md, r)
    )


def analytic_power(
    kind: TestKind,
    design: DesignParams,
    effects: EffectSizes,
    spec: TestSpec,
    k: int,
) -> float:
    """Asymptotic power of the given test with k egonetworks.

    Zero effect sizes are allowed and return the size-level quantity for the
    corresponding test.
    """
    if k < 1:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    kind = TestKind(kind)
    if kind is TestKind.HISPJ:
        ncp = _joint_noncentrality(design, effects, k)
        return check_probability(1.0 - noncentral_chisq_cdf(spec.chisq_crit, 2, ncp))
    if kind is TestKind.HISPC:
        return _conjunctive_power(design, effects, spec, k)
    return _two_sided_power(_z_shift(kind, design, effects, k), spec.z_crit)


def _k_continuous(
    kind: TestKind, design: DesignParams, effects: EffectSizes, spec: TestSpec
) -> float:
    """Pre-ceiling required K from the closed-form sample-size equations."""
    zsum2 = (spec.z_crit + spec.z_power) ** 2
    comps = variance_components(design)
    if kind is TestKind.HIE:
        if effects.delta_tau == 0.0:
            raise ZeroEffect("individual effect size is 0")
        return comps.var_tau * zsum2 / effects.delta_tau**2
    if kind is TestKind.HSPE:
        if effects.delta_delta == 0.0:
            raise ZeroEffect("spillover effect size is 0")
        return comps.var_delta * zsum2 / effects.delta_delta**2
    if kind is TestKind.HOE:
        overall = effects.overall(design.n)
        if overall == 0.0:
            raise ZeroEffect("overall effect size is 0")
        return comps.var_overall * zsum2 / overall**2
    if kind is TestKind.HISPJ:
        denom = effects.delta_tau**2 + design.n * effects.delta_delta**2
        if denom == 0.0:
            raise ZeroEffect("both effect sizes are 0")
        return (
            spec.joint_ncp
            * design.sigma2_y
            * (1.0 + design.n * design.rho_y)
            / (design.sigma2_z * denom)
        )
    if kind is TestKind.HIE_ALT:
        if effects.delta_tau == 0.0:
            raise ZeroEffect("individual effect size is 0")
        alt = alt_variance_components(design, design.index_variance())
        return alt.var_tau_alt * zsum2 / effects.delta_tau**2
    if kind is TestKind.HSPE_ALT:
        if effects.delta_delta == 0.0:
            raise ZeroEffect("spillover effect size is 0")
        alt = alt_variance_components(design, design.index_variance())
        return alt.var_delta_alt * zsum2 / effects.delta_delta**2
    raise DomainError(f"no closed-form K for kind {kind!r}")


def required_k(
    kind: TestKind,
    design: DesignParams,
    effects: EffectSizes,
    spec: TestSpec,
    k_max: int = 1_000_000,
) -> SampleSizeResult:
    """Smallest number of egonetworks reaching the target power.

    Closed-form kinds take the ceiling of the sample-size equation; the
    conjunctive test has no closed form and is found by monotone integer
    search on its power function (raising NotFoundWithinBound past k_max).
    """
    kind = TestKind(kind)
    if kind is TestKind.HISPC:
        if effects.delta_tau == 0.0 or effects.delta_delta == 0.0:
            raise ZeroEffect("conjunctive test needs both effects nonzero")
        k_req = solve_monotone_min_integer(
            lambda k: _conjunctive_power(design, effects, spec, k) >= spec.power_target,
            k_max,
        )
        k_cont = float(k_req)
        if k_req > 1:
            k_cont = brent_root(
                lambda k: _conjunctive_power(design, effects, spec, k) - spec.power_target,
                RootBracket(float(k_req - 1), float(k_req)),
                xtol=1e-9,
            )
    else:
        k_cont = _k_continuous(kind, design, effects, spec)
        k_req = max(1, math.ceil(k_cont - 1e-9))
    return SampleSizeResult(
        k_required=k_req,
        k_continuous=k_cont,
        achieved_power=analytic_power(kind, design, effects, spec, k_req),
    )


def mde(
    kind: TestKind,
    design: DesignParams,
    spec: TestSpec,
    k: int,
    fixed_other: float | None = None,
    solve_for: str = "tau",
) -> float:
    """Minimum detectable effect magnitude with k egonetworks.

    Single-effect kinds invert their sample-size equation directly (the
    overall kind returns the detectable network-average effect). The joint
    kind needs the other effect fixed: with solve_for="tau", fixed_other is
    the spillover effect and the detectable individual effect is returned
    (and symmetrically for solve_for="delta"); a negative radicand means the
    fixed effect already exceeds what K can support and raises Infeasible.
    The conjunctive kind is solved numerically on its power function, with
    both effects equal unless fixed_other pins one of them.
    """
    if k < 1:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    if solve_for not in ("tau", "delta"):
        raise DomainError(f"solve_for must be 'tau' or 'delta', got {solve_for!r}")
    kind = TestKind(kind)
    zsum2 = (spec.z_crit + spec.z_power) ** 2
    comps = variance_components(design)
    if kind is TestKind.HIE:
        return math.sqrt(comps.var_tau * zsum2 / k)
    if kind is TestKind.HSPE:
        return math.sqrt(comps.var_delta * zsum2 / k)
    if kind is TestKind.HOE:
        return math.sqrt(comps.var_overall * zsum2 / k)
    if kind is TestKind.HIE_ALT:
        alt = alt_variance_components(design, design.index_variance())
        return math.sqrt(alt.var_tau_alt * zsum2 / k)
    if kind is TestKind.HSPE_ALT:
        alt = alt_variance_components(design, design.index_variance())
        return math.sqrt(alt.var_delta_alt * zsum2 / k)
    if kind is TestKind.HISPJ:
        if fixed_other is None:
            raise DomainError("joint-test MDE needs the other effect via fixed_other")
        budget = (
            spec.joint_ncp
            * design.sigma2_y
            * (1.0 + design.n * design.rho_y)
            / (design.sigma2_z * k)
        )
        if solve_for == "tau":
            radicand = budget - design.n * fixed_other**2
        else:
            radicand = (budget - fixed_other**2) / design.n
        if radicand < 0.0:
            raise Infeasible(
                f"fixed effect {fixed_other!r} is too large for K={k} in the joint test"
            )
        return math.sqrt(radicand)
    if kind is TestKind.HISPC:
        return _conjunctive_mde(design, spec, k, fixed_other, solve_for)
    raise DomainError(f"unsupported kind {kind!r}")


def _conjunctive_mde(
    design: DesignParams, spec: TestSpec, k: int, fixed_other: float | None, solve_for: str
) -> float:
    comps = variance_components(design)

    if fixed_other is None:
        def power_at(delta: float) -> float:
            eff = EffectSizes(delta_tau=delta, delta_delta=delta)
            return _conjunctive_power(design, eff, spec, k)
    elif solve_for == "tau":
        # Power is capped by the spillover test alone; check reachability.
        cap_shift = math.sqrt(k) * abs(fixed_other) / math.sqrt(comps.var_delta)
        if _two_sided_power(cap_shift, spec.z_crit) < spec.power_target:
            raise Infeasible(
                f"fixed spillover effect {fixed_other!r} caps conjunctive power "
                f"below the target at K={k}"
            )

        def power_at(delta: float) -> float:
            eff = EffectSizes(delta_tau=delta, delta_delta=fixed_other)
            return _conjunctive_power(design, eff, spec, k)
    else:
        cap_shift = math.sqrt(k) * abs(fixed_other) / math.sqrt(comps.var_tau)
        if _two_sided_power(cap_shift, spec.z_crit) < spec.power_target:
            raise Infeasible(
                f"fixed individual effect {fixed_other!r} caps conjunctive power "
                f"below the target at K={k}"
            )

        def power_at(delta: float) -> float:
            eff = EffectSizes(delta_tau=fixed_other, delta_delta=delta)
            return _conjunctive_power(design, eff, spec, k)

    hi = max(math.sqrt(comps.var_tau), math.sqrt(comps.var_delta)) / math.sqrt(k)
    for _ in range(200):
        if power_at(hi) >= spec.power_target:
            break
        hi *= 2.0
    else:
        raise Infeasible(f"conjunctive power never reaches the target at K={k}")
    return brent_root(
        lambda delta: power_at(delta) - spec.power_target, RootBracket(0.0, hi), xtol=1e-10
    )


def solve_network_size(
    kind: TestKind,
    effects: EffectSizes,
    spec: TestSpec,
    k: int,
    p: float,
    rho_y: float,
    sigma2_y: float = 1.0,
    sigma2_y1: float | None = None,
    n_max: float = 1e4,
) -> float:
    """Smallest network size n at which k egonetworks reach the target power.

    Closed-form kinds solve required-K(n) = k for n; the conjunctive kind
    solves power(n) = target at fixed K = k. The bracket [1e-3, n_max] is
    scanned on a log grid for the first sign change and the smallest root is
    returned; NoSolution means no n in the bracket satisfies the equation.
    """
    if k < 1:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    kind = TestKind(kind)

    def design_at(n: float) -> DesignParams:
        return DesignParams(n=n, p=p, rho_y=rho_y, sigma2_y=sigma2_y, sigma2_y1=sigma2_y1)

    if kind is TestKind.HISPC:
        def objective(n: float) -> float:
            return _conjunctive_power(design_at(n), effects, spec, k) - spec.power_target
    else:
        def objective(n: float) -> float:
            return _k_continuous(kind, design_at(n), effects, spec) - k

    n_lo = 1e-3
    grid = np.logspace(math.log10(n_lo), math.log10(n_max), 400)
    prev_n = grid[0]
    try:
        prev_f = objective(prev_n)
    except ZeroEffect:
        raise
    if prev_f == 0.0:
        return float(prev_n)
    for n in grid[1:]:
        try:
            f = objective(float(n))
        except ZeroEffect:
            # The overall contrast can vanish at an interior n; skip the pole.
            prev_n, prev_f = float(n), prev_f
            continue
        if f == 0.0:
            return float(n)
        if prev_f * f < 0.0:
            return brent_root(objective, RootBracket(float(prev_n), float(n)), xtol=1e-10)
        prev_n, prev_f = float(n), f
    raise NoSolution(
        f"no network size in [{n_lo:g}, {n_max:g}] attains the target with K={k}"
    )


def optimal_p(
    kind: TestKind,
    n: float,
    rho_y: float,
    effects: EffectSizes | None = None,
    spec: TestSpec | None = None,
    sigma2_y: float = 1.0,
    grid_step: float = 0.005,
) -> float:
    """Allocation probability minimizing the required number of egonetworks.

    The overall and joint tests are minimized at p = 1/2 for every n and ICC.
    The individual and spillover tests use the root of the stationarity
    quadratic of their sample-size equation that lies in (0, 1). The
    conjunctive test has no analytic optimum and is minimized numerically
    over a p grid (step ``grid_step``) on the continuous required-K curve,
    which needs effect sizes (the optimum depends on their ratio).
    """
    if not n > 0:
        raise DomainError(f"network size must be > 0, got {n!r}")
    if not 0.0 <= rho_y < 1.0:
        raise DomainError(f"outcome ICC must be in [0,1), got {rho_y!r}")
    kind = TestKind(kind)
    if kind in (TestKind.HOE, TestKind.HISPJ):
        return 0.5
    if kind in (TestKind.HIE, TestKind.HIE_ALT):
        if kind is TestKind.HIE_ALT:
            return 0.5  # index-only variance scales with 1/(p(1-p))
        # (1-rho) n p^2 - 2 (n+1) p + (n+1) = 0, root in (0,1)
        disc = (n + 1.0) * (1.0 + n * rho_y)
        return ((n + 1.0) - math.sqrt(disc)) / ((1.0 - rho_y) * n)
    if kind in (TestKind.HSPE, TestKind.HSPE_ALT):
        if kind is TestKind.HSPE_ALT:
            return 0.5  # member-only variance also scales with 1/(p(1-p))
        # (1-rho) p^2 - 2 A p + A = 0 with A = n^2 rho + n - rho + 1
        a_coef = n * n * rho_y + n - rho_y + 1.0
        return (a_coef - math.sqrt(a_coef * (a_coef - 1.0 + rho_y))) / (1.0 - rho_y)
    if kind is TestKind.HISPC:
        if effects is None:
            raise DomainError("conjunctive optimal p needs effect sizes")
        spec = spec or TestSpec()
        best_p, best_k = None, math.inf
        for p in np.arange(grid_step, 1.0, grid_step):
            design = DesignParams(n=n, p=float(p), rho_y=rho_y, sigma2_y=sigma2_y)
            k_cont = _continuous_conjunctive_k(design, effects, spec)
            if k_cont < best_k:
                best_p, best_k = float(p), k_cont
        if best_p is None:
            raise NoSolution("conjunctive required K is unbounded on the whole p grid")
        return best_p
    raise DomainError(f"unsupported kind {kind!r}")


def _continuous_conjunctive_k(
    design: DesignParams, effects: EffectSizes, spec: TestSpec, k_max: float = 1e7
) -> float:
    """Real-valued K solving conjunctive power = target (inf if unreachable)."""
    def excess(k: float) -> float:
        return _conjunctive_power(design, effects, spec, k) - spec.power_target

    if excess(1.0) >= 0.0:
        return 1.0
    hi = 2.0
    while excess(hi) < 0.0:
        hi *= 4.0
        if hi > k_max:
            return math.inf
    return brent_root(excess, RootBracket(hi / 4.0, hi), xtol=1e-9)


def k_ratios(design: DesignParams, effects: EffectSizes, spec: TestSpec) -> KRatios:
    """Closed-form ratios between the required-K equations of the test pairs.

    Each ratio equals the quotient of the corresponding pre-ceiling values
    from required_k.
    """
    if effects.delta_tau == 0.0 or effects.delta_delta == 0.0:
        raise ZeroEffect("ratios need both effect sizes nonzero")
    n, p, rho = design.n, design.p, design.rho_y
    a_num = n * (1.0 - p) * (1.0 - rho) + (1.0 + n * rho)
    b_num = (1.0 - p) * (1.0 - rho) + n * (1.0 + n * rho)
    one_nrho = 1.0 + n * rho
    r = effects.ratio_tau_delta()
    zsum2 = (spec.z_crit + spec.z_power) ** 2
    ncp_ratio = spec.joint_ncp / zsum2
    dt2 = effects.delta_tau**2
    dd2 = effects.delta_delta**2
    joint_denom = dt2 + n * dd2
    return KRatios(
        delta_vs_tau=b_num / (n * a_num) * r * r,
        joint_vs_tau=ncp_ratio * one_nrho * (n + 1.0) / a_num * dt2 / joint_denom,
        joint_vs_delta=ncp_ratio * one_nrho * (n + 1.0) * n / b_num * dd2 / joint_denom,
        tau_vs_overall=a_num
        * (1.0 + 2.0 * n / r + n * n / (r * r))
        / ((n + 1.0) ** 2 * one_nrho),
        delta_vs_overall=b_num * (r + n) ** 2 / (n * (n + 1.0) ** 2 * one_nrho),
        joint_vs_overall=ncp_ratio * (r + n) ** 2 / ((n + 1.0) * (r * r + n)),
    )


def conjunctive_power(design: DesignParams, effects: EffectSizes, spec: TestSpec, k: float) -> float:
    """Conjunctive-test power at a (possibly non-integer) number of networks."""
    if k <= 0:
        raise DomainError(f"k must be positive, got {k!r}")
    return _conjunctive_power(design, effects, spec, k)


__all__ = [
    "TestKind",
    "TestSpec",
    "SampleSizeResult",
    "KRatios",
    "CLOSED_FORM_KINDS",
    "analytic_power",
    "required_k",
    "mde",
    "solve_network_size",
    "optimal_p",
    "k_ratios",
    "conjunctive_power",
]
