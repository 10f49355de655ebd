"""Monte Carlo oracle for the ENR design.

Generates trial data from the mixed-model generative process, fits the GLS
estimator (and the alternative two-model estimator), runs the five hypothesis
tests, and aggregates empirical power, bias, variance, and coverage across
replicates. Replicate randomness is derived from (master seed, replicate
index) so results are bit-identical no matter how replicates are scheduled.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .core_model import DesignParams, ModelCoefficients
from .errors import DegenerateDesign, DomainError, InsufficientData
from .numerics import normal_quantile
from .power import TestKind, TestSpec

MAIN_TEST_KINDS = (TestKind.HIE, TestKind.HSPE, TestKind.HISPJ, TestKind.HISPC, TestKind.HOE)
ALT_TEST_KINDS = (TestKind.HIE_ALT, TestKind.HSPE_ALT)

_ESTIMATE_KEYS = ("tau", "delta", "overall", "tau_alt", "delta_alt")


@dataclass(frozen=True)
class EgoNetworkDataset:
    """Outcomes and assignments for K egonetworks of constant size.

    ``y`` has one row per network: column 0 is the index participant, columns
    1..n are the members. ``z`` is the index treatment indicator; members are
    never treated, and a member's exposure equals its index's assignment.
    """

    y: np.ndarray
    z: np.ndarray
    n_members: int

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        z = np.asarray(self.z, dtype=int)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        if y.ndim != 2 or z.ndim != 1 or y.shape[0] != z.shape[0]:
            raise DomainError("outcome matrix and assignment vector are inconsistent")
        if y.shape[1] != self.n_members + 1:
            raise DomainError(
                f"networks must have exactly {self.n_members} members; "
                f"outcome rows have {y.shape[1]} units"
            )
        if not np.all((z == 0) | (z == 1)):
            raise DomainError("index assignments must be 0/1")

    @property
    def k(self) -> int:
        return int(self.z.shape[0])

    def exposure(self) -> np.ndarray:
        """Treated-neighbor count per unit; 0 for every index participant."""
        g = np.zeros_like(self.y, dtype=int)
        if self.n_members >= 1:
            g[:, 1:] = self.z[:, None]
        return g


def _as_integer_n(n: float) -> int:
    if float(n) != int(n) or int(n) < 1:
        raise DomainError(f"the simulator needs an integer network size >= 1, got {n!r}")
    return int(n)


def _generator(seed: int | np.random.SeedSequence) -> np.random.Generator:
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seq))


def generate_dataset(
    design: DesignParams,
    k: int,
    truth: ModelCoefficients,
    seed: int | np.random.SeedSequence,
) -> EgoNetworkDataset:
    """Draw a trial: Bernoulli(p) index assignments, normal network effects
    with variance rho_y * sigma2_y, and normal residuals with the complement.

    Draw order is fixed (assignments, then network effects, then the outcome
    residual matrix), so network i's data depends only on the seed and i.
    """
    n = _as_integer_n(design.n)
    if k < 1:
        raise DomainError(f"need at least one network, got k={k!r}")
    rng = _generator(seed)
    z = rng.binomial(1, design.p, size=k)
    u = rng.normal(0.0, math.sqrt(design.sigma2_u), size=k)
    eps = rng.normal(0.0, math.sqrt(design.sigma2_e), size=(k, n + 1))
    y = truth.gamma + u[:, None] + eps
    y[:, 0] += truth.tau * z
    if n >= 1:
        y[:, 1:] += truth.delta * z[:, None]
    return EgoNetworkDataset(y=y, z=z, n_members=n)


@dataclass(frozen=True)
class GlsFit:
    """GLS fit of (gamma, tau, delta) with its covariance and test statistics."""

    theta_hat: ModelCoefficients
    cov_hat: np.ndarray
    overall_hat: float
    var_overall_hat: float
    t_tau: float
    t_delta: float
    t_overall: float
    q_joint: float
    k: int
    n: int
    rho_used: float
    sigma2_y_used: float


def _gls_suffstats(data: EgoNetworkDataset) -> tuple[np.ndarray, np.ndarray, int]:
    totals = data.y.sum(axis=1)
    index_y = data.y[:, 0]
    treated = int(data.z.sum())
    return totals, index_y, treated


def _fit_from_arrays(
    y: np.ndarray, z: np.ndarray, n: int, rho: float, sigma2_y: float
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form GLS via per-network sufficient statistics.

    The exchangeable V inverse is c*I + d*J, so each network contributes
    through its outcome total, its index outcome, and its assignment only.
    """
    k = z.shape[0]
    treated = int(z.sum())
    if treated == 0 or treated == k:
        raise DegenerateDesign("all networks fell in one arm; effects are unidentifiable")
    c = 1.0 / (1.0 - rho)
    d = -rho / ((1.0 - rho) * (1.0 + n * rho))
    e = c + (n + 1.0) * d
    totals = y.sum(axis=1)
    index_y = y[:, 0]
    treated_mask = z == 1
    w0 = e * totals.sum()
    w1 = c * index_y[treated_mask].sum() + d * totals[treated_mask].sum()
    w2 = (
        c * (totals[treated_mask] - index_y[treated_mask]).sum()
        + n * d * totals[treated_mask].sum()
    )
    info = np.array(
        [
            [e * (n + 1.0) * k, e * treated, e * n * treated],
            [e * treated, (c + d) * treated, n * d * treated],
            [e * n * treated, n * d * treated, (c + n * d) * n * treated],
        ]
    )
    theta = np.linalg.solve(info, np.array([w0, w1, w2]))
    cov = sigma2_y * np.linalg.inv(info)
    return theta, cov


def _gls_residual_variance(
    data: EgoNetworkDataset, theta: np.ndarray, rho: float
) -> float:
    """Plug-in outcome variance from the weighted GLS residual sum of squares."""
    n = data.n_members
    c = 1.0 / (1.0 - rho)
    d = -rho / ((1.0 - rho) * (1.0 + n * rho))
    fitted = np.full_like(data.y, theta[0])
    fitted[:, 0] += theta[1] * data.z
    if n >= 1:
        fitted[:, 1:] += theta[2] * data.z[:, None]
    resid = data.y - fitted
    quad = c * float((resid**2).sum()) + d * float((resid.sum(axis=1) ** 2).sum())
    dof = data.k * (n + 1) - 3
    if dof <= 0:
        raise InsufficientData("too few units to estimate the outcome variance")
    return quad / dof


def gls_fit(
    data: EgoNetworkDataset, design: DesignParams, mode: str = "known_icc"
) -> GlsFit:
    """Fit the outcome model by GLS and form the five test statistics.

    known_icc uses the design's ICC and outcome variance (the known-variance
    asymptotics of the analytic formulas); estimated_icc plugs in the
    control-arm moment ICC and the GLS residual variance.
    """
    if mode not in ("known_icc", "estimated_icc"):
        raise DomainError(f"mode must be 'known_icc' or 'estimated_icc', got {mode!r}")
    n = data.n_members
    if n < 1:
        raise DomainError("the GLS fit needs at least one member per network")
    treated = int(data.z.sum())
    if treated == 0 or treated == data.k:
        raise DegenerateDesign("all networks fell in one arm; effects are unidentifiable")
    if mode == "estimated_icc":
        if treated < 2 or data.k - treated < 2:
            raise InsufficientData("estimated-ICC fitting needs at least 2 networks per arm")
        rho = estimate_icc(data)
        theta, _ = _fit_from_arrays(data.y, data.z, n, rho, 1.0)
        sigma2 = _gls_residual_variance(data, theta, rho)
        _, cov = _fit_from_arrays(data.y, data.z, n, rho, sigma2)
    else:
        rho = design.rho_y
        sigma2 = design.sigma2_y
        theta, cov = _fit_from_arrays(data.y, data.z, n, rho, sigma2)

    overall = (theta[1] + n * theta[2]) / (n + 1.0)
    var_overall = (
        cov[1, 1] + 2.0 * n * cov[1, 2] + n * n * cov[2, 2]
    ) / (n + 1.0) ** 2
    cov_joint = cov[1:, 1:]
    theta_joint = theta[1:]
    q_joint = float(theta_joint @ np.linalg.solve(cov_joint, theta_joint))
    return GlsFit(
        theta_hat=ModelCoefficients(
            gamma=float(theta[0]), tau=float(theta[1]), delta=float(theta[2])
        ),
        cov_hat=cov,
        overall_hat=float(overall),
        var_overall_hat=float(var_overall),
        t_tau=float(theta[1] / math.sqrt(cov[1, 1])),
        t_delta=float(theta[2] / math.sqrt(cov[2, 2])),
        t_overall=float(overall / math.sqrt(var_overall)),
        q_joint=q_joint,
        k=data.k,
        n=n,
        rho_used=float(rho),
        sigma2_y_used=float(sigma2),
    )


def estimate_icc(data: EgoNetworkDataset) -> float:
    """One-way ANOVA moment estimator of the outcome ICC on control networks.

    Control networks share a single mean, so the classic between/within mean
    square contrast applies directly. The estimate is clamped to [0, 0.999].
    """
    m = data.n_members + 1
    if m < 2:
        raise InsufficientData("ICC estimation needs networks with at least 2 units")
    control = data.y[data.z == 0]
    g = control.shape[0]
    if g < 2:
        raise InsufficientData("ICC estimation needs at least 2 control networks")
    group_means = control.mean(axis=1)
    grand = group_means.mean()
    msb = m * float(((group_means - grand) ** 2).sum()) / (g - 1)
    msw = float(((control - group_means[:, None]) ** 2).sum()) / (g * (m - 1))
    denom = msb + (m - 1) * msw
    if denom <= 0.0:
        return 0.0
    return float(min(0.999, max(0.0, (msb - msw) / denom)))


@dataclass(frozen=True)
class AltFit:
    """Two-model estimates: index-only regression and member-only mixed model."""

    tau_hat: float
    var_tau_hat: float
    delta_hat: float
    var_delta_hat: float
    t_tau: float
    t_delta: float


def alt_fit(data: EgoNetworkDataset, design: DesignParams) -> AltFit:
    """Fit the alternative estimator with known variance components.

    The individual effect is the treated-minus-control difference of index
    outcomes; the spillover effect is the same difference of member means
    (the balanced member-only GLS reduces to that difference). Variances use
    the realized arm counts.
    """
    n = data.n_members
    if n < 1:
        raise DomainError("the member-only model needs at least one member per network")
    k = data.k
    treated = int(data.z.sum())
    if treated == 0 or treated == k:
        raise DegenerateDesign("all networks fell in one arm; effects are unidentifiable")
    treated_mask = data.z == 1
    tau_hat = float(data.y[treated_mask, 0].mean() - data.y[~treated_mask, 0].mean())
    member_means = data.y[:, 1:].mean(axis=1)
    delta_hat = float(member_means[treated_mask].mean() - member_means[~treated_mask].mean())
    arm_factor = k / (treated * (k - treated))
    var_tau = design.index_variance() * arm_factor
    var_delta = (
        design.sigma2_y * (1.0 + (n - 1.0) * design.rho_y) / n * arm_factor
    )
    return AltFit(
        tau_hat=tau_hat,
        var_tau_hat=var_tau,
        delta_hat=delta_hat,
        var_delta_hat=var_delta,
        t_tau=tau_hat / math.sqrt(var_tau),
        t_delta=delta_hat / math.sqrt(var_delta),
    )


def run_tests(fit: GlsFit, spec: TestSpec) -> dict[TestKind, bool]:
    """Rejection decisions of the five tests for one fitted trial."""
    z = spec.z_crit
    both = abs(fit.t_tau) > z and abs(fit.t_delta) > z
    return {
        TestKind.HIE: abs(fit.t_tau) > z,
        TestKind.HSPE: abs(fit.t_delta) > z,
        TestKind.HISPJ: fit.q_joint > spec.chisq_crit,
        TestKind.HISPC: both,
        TestKind.HOE: abs(fit.t_overall) > z,
    }


@dataclass(frozen=True)
class SimulationReport:
    """Aggregated Monte Carlo results for one design point."""

    replicates: int
    valid_replicates: int
    degenerate_replicates: int
    rejection_rates: dict[str, dict[str, float]]
    estimates: dict[str, dict[str, float]]
    config: dict[str, object]
    warnings: list[str] = field(default_factory=list)

    def results_dict(self) -> dict:
        return {
            "replicates": self.replicates,
            "valid_replicates": self.valid_replicates,
            "degenerate_replicates": self.degenerate_replicates,
            "rejection_rates": self.rejection_rates,
            "estimates": self.estimates,
        }

    def to_json(self, indent: int | None = 2) -> str:
        payload = {
            "config": self.config,
            "results": self.results_dict(),
            "warnings": self.warnings,
        }
        return json.dumps(payload, indent=indent, sort_keys=True)


def _replicate_block(
    design: DesignParams,
    truth: ModelCoefficients,
    spec: TestSpec,
    k: int,
    kinds: tuple[TestKind, ...],
    mode: str,
    master_seed: int,
    rep_indices: Sequence[int],
    replicates: int,
) -> list[tuple[int, dict | None]]:
    """Evaluate a block of replicates; each row is (index, result-or-None).

    None marks a degenerate randomization. Seeds come from spawning the master
    sequence once per replicate index, so any partition into blocks yields the
    same per-replicate results.
    """
    children = np.random.SeedSequence(master_seed).spawn(replicates)
    need_main = any(kind in MAIN_TEST_KINDS for kind in kinds)
    need_alt = any(kind in ALT_TEST_KINDS for kind in kinds)
    z_crit = spec.z_crit
    z95 = normal_quantile(0.975)  # coverage is reported for nominal 95% intervals
    out: list[tuple[int, dict | None]] = []
    for rep in rep_indices:
        data = generate_dataset(design, k, truth, children[rep])
        try:
            row: dict[str, object] = {}
            if need_main:
                fit = gls_fit(data, design, mode=mode)
                decisions = run_tests(fit, spec)
                half = z95 * math.sqrt(fit.cov_hat[1, 1])
                half_d = z95 * math.sqrt(fit.cov_hat[2, 2])
                half_o = z95 * math.sqrt(fit.var_overall_hat)
                truth_overall = (truth.tau + design.n * truth.delta) / (design.n + 1.0)
                row.update(
                    tau=fit.theta_hat.tau,
                    delta=fit.theta_hat.delta,
                    overall=fit.overall_hat,
                    cover_tau=abs(fit.theta_hat.tau - truth.tau) <= half,
                    cover_delta=abs(fit.theta_hat.delta - truth.delta) <= half_d,
                    cover_overall=abs(fit.overall_hat - truth_overall) <= half_o,
                    decisions={kind.value: decisions[kind] for kind in MAIN_TEST_KINDS},
                )
            if need_alt:
                afit = alt_fit(data, design)
                row.update(
                    tau_alt=afit.tau_hat,
                    delta_alt=afit.delta_hat,
                    cover_tau_alt=abs(afit.tau_hat - truth.tau)
                    <= z95 * math.sqrt(afit.var_tau_hat),
                    cover_delta_alt=abs(afit.delta_hat - truth.delta)
                    <= z95 * math.sqrt(afit.var_delta_hat),
                    alt_decisions={
                        TestKind.HIE_ALT.value: abs(afit.t_tau) > z_crit,
                        TestKind.HSPE_ALT.value: abs(afit.t_delta) > z_crit,
                    },
                )
            out.append((rep, row))
        except DegenerateDesign:
            out.append((rep, None))
    return out


def empirical_power(
    kinds: Iterable[TestKind],
    design: DesignParams,
    truth: ModelCoefficients,
    spec: TestSpec,
    k: int,
    replicates: int,
    seed: int,
    mode: str = "known_icc",
    workers: int = 1,
) -> SimulationReport:
    """Monte Carlo rejection rates, estimator moments, and CI coverage.

    Degenerate randomizations (all networks in one arm) are counted
    separately, never silently dropped. The report is identical for any
    worker count because replicate seeds depend only on (seed, index).
    """
    kinds = tuple(TestKind(kind) for kind in kinds)
    if not kinds:
        raise DomainError("at least one test kind is required")
    if replicates < 100:
        raise DomainError(f"at least 100 replicates are required, got {replicates!r}")
    _as_integer_n(design.n)
    if mode not in ("known_icc", "estimated_icc"):
        raise DomainError(f"mode must be 'known_icc' or 'estimated_icc', got {mode!r}")

    indices = list(range(replicates))
    if workers <= 1:
        rows = _replicate_block(
            design, truth, spec, k, kinds, mode, seed, indices, replicates
        )
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        rows = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    _replicate_block,
                    design, truth, spec, k, kinds, mode, seed, chunk, replicates,
                )
                for chunk in chunks
                if chunk
            ]
            for fut in futures:
                rows.extend(fut.result())
    rows.sort(key=lambda item: item[0])

    results = [row for _, row in rows if row is not None]
    degenerate = sum(1 for _, row in rows if row is None)
    valid = len(results)
    if valid == 0:
        raise DegenerateDesign("every replicate produced a single-arm randomization")

    rejection: dict[str, dict[str, float]] = {}
    for kind in kinds:
        key = "decisions" if kind in MAIN_TEST_KINDS else "alt_decisions"
        hits = sum(1 for row in results if row[key][kind.value])
        rate = hits / valid
        rejection[kind.value] = {
            "rate": rate,
            "mc_se": math.sqrt(rate * (1.0 - rate) / valid),
            "rejections": hits,
        }

    truth_values = {
        "tau": truth.tau,
        "delta": truth.delta,
        "overall": (truth.tau + design.n * truth.delta) / (design.n + 1.0),
        "tau_alt": truth.tau,
        "delta_alt": truth.delta,
    }
    estimates: dict[str, dict[str, float]] = {}
    for key in _ESTIMATE_KEYS:
        if key not in results[0]:
            continue
        values = np.array([row[key] for row in results])
        covered = sum(1 for row in results if row[f"cover_{key}"])
        estimates[key] = {
            "mean": float(values.mean()),
            "variance": float(values.var(ddof=1)) if valid > 1 else 0.0,
            "bias": float(values.mean()) - truth_values[key],
            "coverage_95": covered / valid,
        }

    config = {
        "design": {
            "n": design.n,
            "p": design.p,
            "rho_y": design.rho_y,
            "sigma2_y": design.sigma2_y,
            "sigma2_y1": design.sigma2_y1,
        },
        "truth": {"gamma": truth.gamma, "tau": truth.tau, "delta": truth.delta},
        "spec": {"alpha": spec.alpha, "power_target": spec.power_target},
        "k": k,
        "replicates": replicates,
        "seed": seed,
        "mode": mode,
        "kinds": [kind.value for kind in kinds],
    }
    return SimulationReport(
        replicates=replicates,
        valid_replicates=valid,
        degenerate_replicates=degenerate,
        rejection_rates=rejection,
        estimates=estimates,
        config=config,
    )


DATASET_CSV_HEADER = ("network_id", "unit_id", "role", "z", "g", "y")


def dataset_to_csv(data: EgoNetworkDataset, stream: IO[str]) -> None:
    """Write one row per unit with header network_id,unit_id,role,z,g,y."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(DATASET_CSV_HEADER)
    g = data.exposure()
    for net in range(data.k):
        for unit in range(data.n_members + 1):
            role = "index" if unit == 0 else "member"
            z = int(data.z[net]) if unit == 0 else 0
            writer.writerow(
                [net + 1, unit + 1, role, z, int(g[net, unit]), repr(float(data.y[net, unit]))]
            )


def dataset_from_csv(stream: IO[str]) -> EgoNetworkDataset:
    """Read a dataset written by dataset_to_csv, validating the design shape."""
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(header) != DATASET_CSV_HEADER:
        raise DomainError(f"expected header {','.join(DATASET_CSV_HEADER)}")
    networks: dict[int, dict[int, tuple[str, int, int, float]]] = {}
    for row in reader:
        if not row:
            continue
        net, unit = int(row[0]), int(row[1])
        networks.setdefault(net, {})[unit] = (row[2], int(row[3]), int(row[4]), float(row[5]))
    if not networks:
        raise DomainError("dataset has no networks")
    sizes = {len(units) for units in networks.values()}
    if len(sizes) != 1:
        raise DomainError("all networks must have the same number of units")
    size = sizes.pop()
    n = size - 1
    k = len(networks)
    y = np.zeros((k, size))
    z = np.zeros(k, dtype=int)
    for slot, net in enumerate(sorted(networks)):
        units = networks[net]
        if sorted(units) != list(range(1, size + 1)):
            raise DomainError(f"network {net} has missing or duplicate unit ids")
        for unit, (role, z_val, g_val, y_val) in units.items():
            expected_role = "index" if unit == 1 else "member"
            if role != expected_role:
                raise DomainError(f"unit {unit} of network {net} has role {role!r}")
            y[slot, unit - 1] = y_val
            if unit == 1:
                if g_val != 0:
                    raise DomainError(f"index of network {net} has nonzero exposure")
                z[slot] = z_val
            elif z_val != 0:
                raise DomainError(f"member {unit} of network {net} is marked treated")
        member_g = {units[u][2] for u in units if u > 1}
        if member_g and member_g != {int(z[slot])}:
            raise DomainError(f"network {net} exposures disagree with its assignment")
    return EgoNetworkDataset(y=y, z=z, n_members=n)


__all__ = [
    "EgoNetworkDataset",
    "GlsFit",
    "AltFit",
    "SimulationReport",
    "MAIN_TEST_KINDS",
    "ALT_TEST_KINDS",
    "generate_dataset",
    "gls_fit",
    "estimate_icc",
    "alt_fit",
    "run_tests",
    "empirical_power",
    "dataset_to_csv",
    "dataset_from_csv",
    "DATASET_CSV_HEADER",
]
