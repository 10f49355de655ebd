"""Special functions and root-finding primitives used by the power formulas.

Everything here is plain numerical machinery with no trial-design semantics:
the standard normal CDF and quantile, the noncentral chi-squared CDF and its
noncentrality inversion, upper-orthant probabilities of a correlated bivariate
normal, Brent's method, and a monotone integer search.
"""

from __future__ import annotations

import math
from statistics import NormalDist
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, InvalidBracket, NotFoundWithinBound

_STD_NORMAL = NormalDist()

# Gauss-Legendre nodes/weights on [-1, 1] for the bivariate normal quadrature.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


class RootBracket(NamedTuple):
    """An interval [lo, hi] with lo < hi expected to enclose a sign change."""

    lo: float
    hi: float


def check_probability(value: float, slack: float = 1e-9) -> float:
    """Validate that ``value`` is a probability, snapping roundoff-level excursions.

    Values outside [0, 1] by more than ``slack`` raise instead of being clamped.
    """
    if not math.isfinite(value) or value < -slack or value > 1.0 + slack:
        raise DomainError(f"not a probability: {value!r}")
    return min(1.0, max(0.0, value))


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    if not math.isfinite(x):
        raise DomainError(f"normal_cdf requires finite x, got {x!r}")
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_sf(x: float) -> float:
    """Standard normal upper-tail probability P(X > x)."""
    return normal_cdf(-x)


def normal_quantile(pi: float) -> float:
    """Inverse standard normal CDF on the open unit interval."""
    if not 0.0 < pi < 1.0:
        raise DomainError(f"normal_quantile requires 0 < pi < 1, got {pi!r}")
    return _STD_NORMAL.inv_cdf(pi)


def _reg_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0.

    Series expansion for x < a + 1, Lentz continued fraction otherwise.
    """
    if x < 0.0 or a <= 0.0:
        raise DomainError(f"invalid incomplete-gamma arguments a={a!r}, x={x!r}")
    if x == 0.0:
        return 0.0
    log_prefix = a * math.log(x) - x - math.lgamma(a)
    if log_prefix < -745.0:  # prefix underflows: P is 0 or 1 depending on side
        return 0.0 if x < a else 1.0
    prefix = math.exp(log_prefix)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        denom = a
        for _ in range(10_000):
            denom += 1.0
            term *= x / denom
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        return min(1.0, prefix * total)
    # Continued fraction for Q(a, x) (modified Lentz).
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return max(0.0, 1.0 - prefix * h)


def chisq_cdf(x: float, df: int) -> float:
    """Central chi-squared CDF."""
    if df < 1 or x < 0.0:
        raise DomainError(f"invalid chi-squared arguments x={x!r}, df={df!r}")
    return _reg_lower_gamma(df / 2.0, x / 2.0)


def chisq_quantile(prob: float, df: int) -> float:
    """Central chi-squared quantile, solved by bracketed root finding."""
    if not 0.0 < prob < 1.0:
        raise DomainError(f"chisq_quantile requires 0 < prob < 1, got {prob!r}")
    hi = float(df)
    while chisq_cdf(hi, df) < prob:
        hi *= 2.0
    return brent_root(lambda x: chisq_cdf(x, df) - prob, RootBracket(0.0, hi))


def noncentral_chisq_cdf(x: float, df: int, ncp: float, tail_tol: float = 1e-13) -> float:
    """Noncentral chi-squared CDF via the Poisson mixture of central CDFs.

    Terms are summed outward from the Poisson mode so large noncentralities
    stay accurate. Each sweep stops when a geometric bound on the uncovered
    Poisson mass (times the monotone central-CDF factor) drops below
    ``tail_tol``.
    """
    if df < 1 or x < 0.0 or ncp < 0.0:
        raise DomainError(f"invalid arguments x={x!r}, df={df!r}, ncp={ncp!r}")
    if x == 0.0:
        return 0.0
    a = df / 2.0
    xh = x / 2.0
    if ncp == 0.0:
        return _reg_lower_gamma(a, xh)
    half = ncp / 2.0
    mode = int(half)

    # Poisson weight w_j, central CDF c_j = P(a+j, xh), and decrement
    # t_j = xh^(a+j) e^(-xh) / Gamma(a+j+1) satisfying c_{j+1} = c_j - t_j.
    w_mode = math.exp(mode * math.log(half) - half - math.lgamma(mode + 1))
    c_mode = _reg_lower_gamma(a + mode, xh)
    log_t = (a + mode) * math.log(xh) - xh - math.lgamma(a + mode + 1)
    t_mode = math.exp(log_t) if log_t > -745.0 else 0.0
    total = w_mode * c_mode

    # Upward sweep: once j exceeds the mode the weights decay geometrically
    # with ratio half/(j+1), and c_j is decreasing, giving a clean tail bound.
    w, c, t = w_mode, c_mode, t_mode
    j = mode
    while True:
        w *= half / (j + 1)
        c = max(0.0, c - t)
        t *= xh / (a + j + 1)
        j += 1
        total += w * c
        if w == 0.0 or c == 0.0:
            break
        ratio = half / (j + 1)
        if ratio < 1.0 and w * c * ratio / (1.0 - ratio) < tail_tol:
            break
        if j - mode > 1_000_000:
            break

    # Downward sweep toward j = 0: weights decay with ratio j/half < 1.
    w, c, t = w_mode, c_mode, t_mode
    j = mode
    while j > 0:
        w *= j / half
        t *= (a + j) / xh
        c = min(1.0, c + t)
        j -= 1
        total += w * c
        if w == 0.0:
            break
        if j >= 1:
            ratio = j / half
            if w * ratio / (1.0 - ratio) < tail_tol:
                break

    return min(1.0, total)


def required_ncp(q: float, pi: float, df: int) -> float:
    """Noncentrality making the upper-tail mass of the noncentral chi-squared
    above ``q`` equal to ``pi`` (equivalently: the 1-pi quantile equals q).

    Returns 0 when the central distribution already places at least ``pi``
    above ``q``.
    """
    if q <= 0.0:
        raise DomainError(f"required_ncp needs q > 0, got {q!r}")
    if not 0.0 < pi < 1.0:
        raise DomainError(f"required_ncp needs 0 < pi < 1, got {pi!r}")

    def excess(lam: float) -> float:
        return (1.0 - noncentral_chisq_cdf(q, df, lam)) - pi

    if excess(0.0) >= 0.0:
        return 0.0
    hi = 1.0
    for _ in range(200):
        if excess(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise InvalidBracket(f"could not bracket noncentrality for pi={pi!r}")
    return brent_root(excess, RootBracket(0.0, hi), xtol=1e-10, ftol=1e-12)


def bvn_upper(h: float, k: float, r: float) -> float:
    """P(X > h, Y > k) for a standard bivariate normal with correlation r.

    Uses the classic reduction of the orthant probability to a single integral
    over the correlation angle, evaluated by composite Gauss-Legendre panels.
    The panels refine geometrically toward the endpoint so the boundary layer
    that forms as |r| -> 1 stays resolved.
    """
    if not (math.isfinite(h) and math.isfinite(k)):
        raise DomainError("bvn_upper requires finite thresholds")
    if not -1.0 < r < 1.0:
        raise DomainError(f"bvn_upper requires |r| < 1, got {r!r}")
    base = normal_sf(h) * normal_sf(k)
    if r == 0.0:
        return base
    theta_star = math.asin(r)
    # Panel breakpoints 0, (1-2^-1)t*, ..., (1-2^-16)t*, t*.
    fracs = np.concatenate(([0.0], 1.0 - 2.0 ** -np.arange(1, 17), [1.0]))
    edges = theta_star * fracs
    lo = edges[:-1]
    hi = edges[1:]
    mid = 0.5 * (lo + hi)
    halfwidth = 0.5 * (hi - lo)
    theta = mid[:, None] + halfwidth[:, None] * _GL_NODES[None, :]
    sin_t = np.sin(theta)
    cos2_t = np.cos(theta) ** 2
    expo = -(h * h + k * k - 2.0 * h * k * sin_t) / (2.0 * cos2_t)
    vals = np.exp(np.clip(expo, -745.0, 0.0))
    integral = float(np.sum(halfwidth[:, None] * _GL_WEIGHTS[None, :] * vals))
    return check_probability(base + integral / (2.0 * math.pi))


def solve_monotone_min_integer(predicate: Callable[[int], bool], k_max: int) -> int:
    """Smallest positive integer K <= k_max with predicate(K) true.

    The predicate must be monotone non-decreasing in K. Exponential galloping
    locates an upper bound, then bisection pins the threshold.
    """
    if k_max < 1:
        raise DomainError(f"k_max must be >= 1, got {k_max!r}")
    if predicate(1):
        return 1
    lo = 1  # predicate(lo) is False
    hi = 2
    while hi < k_max and not predicate(hi):
        lo = hi
        hi = min(k_max, hi * 2)
    if hi >= k_max and not predicate(k_max):
        raise NotFoundWithinBound(f"no K <= {k_max} satisfies the predicate")
    if not predicate(hi):  # only possible when hi == k_max, handled above
        raise NotFoundWithinBound(f"no K <= {k_max} satisfies the predicate")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return hi


def brent_root(
    f: Callable[[float], float],
    bracket: RootBracket | tuple[float, float],
    xtol: float = 1e-12,
    ftol: float = 1e-10,
    max_iter: int = 300,
) -> float:
    """Brent's method on a sign-changing bracket.

    Stops when |f| <= ftol or the bracket width falls below xtol (plus the
    usual relative floating-point floor).
    """
    lo, hi = bracket
    if not lo < hi:
        raise InvalidBracket(f"bracket must satisfy lo < hi, got ({lo!r}, {hi!r})")
    a, b = lo, hi
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0.0:
        raise InvalidBracket(f"f has the same sign at both ends: f({a})={fa}, f({b})={fb}")
    c, fc = a, fa
    d = e = b - a
    for _ in range(max_iter):
        if fb * fc > 0.0:
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2.0 * np.finfo(float).eps * abs(b) + 0.5 * xtol
        xm = 0.5 * (c - b)
        if abs(xm) <= tol1 or abs(fb) <= ftol:
            return b
        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * xm * s
                q = 1.0 - s
            else:
                q = fa / fc
                rr = fb / fc
                p = s * (2.0 * xm * q * (q - rr) - (b - a) * (rr - 1.0))
                q = (q - 1.0) * (rr - 1.0) * (s - 1.0)
            if p > 0.0:
                q = -q
            p = abs(p)
            if 2.0 * p < min(3.0 * xm * q - abs(tol1 * q), abs(e * q)):
                e = d
                d = p / q
            else:
                d = xm
                e = d
        else:
            d = xm
            e = d
        a, fa = b, fb
        if abs(d) > tol1:
            b += d
        else:
            b += math.copysign(tol1, xm)
        fb = f(b)
    return b
