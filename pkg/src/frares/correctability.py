"""Can ``x[0]`` be recovered when ``q`` channels carry arbitrary artifacts?

Three tools with different cost/strength trade-offs:

* :func:`check_correctable_exact` enumerates every channel set of size
  ``2q`` and tests injectivity of the remaining rows (necessary and
  sufficient, exponential in ``p``).
* :func:`correctable_channel_cap` is a cheap upper bound on correctable ``q``
  given the observability index and the number of measurements.
* :func:`sufficient_bound` derives a correctable ``q`` from per-channel
  singular values (sufficient only).
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from ._linalg import DEFAULT_RANK_TOL, nth_singular_value, numerical_rank, rank_and_null_vector
from ._validation import check_positive_int, check_tolerance
from .core import FracSystem, PropagatorCache, build_propagators
from .exceptions import ConfigurationError, EnumerationCapError

DEFAULT_ENUMERATION_CAP = 10**6


def _as_cache(system, k):
    if isinstance(system, PropagatorCache):
        return system.head(k) if k is not None else system
    if not isinstance(system, FracSystem):
        raise ConfigurationError("expected a FracSystem or PropagatorCache")
    if k is None:
        raise ConfigurationError("horizon k is required when passing a FracSystem")
    return build_propagators(system, k)


@dataclass(frozen=True)
class ObservabilityReport:
    k_star: int = None  # None: full rank not reached within the limit
    rank_profile: tuple = ()
    tolerance: float = DEFAULT_RANK_TOL

    @property
    def found(self):
        return self.k_star is not None

    def to_dict(self):
        return {
            "k_star": self.k_star,
            "rank_profile": list(self.rank_profile),
            "tolerance": self.tolerance,
        }


def observability_index(system, limit, tol=DEFAULT_RANK_TOL):
    """Smallest horizon ``k'`` with ``rank([C G_0; ...; C G_{k'-1}]) = n``.

    Ranks are numerical (singular values above ``tol * sigma_max``).  The
    observability index of a fractional system can exceed ``n``.
    """
    limit = check_positive_int(limit, "limit")
    tol = check_tolerance(tol, "tol")
    cache = _as_cache(system, limit)
    n, p = cache.n_states, cache.n_channels
    O = cache.observability
    profile = []
    k_star = None
    for m in range(1, limit + 1):
        r = numerical_rank(O[: m * p], tol)
        profile.append(r)
        if k_star is None and r == n:
            k_star = m
    return ObservabilityReport(k_star, tuple(profile), tol)


@dataclass(frozen=True, eq=False)
class CorrectabilityReport:
    q: int
    k: int
    correctable: bool
    method: str = "exact-enumeration"
    witness_support: tuple = None
    witness_z: np.ndarray = None
    subsets_checked: int = 0
    tolerance: float = DEFAULT_RANK_TOL

    @property
    def decision(self):
        return "correctable" if self.correctable else "not-correctable"

    def to_dict(self):
        return {
            "q": self.q,
            "k": self.k,
            "decision": self.decision,
            "method": self.method,
            "witness": None
            if self.witness_z is None
            else {"support": list(self.witness_support), "z": self.witness_z.tolist()},
            "subsets_checked": self.subsets_checked,
            "tolerance": self.tolerance,
        }


def check_cap(n_subsets, cap):
    if n_subsets > cap:
        raise EnumerationCapError(n_subsets, cap)


def check_correctable_exact(system, k, q, tol=DEFAULT_RANK_TOL, cap=DEFAULT_ENUMERATION_CAP):
    """Exact test that every nonzero ``z`` excites more than ``2q`` channels.

    For each channel set ``K`` with ``|K| = 2q`` (lexicographic order) the
    rows of ``C G_0 .. C G_{k-1}`` outside ``K`` are stacked and tested for
    numerical rank ``n``.  Supersets need no separate check since dropping
    more rows only lowers the rank.

    The first failing ``K`` is returned with a unit ``z`` from that stack's
    numerical nullspace, so ``C G_m z`` is (numerically) supported on ``K``
    for every ``m < k``.

    Raises
    ------
    EnumerationCapError
        If ``C(p, 2q)`` exceeds ``cap``; use :func:`sufficient_bound` then.
    """
    cache = _as_cache(system, k)
    n, p = cache.n_states, cache.n_channels
    if isinstance(q, bool) or int(q) != q or q < 0:
        raise ConfigurationError(f"q must be a nonnegative integer, got {q!r}")
    q = int(q)
    if 2 * q > p:
        raise ConfigurationError(f"2q = {2 * q} exceeds the number of channels p = {p}")
    tol = check_tolerance(tol, "tol")
    check_cap(math.comb(p, 2 * q), cap)

    checked = 0
    all_channels = range(p)
    for K in combinations(all_channels, 2 * q):
        checked += 1
        keep = [i for i in all_channels if i not in K]
        _, z = rank_and_null_vector(cache.restricted(keep), n, tol)
        if z is not None:
            return CorrectabilityReport(q, cache.k, False, witness_support=K, witness_z=z,
                                        subsets_checked=checked, tolerance=tol)
    return CorrectabilityReport(q, cache.k, True, subsets_checked=checked, tolerance=tol)


def max_correctable_q(system, k, tol=DEFAULT_RANK_TOL, cap=DEFAULT_ENUMERATION_CAP):
    """Largest ``q`` certified by :func:`check_correctable_exact`, or ``-1``.

    Correctability is monotone in ``q``, so the scan stops at the first failure.
    """
    cache = _as_cache(system, k)
    best = -1
    for q in range(cache.n_channels // 2 + 1):
        if not check_correctable_exact(cache, None, q, tol, cap).correctable:
            break
        best = q
    return best


@dataclass(frozen=True, eq=False)
class ConfusablePair:
    """Two initial states with row-sparse errors that give the same outputs."""

    x_a: np.ndarray
    e_a: np.ndarray
    x_b: np.ndarray
    e_b: np.ndarray
    support_a: tuple
    support_b: tuple

    def outputs(self, cache):
        Ya = np.einsum("mpn,n->pm", cache.CG, self.x_a) + self.e_a
        Yb = np.einsum("mpn,n->pm", cache.CG, self.x_b) + self.e_b
        return Ya, Yb


def confusable_pair(cache, report, x_b=None):
    """Turn a failed correctability report into an explicit ambiguity.

    Splits ``K = L_a ∪ L_b`` with ``|L_a|, |L_b| <= q`` and sets
    ``x_a = x_b + z``, ``e_a = -P_{L_a} Φ z``, ``e_b = P_{L_b} Φ z`` so
    that ``Φ x_a + e_a = Φ x_b + e_b`` up to the (numerical) leak of
    ``Φ z`` outside ``K``.
    """
    if report.correctable or report.witness_z is None:
        raise ConfigurationError("report carries no witness; system is correctable")
    cache = cache.head(report.k)
    n = cache.n_states
    x_b = np.zeros(n) if x_b is None else np.asarray(x_b, dtype=np.float64)
    z = report.witness_z
    K = list(report.witness_support)
    La, Lb = K[: report.q], K[report.q :]
    Phi_z = np.einsum("mpn,n->pm", cache.CG, z)
    e_a = np.zeros_like(Phi_z)
    e_b = np.zeros_like(Phi_z)
    e_a[La] = -Phi_z[La]
    e_b[Lb] = Phi_z[Lb]
    return ConfusablePair(x_b + z, e_a, x_b.copy(), e_b, tuple(La), tuple(Lb))


def witness_leak(cache, report):
    """``max_m ||P_{K^c} C G_m z||_inf`` for a witness; ~0 when valid."""
    cache = cache.head(report.k)
    keep = [i for i in range(cache.n_channels) if i not in report.witness_support]
    if not keep:
        return 0.0
    return float(np.max(np.abs(cache.restricted(keep) @ report.witness_z)))


def correctable_channel_cap(p, tau, k_star):
    """Strict upper bound on correctable ``q`` from ``tau`` measurements.

    Returns ``(p - floor((k_star - 1) / tau)) / 2`` exactly; any ``q``
    recoverable in ``tau`` steps satisfies ``q < cap``.

    >>> correctable_channel_cap(4, 1, 4)
    Fraction(1, 2)
    """
    p = check_positive_int(p, "p")
    tau = check_positive_int(tau, "tau")
    k_star = check_positive_int(k_star, "k_star")
    if p * tau < k_star:
        raise ConfigurationError(f"requires p * tau >= k_star, got p={p}, tau={tau}, k_star={k_star}")
    return Fraction(p - (k_star - 1) // tau, 2)


@dataclass(frozen=True)
class BoundReport:
    alpha_bound: float  # min over channels of sigma_n(channel map)
    beta_bound: float  # max over channels of the spectral norm
    q_sufficient: int
    certified: bool  # False when alpha_bound is numerically zero: no claim made
    k: int
    channel_cap: Fraction = None
    k_star: int = None
    channel_gains: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {
            "alpha_bound": self.alpha_bound,
            "beta_bound": self.beta_bound,
            "q_sufficient": self.q_sufficient,
            "certified": self.certified,
            "k": self.k,
            "k_star": self.k_star,
            "channel_cap": None if self.channel_cap is None else
            {"numerator": self.channel_cap.numerator, "denominator": self.channel_cap.denominator,
             "value": float(self.channel_cap)},
            "channel_gains": [list(g) for g in self.channel_gains],
        }


def sufficient_bound(cache, tol=DEFAULT_RANK_TOL):
    """Number of artifact channels the ℓ1/ℓ2 estimator is guaranteed to correct.

    With ``a = min_i sigma_n(Φ_i)`` and ``b = max_i ||Φ_i||_2`` over the
    per-channel maps ``Φ_i : z -> (C G_m z)_i``, any
    ``q < p a / (a + b)`` satisfies the nullspace property, giving
    ``q_sufficient = ceil(p a / (a + b) - 1)`` (floored at 0).

    ``sigma_n`` is the n-th singular value, so a channel map with fewer than
    ``n`` rows (``k < n``) contributes 0.  When ``a <= tol * b`` the report
    is marked uncertified and ``q_sufficient`` is 0.
    """
    if not isinstance(cache, PropagatorCache):
        raise ConfigurationError("sufficient_bound expects a PropagatorCache")
    n, p, k = cache.n_states, cache.n_channels, cache.k
    gains = []
    for i in range(p):
        Phi_i = cache.channel_map(i)
        smax = float(np.linalg.norm(Phi_i, 2))
        gains.append((nth_singular_value(Phi_i, n), smax))
    a = min(g[0] for g in gains)
    b = max(g[1] for g in gains)
    certified = b > 0 and a > tol * b
    q_suff = max(0, math.ceil(p * a / (a + b) - 1)) if certified else 0

    obs = observability_index(cache, k, tol)
    cap = None
    if obs.found and p * k >= obs.k_star:
        cap = correctable_channel_cap(p, k, obs.k_star)
    return BoundReport(a, b, q_suff, certified, k, cap, obs.k_star, tuple(gains))
