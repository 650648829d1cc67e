"""Recovering ``x[0]`` from a measurement block with row-sparse artifacts.

Output blocks are ``p x k`` matrices whose column ``m`` is ``y[m]``.  The
forward map is ``Φ(x) = [C G_0 x | ... | C G_{k-1} x]``; in vectorized form
it is the stacked observability matrix acting on ``x`` with the block
flattened column by column (``Y.T.ravel()``).
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import minimize

from ._linalg import DEFAULT_RANK_TOL, numerical_rank
from ._validation import as_float_matrix, as_float_vector, check_positive_int, check_tolerance
from .core import MeasurementBlock, PropagatorCache
from .correctability import DEFAULT_ENUMERATION_CAP, check_cap
from .exceptions import ConfigurationError

log = logging.getLogger(__name__)

STATUSES = ("exact", "converged", "max-iterations", "infeasible")


def phi_apply(cache, x):
    """``Φ(x)`` as a ``(p, k)`` block."""
    x = as_float_vector(x, "x", size=cache.n_states)
    return np.einsum("mpn,n->pm", cache.CG, x)


def phi_adjoint(cache, M):
    """Adjoint of :func:`phi_apply`: ``sum_m (C G_m)^T M[:, m]``."""
    M = as_float_matrix(M, "M", shape=(cache.n_channels, cache.k))
    return np.einsum("mpn,pm->n", cache.CG, M)


def row_norms(M):
    return np.sqrt(np.sum(M * M, axis=1))


def l1l2_norm(M):
    """Sum of the Euclidean norms of the rows of ``M``."""
    return float(np.sum(row_norms(M)))


def _block(Y, cache):
    if isinstance(Y, MeasurementBlock):
        Y = Y.Y
    return as_float_matrix(Y, "Y", shape=(cache.n_channels, cache.k))


@dataclass(eq=False)
class EstimationResult:
    """Outcome of one estimation call.

    ``residual_rows[i]`` is the Euclidean norm of row ``i`` of
    ``Y - Φ(x0_hat)``; ``support_hat`` lists the channels flagged as
    carrying artifacts.
    """

    x0_hat: np.ndarray
    support_hat: frozenset
    residual_rows: np.ndarray
    objective: float
    status: str
    iterations: int
    method: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": self.method,
            "status": self.status,
            "x0_hat": self.x0_hat.tolist(),
            "support_hat": sorted(self.support_hat),
            "residual_rows": self.residual_rows.tolist(),
            "objective": self.objective,
            "iterations": self.iterations,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, frozenset, set)):
        items = sorted(obj) if isinstance(obj, (frozenset, set)) else obj
        return [_jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------- l0 ----

def estimate_l0(cache, Y, q_max, tol=1e-8, rank_tol=DEFAULT_RANK_TOL, cap=DEFAULT_ENUMERATION_CAP):
    """Smallest artifact channel set explaining the data exactly.

    Tries ``q = 0, 1, ..., q_max`` and, for each, every channel set ``K``
    of size ``q`` in lexicographic order.  ``x`` is the least-squares fit on
    the rows outside ``K``; the first candidate whose residual on those rows
    is at most ``tol * ||Y||_F`` is accepted.  Sets whose remaining rows do
    not determine ``x`` (rank < n) are skipped and listed in
    ``diagnostics["non_identifying"]``.
    """
    Yb = _block(Y, cache)
    n, p, k = cache.n_states, cache.n_channels, cache.k
    if isinstance(q_max, bool) or int(q_max) != q_max or q_max < 0:
        raise ConfigurationError(f"q_max must be a nonnegative integer, got {q_max!r}")
    q_max = min(int(q_max), p)
    tol = check_tolerance(tol, "tol")
    check_cap(sum(math.comb(p, q) for q in range(q_max + 1)), cap)

    threshold = tol * np.linalg.norm(Yb)
    skipped = []
    tried = 0
    for q in range(q_max + 1):
        for K in combinations(range(p), q):
            tried += 1
            keep = [i for i in range(p) if i not in K]
            M = cache.restricted(keep)
            if numerical_rank(M, rank_tol) < n:
                skipped.append(K)
                continue
            rhs = Yb[keep].T.ravel()
            x, *_ = np.linalg.lstsq(M, rhs, rcond=None)
            if np.linalg.norm(M @ x - rhs) <= threshold:
                res = row_norms(Yb - phi_apply(cache, x))
                return EstimationResult(
                    x, frozenset(K), res, float(q), "exact", tried, "l0",
                    {"non_identifying": skipped, "threshold": threshold},
                )
    log.info("l0: no channel set of size <= %d explains the data", q_max)
    # best-effort fallback: full least squares
    O = cache.observability
    x, *_ = np.linalg.lstsq(O, Yb.T.ravel(), rcond=None)
    res = row_norms(Yb - phi_apply(cache, x))
    return EstimationResult(
        x, frozenset(), res, float("nan"), "infeasible", tried, "l0",
        {"non_identifying": skipped, "threshold": threshold},
    )


# ---------------------------------------------------------------- l1/l2 ----

@dataclass(frozen=True)
class SolverConfig:
    """Settings for the ℓ1/ℓ2 operator-splitting solver.

    ``rho`` is the initial penalty; with ``adapt_rho`` it is doubled or
    halved whenever the primal and dual residuals differ by more than
    ``balance`` (checked every ``adapt_every`` iterations).
    ``support_threshold`` is relative to the largest residual row norm; rows
    below ``rel_tol * ||Y||_F`` are never flagged.
    ``polish`` re-fits ``x`` by least squares on the rows outside candidate
    supports (the detected one and the nested sets of largest residual
    rows) and keeps the best fit only if the objective does not increase.
    With polishing on, every ``certify_every`` iterations the polished
    point is tested against the optimality certificate and the iteration
    stops early once it passes.
    """

    max_iterations: int = 20000
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    rho: float = 1.0
    adapt_rho: bool = True
    balance: float = 10.0
    adapt_every: int = 10
    support_threshold: float = 1e-4
    polish: bool = True
    certify_every: int = 50
    rank_tol: float = DEFAULT_RANK_TOL

    def __post_init__(self):
        check_positive_int(self.max_iterations, "max_iterations")
        check_positive_int(self.adapt_every, "adapt_every")
        check_positive_int(self.certify_every, "certify_every")
        for name in ("abs_tol", "rel_tol", "rho", "rank_tol"):
            check_tolerance(getattr(self, name), name)
        if not self.balance > 1:
            raise ConfigurationError("balance must exceed 1")
        if not 0 < self.support_threshold < 1:
            raise ConfigurationError("support_threshold must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown solver settings: {sorted(unknown)}")
        return cls(**d)


def _row_shrink(V, kappa):
    norms = row_norms(V)
    scale = np.zeros_like(norms)
    nz = norms > kappa
    scale[nz] = 1.0 - kappa / norms[nz]
    return V * scale[:, None]


def _detect_support(res, theta, floor=0.0):
    # rows at round-off level never count, however small the largest row is
    top = res.max() if res.size else 0.0
    cut = max(theta * top, floor)
    if top <= cut:
        return frozenset()
    return frozenset(int(i) for i in np.flatnonzero(res > cut))


def _polish(cache, Yb, res, config, floor):
    """Best least-squares refit over candidate supports built from ``res``.

    Candidates are the thresholded support and, for each ``s < p``, the
    ``s`` rows with the largest residual.  Returns ``(x, res, objective)``
    of the best identifying candidate, or ``None``.
    """
    n, p = cache.n_states, cache.n_channels
    order = [int(i) for i in np.argsort(-res, kind="stable")]
    candidates = [_detect_support(res, config.support_threshold, floor)]
    candidates += [frozenset(order[:s]) for s in range(p)]
    best = None
    seen = set()
    for support in candidates:
        if support in seen:
            continue
        seen.add(support)
        keep = [i for i in range(p) if i not in support]
        M = cache.restricted(keep)
        if numerical_rank(M, config.rank_tol) < n:
            continue
        x, *_ = np.linalg.lstsq(M, Yb[keep].T.ravel(), rcond=None)
        r = row_norms(Yb - phi_apply(cache, x))
        if best is None or r.sum() < best[2]:
            best = (x, r, float(r.sum()))
    return best


def estimate_l1r(cache, Y, r=2, config=None):
    """Minimize ``sum_i ||(Y - Φ(x))_i||_2`` over ``x``.

    ADMM on the split ``Φ(x) + R = Y``: an ``x`` least-squares step through a
    cached pseudo-inverse, row-wise soft thresholding for the residual
    ``R``, and a scaled dual update.  A rank-deficient ``Φ`` keeps ``x`` in
    the row space, so the minimum-norm minimizer is returned and
    ``diagnostics["rank_deficient"]`` is set.

    ``diagnostics`` also carries the dual block ``S`` (rows of norm <= 1,
    ``Φ^T S ≈ 0`` at optimum), per-iteration histories of the objective,
    the fixed-penalty merit ``rho (||ΔR||^2 + ||ΔU||^2)`` and ``rho``, and
    the list of penalty adaptation events.  ``status`` is "converged" when
    the primal and dual residuals meet the tolerances or, with polishing,
    once the polished point passes the optimality certificate
    (``diagnostics["stopping"]`` tells which).
    """
    if r != 2:
        raise ConfigurationError("only r = 2 (row-wise Euclidean norms) is supported")
    config = config or SolverConfig()
    Yb = _block(Y, cache)
    n, p, k = cache.n_states, cache.n_channels, cache.k
    O = cache.observability
    rank = numerical_rank(O, config.rank_tol)
    O_pinv = np.linalg.pinv(O, rcond=config.rank_tol)

    def forward(x):
        return (O @ x).reshape(k, p).T

    def solve_x(B):
        return O_pinv @ B.T.ravel()

    rho = config.rho
    R = np.zeros((p, k))
    U = np.zeros((p, k))
    x = solve_x(Yb)
    y_norm = np.linalg.norm(Yb)
    floor = config.rel_tol * y_norm
    hist_obj, hist_merit, hist_rho, events = [], [], [], []
    status, stopping = "max-iterations", None
    it = 0
    for it in range(1, config.max_iterations + 1):
        x = solve_x(Yb - R - U)
        Ox = forward(x)
        R_old, U_old = R, U
        R = _row_shrink(Yb - Ox - U, 1.0 / rho)
        primal = Ox + R - Yb
        U = U + primal

        r_norm = np.linalg.norm(primal)
        s_norm = rho * np.linalg.norm(O.T @ (R - R_old).T.ravel())
        hist_obj.append(l1l2_norm(Yb - Ox))
        hist_merit.append(rho * (np.sum((R - R_old) ** 2) + np.sum((U - U_old) ** 2)))
        hist_rho.append(rho)

        eps_pri = config.abs_tol * math.sqrt(p * k) + config.rel_tol * max(
            np.linalg.norm(Ox), np.linalg.norm(R), y_norm)
        eps_dual = config.abs_tol * math.sqrt(n) + config.rel_tol * rho * np.linalg.norm(
            O.T @ U.T.ravel())
        if r_norm <= eps_pri and s_norm <= eps_dual:
            status, stopping = "converged", "residuals"
            break

        if config.polish and it % config.certify_every == 0:
            cand = _polish(cache, Yb, row_norms(Yb - Ox), config, floor)
            if cand is not None:
                cand_support = _detect_support(cand[1], config.support_threshold, floor)
                if _certify(cache, Yb, cand[0], cand_support):
                    status, stopping = "converged", "certificate"
                    break

        if config.adapt_rho and it % config.adapt_every == 0:
            if r_norm > config.balance * s_norm:
                rho *= 2.0
                U = U / 2.0
                events.append((it, rho))
                log.debug("l1r: iteration %d, rho -> %g", it, rho)
            elif s_norm > config.balance * r_norm:
                rho /= 2.0
                U = U * 2.0
                events.append((it, rho))
                log.debug("l1r: iteration %d, rho -> %g", it, rho)

    S = -rho * U
    res = row_norms(Yb - forward(x))
    objective = float(res.sum())
    polished = False
    if config.polish:
        cand = _polish(cache, Yb, res, config, floor)
        if cand is not None and cand[2] <= objective:
            x, res, objective = cand
            polished = True
    support = _detect_support(res, config.support_threshold, floor)

    diagnostics = {
        "certified_optimal": _certify(cache, Yb, x, support),
        "rank_deficient": rank < n,
        "rank": rank,
        "rho": rho,
        "dual": S,
        "objective_history": np.array(hist_obj),
        "merit_history": np.array(hist_merit),
        "rho_history": np.array(hist_rho),
        "rho_events": events,
        "polished": polished,
        "stopping": stopping,
    }
    if rank < n:
        log.warning("l1r: Φ has rank %d < n = %d; returning the minimum-norm minimizer", rank, n)
    return EstimationResult(x, support, res, objective, status, it, "l1r", diagnostics)


def _certify(cache, Yb, x, support, slack=1e-9, resid_tol=1e-8):
    """Sufficient optimality test for ``x`` with residual supported on ``support``.

    ``x`` minimizes the ℓ1/ℓ2 objective iff some ``S`` with ``S_i = R_i/||R_i||``
    on ``support`` and ``||S_i|| <= 1`` elsewhere has ``Φ^T S = 0``.  Rows
    outside ``support`` must fit to within ``resid_tol * ||Y||_F``.  The
    minimum-norm completion of the free rows is tried; the answer is
    ``True`` if it satisfies the bound and ``False`` when no certificate
    was found (which does not prove suboptimality).
    """
    p, k = cache.n_channels, cache.k
    R = Yb - phi_apply(cache, x)
    rn = row_norms(R)
    fixed = sorted(support)
    free = [i for i in range(p) if i not in support]
    if free and rn[free].max() > resid_tol * np.linalg.norm(Yb):
        return False
    b = np.zeros(cache.n_states)
    for i in fixed:
        if rn[i] > 0:
            b += cache.channel_map(i).T @ (R[i] / rn[i])
    if not free:
        return bool(np.linalg.norm(b) <= slack * max(1.0, np.abs(cache.CG).max()))
    B = np.concatenate([cache.channel_map(i).T for i in free], axis=1)  # n x (|free| k)
    s, *_ = np.linalg.lstsq(B, -b, rcond=None)
    if np.linalg.norm(B @ s + b) > slack * max(1.0, np.linalg.norm(b)):
        return False
    return bool(np.max(row_norms(s.reshape(len(free), k))) <= 1.0)


def optimality_gap(cache, Y, result):
    """Subgradient check for an ℓ1/ℓ2 solution.

    Returns ``(stationarity, max_dual_row_norm, alignment)``:
    ``||Φ^T S||`` for the solver's dual block ``S``, the largest row norm of
    ``S`` (should be <= 1), and the worst misalignment
    ``||S_i - R_i / ||R_i|| ||`` over rows with nonzero residual.
    """
    Yb = _block(Y, cache)
    S = result.diagnostics["dual"]
    R = Yb - phi_apply(cache, result.x0_hat)
    rn = row_norms(R)
    stationarity = float(np.linalg.norm(phi_adjoint(cache, S)))
    max_row = float(row_norms(S).max())
    mask = rn > cache.n_channels * 1e-8 * max(rn.max(), 1e-300)
    align = 0.0
    if mask.any():
        align = float(np.max(row_norms(S[mask] - R[mask] / rn[mask, None])))
    return stationarity, max_row, align


# ---------------------------------------------------------------- NSP ----

@dataclass(frozen=True, eq=False)
class NullspaceReport:
    status: str  # "certified-violated" or "not-falsified"
    max_ratio: float
    q: int
    trials: int
    witness_z: np.ndarray = None
    witness_support: tuple = None

    @property
    def violated(self):
        return self.status == "certified-violated"

    def to_dict(self):
        return {
            "status": self.status,
            "max_ratio": self.max_ratio,
            "q": self.q,
            "trials": self.trials,
            "witness": None if self.witness_z is None else
            {"z": self.witness_z.tolist(), "support": list(self.witness_support)},
        }


def nullspace_ratio(cache, z, q):
    """Worst-case ratio ``sum_{i in K} ||(Φz)_i|| / sum_{i not in K} ||(Φz)_i||``.

    The worst ``K`` of size ``q`` holds the ``q`` largest rows.  Returns the
    ratio and that ``K`` (sorted).
    """
    rn = row_norms(phi_apply(cache, z))
    if q == 0:
        return 0.0, ()
    order = np.argsort(-rn, kind="stable")
    K = tuple(sorted(int(i) for i in order[:q]))
    top = rn[order[:q]].sum()
    rest = rn[order[q:]].sum()
    if rest == 0.0:
        return (math.inf if top > 0 else 0.0), K
    return float(top / rest), K


def _batch_ratios(cache, Z, q):
    rn = np.sqrt(np.sum(np.einsum("mpn,sn->spm", cache.CG, Z) ** 2, axis=2))
    srt = -np.sort(-rn, axis=1)
    top = srt[:, :q].sum(axis=1)
    rest = srt[:, q:].sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rest > 0, top / np.where(rest > 0, rest, 1.0),
                         np.where(top > 0, np.inf, 0.0))
    return ratio


def nullspace_property_check(cache, q, trials=10000, seed=0, ascent_starts=5, batch=2048,
                             max_seed_sets=200):
    """Randomized search for a violation of the row nullspace property.

    Samples ``trials`` directions uniformly on the unit sphere, evaluates
    :func:`nullspace_ratio` for each, then runs a local ascent from the best
    ``ascent_starts`` samples and from the least-excited direction of the
    rows outside each candidate ``K`` (when there are at most
    ``max_seed_sets`` such sets).  A ratio ``>= 1`` is a certified violation
    (the ℓ1/ℓ2 estimator fails for some artifact on that support).  Otherwise
    the result is only "not falsified": the check is one-sided.
    """
    if isinstance(q, bool) or int(q) != q or q < 0 or q > cache.n_channels:
        raise ConfigurationError(f"q must be an integer in [0, p], got {q!r}")
    q = int(q)
    trials = check_positive_int(trials, "trials")
    if q == 0:
        return NullspaceReport("not-falsified", 0.0, 0, trials)
    n = cache.n_states
    rng = np.random.default_rng(seed)
    best_ratios = np.empty(0)
    best_Z = np.empty((0, n))
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        Z = rng.standard_normal((m, n))
        Z /= np.linalg.norm(Z, axis=1, keepdims=True)
        ratios = _batch_ratios(cache, Z, q)
        allr = np.concatenate([best_ratios, ratios])
        allz = np.concatenate([best_Z, Z])
        keep = np.argsort(-allr, kind="stable")[:ascent_starts]
        best_ratios, best_Z = allr[keep], allz[keep]
        done += m

    # Directions nearly annihilated by the rows outside K make the ratio
    # spike; random sampling rarely lands there.
    seeds = list(best_Z)
    n_sets = math.comb(cache.n_channels, q)
    if n_sets <= max_seed_sets:
        for K in combinations(range(cache.n_channels), q):
            keep = [i for i in range(cache.n_channels) if i not in K]
            M = cache.restricted(keep)
            if M.shape[0] == 0:
                continue
            _, _, Vt = np.linalg.svd(M, full_matrices=True)
            seeds.append(Vt[-1])

    def neg_ratio(v):
        norm = np.linalg.norm(v)
        if norm == 0:
            return 0.0
        val, _ = nullspace_ratio(cache, v / norm, q)
        return -min(val, 1e300)

    candidates = [(nullspace_ratio(cache, z, q)[0], z) for z in seeds]
    if n > 1 and all(np.isfinite(c[0]) for c in candidates):
        for z0 in seeds:
            sol = minimize(neg_ratio, z0, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 400 * n})
            z = sol.x / np.linalg.norm(sol.x)
            candidates.append((nullspace_ratio(cache, z, q)[0], z))
    ratio, z = max(candidates, key=lambda c: c[0])
    _, K = nullspace_ratio(cache, z, q)
    if ratio >= 1.0:
        return NullspaceReport("certified-violated", ratio, q, trials, z, K)
    return NullspaceReport("not-falsified", ratio, q, trials, z, K)


# ---------------------------------------------------------------- windows ----

def estimate_windows(system, Y, window, method="l1", q_max=1, config=None, tol=1e-8):
    """Re-estimate ``x[0]`` on consecutive windows and stitch the states.

    Each window is treated as a fresh start of the model, which bounds the
    effect of model error on long records.  Returns
    ``(window_results, states)`` with ``window_results`` a list of
    ``(start, stop, EstimationResult)`` and ``states`` of shape ``(k, n)``.
    """
    from .core import build_propagators
    from .scenarios import window_bounds

    if isinstance(Y, MeasurementBlock):
        Y = Y.Y
    Y = as_float_matrix(Y, "Y", shape=(system.n_channels, None))
    k = Y.shape[1]
    bounds = window_bounds(k, window)
    full = build_propagators(system, min(window, k))
    states = np.empty((k, system.n_states))
    out = []
    for start, stop in bounds:
        cache = full.head(stop - start)
        block = Y[:, start:stop]
        if method == "l1":
            result = estimate_l1r(cache, block, config=config)
        elif method == "l0":
            result = estimate_l0(cache, block, q_max, tol=tol)
        else:
            raise ConfigurationError(f"unknown method {method!r}; expected 'l0' or 'l1'")
        states[start:stop] = cache.G @ result.x0_hat
        out.append((start, stop, result))
    return out, states
