"""Discrete-time fractional-order systems: Grünwald-Letnikov weights,
closed-form state propagation and simulated sensor outputs.

The plant is

    Δ^α x[k+1] = A x[k],    y[k] = C x[k] + e[k]

with a per-state fractional order ``alpha[i]``.  Expanding the fractional
difference gives a full-history recursion whose solution is
``x[k] = G_k x[0]`` for the propagator sequence built by
:func:`build_propagators`.

Channel and state indices are 0-based throughout.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._validation import (
    as_float_matrix,
    as_float_vector,
    check_positive_int,
    frozen,
)
from .exceptions import ConfigurationError

ALPHA_MIN = 0.0
ALPHA_MAX = 2.0


def psi(alpha, j):
    """Grünwald-Letnikov weight ``Γ(j-α) / (Γ(-α) Γ(j+1))``.

    Evaluated as ``ψ(α,0) = 1``, ``ψ(α,j) = ψ(α,j-1) (j-1-α) / j``, which
    equals ``(-1)^j binom(α, j)`` and never touches a Γ pole.

    >>> psi(0.5, 2)
    -0.125
    """
    if j < 0 or int(j) != j:
        raise ValueError(f"j must be a nonnegative integer, got {j!r}")
    alpha = float(alpha)
    value = 1.0
    for i in range(1, int(j) + 1):
        value *= (i - 1 - alpha) / i
    return value


def psi_table(alpha, jmax):
    """Weights ``ψ(alpha_i, j)`` for ``j = 0..jmax`` as a ``(jmax+1, n)`` array.

    Uses the same left-to-right product as :func:`psi`, so entries agree
    with it bit for bit.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    out = np.empty((jmax + 1, alpha.shape[0]))
    out[0] = 1.0
    for j in range(1, jmax + 1):
        out[j] = out[j - 1] * ((j - 1 - alpha) / j)
    return out


@dataclass(frozen=True, eq=False)
class FracSystem:
    """Autonomous fractional-order plant ``(A, C, alpha)``.

    Parameters
    ----------
    A : (n, n) array_like
        State dynamics.
    C : (p, n) array_like
        Sensor map; row ``i`` is channel ``i``.
    alpha : (n,) array_like
        Fractional orders, each in ``[0, 2)``.  ``alpha = 0`` reduces the
        model to the LTI system ``x[k+1] = A x[k]``.
    """

    A: np.ndarray
    C: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        A = as_float_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ConfigurationError(f"A: expected a square matrix, got shape {A.shape}")
        C = as_float_matrix(self.C, "C", shape=(None, n))
        alpha = as_float_vector(self.alpha, "alpha", size=n)
        if n < 1 or C.shape[0] < 1:
            raise ConfigurationError("A and C must have at least one row")
        bad = (alpha < ALPHA_MIN) | (alpha >= ALPHA_MAX)
        if bad.any():
            raise ConfigurationError(
                f"alpha: orders must lie in [{ALPHA_MIN}, {ALPHA_MAX}), "
                f"got {alpha[bad].tolist()}"
            )
        object.__setattr__(self, "A", frozen(A))
        object.__setattr__(self, "C", frozen(C))
        object.__setattr__(self, "alpha", frozen(alpha))

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_channels(self):
        return self.C.shape[0]

    def with_sensors(self, C):
        """Same dynamics observed through a different sensor matrix."""
        return FracSystem(self.A, C, self.alpha)

    def permute_channels(self, order):
        return FracSystem(self.A, self.C[list(order)], self.alpha)


@dataclass(frozen=True, eq=False)
class PropagatorCache:
    """Propagators ``G[m]`` and recursion matrices ``Aj[m]`` for ``m < k``.

    Build with :func:`build_propagators`; ``G`` and ``Aj`` are read-only
    ``(k, n, n)`` arrays.
    """

    system: FracSystem
    k: int
    G: np.ndarray
    Aj: np.ndarray

    @property
    def n_states(self):
        return self.system.n_states

    @property
    def n_channels(self):
        return self.system.n_channels

    @cached_property
    def CG(self):
        """Per-step output maps ``C @ G[m]``, shape ``(k, p, n)``."""
        out = np.einsum("pi,mij->mpj", self.system.C, self.G)
        out.setflags(write=False)
        return out

    @cached_property
    def observability(self):
        """Stacked observability matrix ``[C G_0; ...; C G_{k-1}]`` of shape ``(k p, n)``."""
        out = self.CG.reshape(self.k * self.n_channels, self.n_states)
        out.setflags(write=False)
        return out

    def head(self, k):
        """Cache for the shorter horizon ``k``; the recursion is causal so
        the first ``k`` propagators are unchanged."""
        k = check_positive_int(k, "k")
        if k > self.k:
            raise ConfigurationError(f"cannot extend horizon {self.k} to {k}; rebuild instead")
        if k == self.k:
            return self
        return PropagatorCache(self.system, k, self.G[:k], self.Aj[:k])

    def channel_map(self, i):
        """``(k, n)`` matrix taking ``z`` to row ``i`` of the output block."""
        return self.CG[:, i, :]

    def restricted(self, channels):
        """Observability rows of the given channels only, shape ``(k |channels|, n)``."""
        channels = list(channels)
        return self.CG[:, channels, :].reshape(self.k * len(channels), self.n_states)


def build_propagators(system, k):
    """Compute ``G_0 .. G_{k-1}`` for ``system``.

    ``A_0 = A - D(α,1)``, ``A_j = -D(α,j+1)`` and
    ``G_m = sum_{j<m} A_j G_{m-1-j}`` with ``G_0 = I``.
    """
    if not isinstance(system, FracSystem):
        raise ConfigurationError("system must be a FracSystem")
    k = check_positive_int(k, "k")
    n = system.n_states
    weights = psi_table(system.alpha, k)

    Aj = np.zeros((k, n, n))
    Aj[0] = system.A - np.diag(weights[1])
    diag_terms = -weights[2:]  # diag of A_j for j >= 1
    idx = np.arange(n)
    Aj[1:, idx, idx] = diag_terms[: k - 1]

    G = np.empty((k, n, n))
    G[0] = np.eye(n)
    for m in range(1, k):
        acc = Aj[0] @ G[m - 1]
        if m >= 2:
            # diagonal A_j scale rows of G[m-1-j]
            acc = acc + np.einsum("ji,jil->il", diag_terms[: m - 1], G[m - 2 :: -1][: m - 1])
        G[m] = acc
    G.setflags(write=False)
    Aj.setflags(write=False)
    return PropagatorCache(system=system, k=k, G=G, Aj=Aj)


def propagate(cache, x0):
    """State trajectory ``x[m] = G_m x0`` for ``m < k`` as a ``(k, n)`` array."""
    x0 = as_float_vector(x0, "x0", size=cache.n_states)
    traj = cache.G @ x0
    traj[0] = x0
    return traj


def simulate_states(system, x0, k):
    """Step the fractional difference equation directly.

    ``x[m+1] = A x[m] - sum_{j=1}^{m+1} D(α,j) x[m+1-j]``; independent of the
    propagator recursion and used to cross-check it.
    """
    x0 = as_float_vector(x0, "x0", size=system.n_states)
    k = check_positive_int(k, "k")
    weights = psi_table(system.alpha, k)
    x = np.empty((k, system.n_states))
    x[0] = x0
    for m in range(k - 1):
        memory = np.zeros(system.n_states)
        for j in range(1, m + 2):
            memory += weights[j] * x[m + 1 - j]
        x[m + 1] = system.A @ x[m] - memory
    return x


@dataclass(frozen=True, eq=False)
class MeasurementBlock:
    """Sensor outputs over a window; column ``m`` of ``Y`` is ``y[m]``."""

    Y: np.ndarray
    channel_labels: tuple = None
    times: np.ndarray = None

    def __post_init__(self):
        Y = as_float_matrix(self.Y, "Y")
        object.__setattr__(self, "Y", frozen(Y))
        if self.channel_labels is not None:
            labels = tuple(str(s) for s in self.channel_labels)
            if len(labels) != Y.shape[0]:
                raise ConfigurationError(
                    f"channel_labels: expected {Y.shape[0]} labels, got {len(labels)}"
                )
            object.__setattr__(self, "channel_labels", labels)
        if self.times is not None:
            object.__setattr__(self, "times", frozen(as_float_vector(self.times, "times", Y.shape[1])))

    @property
    def n_channels(self):
        return self.Y.shape[0]

    @property
    def k(self):
        return self.Y.shape[1]

    def window(self, start, stop):
        times = None if self.times is None else self.times[start:stop]
        return MeasurementBlock(self.Y[:, start:stop], self.channel_labels, times)


ARTIFACT_MODES = ("none", "constant", "scaled-random", "electrode-pop")


@dataclass(frozen=True)
class ArtifactSpec:
    """Fixed channel support plus a rule producing ``e[m]`` on it.

    Modes
    -----
    ``none``
        ``e = 0``.
    ``constant``
        ``e_i[m] = offset`` on the support.
    ``scaled-random``
        ``e_i[m] = ± scale |y_i[m]|`` with a random sign per entry, i.e. an
        error ``scale`` times the magnitude of the clean output.
    ``electrode-pop``
        ``e_i[m] = amplitude`` for ``onset <= m < onset + pop_steps``; after
        the pop the channel reads white noise of std ``noise_std`` only
        (``e_i[m] = noise - y_i[m]``).
    """

    support: frozenset = frozenset()
    mode: str = "none"
    offset: float = 0.0
    scale: float = 10.0
    amplitude: float = 0.0
    onset: int = 0
    pop_steps: int = 4
    noise_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "support", frozenset(int(i) for i in self.support))
        if self.mode not in ARTIFACT_MODES:
            raise ConfigurationError(f"unknown artifact mode {self.mode!r}; expected one of {ARTIFACT_MODES}")
        if self.mode == "none" and self.support:
            object.__setattr__(self, "mode", "none")
        if self.onset < 0 or self.pop_steps < 0 or self.noise_std < 0:
            raise ConfigurationError("onset, pop_steps and noise_std must be nonnegative")

    @property
    def q(self):
        return len(self.support)

    def generate(self, clean, rng):
        """Artifact block ``e`` (same shape as ``clean``) for clean outputs ``clean``."""
        clean = np.asarray(clean, dtype=np.float64)
        p, k = clean.shape
        bad = [i for i in self.support if not 0 <= i < p]
        if bad:
            raise ConfigurationError(f"artifact support {sorted(bad)} out of range for {p} channels")
        e = np.zeros((p, k))
        rows = sorted(self.support)
        if self.mode == "none" or not rows:
            return e
        if self.mode == "constant":
            e[rows] = self.offset
        elif self.mode == "scaled-random":
            signs = rng.choice([-1.0, 1.0], size=(len(rows), k))
            e[rows] = self.scale * np.abs(clean[rows]) * signs
        elif self.mode == "electrode-pop":
            stop = min(k, self.onset + self.pop_steps)
            e[rows, self.onset:stop] = self.amplitude
            if stop < k:
                noise = self.noise_std * rng.standard_normal((len(rows), k - stop))
                e[rows, stop:] = noise - clean[rows, stop:]
        return e


def simulate_outputs(cache, x0, artifacts=None, seed=0):
    """Measurements ``y[m] = C G_m x0 + e[m]`` over the cache horizon.

    Returns ``(block, e)`` where ``e`` is the realized ``(p, k)`` artifact
    sequence; identical seeds give identical draws.
    """
    traj = propagate(cache, x0)
    clean = cache.system.C @ traj.T
    artifacts = artifacts or ArtifactSpec()
    e = artifacts.generate(clean, np.random.default_rng(seed))
    return MeasurementBlock(clean + e), e
