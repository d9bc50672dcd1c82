# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""Finite models of an unstable subsystem coupled to discretized continua.

A model's basis is the parallel (unstable) levels followed by the grid
points of every decay channel. Channel couplings enter the Hamiltonian with
a square-root quadrature weight, ``<k|H|e_i,J> = g_k(e_i) sqrt(w_i)``, so
discrete sums over grid points approximate integrals over the continuum.
"""

import numpy as np

from .logging import log
from .utils import frobenius, hermiticity_residual, propagate_hermitian

HERMITICITY_TOLERANCE = 1e-12
NORMALIZATION_TOLERANCE = 1e-10


class ModelError(Exception):
    """Represents an invalid model, grid, partition or state."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


class ContinuumGrid(object):
    """Energies and quadrature weights discretizing one decay continuum."""

    def __init__(self, energies, weights):
        energies = _frozen(energies, float)
        weights = _frozen(weights, float)

        if energies.ndim != 1 or weights.ndim != 1:
            raise ModelError("grid energies and weights must be one-dimensional")
        if len(energies) < 1 or len(energies) != len(weights):
            raise ModelError(
                "grid needs equal, non-zero numbers of energies and weights; got %d and %d"
                % (len(energies), len(weights))
            )
        if np.any(np.diff(energies) <= 0.0):
            raise ModelError("grid energies must be strictly increasing")
        if np.any(weights <= 0.0):
            raise ModelError("grid weights must be positive")

        self.energies = energies
        self.weights = weights

    def __len__(self):
        return len(self.energies)

    @property
    def spacing(self) -> float:
        """Median distance between neighbouring grid energies."""
        if len(self.energies) < 2:
            return float(self.weights[0])

        return float(np.median(np.diff(self.energies)))

    def same_as(self, other) -> bool:
        return np.array_equal(self.energies, other.energies) and np.array_equal(
            self.weights, other.weights
        )


def uniform_grid(energy_min: float, energy_max: float, points: int) -> ContinuumGrid:
    """Midpoint rule over [energy_min, energy_max]."""
    if points < 1 or energy_max <= energy_min:
        raise ModelError(
            "invalid uniform grid [%r, %r] with %d points"
            % (energy_min, energy_max, points)
        )

    width = (energy_max - energy_min) / points
    energies = energy_min + width * (np.arange(points) + 0.5)

    return ContinuumGrid(energies, np.full(points, width))


def sqrt_grid(threshold: float, cutoff: float, points: int) -> ContinuumGrid:
    """Midpoint rule uniform in u = sqrt(e - threshold) over [0, cutoff].

    The weight of each point is 2u du, which resolves the inverse square-root
    behaviour of threshold couplings.
    """
    if points < 1 or cutoff <= 0.0:
        raise ModelError("invalid threshold grid: cutoff %r, %d points" % (cutoff, points))

    du = np.sqrt(cutoff) / points
    u = du * (np.arange(points) + 0.5)

    return ContinuumGrid(threshold + u * u, 2.0 * u * du)


def constant_coupling(grid: ContinuumGrid, g, window=None):
    """Coupling equal to ``g`` inside ``window`` (the whole grid by default)."""
    values = np.full(len(grid), complex(g))
    if window is not None:
        lo, hi = window
        values[(grid.energies < lo) | (grid.energies > hi)] = 0.0

    return values


def lorentzian_coupling(grid: ContinuumGrid, g, center: float, width: float):
    """Form factor g / sqrt(1 + ((e - center) / width)^2)."""
    x = (grid.energies - center) / width

    return complex(g) / np.sqrt(1.0 + x * x)


def threshold_coupling(grid: ContinuumGrid, g, threshold: float, reference: float):
    """Coupling with |g(e)|^2 = |g|^2 sqrt(reference / (e - threshold)).

    ``reference`` is the distance above threshold at which |g(e)| = |g|.
    """
    omega = grid.energies - threshold
    if np.any(omega <= 0.0):
        raise ModelError("threshold coupling needs every grid energy above threshold")

    return complex(g) * (reference / omega) ** 0.25


def tabulated_coupling(grid: ContinuumGrid, values):
    values = np.asarray(values, dtype=complex)
    if values.shape != (len(grid),):
        raise ModelError(
            "tabulated coupling has %d values for a %d point grid"
            % (values.size, len(grid))
        )

    return values


class Channel(object):
    """A decay channel: label J, its grid and couplings g_k(e_i) of every level."""

    def __init__(self, label: str, grid: ContinuumGrid, couplings, offset: int):
        self.label = label
        self.grid = grid
        # shape (levels, points)
        self.couplings = _frozen(couplings, complex)
        self.offset = offset

    @property
    def indices(self):
        return np.arange(self.offset, self.offset + len(self.grid))


class SubspacePartition(object):
    """Index sets of the parallel subspace P and its complement Q."""

    def __init__(self, parallel_indices, size: int):
        parallel = [int(i) for i in parallel_indices]

        if not parallel:
            raise ModelError("parallel subspace must have dimension >= 1")
        if len(set(parallel)) != len(parallel):
            raise ModelError("parallel indices must be distinct: %s" % parallel)
        if min(parallel) < 0 or max(parallel) >= size:
            raise ModelError(
                "parallel indices %s out of range for basis of size %d" % (parallel, size)
            )

        self.size = size
        self.parallel = _frozen(parallel, int)
        chosen = set(parallel)
        self.perpendicular = _frozen(
            [i for i in range(size) if i not in chosen], int
        )

    @property
    def dimension(self) -> int:
        return len(self.parallel)

    def projector(self):
        p = np.zeros((self.size, self.size))
        p[self.parallel, self.parallel] = 1.0
        return p

    def complement(self):
        return np.eye(self.size) - self.projector()


class FullModel(object):
    """Hermitian total Hamiltonian H = H0 + H1 with a tagged parallel subspace.

    H1 is never stored; ``h1()`` derives it as H - H0.
    """

    def __init__(self, h, h0, partition: SubspacePartition, m0: float, channels=(), metadata=None):
        h = _frozen(h, complex)
        h0 = _frozen(h0, complex)

        if h.shape != (partition.size, partition.size) or h0.shape != h.shape:
            raise ModelError(
                "Hamiltonian shapes %s / %s do not match a basis of size %d"
                % (h.shape, h0.shape, partition.size)
            )
        for name, a in (("H", h), ("H0", h0)):
            residual = hermiticity_residual(a)
            if residual > HERMITICITY_TOLERANCE:
                raise ModelError("%s is not Hermitian (relative residual %g)" % (name, residual))

        p = partition.parallel
        q = partition.perpendicular
        scale = max(frobenius(h0), 1.0)
        if frobenius(h0[np.ix_(p, p)] - m0 * np.eye(len(p))) > HERMITICITY_TOLERANCE * scale:
            raise ModelError("H0 restricted to the parallel subspace must equal m0 I")
        if len(q) and frobenius(h0[np.ix_(p, q)]) > HERMITICITY_TOLERANCE * scale:
            raise ModelError("H0 must commute with the parallel projector")

        self.h = h
        self.h0 = h0
        self.partition = partition
        self.m0 = float(m0)
        self.channels = tuple(channels)
        self.metadata = dict(metadata or {})

    @property
    def dimension(self) -> int:
        return self.partition.dimension

    def h1(self):
        return self.h - self.h0

    def channel(self, label: str) -> Channel:
        for channel in self.channels:
            if channel.label == label:
                return channel

        raise ModelError("model has no channel %r" % label)

    def embed(self, amplitudes):
        """Lift parallel-subspace amplitudes into the full basis."""
        amplitudes = np.asarray(amplitudes, dtype=complex)
        if amplitudes.shape == (self.partition.size,):
            return amplitudes.copy()
        if amplitudes.shape != (self.dimension,):
            raise ModelError(
                "state of length %d fits neither the parallel subspace (%d) nor the basis (%d)"
                % (amplitudes.size, self.dimension, self.partition.size)
            )

        psi = np.zeros(self.partition.size, dtype=complex)
        psi[self.partition.parallel] = amplitudes
        return psi

    def with_hamiltonian(self, h):
        return FullModel(h, self.h0, self.partition, self.m0, self.channels, self.metadata)


def build_model(m0: float, h1_parallel, channels, metadata=None) -> FullModel:
    """Build an n-level model coupled to the given channels.

    ``channels`` is a list of ``(label, grid, couplings)`` with ``couplings``
    of shape (points, n): one row of level couplings per grid point.
    """
    h1_parallel = np.atleast_2d(np.asarray(h1_parallel, dtype=complex))
    n = h1_parallel.shape[0]

    if h1_parallel.shape != (n, n):
        raise ModelError("parallel perturbation must be square, got %s" % (h1_parallel.shape,))
    if hermiticity_residual(h1_parallel) > HERMITICITY_TOLERANCE:
        raise ModelError("parallel perturbation is not Hermitian")
    if not channels:
        raise ModelError("a model needs at least one decay channel")

    labels = [c[0] for c in channels]
    if len(set(labels)) != len(labels):
        raise ModelError("channel labels overlap: %s" % ", ".join(map(str, labels)))

    size = n + sum(len(grid) for _, grid, _ in channels)
    h0 = np.zeros((size, size), dtype=complex)
    h0[:n, :n] = m0 * np.eye(n)
    h = h0.copy()
    h[:n, :n] += h1_parallel

    built = []
    offset = n
    for label, grid, couplings in channels:
        couplings = np.asarray(couplings, dtype=complex).reshape(len(grid), -1)
        if couplings.shape[1] != n:
            raise ModelError(
                "channel %r couples %d levels, model has %d" % (label, couplings.shape[1], n)
            )

        idx = np.arange(offset, offset + len(grid))
        h0[idx, idx] = grid.energies
        h[idx, idx] = grid.energies

        block = couplings.T * np.sqrt(grid.weights)
        h[:n, idx] = block
        h[idx, :n] = block.conj().T

        built.append(Channel(str(label), grid, couplings.T, offset))
        offset += len(grid)

    return FullModel(h, h0, SubspacePartition(range(n), size), m0, built, metadata)


def build_two_level_model(m0: float, h1_parallel, channels) -> FullModel:
    """Two unstable levels |1>, |2> coupled to ``(grid, couplings)`` channels."""
    h1_parallel = np.asarray(h1_parallel, dtype=complex)
    if h1_parallel.shape != (2, 2):
        raise ModelError("two-level model needs a 2x2 parallel perturbation")

    labelled = [("J%d" % (i + 1), grid, couplings) for i, (grid, couplings) in enumerate(channels)]

    return build_model(m0, h1_parallel, labelled)


def split_blocks(model: FullModel):
    """Return (PHP, PHQ, QHP, QHQ) as dense matrices."""
    p = model.partition.parallel
    q = model.partition.perpendicular
    h = model.h

    return h[np.ix_(p, p)], h[np.ix_(p, q)], h[np.ix_(q, p)], h[np.ix_(q, q)]


def random_hermitian(rng, n: int, scale: float = 1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2.0


def random_two_level_model(
    rng,
    m0: float = 2.0,
    coupling: float = 0.05,
    h1_scale: float = 0.01,
    points: int = 400,
    band=(0.0, 4.0),
) -> FullModel:
    """Two levels coupled to one flat-ish channel with random smooth couplings."""
    grid = uniform_grid(band[0], band[1], points)
    center = 0.5 * (band[0] + band[1])
    half = 0.5 * (band[1] - band[0])
    x = (grid.energies - center) / half

    alpha = rng.normal(size=2) + 1j * rng.normal(size=2)
    beta = rng.normal(size=2) + 1j * rng.normal(size=2)
    couplings = coupling * (alpha[None, :] + 0.3 * beta[None, :] * x[:, None])

    return build_two_level_model(m0, random_hermitian(rng, 2, h1_scale), [(grid, couplings)])


def add_q_interaction(model: FullModel, delta: float, rng) -> FullModel:
    """Add a Hermitian perturbation of Frobenius norm ``delta`` inside Q."""
    q = model.partition.perpendicular
    x = random_hermitian(rng, len(q))
    x *= delta / frobenius(x)

    h = np.array(model.h)
    h[np.ix_(q, q)] += x

    return model.with_hamiltonian(h)


def check_ww_conditions(model: FullModel):
    """Ratios behind the weak-coupling smallness assumptions.

    Each entry is a per-row ratio that the approximation wants much smaller
    than one:

    ``parallel_vs_mass``      sum_k |H1_jk| / m0
    ``decay_vs_mass``         sum_{J,e} |H1_kJ(e)| / m0
    ``parallel_vs_decay``     sum_l |H1_kl| / sum_{J,e} |H1_kJ(e)|
    ``rescattering_vs_decay`` sum_{L,e'} |H1_JL| / sum_k |H1_Jk|
    """
    h1 = np.abs(model.h1())
    p = model.partition.parallel
    q = model.partition.perpendicular

    parallel = h1[np.ix_(p, p)].sum(axis=1)
    decay = h1[np.ix_(p, q)].sum(axis=1)
    rescattering = h1[np.ix_(q, q)].sum(axis=1)
    feed = h1[np.ix_(q, p)].sum(axis=1)

    def ratio(num, den):
        num = np.asarray(num, dtype=float)
        den = np.broadcast_to(np.asarray(den, dtype=float), num.shape)
        out = np.where(num > 0.0, np.inf, 0.0)
        np.divide(num, den, out=out, where=den > 0.0)
        return out

    m0 = abs(model.m0)

    return {
        "parallel_vs_mass": ratio(parallel, m0),
        "decay_vs_mass": ratio(decay, m0),
        "parallel_vs_decay": ratio(parallel, decay),
        "rescattering_vs_decay": ratio(rescattering, feed),
    }


class LOYConditionReport(object):
    """Per-time norms behind the LOY validity condition.

    ``violated`` flags times where ||PH1P psi_par|| >= ||PH1Q psi_perp||.
    ``weak_ratio`` is the companion comparison ||PHQ psi_perp|| / ||PHP psi_par||.
    """

    def __init__(self, times, parallel_norm, perpendicular_norm, php_norm, phq_norm):
        self.times = np.asarray(times, dtype=float)
        self.parallel_norm = np.asarray(parallel_norm)
        self.perpendicular_norm = np.asarray(perpendicular_norm)

        ratio = np.where(self.parallel_norm > 0.0, np.inf, 0.0)
        np.divide(
            self.parallel_norm,
            self.perpendicular_norm,
            out=ratio,
            where=self.perpendicular_norm > 0.0,
        )
        self.ratio = ratio
        self.violated = ratio >= 1.0

        weak = np.zeros_like(ratio)
        php_norm = np.asarray(php_norm)
        np.divide(np.asarray(phq_norm), php_norm, out=weak, where=php_norm > 0.0)
        self.weak_ratio = weak

    def rows(self):
        for i, t in enumerate(self.times):
            yield (
                t,
                self.parallel_norm[i],
                self.perpendicular_norm[i],
                self.ratio[i],
                bool(self.violated[i]),
                self.weak_ratio[i],
            )


def _parallel_state(model: FullModel, psi0):
    psi0 = np.asarray(psi0, dtype=complex)
    full = model.embed(psi0)

    if frobenius(full[model.partition.perpendicular]) > 0.0:
        raise ModelError("initial state has support on the perpendicular subspace")
    norm = frobenius(full)
    if abs(norm - 1.0) > NORMALIZATION_TOLERANCE:
        raise ModelError("initial state is not normalized (norm %r)" % norm)

    return full


def diagnose_loy_conditions(model: FullModel, psi0, times) -> LOYConditionReport:
    """Evaluate the LOY validity condition along the exact evolution of psi0."""
    psi0 = _parallel_state(model, psi0)
    states = propagate_hermitian(model.h, psi0, times)

    p = model.partition.parallel
    q = model.partition.perpendicular
    h1 = model.h1()
    h = model.h

    par = states[:, p]
    perp = states[:, q]

    report = LOYConditionReport(
        times,
        np.linalg.norm(par @ h1[np.ix_(p, p)].T, axis=1),
        np.linalg.norm(perp @ h1[np.ix_(p, q)].T, axis=1),
        np.linalg.norm(par @ h[np.ix_(p, p)].T, axis=1),
        np.linalg.norm(perp @ h[np.ix_(p, q)].T, axis=1),
    )

    violations = int(np.count_nonzero(report.violated))
    if violations:
        log("LOY condition violated at %d of %d times", violations, len(report.times))

    return report


def locate_crossing(model: FullModel, psi0, t_lo: float, t_hi: float, tol: float = 1e-8) -> float:
    """Bisect for the time where the LOY ratio drops through one.

    Requires the condition to be violated at ``t_lo`` and satisfied at
    ``t_hi``.
    """

    def violated(t):
        return bool(diagnose_loy_conditions(model, psi0, [t]).violated[0])

    if not violated(t_lo) or violated(t_hi):
        raise ModelError(
            "LOY ratio does not cross one between t=%r and t=%r" % (t_lo, t_hi)
        )

    while t_hi - t_lo > tol * max(1.0, abs(t_hi)):
        mid = 0.5 * (t_lo + t_hi)
        if violated(mid):
            t_lo = mid
        else:
            t_hi = mid

    return 0.5 * (t_lo + t_hi)
