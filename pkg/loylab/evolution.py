# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""Exact and effective time evolution, decay products and V(t).

Every propagator is computed from an eigendecomposition, never by time
stepping.
"""

import pathlib

import numpy as np
import scipy.linalg

from .effective import EffectiveHamiltonian
from .logging import log
from .model import FullModel, ModelError, split_blocks
from .self_energy import default_eta
from .utils import (
    NumericalError,
    complex_cells,
    complex_columns,
    format_real,
    frobenius,
    propagate_hermitian,
    relaxation_kernel,
    write_csv,
)

# Largest eigenvector condition number accepted for effective propagation.
CONDITION_LIMIT = 1e12

NORM_TOLERANCE = 1e-10


class Trajectory(object):
    """States at each time, one row per time.

    Exact trajectories hold full-space states and record the parallel
    indices; effective trajectories hold parallel amplitudes directly.
    """

    def __init__(self, times, states, initial, kind: str, parallel=None, metadata=None):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=complex)
        self.initial = np.asarray(initial, dtype=complex)
        self.kind = kind
        self.parallel = None if parallel is None else np.asarray(parallel, dtype=int)
        self.metadata = dict(metadata or {})

        self.norm_track = np.sum(np.abs(self.states) ** 2, axis=1)

    def amplitudes(self):
        """Parallel-subspace amplitudes a_k(t)."""
        if self.parallel is None:
            return self.states

        return self.states[:, self.parallel]

    def initial_amplitudes(self):
        if self.parallel is None:
            return self.initial

        return self.initial[self.parallel]

    def survival_amplitude(self):
        """A(t) = <psi0|psi(t)> restricted to the parallel subspace."""
        return self.amplitudes() @ self.initial_amplitudes().conj()


def survival_probability(traj: Trajectory, index=None):
    """p(t) = |A(t)|^2, or |a_index(t)|^2 when an index is given."""
    if index is None:
        return np.abs(traj.survival_amplitude()) ** 2

    return np.abs(traj.amplitudes()[:, index]) ** 2


def evolve_exact(model: FullModel, psi0, times) -> Trajectory:
    """psi(t) = exp(-itH) psi0 for each time, negative times included."""
    psi0 = model.embed(psi0)

    norm = frobenius(psi0)
    if norm == 0.0:
        raise ModelError("initial state is zero")
    if abs(norm - 1.0) > NORM_TOLERANCE:
        log("initial state is not normalized (norm %r); evolving it as given", norm)

    states = propagate_hermitian(model.h, psi0, times)

    return Trajectory(
        times,
        states,
        psi0,
        "exact",
        parallel=model.partition.parallel,
        metadata={"initial_norm": norm},
    )


def _eigensystem(heff: EffectiveHamiltonian):
    try:
        values, vectors = scipy.linalg.eig(heff.matrix)
    except scipy.linalg.LinAlgError as e:
        raise NumericalError("eigendecomposition failed: %s" % e, method=heff.method) from e

    condition = np.linalg.cond(vectors)
    if not condition < CONDITION_LIMIT:
        raise NumericalError(
            "effective Hamiltonian is not diagonalizable (eigenvector condition %g)" % condition,
            method=heff.method,
        )

    return values, vectors


def _forward_times(times):
    times = np.asarray(times, dtype=float)
    if np.any(times < 0.0):
        raise ModelError("effective evolution is defined for t >= 0 only")

    return times


def evolve_effective(heff: EffectiveHamiltonian, a0, times) -> Trajectory:
    """a(t) = exp(-it heff) a0 through the eigenbasis of heff."""
    times = _forward_times(times)
    a0 = np.asarray(a0, dtype=complex)
    if a0.shape != (heff.dimension,):
        raise ModelError(
            "amplitudes of length %d do not fit a %d dimensional Hamiltonian"
            % (a0.size, heff.dimension)
        )

    values, vectors = _eigensystem(heff)
    coefficients = scipy.linalg.solve(vectors, a0)
    phases = np.exp(-1j * np.outer(times, values))

    return Trajectory(
        times,
        (phases * coefficients) @ vectors.T,
        a0,
        "effective",
        metadata={"method": heff.method, "eta": heff.eta},
    )


def decay_product_amplitudes(heff: EffectiveHamiltonian, model: FullModel, a0, times):
    """Continuum amplitudes F_J(e; t) fed by the effective solution a(t).

    Returns a dict from channel label to an array of shape (times, points)
    holding F / sqrt(w), the amplitude per unit energy.
    """
    times = _forward_times(times)
    a0 = np.asarray(a0, dtype=complex)
    values, vectors = _eigensystem(heff)
    coefficients = scipy.linalg.solve(vectors, a0)

    p = model.partition.parallel
    products = {}
    for channel in model.channels:
        idx = channel.indices
        energies = channel.grid.energies
        # <e_i|H|k> R_kj c_j
        feed = (model.h[np.ix_(idx, p)] @ vectors) * coefficients

        # -i integral_0^t exp(-ie(t-s)) exp(-i lambda_j s) ds, per time, point, mode
        t = times[:, None, None]
        detuning = values[None, None, :] - energies[None, :, None]
        phase = np.exp(-1j * energies[None, :, None] * t)
        kernel = t * phase * relaxation_kernel(1j * detuning * t)

        amplitudes = -1j * np.einsum("tij,ij->ti", kernel, feed)
        products[channel.label] = amplitudes / np.sqrt(channel.grid.weights)

    return products


def probability_budget(traj: Trajectory, products, model: FullModel):
    """|a(t)|^2 plus the total probability carried by the decay products."""
    total = np.array(traj.norm_track)
    for label, density in products.items():
        weights = model.channel(label).grid.weights
        total += np.sum(np.abs(density) ** 2 * weights, axis=1)

    return total


def v_of_t(model: FullModel, t: float, eta=None, damped: bool = False):
    """First-order V(t) = -i int_0^t PHQ exp(-isQHQ) QHP exp(isPHP) ds.

    With ``damped`` the integrand carries exp(-eta s), which makes the
    t -> infinity limit equal to -sum_p Sigma(lambda_p) P_p.
    """
    t = float(t)
    if t < 0.0:
        raise ModelError("V(t) is defined for t >= 0 only, got %r" % t)

    php, phq, qhp, qhq = split_blocks(model)
    if t == 0.0 or phq.shape[1] == 0:
        return np.zeros_like(php)

    try:
        if np.count_nonzero(qhq - np.diag(np.diagonal(qhq))):
            levels, u_q = scipy.linalg.eigh(qhq)
        else:
            levels, u_q = np.diagonal(qhq).real, np.eye(qhq.shape[0])
        parallel, u_p = scipy.linalg.eigh(php)
    except scipy.linalg.LinAlgError as e:
        raise NumericalError("eigendecomposition failed: %s" % e, method="v_of_t") from e

    detuning = levels[:, None] - parallel[None, :].astype(complex)
    if damped:
        detuning = detuning - 1j * (default_eta(model) if eta is None else eta)

    kernel = -1j * t * relaxation_kernel(1j * t * detuning)

    a = phq @ u_q
    b = u_q.conj().T @ qhp @ u_p

    return a @ (b * kernel) @ u_p.conj().T


class TrajectoryComparison(object):
    """Errors of an effective trajectory against the exact one."""

    def __init__(self, times, amplitude_error, exact_probability, effective_probability):
        self.times = times
        self.amplitude_error = amplitude_error
        self.exact_probability = exact_probability
        self.effective_probability = effective_probability
        self.decay_law_error = np.abs(exact_probability - effective_probability)

    @property
    def max_amplitude_error(self) -> float:
        return float(np.max(self.amplitude_error, initial=0.0))

    @property
    def max_decay_law_error(self) -> float:
        return float(np.max(self.decay_law_error, initial=0.0))

    def rows(self):
        for i, t in enumerate(self.times):
            yield (
                t,
                self.amplitude_error[i],
                self.exact_probability[i],
                self.effective_probability[i],
                self.decay_law_error[i],
            )


def compare_trajectories(exact: Trajectory, effective: Trajectory) -> TrajectoryComparison:
    if not np.array_equal(exact.times, effective.times):
        raise ModelError("trajectories were computed on different time grids")

    a_exact = exact.amplitudes()
    a_effective = effective.amplitudes()
    if a_exact.shape != a_effective.shape:
        raise ModelError(
            "trajectories have different parallel dimensions: %d and %d"
            % (a_exact.shape[1], a_effective.shape[1])
        )

    return TrajectoryComparison(
        exact.times,
        np.max(np.abs(a_exact - a_effective), axis=1),
        survival_probability(exact),
        survival_probability(effective),
    )


def write_trajectory_csv(p: pathlib.Path, traj: Trajectory, header: dict, extra=None):
    """Write time, Re/Im of every amplitude, p(t) and the norm.

    ``extra`` maps additional column names to per-time values.
    """
    extra = extra or {}
    amplitudes = traj.amplitudes()
    probability = survival_probability(traj)

    columns = ["time"]
    for k in range(amplitudes.shape[1]):
        columns.extend(complex_columns("a%d" % (k + 1)))
    columns.extend(["p", "norm"])
    columns.extend(sorted(extra))

    def rows():
        for i, t in enumerate(traj.times):
            row = [format_real(t)]
            for value in amplitudes[i]:
                row.extend(complex_cells(value))
            row.append(format_real(probability[i]))
            row.append(format_real(traj.norm_track[i]))
            for name in sorted(extra):
                row.append(format_real(extra[name][i]))
            yield row

    write_csv(p, header, columns, rows())
