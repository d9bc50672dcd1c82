# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""Effective non-Hermitian Hamiltonians on the parallel subspace."""

import numpy as np
import scipy.linalg

from .logging import log
from .model import FullModel, ModelError, split_blocks
from .self_energy import SelfEnergyEvaluator, default_eta
from .utils import NumericalError, frobenius, hermiticity_residual

HERMITIAN_TOLERANCE = 1e-12

# Relative size of kappa below which the Pauli form is replaced by the
# clustered spectral form.
KAPPA_DEGENERACY = 1e-8

# Smallest |<L|R>| accepted for unit-norm left and right eigenvectors.
BIORTHOGONAL_OVERLAP_MIN = 1e-10

# Formula strings recorded alongside every emitted Hamiltonian.
FORMULAS = {
    "loy0": "m0 I - Sigma0(m0)",
    "loy": "m0 I - Sigma(m0)",
    "improved": "PHP - Sigma(m0+h0+kappa) P+ - Sigma(m0+h0-kappa) P-",
    "spectral": "PHP - sum_j Sigma(lambda_j) P_j, lambda_j eigenvalues of PHP",
    "iterate": "PHP + V, V = -sum_j Sigma(lambda_j) P_j of PHP + V",
    "onedim": "<psi|H|psi> - Sigma_psi(<psi|H|psi>)",
}


class EffectiveHamiltonian(object):
    """Complex matrix M - (i/2) Gamma acting on the parallel subspace."""

    def __init__(self, matrix, method: str, eta: float, metadata=None):
        matrix = np.array(np.atleast_2d(matrix), dtype=complex)
        matrix.setflags(write=False)

        self.matrix = matrix
        self.method = method
        self.eta = eta
        self.metadata = dict(metadata or {})

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def mass_part(self):
        return (self.matrix + self.matrix.conj().T) / 2.0

    @property
    def decay_part(self):
        return 1j * (self.matrix - self.matrix.conj().T)

    def eigenvalues(self):
        """Eigenvalues ordered by real part."""
        values = scipy.linalg.eigvals(self.matrix)
        return values[np.lexsort((values.imag, values.real))]

    @property
    def lifetimes(self):
        """1/width of each eigenvalue; infinite for non-decaying modes."""
        widths = -2.0 * self.eigenvalues().imag
        out = np.full(len(widths), np.inf)
        np.divide(1.0, widths, out=out, where=widths > 0.0)
        return out

    def __repr__(self):
        return "<EffectiveHamiltonian %s n=%d eta=%g>" % (self.method, self.dimension, self.eta)


def decay_positivity(heff: EffectiveHamiltonian) -> float:
    """Smallest eigenvalue of the decay matrix."""
    return float(np.min(np.linalg.eigvalsh(heff.decay_part)))


class PauliDecomposition(object):
    """h0 I + hx sx + hy sy + hz sz for a 2x2 Hermitian matrix."""

    def __init__(self, h0: float, hx: float, hy: float, hz: float):
        self.h0 = float(h0)
        self.hx = float(hx)
        self.hy = float(hy)
        self.hz = float(hz)
        self.kappa = float(np.sqrt(hx * hx + hy * hy + hz * hz))

    def vector_part(self):
        """h . sigma"""
        return np.array(
            [[self.hz, self.hx - 1j * self.hy], [self.hx + 1j * self.hy, -self.hz]]
        )

    def matrix(self):
        return self.h0 * np.eye(2) + self.vector_part()

    def projectors(self):
        """Spectral projectors onto h0 + kappa and h0 - kappa."""
        if self.kappa == 0.0:
            raise NumericalError("projectors are undefined for kappa = 0", method="improved")

        n = self.vector_part() / self.kappa

        return (np.eye(2) + n) / 2.0, (np.eye(2) - n) / 2.0


def pauli_decompose(m) -> PauliDecomposition:
    m = np.asarray(m, dtype=complex)
    if m.shape != (2, 2):
        raise ModelError("Pauli decomposition needs a 2x2 matrix, got %s" % (m.shape,))
    if hermiticity_residual(m) > HERMITIAN_TOLERANCE:
        raise ModelError("Pauli decomposition needs a Hermitian matrix")

    return PauliDecomposition(
        (m[0, 0].real + m[1, 1].real) / 2.0,
        m[1, 0].real,
        m[1, 0].imag,
        (m[0, 0].real - m[1, 1].real) / 2.0,
    )


def exp_php(t: float, decomp: PauliDecomposition, sign: int = -1):
    """Return exp(sign i t (h0 I + h . sigma)) for sign = +1 or -1."""
    if sign not in (1, -1):
        raise ModelError("sign must be +1 or -1, got %r" % sign)

    phase = np.exp(sign * 1j * t * decomp.h0)
    if decomp.kappa == 0.0:
        return phase * np.eye(2, dtype=complex)

    plus, minus = decomp.projectors()
    rotation = np.exp(sign * 1j * t * decomp.kappa)

    return phase * (rotation * plus + minus / rotation)


def _evaluator(model: FullModel, eta, evaluator):
    if evaluator is not None:
        return evaluator

    return SelfEnergyEvaluator.for_model(model, eta)


def h_loy0(model: FullModel, eta=None, evaluator=None) -> EffectiveHamiltonian:
    ev = _evaluator(model, eta, evaluator)
    matrix = model.m0 * np.eye(model.dimension) - ev.sigma0(model.m0)

    return EffectiveHamiltonian(matrix, "loy0", ev.eta, ev.metadata)


def h_loy(model: FullModel, eta=None, evaluator=None) -> EffectiveHamiltonian:
    ev = _evaluator(model, eta, evaluator)
    matrix = model.m0 * np.eye(model.dimension) - ev.sigma(model.m0)

    return EffectiveHamiltonian(matrix, "loy", ev.eta, ev.metadata)


def _cluster(values, gap_tol):
    """Group eigenvalue indices whose distance to a cluster mean is within gap_tol."""
    clusters = []
    for i in np.argsort(values.real, kind="stable"):
        for cluster in clusters:
            if abs(values[i] - np.mean(values[cluster])) <= gap_tol:
                cluster.append(i)
                break
        else:
            clusters.append([i])

    return clusters


def spectral_projectors(k, gap_tol=None):
    """Return (eigenvalues, projectors) of K with near-degenerate eigenvalues merged.

    Hermitian K uses orthonormal eigenvectors. Otherwise projectors are built
    from right and left eigenvectors normalized so that <L_j|R_k> = delta_jk.
    """
    k = np.asarray(k, dtype=complex)
    n = k.shape[0]
    scale = frobenius(k)

    if gap_tol is None:
        centered = frobenius(k - np.trace(k) / n * np.eye(n))
        gap_tol = 1e-8 * centered + 64.0 * np.finfo(float).eps * scale

    if hermiticity_residual(k) <= HERMITIAN_TOLERANCE:
        values, right = scipy.linalg.eigh((k + k.conj().T) / 2.0)
        values = values.astype(complex)
        left = right
    else:
        try:
            values, left, right = scipy.linalg.eig(k, left=True, right=True)
        except scipy.linalg.LinAlgError as e:
            raise NumericalError("eigendecomposition failed: %s" % e, method="spectral") from e

        overlaps = np.einsum("ij,ij->j", left.conj(), right)
        if np.min(np.abs(overlaps)) < BIORTHOGONAL_OVERLAP_MIN:
            raise NumericalError(
                "operator is not diagonalizable (min |<L|R>| = %g)"
                % np.min(np.abs(overlaps)),
                method="spectral",
            )
        left = left / overlaps.conj()

    clusters = _cluster(values, gap_tol)
    if len(clusters) < n:
        log(
            "merging %d eigenvalues into %d clusters (gap tolerance %g)",
            n,
            len(clusters),
            gap_tol,
        )

    means = []
    projectors = []
    for cluster in clusters:
        means.append(np.mean(values[cluster]))
        projectors.append(right[:, cluster] @ left[:, cluster].conj().T)

    return np.array(means), projectors


def v_spectral(
    model: FullModel,
    k,
    eta=None,
    evaluator=None,
    complex_arguments: bool = False,
    gap_tol=None,
):
    """Return V = -sum_j Sigma(lambda_j) P_j over the spectral decomposition of K.

    Sigma is evaluated at Re lambda_j unless ``complex_arguments`` is set, in
    which case it is continued to the complex eigenvalue.
    """
    ev = _evaluator(model, eta, evaluator)
    k = np.asarray(k, dtype=complex)
    if k.shape != (model.dimension, model.dimension):
        raise ModelError(
            "operator of shape %s does not act on a %d dimensional parallel subspace"
            % (k.shape, model.dimension)
        )

    values, projectors = spectral_projectors(k, gap_tol)

    v = np.zeros(k.shape, dtype=complex)
    for value, projector in zip(values, projectors):
        if complex_arguments:
            s = ev.sigma_at_complex(value)
        else:
            s = ev.sigma(value.real)
        v -= s @ projector

    return v


def h_spectral(model: FullModel, eta=None, evaluator=None) -> EffectiveHamiltonian:
    ev = _evaluator(model, eta, evaluator)
    php = split_blocks(model)[0]

    v = v_spectral(model, php, evaluator=ev)
    return EffectiveHamiltonian(php + v, "spectral", ev.eta, ev.metadata)


def h_loy_imp(model: FullModel, eta=None, evaluator=None) -> EffectiveHamiltonian:
    """Improved LOY Hamiltonian for a two-level parallel subspace."""
    if model.dimension != 2:
        raise ModelError(
            "improved LOY form needs a 2 dimensional parallel subspace, got %d" % model.dimension
        )

    ev = _evaluator(model, eta, evaluator)
    php = split_blocks(model)[0]
    ph1p = php - model.m0 * np.eye(2)
    decomp = pauli_decompose(ph1p)

    floor = np.finfo(float).eps * max(abs(model.m0), 1.0)
    threshold = KAPPA_DEGENERACY * (frobenius(ph1p) + floor)

    metadata = ev.metadata
    if decomp.kappa < threshold:
        log("kappa=%g below %g; using the clustered spectral form", decomp.kappa, threshold)
        v = v_spectral(model, php, evaluator=ev, gap_tol=2.0 * threshold)
        metadata["kappa_fallback"] = True
    else:
        plus, minus = decomp.projectors()
        upper = model.m0 + decomp.h0 + decomp.kappa
        lower = model.m0 + decomp.h0 - decomp.kappa
        v = -ev.sigma(upper) @ plus - ev.sigma(lower) @ minus

    metadata["kappa"] = decomp.kappa
    metadata["h0"] = decomp.h0

    return EffectiveHamiltonian(php + v, "improved", ev.eta, metadata)


class IterationResult(object):
    """Outcome of the fixed-point iteration for V."""

    def __init__(self, v, history, converged: bool, php, eta: float, metadata):
        self.v = v
        self.history = list(history)
        self.converged = converged
        self.php = php
        self.eta = eta
        self.metadata = metadata

    @property
    def iterations(self) -> int:
        return len(self.history)

    def heff(self) -> EffectiveHamiltonian:
        metadata = dict(self.metadata)
        metadata["iterations"] = self.iterations
        metadata["converged"] = self.converged

        return EffectiveHamiltonian(self.php + self.v, "iterate", self.eta, metadata)

    def __iter__(self):
        return iter((self.v, self.history))


def iterate_v(
    model: FullModel,
    max_iter: int,
    tol: float,
    eta=None,
    evaluator=None,
    complex_arguments: bool = False,
) -> IterationResult:
    """Iterate V(n+1) = v_spectral(PHP + V(n)) from V(0) = 0.

    Stops once ||V(n+1) - V(n)|| <= tol ||V(n+1)||. Running out of iterations
    is reported through ``converged``.
    """
    if max_iter < 1:
        raise ModelError("max_iter must be at least 1, got %r" % max_iter)
    if not tol > 0.0:
        raise ModelError("tol must be positive, got %r" % tol)

    ev = _evaluator(model, eta, evaluator)
    php = split_blocks(model)[0]

    v = np.zeros_like(php)
    history = []
    converged = False

    for n in range(1, max_iter + 1):
        try:
            v_next = v_spectral(
                model, php + v, evaluator=ev, complex_arguments=complex_arguments
            )
        except NumericalError as e:
            raise NumericalError("iterate %d: %s" % (n, e), method="iterate") from e

        diff = frobenius(v_next - v)
        history.append(diff)
        v = v_next

        if diff <= tol * frobenius(v):
            converged = True
            break

    if not converged:
        log(
            "fixed-point iteration did not converge in %d iterations (last step %g)",
            max_iter,
            history[-1],
        )

    metadata = ev.metadata
    metadata["complex_arguments"] = complex_arguments

    return IterationResult(v, history, converged, php, ev.eta, metadata)


def h_1d(model: FullModel, psi, eta=None) -> EffectiveHamiltonian:
    """Effective Hamiltonian of the one-dimensional subspace spanned by psi.

    ``psi`` is given in parallel-subspace amplitudes; everything orthogonal to
    it, including the rest of the parallel subspace, is treated as the decay
    sector.
    """
    psi = np.asarray(psi, dtype=complex)
    n = model.dimension
    if psi.shape != (n,):
        raise ModelError(
            "state of length %d does not fit the parallel subspace (%d)" % (psi.size, n)
        )
    norm = frobenius(psi)
    if abs(norm - 1.0) > 1e-10:
        raise ModelError("state is not normalized (norm %r)" % norm)

    basis = np.linalg.qr(np.column_stack([psi, np.eye(n)]))[0]
    basis[:, 0] = psi

    p = model.partition.parallel
    q = model.partition.perpendicular
    order = np.concatenate([p, q])
    h = model.h[np.ix_(order, order)]

    rotation = scipy.linalg.block_diag(basis, np.eye(len(q)))
    rotated = rotation.conj().T @ h @ rotation

    value = rotated[0, 0].real
    rest = slice(1, None)
    ev = SelfEnergyEvaluator(
        rotated[0:1, rest],
        rotated[rest, rest],
        rotated[rest, 0:1],
        default_eta(model) if eta is None else eta,
    )

    return EffectiveHamiltonian(
        value - ev.sigma(value), "onedim", ev.eta, {"eta": ev.eta, "expectation": value}
    )
